"""Lock-free channels built on counter-reserved exchange cells.

Two channel flavors share one cell protocol: ``RendezvousChannel`` pairs
every send with a receive directly, ``BufferedChannel`` adds a bounded
element buffer.  Both support cancelling a suspended operation from
another thread, reclaim fully cancelled cell segments, and run against
either real threads (``ThreadRuntime``) or the deterministic cooperative
scheduler in ``lfchan.coop`` used by the interleaving explorer in
``lfchan.explorer``.
"""

from .buffered import BufferedChannel
from .metrics import ChannelMetrics
from .rendezvous import RendezvousChannel
from .runtime import Interrupted, ThreadRuntime
from .sequential import SequentialChannel, SequentialInvariantError

__version__ = "0.1.0"

__all__ = [
    "BufferedChannel",
    "ChannelMetrics",
    "Interrupted",
    "RendezvousChannel",
    "SequentialChannel",
    "SequentialInvariantError",
    "ThreadRuntime",
    "make_channel",
]


def make_channel(capacity: int = 0, **kwargs):
    """Channel of the given capacity; zero means direct handoff."""
    if capacity == 0:
        return RendezvousChannel(**kwargs)
    return BufferedChannel(capacity, **kwargs)
