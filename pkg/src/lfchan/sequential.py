"""Sequential reference channel.

Ground truth for the interleaving checker: a single-threaded channel made
of a bounded buffer and two FIFO waiting lists.  The checker replays a
recorded history against this model through the small primitives
(``park_sender``, ``promote``, ...) because the concurrent algorithm admits
parked senders into the buffer lazily; the composite ``seq_send`` /
``seq_receive`` pair expresses the abstract semantics in one step each and
is what the unit and property tests exercise.

Relaxation: a sender may be parked while buffer space exists (the
concurrent algorithm postpones buffer admission, which legally causes
extra suspensions), so "senders waiting implies buffer full" is NOT an
invariant here.  The checked invariants are: at most one waiting list is
non-empty, a non-empty buffer implies no waiting receivers, and the
buffer never exceeds capacity.
"""

from __future__ import annotations

from typing import Any, Optional

__all__ = ["SequentialChannel", "SequentialInvariantError"]


class SequentialInvariantError(Exception):
    """The model was driven into a state it must never reach."""


class SequentialChannel:
    def __init__(self, capacity: int):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity
        self.buffer: list[Any] = []
        self.waiting_senders: list[tuple[Any, Any]] = []   # (token, element)
        self.waiting_receivers: list[Any] = []             # token

    # -- primitives ---------------------------------------------------------

    def send(self, token: Any, elem: Any):
        """Returns ("rendezvous", receiver_token) | ("buffered", None)
        | ("parked", None)."""
        if self.waiting_receivers:
            w = self.waiting_receivers.pop(0)
            self._check()
            return ("rendezvous", w)
        if len(self.buffer) < self.capacity:
            self.buffer.append(elem)
            self._check()
            return ("buffered", None)
        self.waiting_senders.append((token, elem))
        self._check()
        return ("parked", None)

    def park_sender(self, token: Any, elem: Any) -> None:
        """Park unconditionally (the postponed-admission relaxation)."""
        self.waiting_senders.append((token, elem))
        self._check()

    def park_receiver(self, token: Any) -> None:
        self.waiting_receivers.append(token)
        self._check()

    def receive(self, token: Any):
        """Pop-only receive; no buffer refill.  Returns
        ("value", elem, None) | ("rendezvous", elem, sender_token)
        | ("parked", None, None)."""
        if self.buffer:
            e = self.buffer.pop(0)
            self._check()
            return ("value", e, None)
        if self.waiting_senders:
            w, e = self.waiting_senders.pop(0)
            self._check()
            return ("rendezvous", e, w)
        self.waiting_receivers.append(token)
        self._check()
        return ("parked", None, None)

    def promote(self) -> tuple[Any, Any]:
        """Move the longest-waiting sender's element into the buffer."""
        if not self.waiting_senders:
            raise SequentialInvariantError("promote with no waiting sender")
        w, e = self.waiting_senders.pop(0)
        self.buffer.append(e)
        self._check()
        return (w, e)

    def interrupt(self, token: Any) -> bool:
        """Remove a waiting operation; False (no-op) if absent."""
        for i, (w, _) in enumerate(self.waiting_senders):
            if w == token:
                del self.waiting_senders[i]
                return True
        for i, w in enumerate(self.waiting_receivers):
            if w == token:
                del self.waiting_receivers[i]
                return True
        return False

    # -- composite forms ------------------------------------------------------

    def seq_send(self, token: Any, elem: Any):
        return self.send(token, elem)

    def seq_receive(self, token: Any):
        """Receive plus immediate admission of the next waiting sender."""
        out = self.receive(token)
        if out[0] == "value" and self.waiting_senders:
            w, _ = self.promote()
            return ("value", out[1], w)
        return out

    # -- introspection ---------------------------------------------------------

    def snapshot(self) -> tuple:
        return (tuple(self.buffer),
                tuple(self.waiting_senders),
                tuple(self.waiting_receivers))

    def _check(self) -> None:
        if len(self.buffer) > self.capacity:
            raise SequentialInvariantError(
                f"buffer over capacity: {len(self.buffer)} > {self.capacity}")
        if self.waiting_senders and self.waiting_receivers:
            raise SequentialInvariantError("both waiting lists non-empty")
        if self.buffer and self.waiting_receivers:
            raise SequentialInvariantError("buffered elements with waiting receivers")

    def __repr__(self) -> str:
        return (f"<SequentialChannel C={self.capacity} buf={self.buffer!r} "
                f"senders={len(self.waiting_senders)} "
                f"receivers={len(self.waiting_receivers)}>")
