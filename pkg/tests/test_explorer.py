"""Explorer and conformance-checker tests.

The checker is only trustworthy if it actually rejects broken channels,
so alongside the happy-path exhaustion checks there are three seeded
bugs (a lying receive, a skipped poisoning, a dropped wakeup) that each
must be flagged with a counterexample schedule.
"""

import pytest

from lfchan.explorer import ConformanceError, explore_case
from lfchan.rendezvous import (
    CANCELLED,
    OK,
    RETRY,
    RendezvousChannel,
    interrupt_cleanup,
)
from lfchan.runtime import INTERRUPTED, RECEIVE, Waiter
from lfchan.segments import (
    BUFFERED,
    DONE,
    EMPTY,
    INTERRUPTED_RCV,
    INTERRUPTED_SEND,
)


def _stats_key(stats):
    return (stats.runs, stats.pruned, stats.retry_cut, stats.capped,
            stats.states, stats.max_depth, stats.exhausted)


def test_rendezvous_handshake_exhausts():
    stats = explore_case(0, [[("send", 1)], [("recv",)]], max_restarts=2)
    assert stats.exhausted
    assert stats.runs > 0
    assert stats.states > 0


def test_buffered_store_exhausts():
    stats = explore_case(1, [[("send", 1)], [("recv",)]], max_restarts=2)
    assert stats.exhausted
    assert stats.runs > 0


def test_interrupted_park_exhausts():
    stats = explore_case(
        0, [[("send", 1)], [("recv",)], [("interrupt", 0)]], max_restarts=2)
    assert stats.exhausted
    assert stats.runs > 0


def test_exploration_is_deterministic():
    case = (0, [[("send", 1)], [("recv",)], [("interrupt", 0)]])
    a = explore_case(case[0], case[1], max_restarts=2)
    b = explore_case(case[0], case[1], max_restarts=2)
    assert _stats_key(a) == _stats_key(b)


def test_retry_bound_cuts_chases_without_losing_exhaustion():
    stats = explore_case(0, [[("send", 1)], [("recv",)]], max_restarts=0)
    assert stats.retry_cut > 0          # poison chases exist and get cut
    assert stats.exhausted              # cutting them is part of the model
    assert stats.runs > 0


def test_state_budget_clears_exhausted():
    stats = explore_case(0, [[("send", 1)], [("recv",)]],
                         max_restarts=2, max_states=5)
    assert not stats.exhausted


def test_run_budget_clears_exhausted():
    stats = explore_case(0, [[("send", 1)], [("recv",)]],
                         max_restarts=2, max_runs=1)
    assert not stats.exhausted
    assert stats.runs + stats.pruned + stats.retry_cut + stats.capped == 1


class _LyingReceive(RendezvousChannel):
    # seeded bug: the caller sees a different element than the cell carried
    def receive(self):
        return super().receive() + 100


def test_checker_catches_wrong_value():
    with pytest.raises(ConformanceError) as ei:
        explore_case(
            0, [[("send", 1)], [("recv",)]], max_restarts=2,
            channel_factory=lambda rt: _LyingReceive(runtime=rt,
                                                     segment_size=2))
    assert ei.value.schedule            # counterexample attached
    assert "101" in str(ei.value)


class _SkipsPoisoning(RendezvousChannel):
    # seeded bug: receive-side resolution copied verbatim, except the
    # overtaken empty cell is abandoned without being poisoned, so the
    # lagging send can still deposit an element nobody will collect
    def _finish_receive(self, r, cell, segm):
        rt = self.runtime
        state_ref = cell.state
        while True:
            state = state_ref.get()
            s = self._send_count.get()
            if state is EMPTY and r >= s:
                w = rt.current_waiter(RECEIVE, r)
                if state_ref.compare_and_set(EMPTY, w):
                    if self._metrics is not None:
                        self._metrics.on_suspend("recv", r, s)
                        self._metrics.on_park()
                    if rt.tracing:
                        rt.emit(("suspended", "recv", r, w, s, None, None))
                    if w.park(interrupt_cleanup(
                            cell, segm, INTERRUPTED_RCV, w)) is INTERRUPTED:
                        return CANCELLED
                    if rt.tracing:
                        rt.emit(("completed", "recv", r, "resumed",
                                 cell.elem.peek(), None))
                    return OK
                w.discard()
            elif isinstance(state, Waiter):
                if state.try_unpark():
                    if rt.tracing:
                        rt.emit(("completed", "recv", r, "paired",
                                 cell.elem.peek(), state))
                    state_ref.set(DONE)
                    return OK
                return RETRY
            elif state is EMPTY:
                return RETRY            # bug under test: no poisoning
            elif state is BUFFERED:
                if rt.tracing:
                    rt.emit(("completed", "recv", r, "from_buffer",
                             cell.elem.peek(), None))
                return OK
            elif state is INTERRUPTED_SEND:
                return RETRY
            else:
                raise RuntimeError(f"receive met cell {r} in state {state!r}")


def test_checker_catches_skipped_poisoning():
    with pytest.raises(ConformanceError) as ei:
        explore_case(
            0, [[("send", 1)], [("recv",)]], max_restarts=2,
            channel_factory=lambda rt: _SkipsPoisoning(runtime=rt,
                                                       segment_size=2))
    assert ei.value.schedule


class _DropsWakeups(RendezvousChannel):
    # seeded bug: pairs with a parked receiver without ever waking it
    def _finish_send(self, s, cell, segm, element):
        state = cell.state.get()
        if isinstance(state, Waiter):
            if self.runtime.tracing:
                self.runtime.emit(("completed", "send", s, "paired",
                                   element, state))
            cell.state.set(DONE)
            return OK
        return super()._finish_send(s, cell, segm, element)


def test_checker_catches_lost_wakeup():
    with pytest.raises(ConformanceError) as ei:
        explore_case(
            0, [[("recv",)], [("send", 5)]], max_restarts=2,
            channel_factory=lambda rt: _DropsWakeups(runtime=rt,
                                                     segment_size=2))
    assert ei.value.schedule


def test_counterexample_trace_is_printable():
    with pytest.raises(ConformanceError) as ei:
        explore_case(
            0, [[("send", 1)], [("recv",)]], max_restarts=2,
            channel_factory=lambda rt: _LyingReceive(runtime=rt,
                                                     segment_size=2))
    text = str(ei.value)
    assert "schedule:" in text
    assert ei.value.events              # the event tail rides along
