"""Rendezvous channel: every send hands its element to exactly one receive.

Both sides reserve a cell index with a single fetch-and-add on their own
counter, locate the cell through the segment list, and race over the
cell's state word.  Whoever arrives second completes the exchange on the
spot; whoever arrives first parks inside the cell.  A receive that can
prove its send is late (the send counter is already past the cell) poisons
the cell instead of waiting and retries at a fresh index, so a slow sender
never blocks receiver progress.

Cancelling a parked operation marks its cell and notifies the segment so
fully-abandoned segments unlink themselves; see ``segments``.
"""

from __future__ import annotations

from typing import Any, Optional

from .metrics import ChannelMetrics
from .runtime import (INTERRUPTED, RECEIVE, SEND, Interrupted, Runtime,
                      ThreadRuntime, Waiter)
from .segments import (BROKEN, BUFFERED, DONE, EMPTY, INTERRUPTED_RCV,
                       INTERRUPTED_SEND, Cell, Segment, cell_state_token,
                       find_and_move_forward, fp_value, reachable_segments,
                       skip_ahead)

__all__ = ["RendezvousChannel"]

# Outcomes of working one cell; RETRY sends the operation back for a new index.
OK = "ok"
CANCELLED = "cancelled"
RETRY = "retry"


def interrupt_cleanup(cell: Cell, segm: Segment, dead_state: str, w: Waiter):
    """The park hook: runs exactly once if (and only if) an interrupt wins
    the waiter's lifecycle.  Publishes the abandoned cell and feeds the
    segment's reclamation count."""
    def hook():
        cell.elem.set(None)
        if not cell.state.compare_and_set(w, dead_state):
            raise RuntimeError("interrupt cleanup raced with a resume")
        segm.on_cell_interrupted()
    return hook


class RendezvousChannel:
    """Unbuffered channel; ``send`` and ``receive`` block until paired.

    ``runtime`` defaults to the thread-backed one.  ``metrics`` (optional)
    collects park/retry/poison counts.
    """

    capacity = 0

    def __init__(self, runtime: Optional[Runtime] = None,
                 segment_size: int = 32,
                 metrics: Optional[ChannelMetrics] = None):
        if segment_size < 1:
            raise ValueError("segment_size must be positive")
        rt = runtime if runtime is not None else ThreadRuntime()
        first = Segment(rt, 0, segment_size, prev=None, links=2)
        self.runtime = rt
        self._size = segment_size
        self._send_count = rt.new_int(0, "S")
        self._recv_count = rt.new_int(0, "R")
        self._send_seg = rt.new_ref(first, "anchorS")
        self._recv_seg = rt.new_ref(first, "anchorR")
        self._metrics = metrics

    # -- send ---------------------------------------------------------------

    def send(self, element: Any) -> None:
        if element is None:
            raise ValueError("cannot send None; it marks an empty element slot")
        rt = self.runtime
        k = self._size
        while True:
            start = self._send_seg.get()    # read before taking the index
            s = self._send_count.fetch_add(1)
            if rt.tracing:
                rt.emit(("faa", "send", s, self._recv_count.peek(), None))
            seg_id = s // k
            segm = find_and_move_forward(rt, self._send_seg, start, seg_id)
            if segm.id != seg_id:
                # every cell up to segm was reclaimed; drag the counter along
                skip_ahead(self._send_count, segm.id * k)
                self._restart("send", s, "segment_gone")
                continue
            cell = segm.cells[s - seg_id * k]
            cell.elem.set(element)
            outcome = self._finish_send(s, cell, segm, element)
            if outcome is OK:
                segm.clear_prev()
                return
            if outcome is CANCELLED:
                if rt.tracing:
                    rt.emit(("cancelled", "send", s))
                raise Interrupted(f"send interrupted at index {s}")
            self._restart("send", s, "cell_unusable")

    def _finish_send(self, s: int, cell: Cell, segm: Segment,
                     element: Any) -> str:
        rt = self.runtime
        state_ref = cell.state
        while True:
            state = state_ref.get()
            r = self._recv_count.get()
            if state is EMPTY and s >= r:
                # no receive owns this index yet: park in the cell
                w = rt.current_waiter(SEND, s)
                if state_ref.compare_and_set(EMPTY, w):
                    if self._metrics is not None:
                        self._metrics.on_suspend("send", s, r)
                        self._metrics.on_park()
                    if rt.tracing:
                        rt.emit(("suspended", "send", s, w, r, None, element))
                    if w.park(interrupt_cleanup(cell, segm, INTERRUPTED_SEND, w)) is INTERRUPTED:
                        return CANCELLED
                    if rt.tracing:
                        rt.emit(("completed", "send", s, "resumed", element, None))
                    return OK
                w.discard()
            elif isinstance(state, Waiter):
                # a receive parked here before our element arrived
                if state.try_unpark():
                    # emit before publishing DONE so the pairing is on record
                    # before the woken peer can run and report its own side
                    if rt.tracing:
                        rt.emit(("completed", "send", s, "paired", element, state))
                    state_ref.set(DONE)
                    return OK
                cell.elem.set(None)     # it was interrupted instead
                return RETRY
            elif state is EMPTY:
                # s < r: the receive already passed its check and will
                # re-read this cell; leave the element for it
                if state_ref.compare_and_set(EMPTY, BUFFERED):
                    if rt.tracing:
                        rt.emit(("completed", "send", s, "eliminated", element, None))
                    return OK
            elif state is BROKEN or state is INTERRUPTED_RCV:
                cell.elem.set(None)
                return RETRY
            else:
                raise RuntimeError(f"send met cell {s} in state {state!r}")

    # -- receive --------------------------------------------------------------

    def receive(self) -> Any:
        rt = self.runtime
        k = self._size
        while True:
            start = self._recv_seg.get()
            r = self._recv_count.fetch_add(1)
            if rt.tracing:
                rt.emit(("faa", "recv", r, self._send_count.peek(), None))
            seg_id = r // k
            segm = find_and_move_forward(rt, self._recv_seg, start, seg_id)
            if segm.id != seg_id:
                skip_ahead(self._recv_count, segm.id * k)
                self._restart("recv", r, "segment_gone")
                continue
            cell = segm.cells[r - seg_id * k]
            outcome = self._finish_receive(r, cell, segm)
            if outcome is OK:
                element = cell.elem.get()
                cell.elem.set(None)
                segm.clear_prev()
                return element
            if outcome is CANCELLED:
                if rt.tracing:
                    rt.emit(("cancelled", "recv", r))
                raise Interrupted(f"receive interrupted at index {r}")
            self._restart("recv", r, "cell_unusable")

    def _finish_receive(self, r: int, cell: Cell, segm: Segment) -> str:
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
                    if w.park(interrupt_cleanup(cell, segm, INTERRUPTED_RCV, w)) is INTERRUPTED:
                        return CANCELLED
                    if rt.tracing:
                        rt.emit(("completed", "recv", r, "resumed", cell.elem.peek(), None))
                    return OK
                w.discard()
            elif isinstance(state, Waiter):
                if state.try_unpark():
                    if rt.tracing:
                        rt.emit(("completed", "recv", r, "paired", cell.elem.peek(), state))
                    state_ref.set(DONE)
                    return OK
                return RETRY            # sender interrupted; its hook owns the cell
            elif state is EMPTY:
                # r < s: the send took this index long ago and still has not
                # shown up; poison the cell so we can move on without it
                if state_ref.compare_and_set(EMPTY, BROKEN):
                    if self._metrics is not None:
                        self._metrics.on_broken()
                    if rt.tracing:
                        rt.emit(("poisoned", r))
                    return RETRY
            elif state is BUFFERED:
                # the racing send left its element behind for us
                if rt.tracing:
                    rt.emit(("completed", "recv", r, "from_buffer", cell.elem.peek(), None))
                return OK
            elif state is INTERRUPTED_SEND:
                return RETRY
            else:
                raise RuntimeError(f"receive met cell {r} in state {state!r}")

    # -- shared ---------------------------------------------------------------

    def _restart(self, side: str, idx: int, why: str) -> None:
        if self.runtime.tracing:
            self.runtime.emit(("restart", side, idx, why))
        if self._metrics is not None:
            self._metrics.on_restart()

    def anchor_refs(self) -> list:
        return [self._send_seg, self._recv_seg]

    def counters(self) -> dict:
        return {"send": self._send_count.peek(), "recv": self._recv_count.peek()}

    def inspect(self) -> dict:
        """Peek-only census of counters, anchors, and all reachable cells.
        Safe to call mid-run from a test or a deterministic schedule."""
        segs = reachable_segments(self.anchor_refs())
        return {
            "send_count": self._send_count.peek(),
            "recv_count": self._recv_count.peek(),
            "anchor_ids": {"send": self._send_seg.peek().id,
                           "recv": self._recv_seg.peek().id},
            "segments": [
                {"id": g.id, "links": g.links(),
                 "interrupted": g.interrupted_count(),
                 "cells": [(cell_state_token(c.state.peek()), c.elem.peek())
                           for c in g.cells]}
                for g in segs
            ],
        }

    def fp(self) -> tuple:
        """Hashable snapshot of the full channel state, cheap enough to call
        once per explored scheduling step.  Covers everything inspect() does."""
        parts = [self._send_count.peek(), self._recv_count.peek(),
                 self._send_seg.peek().id, self._recv_seg.peek().id]
        for g in reachable_segments(self.anchor_refs()):
            parts.append((g.id, g._packed.peek(),
                          tuple((cell_state_token(c.state.peek()),
                                 fp_value(c.elem.peek()))
                                for c in g.cells)))
        return tuple(parts)

    def __repr__(self) -> str:
        return (f"<RendezvousChannel S={self._send_count.peek()} "
                f"R={self._recv_count.peek()} k={self._size}>")
