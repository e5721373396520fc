"""Buffered channel over counter-reserved cells.

Adds a bounded element buffer to the rendezvous protocol from
:mod:`lfchan.rendezvous`.  A third counter tracks the end of the buffer
zone: a send whose index falls below it stores its element in the cell
and returns immediately, and every completed receive advances the zone
by one cell so the channel never holds more than ``capacity`` elements.

The buffer-expansion procedure is the subtle part.  It claims the next
zone index with fetch-and-add and then has to cooperate with whatever
already happened at that cell: resume a parked sender into a stored
element, mark an untouched cell as pre-approved buffer space, or skip a
cell wasted by a cancelled sender and take the next one.  Receives that
find a parked sender resume it the same way instead of pairing with it,
which keeps senders leaving in index order.
"""

from typing import Any, Callable, Optional

from .metrics import ChannelMetrics
from .runtime import (INTERRUPTED, RECEIVE, SEND, Interrupted, Runtime,
                      ThreadRuntime, Waiter)
from .rendezvous import CANCELLED, OK, RETRY, interrupt_cleanup
from .segments import (BROKEN, BUFFERED, DONE_RCV, EMPTY, IN_BUFFER,
                       INTERRUPTED_RCV, INTERRUPTED_SEND, RESUMING_EB,
                       RESUMING_RCV, Cell, Segment, cell_state_token,
                       find_and_move_forward, fp_value, reachable_segments,
                       skip_ahead)


class BufferedChannel:
    """Channel that stores up to ``capacity`` elements between the sides.

    ``send`` suspends only while the buffer is full and no receiver
    waits; ``receive`` suspends only while the channel is empty.
    Elements arrive in send order.
    """

    def __init__(self, capacity: int, runtime: Optional[Runtime] = None,
                 segment_size: int = 32,
                 metrics: Optional[ChannelMetrics] = None):
        if capacity < 1:
            raise ValueError("capacity must be at least 1; use "
                             "RendezvousChannel for direct handoff")
        if segment_size < 1:
            raise ValueError("segment_size must be at least 1")
        rt = runtime if runtime is not None else ThreadRuntime()
        self.runtime = rt
        self.capacity = capacity
        self._size = segment_size
        # three anchors point at the first segment: one per counter
        first = Segment(rt, 0, segment_size, prev=None, links=3)
        self._send_count = rt.new_int(0, name="S")
        self._recv_count = rt.new_int(0, name="R")
        self._buf_end = rt.new_int(capacity, name="B")
        self._send_seg = rt.new_ref(first, name="anchorS")
        self._recv_seg = rt.new_ref(first, name="anchorR")
        self._buf_seg = rt.new_ref(first, name="anchorB")
        self.metrics = metrics if metrics is not None else ChannelMetrics()

    def anchor_refs(self):
        return (self._send_seg, self._recv_seg, self._buf_seg)

    def counters(self) -> dict:
        return {"send": self._send_count.peek(),
                "recv": self._recv_count.peek(),
                "buf_end": self._buf_end.peek()}

    # -- sending ---------------------------------------------------------

    def send(self, element: Any) -> None:
        """Store ``element``, suspending while the buffer is full.

        Raises Interrupted if the caller is cancelled while suspended.
        """
        if element is None:
            raise ValueError("None cannot be sent through a channel")
        rt = self.runtime
        k = self._size
        while True:
            start = self._send_seg.get()
            s = self._send_count.fetch_add(1)
            rt.emit(("faa", "send", s, self._recv_count.peek(),
                     self._buf_end.peek()))
            seg_id = s // k
            segm = find_and_move_forward(rt, self._send_seg, start, seg_id)
            if segm.id != seg_id:
                # the segment with our cell was reclaimed; push the counter
                # past the gap and take a fresh index
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
                rt.emit(("cancelled", "send", s))
                raise Interrupted()
            self._restart("send", s, "cell_unusable")

    def _finish_send(self, s: int, cell: Cell, segm: Segment,
                     element: Any) -> str:
        rt = self.runtime
        while True:
            state = cell.state.get()
            r = self._recv_count.get()
            b = self._buf_end.get()
            if (state is EMPTY and (s < r or s < b)) or state is IN_BUFFER:
                # the cell is inside the buffer zone, or a receiver already
                # passed it and expansion will cover it: store and leave
                if cell.state.compare_and_set(state, BUFFERED):
                    rt.emit(("completed", "send", s, "buffered", element,
                             None))
                    return OK
            elif state is EMPTY:
                # no receiver reached this index and the buffer is full
                w = rt.current_waiter(SEND, s)
                if cell.state.compare_and_set(EMPTY, w):
                    self.metrics.on_suspend("send", s, r, buffer_end=b)
                    self.metrics.on_park()
                    rt.emit(("suspended", "send", s, w, r, b, element))
                    hook = self._send_interrupt_hook(cell, segm, s, w)
                    if w.park(hook) is INTERRUPTED:
                        return CANCELLED
                    rt.emit(("completed", "send", s, "resumed", element,
                             None))
                    return OK
                w.discard()
            elif isinstance(state, Waiter):
                # a parked receiver; hand the element over directly
                if state.try_unpark():
                    rt.emit(("completed", "send", s, "paired", element,
                             state))
                    cell.state.set(DONE_RCV)
                    return OK
                cell.elem.set(None)
                return RETRY
            elif state is INTERRUPTED_RCV or state is BROKEN:
                cell.elem.set(None)
                return RETRY
            else:
                raise RuntimeError(
                    f"send found its own cell {s} in state "
                    f"{cell_state_token(state)!r}")

    def _send_interrupt_hook(self, cell: Cell, segm: Segment, s: int,
                             w: Waiter) -> Callable[[], None]:
        def hook() -> None:
            cell.elem.set(None)
            if self._recv_count.get() > s:
                # a receive already owns this index, so buffer expansion is
                # bound to inspect the cell; let it report the cancellation
                # to the segment, otherwise the segment could disappear
                # while expansion still needs to read this cell
                cell.handoff.set(True)
                cell.state.compare_and_set(w, INTERRUPTED_SEND)
                return
            if cell.state.compare_and_set(w, INTERRUPTED_SEND):
                segm.on_cell_interrupted()
            # on failure a resumer owns the cell; its failure path both
            # publishes the dead state and settles the accounting
        return hook

    # -- receiving -------------------------------------------------------

    def receive(self) -> Any:
        """Take the oldest element, suspending while the channel is empty.

        Raises Interrupted if the caller is cancelled while suspended.
        """
        rt = self.runtime
        k = self._size
        while True:
            start = self._recv_seg.get()
            r = self._recv_count.fetch_add(1)
            rt.emit(("faa", "recv", r, self._send_count.peek(),
                     self._buf_end.peek()))
            seg_id = r // k
            segm = find_and_move_forward(rt, self._recv_seg, start, seg_id)
            if segm.id != seg_id:
                skip_ahead(self._recv_count, segm.id * k)
                self._restart("recv", r, "segment_gone")
                continue
            cell = segm.cells[r - seg_id * k]
            outcome, value = self._finish_receive(r, cell, segm)
            if outcome is OK:
                segm.clear_prev()
                return value
            if outcome is CANCELLED:
                rt.emit(("cancelled", "recv", r))
                raise Interrupted()
            self._restart("recv", r, "cell_unusable")

    def _finish_receive(self, r: int, cell: Cell, segm: Segment):
        rt = self.runtime
        while True:
            state = cell.state.get()
            s = self._send_count.get()
            if state is EMPTY or state is IN_BUFFER:
                if r >= s:
                    # no sender reached this index yet: park, but grow the
                    # buffer zone first so senders are not blocked by the
                    # slot this receive will eventually free
                    w = rt.current_waiter(RECEIVE, r)
                    if cell.state.compare_and_set(state, w):
                        self.metrics.on_suspend("recv", r, s)
                        self.metrics.on_park()
                        rt.emit(("suspended", "recv", r, w, s, None, None))
                        self._expand_buffer()
                        hook = interrupt_cleanup(cell, segm,
                                                 INTERRUPTED_RCV, w)
                        if w.park(hook) is INTERRUPTED:
                            return CANCELLED, None
                        value = cell.elem.get()
                        cell.elem.set(None)
                        rt.emit(("completed", "recv", r, "resumed", value,
                                 None))
                        return OK, value
                    w.discard()
                else:
                    # a sender owns this index but has not stored yet;
                    # poison the cell so it retries at a fresh one
                    if cell.state.compare_and_set(state, BROKEN):
                        self.metrics.on_broken()
                        rt.emit(("poisoned", r))
                        self._expand_buffer()
                        return RETRY, None
            elif state is BUFFERED:
                self._expand_buffer()
                value = cell.elem.get()
                cell.elem.set(None)
                rt.emit(("completed", "recv", r, "from_buffer", value,
                         None))
                return OK, value
            elif state is INTERRUPTED_SEND:
                # expansion already skipped (or will skip) this cell and
                # took a fresh one, so no zone adjustment here
                return RETRY, None
            elif isinstance(state, Waiter):
                # a parked sender: resume it into a stored element rather
                # than pairing, so senders depart in index order
                if cell.state.compare_and_set(state, RESUMING_RCV):
                    if state.try_unpark():
                        rt.emit(("promoted", r, state))
                        cell.state.set(BUFFERED)
                    else:
                        cell.handoff.set(True)
                        cell.state.set(INTERRUPTED_SEND)
                # loop around and treat the published state normally
            elif state is RESUMING_EB:
                rt.spin_hint(cell.state, RESUMING_EB)
            else:
                raise RuntimeError(
                    f"receive found its own cell {r} in state "
                    f"{cell_state_token(state)!r}")

    # -- buffer expansion --------------------------------------------------

    def _expand_buffer(self) -> None:
        rt = self.runtime
        k = self._size
        while True:
            b = self._buf_end.fetch_add(1)
            if b >= self._send_count.get():
                # the zone end moved past every send so far; any sender
                # arriving at index b will see it pre-approved
                return
            start = self._buf_seg.get()
            seg_id = b // k
            segm = find_and_move_forward(rt, self._buf_seg, start, seg_id)
            if segm.id != seg_id:
                skip_ahead(self._buf_end, segm.id * k)
                continue
            cell = segm.cells[b - seg_id * k]
            if self._update_cell_eb(b, cell, segm):
                segm.clear_prev()
                return

    def _update_cell_eb(self, b: int, cell: Cell, segm: Segment) -> bool:
        rt = self.runtime
        while True:
            state = cell.state.get()
            if isinstance(state, Waiter):
                if state.direction == RECEIVE:
                    # receivers never block the zone; the send that pairs
                    # with this one bypasses the buffer entirely
                    return True
                if cell.state.compare_and_set(state, RESUMING_EB):
                    if state.try_unpark():
                        rt.emit(("promoted", b, state))
                        cell.state.set(BUFFERED)
                        return True
                    cell.state.set(INTERRUPTED_SEND)
                    segm.on_cell_interrupted()
                    return False
            elif state is EMPTY:
                if cell.state.compare_and_set(EMPTY, IN_BUFFER):
                    rt.emit(("eb_marked", b))
                    return True
            elif state is BUFFERED:
                return True
            elif state is INTERRUPTED_SEND:
                # a cancelled sender wasted this index: take the next one,
                # and report the cell to the segment if the cancellation
                # hook left that to us (no race: each zone index is claimed
                # by one fetch-and-add, so one expansion reads this branch)
                if cell.handoff.get():
                    cell.handoff.set(False)
                    segm.on_cell_interrupted()
                return False
            elif state is RESUMING_RCV:
                rt.spin_hint(cell.state, RESUMING_RCV)
            elif state in (DONE_RCV, INTERRUPTED_RCV, BROKEN):
                return True
            else:
                raise RuntimeError(
                    f"buffer expansion found cell {b} in state "
                    f"{cell_state_token(state)!r}")

    # -- misc --------------------------------------------------------------

    def _restart(self, side: str, idx: int, why: str) -> None:
        self.metrics.on_restart()
        self.runtime.emit(("restart", side, idx, why))

    def quiescent_balance(self) -> dict:
        """Audit an idle channel: free buffer slots plus stored elements
        must add up to the capacity.

        Only meaningful with no operation in flight; raises if a cell
        still holds a waiter or a resume marker.
        """
        b_end = self._buf_end.peek()
        k = self._size
        in_buffer = 0
        empty_below = 0
        stored = 0
        top = 0
        for segm in reachable_segments(self.anchor_refs()):
            for i, cell in enumerate(segm.cells):
                idx = segm.id * k + i
                st = cell.state.peek()
                if isinstance(st, Waiter) or st in (RESUMING_RCV,
                                                    RESUMING_EB):
                    raise RuntimeError(
                        f"balance audit on a busy channel: cell {idx} is "
                        f"{cell_state_token(st)!r}")
                if st is IN_BUFFER:
                    in_buffer += 1
                elif st is EMPTY and idx < b_end:
                    empty_below += 1
                elif st is BUFFERED and cell.elem.peek() is not None:
                    stored += 1
            top = (segm.id + 1) * k
        free = in_buffer + empty_below + max(0, b_end - top)
        return {"buffer_cells": free, "stored_elements": stored,
                "capacity": self.capacity,
                "balanced": free + stored == self.capacity}

    def inspect(self) -> dict:
        """Snapshot of counters and reachable cells, for tests and debug."""
        segs = []
        for segm in reachable_segments(self.anchor_refs()):
            segs.append({
                "id": segm.id,
                "links": segm.links(),
                "interrupted": segm.interrupted_count(),
                "cells": [(cell_state_token(c.state.peek()), c.elem.peek())
                          for c in segm.cells],
            })
        return {
            "send_count": self._send_count.peek(),
            "recv_count": self._recv_count.peek(),
            "buf_end": self._buf_end.peek(),
            "anchor_ids": {"send": self._send_seg.peek().id,
                           "recv": self._recv_seg.peek().id,
                           "buf": self._buf_seg.peek().id},
            "segments": segs,
        }

    def fp(self) -> tuple:
        """Hashable snapshot of the full channel state, cheap enough to call
        once per explored scheduling step.  Covers everything inspect() does
        plus the per-cell accounting handoff flags."""
        parts = [self._send_count.peek(), self._recv_count.peek(),
                 self._buf_end.peek(), self._send_seg.peek().id,
                 self._recv_seg.peek().id, self._buf_seg.peek().id]
        for g in reachable_segments(self.anchor_refs()):
            parts.append((g.id, g._packed.peek(),
                          tuple((cell_state_token(c.state.peek()),
                                 fp_value(c.elem.peek()),
                                 c.handoff.peek())
                                for c in g.cells)))
        return tuple(parts)

    def __repr__(self) -> str:
        return (f"<BufferedChannel cap={self.capacity} "
                f"S={self._send_count.peek()} R={self._recv_count.peek()} "
                f"B={self._buf_end.peek()}>")
