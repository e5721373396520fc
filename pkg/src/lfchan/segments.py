"""Segment-backed storage for a logically infinite cell array.

Channels index cells by ever-growing 64-bit counters; cells live in fixed
size segments linked into a list.  Segments whose cells were all abandoned
by interrupted operations unlink themselves so that memory stays bounded
by the number of live operations, not by the total traffic.

A segment's bookkeeping sits in one packed atomic word:

    high 16 bits: link count  = number of channel anchors referencing it
    low  16 bits: interrupted = number of cells abandoned by interrupts

A segment is removed when interrupted == segment_size and link count == 0,
i.e. the packed word equals segment_size exactly; that value is terminal
(``try_inc_links`` refuses to resurrect it).  The first segment starts
with link count equal to the channel's anchor count; segments created
later start at zero and are only pinned by anchor moves.
"""

from __future__ import annotations

from typing import Any, Optional

from .runtime import AtomicInt, AtomicRef, Runtime

__all__ = [
    "EMPTY", "BUFFERED", "DONE", "BROKEN", "IN_BUFFER", "DONE_RCV",
    "INTERRUPTED_SEND", "INTERRUPTED_RCV", "RESUMING_RCV", "RESUMING_EB",
    "TRANSIENT_STATES", "Cell", "Segment",
    "find_segment", "move_forward", "find_and_move_forward", "skip_ahead",
    "reachable_segments", "cell_state_token",
]

# Cell states.  EMPTY is None; a waiter-occupied cell holds the Waiter
# object itself (its .direction tells send from receive).
EMPTY = None
BUFFERED = "buffered"                    # element stored, awaiting its receive
DONE = "done"                            # rendezvous completed here
BROKEN = "broken"                        # poisoned: receive arrived before the send
IN_BUFFER = "in_buffer"                  # pre-marked as buffer space for a send
DONE_RCV = "done_receive"                # a send completed a parked receive here
INTERRUPTED_SEND = "interrupted_send"
INTERRUPTED_RCV = "interrupted_receive"
RESUMING_RCV = "resuming_by_receive"     # receive is resuming the parked sender
RESUMING_EB = "resuming_by_expand"       # buffer expansion is resuming the sender

# The only two states a context may wait out in a loop (outside park).
TRANSIENT_STATES = frozenset({RESUMING_RCV, RESUMING_EB})

_LINK = 1 << 16


class Cell:
    """One exchange slot: a state word, an element slot, and a flag that
    records a segment-notification handed off to buffer expansion."""

    __slots__ = ("state", "elem", "handoff")

    def __init__(self, rt: Runtime, name: str):
        # only the state word synchronizes; elem and handoff are ordered
        # through it (written before the CAS that publishes them, read after
        # the load that observes it)
        self.state = rt.new_ref(EMPTY, name=name + ".s")
        self.elem = rt.new_plain(None, name=name + ".e")
        self.handoff = rt.new_plain(False, name=name + ".h")


class Segment:
    __slots__ = ("id", "size", "cells", "next", "prev", "_packed", "fp_token")

    def __init__(self, rt: Runtime, seg_id: int, size: int,
                 prev: Optional["Segment"], links: int = 0):
        assert size < (1 << 16)
        name = f"g{seg_id}"
        self.id = seg_id
        self.size = size
        self.fp_token = ("G", seg_id)
        self.cells = [Cell(rt, f"{name}.{i}") for i in range(size)]
        self.next: AtomicRef = rt.new_ref(None, name=name + ".next")
        self.prev: AtomicRef = rt.new_ref(prev, name=name + ".prev")
        self._packed: AtomicInt = rt.new_int(links * _LINK, name=name + ".packed")

    # -- packed word ------------------------------------------------------

    def removed(self) -> bool:
        return self._packed.get() == self.size

    def try_inc_links(self) -> bool:
        packed = self._packed
        while True:
            p = packed.get()
            if p == self.size:  # removed; cannot be resurrected
                return False
            if packed.compare_and_set(p, p + _LINK):
                return True

    def dec_links(self) -> bool:
        """Drop one anchor reference; True if the segment is now removed."""
        old = self._packed.fetch_add(-_LINK)
        return old - _LINK == self.size

    def on_cell_interrupted(self) -> None:
        """Account one abandoned cell; unlinks the segment once full."""
        old = self._packed.fetch_add(1)
        new = old + 1
        if new & 0xFFFF > self.size:
            raise RuntimeError(f"segment {self.id}: interrupted count above size")
        if new == self.size:
            self.remove()

    # -- introspection (never a scheduling point) ---------------------------

    def links(self) -> int:
        return self._packed.peek() >> 16

    def interrupted_count(self) -> int:
        return self._packed.peek() & 0xFFFF

    # -- unlinking ----------------------------------------------------------

    def remove(self) -> None:
        """Physically unlink this fully-abandoned segment.

        The tail segment stays: the next append will re-trigger removal.
        Raced neighbor removals are healed by the re-check loop.
        """
        while True:
            if self.next.get() is None:
                return
            left = self._alive_left()
            right = self._alive_right()
            right.prev.set(left)
            if left is not None:
                left.next.set(right)
            if right.removed() and right.next.get() is not None:
                continue
            if left is not None and left.removed():
                continue
            return

    def _alive_left(self) -> Optional["Segment"]:
        cur = self.prev.get()
        while cur is not None and cur.removed():
            cur = cur.prev.get()
        return cur

    def _alive_right(self) -> "Segment":
        cur = self.next.get()
        while cur.removed():
            nxt = cur.next.get()
            if nxt is None:
                break
            cur = nxt
        return cur

    def clear_prev(self) -> None:
        # Completed (never-interrupted) cells pin this segment forever, so
        # remove() can no longer need the left link; drop it for the GC.
        self.prev.set(None)

    def __repr__(self) -> str:
        p = self._packed.peek()
        return f"<Segment {self.id} links={p >> 16} interrupted={p & 0xFFFF}>"


def find_segment(rt: Runtime, start: Segment, seg_id: int) -> Segment:
    """Walk (and extend) the list to the first non-removed segment with
    id >= seg_id.  May return a segment with a larger id when the exact
    one was removed."""
    cur = start
    while cur.id < seg_id or cur.removed():
        if cur.next.get() is None:
            fresh = Segment(rt, cur.id + 1, cur.size, prev=cur)
            if cur.next.compare_and_set(None, fresh):
                if cur.removed():
                    cur.remove()
        cur = cur.next.get()
    return cur


def move_forward(anchor: AtomicRef, to: Segment) -> bool:
    """Advance an anchor to ``to`` unless it is already past it.
    False means ``to`` was removed before it could be pinned."""
    while True:
        cur = anchor.get()
        if cur.id >= to.id:
            return True
        if not to.try_inc_links():
            return False
        if anchor.compare_and_set(cur, to):
            if cur.dec_links():
                cur.remove()
            return True
        if to.dec_links():
            to.remove()


def find_and_move_forward(rt: Runtime, anchor: AtomicRef, start: Segment,
                          seg_id: int) -> Segment:
    while True:
        segm = find_segment(rt, start, seg_id)
        if move_forward(anchor, segm):
            return segm


def skip_ahead(counter: AtomicInt, target: int) -> None:
    """One max-CAS attempt moving a channel counter past a removed range;
    the caller retries its whole operation either way."""
    cur = counter.get()
    if cur < target:
        counter.compare_and_set(cur, target)


# -- introspection ----------------------------------------------------------

def reachable_segments(anchors: list[AtomicRef]) -> list["Segment"]:
    """Every segment reachable from the given anchors over next/prev links,
    in id order.  Peek-only: usable mid-run from tests without perturbing a
    deterministic schedule."""
    seen: dict[int, Segment] = {}
    stack = [a.peek() for a in anchors]
    while stack:
        seg = stack.pop()
        if seg is None or seg.id in seen:
            continue
        seen[seg.id] = seg
        stack.append(seg.next.peek())
        stack.append(seg.prev.peek())
    return [seen[i] for i in sorted(seen)]


def cell_state_token(state: Any) -> Any:
    """Hashable, schedule-independent description of a cell state word."""
    if state is EMPTY:
        return "empty"
    if isinstance(state, str):
        return state
    # a parked operation: identity plus where its handshake stands
    return state.fp_token + (state.lifecycle(),)


def fp_value(value: Any) -> Any:
    """Element payload as something hashable, for state fingerprints."""
    if value is None or isinstance(value, (int, float, str, bool, bytes)):
        return value
    return repr(value)
