"""Segment list tests: growth, the packed links/interrupted word, physical
removal, and the healing of raced neighbor removals."""

import pytest

from lfchan.coop import CoopRuntime
from lfchan.runtime import ThreadRuntime
from lfchan.segments import (
    EMPTY,
    Segment,
    find_segment,
    move_forward,
    reachable_segments,
    skip_ahead,
)


def _chain(rt, count, size=4, links=1):
    head = Segment(rt, 0, size, prev=None, links=links)
    tail = find_segment(rt, head, count - 1)
    assert tail.id == count - 1
    return head


def _ids(anchor_refs):
    return [s.id for s in reachable_segments(anchor_refs)]


def test_find_segment_appends_up_to_id():
    rt = ThreadRuntime()
    head = Segment(rt, 0, 4, prev=None)
    seg = find_segment(rt, head, 3)
    assert seg.id == 3
    assert seg.size == 4
    assert all(c.state.peek() is EMPTY for c in seg.cells)
    # intermediate segments exist and are back-linked
    assert seg.prev.peek().id == 2
    assert head.next.peek().id == 1


def test_find_segment_is_idempotent():
    rt = ThreadRuntime()
    head = Segment(rt, 0, 4, prev=None)
    a = find_segment(rt, head, 2)
    b = find_segment(rt, head, 2)
    assert a is b


def test_packed_word_tracks_links_and_interrupts():
    rt = ThreadRuntime()
    seg = Segment(rt, 0, 4, prev=None, links=2)
    assert seg.links() == 2
    assert seg.interrupted_count() == 0
    seg.on_cell_interrupted()
    seg.on_cell_interrupted()
    seg.on_cell_interrupted()
    assert seg.interrupted_count() == 3
    assert not seg.removed()
    assert not seg.dec_links()
    assert not seg.dec_links()
    assert seg.links() == 0
    # last abandoned cell tips it over
    seg.on_cell_interrupted()
    assert seg.removed()


def test_interrupt_count_above_size_is_rejected():
    rt = ThreadRuntime()
    seg = Segment(rt, 0, 2, prev=None)
    seg.on_cell_interrupted()
    seg.on_cell_interrupted()
    with pytest.raises(RuntimeError):
        seg.on_cell_interrupted()


def test_removed_segment_refuses_new_links():
    rt = ThreadRuntime()
    head = _chain(rt, 3)
    mid = head.next.peek()
    for _ in range(mid.size):
        mid.on_cell_interrupted()
    assert mid.removed()
    assert mid.try_inc_links() is False
    live = head.next.peek()
    assert live.try_inc_links() is True
    assert live.links() == 1


def test_full_interrupt_unlinks_middle_segment():
    rt = ThreadRuntime()
    anchor = None
    head = _chain(rt, 3)
    mid = head.next.peek()
    for _ in range(4):
        mid.on_cell_interrupted()
    assert head.next.peek().id == 2
    assert head.next.peek().prev.peek() is head
    anchor = rt.new_ref(head)
    assert _ids([anchor]) == [0, 2]


def test_find_segment_skips_removed_ids():
    rt = ThreadRuntime()
    head = _chain(rt, 4)
    seg2 = find_segment(rt, head, 2)
    for _ in range(4):
        seg2.on_cell_interrupted()
    # asking for the removed id yields the next live segment
    assert find_segment(rt, head, 2).id == 3


def test_tail_is_not_unlinked_until_successor_appears():
    rt = ThreadRuntime()
    head = _chain(rt, 2)
    tail = head.next.peek()
    for _ in range(4):
        tail.on_cell_interrupted()
    assert tail.removed()
    # still physically linked: nothing to splice it to
    assert head.next.peek() is tail
    # the next append finishes the removal
    fresh = find_segment(rt, head, 2)
    assert fresh.id == 2
    assert head.next.peek() is fresh
    assert fresh.prev.peek() is head


def test_move_forward_transfers_anchor_links():
    rt = ThreadRuntime()
    head = Segment(rt, 0, 4, prev=None, links=1)
    anchor = rt.new_ref(head)
    target = find_segment(rt, head, 2)
    assert move_forward(anchor, target) is True
    assert anchor.peek() is target
    assert target.links() == 1
    assert head.links() == 0


def test_move_forward_never_goes_backwards():
    rt = ThreadRuntime()
    head = Segment(rt, 0, 4, prev=None, links=1)
    anchor = rt.new_ref(head)
    target = find_segment(rt, head, 2)
    move_forward(anchor, target)
    assert move_forward(anchor, head) is True   # no-op, already past
    assert anchor.peek() is target


def test_move_forward_fails_on_removed_target():
    rt = ThreadRuntime()
    head = Segment(rt, 0, 4, prev=None, links=1)
    anchor = rt.new_ref(head)
    target = find_segment(rt, head, 1)
    find_segment(rt, head, 2)                   # give the target a successor
    for _ in range(4):
        target.on_cell_interrupted()
    assert move_forward(anchor, target) is False
    assert anchor.peek() is head


def test_dropping_last_anchor_link_removes_abandoned_segment():
    rt = ThreadRuntime()
    head = Segment(rt, 0, 4, prev=None, links=1)
    anchor = rt.new_ref(head)
    for _ in range(4):
        head.on_cell_interrupted()
    assert not head.removed()                   # the anchor link pins it
    target = find_segment(rt, head, 1)
    assert move_forward(anchor, target) is True
    assert head.removed()
    assert target.prev.peek() is None


def test_skip_ahead_single_attempt_semantics():
    rt = ThreadRuntime()
    counter = rt.new_int(2)
    skip_ahead(counter, 5)
    assert counter.peek() == 5
    skip_ahead(counter, 3)                      # behind: leave it alone
    assert counter.peek() == 5


def test_raced_adjacent_removals_heal_the_chain():
    # Two segments die concurrently; whatever order the unlink steps
    # interleave in, the survivors end up linked to each other.
    for seed in range(150):
        rt = CoopRuntime(seed=seed)
        head = _chain(rt, 4, links=1)
        anchor = rt.new_ref(head)
        seg1 = find_segment(rt, head, 1)
        seg2 = find_segment(rt, head, 2)

        def kill(seg):
            def body():
                for _ in range(seg.size):
                    seg.on_cell_interrupted()
            return body

        rt.spawn(kill(seg1))
        rt.spawn(kill(seg2))
        assert rt.run() == "done"
        assert _ids([anchor]) == [0, 3]
        tail = find_segment(rt, head, 3)
        assert head.next.peek() is tail
        assert tail.prev.peek() is head
        rt.dispose()


def test_raced_triple_removal_heals_the_chain():
    for seed in range(100):
        rt = CoopRuntime(seed=seed)
        head = _chain(rt, 5, links=1)
        anchor = rt.new_ref(head)
        victims = [find_segment(rt, head, i) for i in (1, 2, 3)]

        def kill(seg):
            def body():
                for _ in range(seg.size):
                    seg.on_cell_interrupted()
            return body

        for seg in victims:
            rt.spawn(kill(seg))
        assert rt.run() == "done"
        assert _ids([anchor]) == [0, 4]
        rt.dispose()


def test_concurrent_append_and_removal():
    # One context grows the list while another empties a middle segment.
    for seed in range(100):
        rt = CoopRuntime(seed=seed)
        head = _chain(rt, 3, links=1)
        anchor = rt.new_ref(head)
        seg1 = find_segment(rt, head, 1)
        got = []

        def grower():
            got.append(find_segment(rt, head, 4).id)

        def killer():
            for _ in range(seg1.size):
                seg1.on_cell_interrupted()

        rt.spawn(grower)
        rt.spawn(killer)
        assert rt.run() == "done"
        assert got == [4]
        ids = _ids([anchor])
        assert 1 not in ids
        assert ids[0] == 0 and ids[-1] == 4
        rt.dispose()
