"""Waiter lifecycle tests: park, resume, interrupt, and their races.

The lifecycle word is the only synchronization between an operation that
suspends and the parties trying to resume or cancel it, so the pairwise
races get exercised under the cooperative scheduler across many seeds.
"""

import threading

import pytest

from lfchan.coop import CoopRuntime
from lfchan.runtime import (
    INTERRUPTED,
    PARKED,
    RESUMED,
    SEND,
    ThreadRuntime,
)


def test_resume_before_park_skips_blocking():
    rt = CoopRuntime()
    statuses = []
    box = [None]

    def owner():
        w = rt.current_waiter(SEND, 0)
        box[0] = w
        statuses.append(w.park(lambda: None))

    rt.spawn(owner)
    # stop as soon as the waiter exists but before it suspends
    verdict = rt.run(chooser=lambda cands, step: None if box[0] else cands[0])
    assert verdict == "stopped"
    assert box[0].try_unpark() is True
    assert rt.run() == "done"
    assert statuses == [RESUMED]
    rt.dispose()


def test_interrupt_before_park_runs_hook_without_blocking():
    rt = CoopRuntime()
    statuses = []
    hooks = []
    box = [None]

    def owner():
        w = rt.current_waiter(SEND, 0)
        box[0] = w
        statuses.append(w.park(lambda: hooks.append("ran")))

    rt.spawn(owner)
    rt.run(chooser=lambda cands, step: None if box[0] else cands[0])
    assert box[0].interrupt() is True
    assert rt.run() == "done"
    assert statuses == [INTERRUPTED]
    assert hooks == ["ran"]
    rt.dispose()


def test_unpark_wakes_parked_context():
    rt = CoopRuntime()
    statuses = []
    box = [None]

    def owner():
        w = rt.current_waiter(SEND, 3)
        box[0] = w
        statuses.append(w.park(lambda: None))

    rt.spawn(owner)
    assert rt.run() == "parked"
    assert box[0].lifecycle() == PARKED
    assert box[0].try_unpark() is True
    assert box[0].try_unpark() is False
    assert rt.run() == "done"
    assert statuses == [RESUMED]
    rt.dispose()


def test_interrupt_on_parked_runs_hook_then_wakes():
    rt = CoopRuntime()
    order = []
    box = [None]

    def owner():
        w = rt.current_waiter(SEND, 0)
        box[0] = w
        out = w.park(lambda: order.append("hook"))
        order.append(out)

    rt.spawn(owner)
    assert rt.run() == "parked"
    assert box[0].interrupt() is True
    # the hook ran on the interrupting side, before the owner resumed
    assert order == ["hook"]
    assert rt.run() == "done"
    assert order == ["hook", INTERRUPTED]
    rt.dispose()


def test_waiter_parks_only_once():
    rt = CoopRuntime()
    caught = []

    def owner():
        w = rt.current_waiter(SEND, 0)
        w.try_unpark()
        w.park(lambda: None)
        try:
            w.park(lambda: None)
        except RuntimeError:
            caught.append(True)

    rt.spawn(owner)
    assert rt.run() == "done"
    assert caught == [True]
    rt.dispose()


@pytest.mark.parametrize("pre_parked", [False, True])
def test_resume_interrupt_race_has_one_winner(pre_parked):
    # Across seeds the race lands both ways; each single run must pick
    # exactly one winner, and the hook must fire iff the interrupt won.
    winners = set()
    for seed in range(120):
        rt = CoopRuntime(seed=seed)
        box = [None]
        statuses = []
        hooks = []
        outcomes = {}

        def owner():
            w = rt.current_waiter(SEND, 0)
            box[0] = w
            statuses.append(w.park(lambda: hooks.append("ran")))

        rt.spawn(owner)
        if pre_parked:
            assert rt.run() == "parked"
        else:
            rt.run(chooser=lambda cands, step: None if box[0] else cands[0])
        w = box[0]
        rt.spawn(lambda: outcomes.__setitem__("resume", w.try_unpark()))
        rt.spawn(lambda: outcomes.__setitem__("interrupt", w.interrupt()))
        assert rt.run() == "done"
        assert [outcomes["resume"], outcomes["interrupt"]].count(True) == 1
        if outcomes["interrupt"]:
            assert statuses == [INTERRUPTED]
            assert hooks == ["ran"]
            winners.add("interrupt")
        else:
            assert statuses == [RESUMED]
            assert hooks == []
            winners.add("resume")
        rt.dispose()
    assert winners == {"resume", "interrupt"}


def test_double_interrupt_single_winner():
    rt = CoopRuntime()
    box = [None]
    hooks = []

    def owner():
        w = rt.current_waiter(SEND, 0)
        box[0] = w
        w.park(lambda: hooks.append("ran"))

    rt.spawn(owner)
    assert rt.run() == "parked"
    assert box[0].interrupt() is True
    assert box[0].interrupt() is False
    assert rt.run() == "done"
    assert hooks == ["ran"]
    rt.dispose()


def test_discard_reposts_a_lost_interrupt():
    # An interrupt that lands on a waiter whose installation then loses its
    # race must not vanish: discard() forwards it to the context's next park.
    rt = CoopRuntime()
    box = [None]
    log = []

    def owner():
        w1 = rt.current_waiter(SEND, 0)
        box[0] = w1
        # ... installation CAS lost here; waiter is dropped (external
        # interrupt arrives in the stop window below) ...
        w1.discard()
        w2 = rt.current_waiter(SEND, 1)
        log.append(w2.park(lambda: log.append("hook")))

    rt.spawn(owner)
    rt.run(chooser=lambda cands, step: None if box[0] else cands[0])
    assert box[0].interrupt() is True
    assert rt.run() == "done"
    assert log == ["hook", INTERRUPTED]
    rt.dispose()


def test_pending_context_interrupt_lands_on_next_park():
    rt = CoopRuntime()
    log = []

    def owner():
        w = rt.current_waiter(SEND, 0)
        log.append(w.park(lambda: log.append("hook")))

    ctx = rt.spawn(owner)
    ctx.interrupt()                  # nothing parked yet: remembered
    assert rt.run() == "done"        # park returns without suspending
    assert log == ["hook", INTERRUPTED]
    rt.dispose()


def test_discard_clears_clean_waiters():
    rt = CoopRuntime()
    log = []

    def owner():
        w1 = rt.current_waiter(SEND, 0)
        w1.discard()                 # no interrupt happened: stays clean
        w2 = rt.current_waiter(SEND, 1)
        w2.try_unpark()
        log.append(w2.park(lambda: log.append("hook")))

    rt.spawn(owner)
    assert rt.run() == "done"
    assert log == [RESUMED]
    rt.dispose()


def test_thread_runtime_park_and_resume():
    rt = ThreadRuntime()
    ready = threading.Event()
    box = {}

    def owner():
        w = rt.current_waiter(SEND, 0)
        box["w"] = w
        ready.set()
        box["status"] = w.park(lambda: None)

    t = threading.Thread(target=owner)
    t.start()
    ready.wait(5)
    # try_unpark handles both the pre-park and parked windows, so no
    # need to wait for the suspend itself
    assert box["w"].try_unpark() is True
    t.join(5)
    assert not t.is_alive()
    assert box["status"] == RESUMED


def test_thread_runtime_interrupt_parked():
    rt = ThreadRuntime()
    ready = threading.Event()
    box = {}
    hooks = []

    def owner():
        w = rt.current_waiter(SEND, 0)
        box["w"] = w
        ready.set()
        box["status"] = w.park(lambda: hooks.append("ran"))

    t = threading.Thread(target=owner)
    t.start()
    ready.wait(5)
    while box["w"].lifecycle() != PARKED:
        pass
    assert box["w"].interrupt() is True
    t.join(5)
    assert not t.is_alive()
    assert box["status"] == INTERRUPTED
    assert hooks == ["ran"]
