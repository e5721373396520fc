"""Cooperative deterministic runtime.

Contexts are greenlets multiplexed onto the calling thread.  Every atomic
access is handed to the scheduler and executed when (and only when) the
owning context is scheduled, so each scheduling choice corresponds to one
shared-memory step.  A chooser callback picks which runnable context steps
next; replaying the same choices replays the same execution, which is what
the model checker in ``explorer.py`` builds on.

Between two accesses a context runs pure local Python, which is invisible
to other contexts and therefore not a scheduling point.  One consequence
the history checker depends on: a step executes the access AND the local
code after it up to the next access, so an ``emit`` placed directly after
an access lands in the event stream atomically with that access.  Channel
code keeps every emit in the same step as the access it describes.

Contexts block in two ways:

* parked: the waiter lifecycle word moved to PARKED and the context called
  ``Waiter._block``.  It becomes runnable again when resumed/interrupted.
* spinning: the context observed one of the sanctioned transient cell
  states and called ``spin_hint``.  It becomes runnable when the watched
  ref is next written.  Any other spin is a protocol violation and raises
  when ``strict_spin`` is configured.
"""

from __future__ import annotations

import random
from typing import Any, Callable, Optional

import greenlet

from .runtime import Context, Runtime, Waiter

__all__ = ["CoopRuntime", "round_robin", "random_walk", "first_runnable"]

_NEW = "new"
_READY = "ready"
_RUNNING = "running"
_PARKED_WAIT = "parked"
_SPIN_WAIT = "spinning"
_DONE = "done"


def _canon(v: Any) -> Any:
    token = getattr(v, "fp_token", None)
    if token is not None:
        return token
    if isinstance(v, (int, float, str, bool, tuple, frozenset)) or v is None:
        return v
    return repr(v)


class _CoopRef:
    __slots__ = ("_value", "name", "_rt")

    def __init__(self, rt: "CoopRuntime", value: Any, name: str):
        self._rt = rt
        self._value = value
        self.name = name

    def get(self) -> Any:
        return self._rt._access(("get", self))

    def set(self, value: Any) -> None:
        return self._rt._access(("set", self, value))

    def get_and_set(self, value: Any) -> Any:
        return self._rt._access(("gas", self, value))

    def compare_and_set(self, expected: Any, value: Any) -> bool:
        return self._rt._access(("cas", self, expected, value))

    def peek(self) -> Any:
        return self._value

    def __repr__(self) -> str:
        return f"CoopRef({self.name}={self._value!r})"


class _CoopInt:
    __slots__ = ("_value", "name", "_rt")

    def __init__(self, rt: "CoopRuntime", value: int, name: str):
        self._rt = rt
        self._value = value
        self.name = name

    def get(self) -> int:
        return self._rt._access(("get", self))

    def set(self, value: int) -> None:
        return self._rt._access(("set", self, value))

    def fetch_add(self, delta: int) -> int:
        return self._rt._access(("faa", self, delta))

    def compare_and_set(self, expected: int, value: int) -> bool:
        return self._rt._access(("cas", self, expected, value))

    def peek(self) -> int:
        return self._value

    def __repr__(self) -> str:
        return f"CoopInt({self.name}={self._value})"


class _CtxState:
    __slots__ = ("index", "ctx", "fn", "greenlet", "status", "pending_op",
                 "wake_pending", "spin_ref", "exception", "obs_hash",
                 "boundaries")

    def __init__(self, index: int, ctx: "CoopContext", fn: Callable[[], None]):
        self.index = index
        self.ctx = ctx
        self.fn = fn
        self.greenlet = None
        self.status = _NEW
        self.pending_op = None
        self.wake_pending = False
        self.spin_ref = None
        self.exception: Optional[BaseException] = None
        self.obs_hash = 0
        self.boundaries = 0


class CoopContext(Context):
    __slots__ = ("_cs",)

    def __init__(self, runtime: "CoopRuntime", label: str):
        super().__init__(runtime, label)
        self._cs: Optional[_CtxState] = None


class _CoopWaiter(Waiter):
    __slots__ = ()

    def _block(self) -> None:
        rt: CoopRuntime = self.context.runtime
        rt._block_in_park(self)

    def _wake(self) -> None:
        rt: CoopRuntime = self.context.runtime
        rt._wake_context(self.context)


class CoopRuntime(Runtime):
    """Deterministic single-threaded runtime; see module docstring.

    ``strict_spin``: optional set of values that are legal to spin on.
    ``sink``: optional callable receiving instrumentation events.
    """

    def __init__(self, strict_spin: Optional[frozenset] = None,
                 sink: Optional[Callable[[tuple], None]] = None,
                 seed: int = 0):
        self._ctxstates: list[_CtxState] = []
        self._by_greenlet: dict = {}
        self._spin_waiters: dict = {}
        self._runnable: list[_CtxState] = []
        self._rng = random.Random(seed)
        self._sched_glet = None
        self._running = False
        self._failure: Optional[BaseException] = None
        self._strict_spin = strict_spin
        self._sink = sink
        self.tracing = sink is not None
        self._atom_serial = 0
        self.step_count = 0

    # -- factories ------------------------------------------------------

    def _atom_name(self, name: str) -> str:
        if name:
            return name
        self._atom_serial += 1
        return f"atom#{self._atom_serial}"

    def new_int(self, value: int = 0, name: str = ""):
        return _CoopInt(self, value, self._atom_name(name))

    def new_ref(self, value: Any = None, name: str = ""):
        return _CoopRef(self, value, self._atom_name(name))

    def spawn(self, fn: Callable[[], None], label: str = "") -> CoopContext:
        index = len(self._ctxstates)
        ctx = CoopContext(self, label or f"c{index}")
        cs = _CtxState(index, ctx, fn)
        ctx._cs = cs
        self._ctxstates.append(cs)
        self._runnable.append(cs)
        return cs.ctx

    def current_context(self) -> CoopContext:
        cs = self._by_greenlet.get(greenlet.getcurrent())
        if cs is None:
            raise RuntimeError("channel operations must run inside a spawned context")
        return cs.ctx

    def current_waiter(self, direction: str, site: int) -> Waiter:
        ctx = self.current_context()
        w = _CoopWaiter(ctx, direction, site)
        ctx._current_waiter.set(w)
        return w

    def note_boundary(self) -> None:
        # Reset the observation hash: two runs whose context sits between the
        # same number of plan steps have the same continuation regardless of
        # how past accesses interleaved.  Only sound when the caller's future
        # behaviour does not branch on earlier results; the explorer's canned
        # op drivers satisfy that.
        cs = self._by_greenlet.get(greenlet.getcurrent())
        if cs is not None:
            cs.boundaries += 1
            cs.obs_hash = hash(("boundary", cs.boundaries))

    def emit(self, event: tuple) -> None:
        if self._sink is not None:
            cs = self._by_greenlet.get(greenlet.getcurrent())
            self._sink(((cs.ctx.label if cs is not None else None),) + event)

    # -- access protocol --------------------------------------------------

    def _access(self, op: tuple) -> Any:
        if self._running:
            cs = self._by_greenlet.get(greenlet.getcurrent())
            if cs is not None:
                # Hand the access to the scheduler; it executes when chosen.
                return self._sched_glet.switch(op)
        # Setup code or an external actor (e.g. a test interrupting a parked
        # context between runs): execute immediately.
        return self._exec(op, None)

    def _exec(self, op: tuple, cs: Optional[_CtxState]) -> Any:
        kind = op[0]
        atom = op[1]
        if kind == "get":
            result = atom._value
        elif kind == "set":
            atom._value = op[2]
            self._notify_spinners(atom)
            result = None
        elif kind == "cas":
            if atom._value == op[2]:
                atom._value = op[3]
                self._notify_spinners(atom)
                result = True
            else:
                result = False
        elif kind == "faa":
            result = atom._value
            atom._value = result + op[2]
            self._notify_spinners(atom)
        elif kind == "gas":
            result = atom._value
            atom._value = op[2]
            self._notify_spinners(atom)
        else:
            raise AssertionError(f"unknown op {op!r}")
        if cs is not None:
            cs.obs_hash = hash((cs.obs_hash, kind, atom.name, _canon(result)))
        return result

    def _notify_spinners(self, atom) -> None:
        waiting = self._spin_waiters.pop(id(atom), None)
        if waiting:
            for cs in waiting:
                if cs.status == _SPIN_WAIT:
                    cs.status = _READY
                    cs.pending_op = ("noop", None)
                    cs.spin_ref = None
                    self._runnable.append(cs)

    def spin_hint(self, ref, observed: Any) -> None:
        if self._strict_spin is not None and observed not in self._strict_spin:
            raise RuntimeError(
                f"unsanctioned unbounded wait on {ref.name}: observed {observed!r}")
        if self._running:
            cs = self._by_greenlet.get(greenlet.getcurrent())
            if cs is not None:
                self._sched_glet.switch(("spin", ref, observed))
                return
        raise RuntimeError("spin outside a running context cannot make progress")

    def _block_in_park(self, waiter: Waiter) -> None:
        cs = self._by_greenlet.get(greenlet.getcurrent())
        assert cs is not None, "park outside a spawned context"
        self._sched_glet.switch(("park", waiter))

    def _wake_context(self, ctx: CoopContext) -> None:
        cs = ctx._cs
        if cs.status == _PARKED_WAIT:
            cs.status = _READY
            cs.pending_op = ("noop", None)
            self._runnable.append(cs)
        else:
            # Woken between the lifecycle transition and the block call.
            cs.wake_pending = True

    # -- scheduler ---------------------------------------------------------

    def runnable_indexes(self) -> list[int]:
        return [cs.index for cs in self._ctxstates if cs.status in (_NEW, _READY)]

    def _idle_verdict(self) -> str:
        if any(cs.status == _SPIN_WAIT for cs in self._ctxstates):
            return "deadlock"
        if any(cs.status == _PARKED_WAIT for cs in self._ctxstates):
            return "parked"
        return "done"

    def run(self, chooser: Optional[Callable[[list[int], int], Optional[int]]] = None,
            max_steps: Optional[int] = None) -> str:
        """Drive contexts until none is runnable.

        Returns "done" (all contexts finished), "parked" (the rest are
        parked), "deadlock" (someone spins with no runnable writer left),
        "stopped" (the chooser returned None) or "steps-exhausted".

        Without a chooser, scheduling is a seeded random walk, O(1) per
        step, which is what the large-scale tests rely on.  Strict
        alternation would be the one schedule that can chase retrying
        operations forever; random choice breaks the symmetry while
        staying reproducible.  A chooser sees the full sorted runnable
        set each step: meant for small context counts.
        """
        self._sched_glet = greenlet.getcurrent()
        self._running = True
        rng = self._rng
        steps = 0
        try:
            if chooser is None:
                while True:
                    cs = None
                    runnable = self._runnable
                    while runnable:
                        i = rng.randrange(len(runnable))
                        runnable[i], runnable[-1] = runnable[-1], runnable[i]
                        tail = runnable.pop()
                        if tail.status in (_NEW, _READY):
                            cs = tail
                            break
                    if cs is None:
                        return self._idle_verdict()
                    if max_steps is not None and steps >= max_steps:
                        self._runnable.append(cs)
                        return "steps-exhausted"
                    steps += 1
                    self.step_count += 1
                    self._advance(cs)
                    if self._failure is not None:
                        exc, self._failure = self._failure, None
                        raise exc
            else:
                while True:
                    cands = self.runnable_indexes()
                    if not cands:
                        return self._idle_verdict()
                    if max_steps is not None and steps >= max_steps:
                        return "steps-exhausted"
                    pick = chooser(cands, steps)
                    if pick is None:
                        return "stopped"
                    if pick not in cands:
                        raise RuntimeError(f"chooser picked {pick}, runnable {cands}")
                    steps += 1
                    self.step_count += 1
                    self._advance(self._ctxstates[pick])
                    if self._failure is not None:
                        exc, self._failure = self._failure, None
                        raise exc
        finally:
            self._running = False

    def _advance(self, cs: _CtxState) -> None:
        if cs.status == _NEW:
            cs.status = _RUNNING
            g = greenlet.greenlet(self._make_body(cs))
            cs.greenlet = g
            self._by_greenlet[g] = cs
            yielded = g.switch()
        else:
            op = cs.pending_op
            cs.pending_op = None
            cs.status = _RUNNING
            if op[0] == "noop":
                yielded = cs.greenlet.switch(op[1])
            else:
                result = self._exec(op, cs)
                yielded = cs.greenlet.switch(result)
        self._handle_yield(cs, yielded)

    def _make_body(self, cs: _CtxState):
        def body():
            try:
                cs.fn()
            except greenlet.GreenletExit:   # dispose(), not a failure
                raise
            except BaseException as exc:  # surfaced by run()
                cs.exception = exc
                self._failure = exc
            return ("done",)
        return body

    def dispose(self) -> None:
        """Unwind every unfinished context greenlet.

        A schedule the caller abandons midway leaves parked or preempted
        greenlets holding their whole call stack; exploring many schedules
        per second, those stacks outrun the garbage collector.  Safe to call
        after ``run`` returns; the runtime must not be used afterwards.
        """
        for cs in self._ctxstates:
            g = cs.greenlet
            if g is not None and not g.dead:
                g.throw(greenlet.GreenletExit)
            cs.greenlet = None
        self._by_greenlet.clear()
        self._runnable.clear()

    def _handle_yield(self, cs: _CtxState, yielded: tuple) -> None:
        kind = yielded[0]
        if kind == "done":
            cs.status = _DONE
            self._by_greenlet.pop(cs.greenlet, None)
            cs.greenlet = None
        elif kind == "park":
            if cs.wake_pending:
                cs.wake_pending = False
                cs.status = _READY
                cs.pending_op = ("noop", None)
                self._runnable.append(cs)
            else:
                cs.status = _PARKED_WAIT
        elif kind == "spin":
            ref, observed = yielded[1], yielded[2]
            if ref._value != observed:
                cs.status = _READY
                cs.pending_op = ("noop", None)
                self._runnable.append(cs)
            else:
                cs.status = _SPIN_WAIT
                cs.spin_ref = ref
                self._spin_waiters.setdefault(id(ref), []).append(cs)
        else:
            cs.status = _READY
            cs.pending_op = yielded
            self._runnable.append(cs)

    # -- introspection -----------------------------------------------------

    def statuses(self) -> list[str]:
        return [cs.status for cs in self._ctxstates]

    def parked_contexts(self) -> list[CoopContext]:
        return [cs.ctx for cs in self._ctxstates if cs.status == _PARKED_WAIT]

    def context_fingerprint(self) -> tuple:
        """Per-context continuation tokens for state deduplication."""
        parts = []
        for cs in self._ctxstates:
            w = cs.ctx._current_waiter.peek()
            parts.append((
                cs.status,
                cs.obs_hash,
                _canon(w),
                w._lifecycle.peek() if w is not None else None,
                cs.ctx._pending_interrupt.peek(),
            ))
        return tuple(parts)


# -- choosers ---------------------------------------------------------------


def round_robin() -> Callable[[list[int], int], int]:
    last = [-1]

    def choose(cands: list[int], step: int) -> int:
        for i in cands:
            if i > last[0]:
                last[0] = i
                return i
        last[0] = cands[0]
        return cands[0]

    return choose


def first_runnable() -> Callable[[list[int], int], int]:
    return lambda cands, step: cands[0]


def random_walk(seed: int) -> Callable[[list[int], int], int]:
    rng = random.Random(seed)
    return lambda cands, step: rng.choice(cands)
