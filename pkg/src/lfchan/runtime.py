"""Execution runtimes: atomic cells, contexts, and parking.

The channel algorithms are written once against this interface.  Two
backends exist:

* ``ThreadRuntime`` maps contexts onto OS threads.  Atomic cells are plain
  attributes guarded by a per-cell lock for read-modify-write operations.
* ``CoopRuntime`` (see ``coop.py``) multiplexes contexts onto one thread
  under a deterministic scheduler, turning every shared-memory access into
  a scheduling point that a model checker can enumerate.

Parking follows a small lifecycle protocol.  A ``Waiter`` represents one
park attempt and moves through a single atomic word::

    ACTIVE -> PARKED -> RESUMED | INTERRUPTED     (suspended path)
    ACTIVE -> RESUMED | INTERRUPTED               (decided before park)

``try_unpark`` and ``interrupt`` race on that word; exactly one wins.  The
``on_interrupt`` hook passed to ``park`` runs exactly once, and only on the
transition to INTERRUPTED: by the interrupting context when the waiter was
already parked, or by ``park`` itself when the interrupt came first.
"""

from __future__ import annotations

import threading
import time
from typing import Any, Callable, Optional

__all__ = [
    "ACTIVE",
    "PARKED",
    "RESUMED",
    "INTERRUPTED",
    "SEND",
    "RECEIVE",
    "Interrupted",
    "AtomicInt",
    "AtomicRef",
    "PlainRef",
    "Waiter",
    "Context",
    "Runtime",
    "ThreadRuntime",
]


class Interrupted(Exception):
    """A channel operation was cancelled while it was suspended."""


# Waiter lifecycle states.
ACTIVE = "active"
PARKED = "parked"
RESUMED = "resumed"
INTERRUPTED = "interrupted"

# Waiter directions.
SEND = "send"
RECEIVE = "receive"


class AtomicRef:
    """A shared mutable reference with compare-and-set.

    Under CPython, plain loads and stores of one attribute are atomic; the
    lock only serializes read-modify-write operations.  ``peek`` is an
    instrumentation read: backends that trace accesses do not treat it as a
    scheduling point, so it must never carry algorithmic meaning.
    """

    __slots__ = ("_value", "_lock", "name")

    def __init__(self, value: Any = None, name: str = ""):
        self._value = value
        self._lock = threading.Lock()
        self.name = name

    def get(self) -> Any:
        return self._value

    def set(self, value: Any) -> None:
        self._value = value

    def peek(self) -> Any:
        return self._value

    def get_and_set(self, value: Any) -> Any:
        with self._lock:
            old = self._value
            self._value = value
            return old

    def compare_and_set(self, expected: Any, value: Any) -> bool:
        with self._lock:
            if self._value == expected:
                self._value = value
                return True
            return False

    def __repr__(self) -> str:
        return f"AtomicRef({self.name or id(self):x}={self._value!r})"


class PlainRef:
    """A non-synchronizing mutable slot (element payloads, bookkeeping bits).

    The algorithms order every access to these through an atomic transition
    elsewhere (a cell-state CAS or a waiter-lifecycle change), so reading or
    writing one is never a race and never a scheduling point.  Keeping them
    out of the traced-access set is what lets the deterministic backend
    explore only the interleavings that can actually differ.
    """

    __slots__ = ("_value", "name")

    def __init__(self, value: Any = None, name: str = ""):
        self._value = value
        self.name = name

    def get(self) -> Any:
        return self._value

    def set(self, value: Any) -> None:
        self._value = value

    def peek(self) -> Any:
        return self._value

    def __repr__(self) -> str:
        return f"PlainRef({self.name or id(self):x}={self._value!r})"


class AtomicInt:
    """A shared 64-bit-style counter with fetch-and-add."""

    __slots__ = ("_value", "_lock", "name")

    def __init__(self, value: int = 0, name: str = ""):
        self._value = value
        self._lock = threading.Lock()
        self.name = name

    def get(self) -> int:
        return self._value

    def set(self, value: int) -> None:
        self._value = value

    def peek(self) -> int:
        return self._value

    def fetch_add(self, delta: int) -> int:
        with self._lock:
            old = self._value
            self._value = old + delta
            return old

    def compare_and_set(self, expected: int, value: int) -> bool:
        with self._lock:
            if self._value == expected:
                self._value = value
                return True
            return False

    def __repr__(self) -> str:
        return f"AtomicInt({self.name or id(self):x}={self._value})"


class Waiter:
    """One park attempt by one context.

    Waiters are single-use: an operation that retries creates a fresh one,
    so the lifecycle word never moves backwards.
    """

    __slots__ = ("context", "direction", "site", "fp_token",
                 "_lifecycle", "_hook", "_park_called")

    def __init__(self, context: "Context", direction: str, site: int):
        # site = the cell index the waiter is about to be installed at; a
        # context never installs twice at one cell, so it names the waiter
        rt = context.runtime
        label = f"{context.label}.w{direction[0]}{site}"
        self.context = context
        self.direction = direction
        self.site = site
        self.fp_token = ("W", context.label, direction, site)
        self._lifecycle = rt.new_ref(ACTIVE, name=label + ".lifecycle")
        self._hook = rt.new_ref(None, name=label + ".hook")
        self._park_called = False

    # -- owner side ---------------------------------------------------

    def park(self, on_interrupt: Callable[[], None]) -> str:
        """Suspend until resumed or interrupted; returns RESUMED or INTERRUPTED.

        If the waiter was already resumed, returns immediately.  If an
        interrupt won first (directly or via a pending context interrupt),
        runs ``on_interrupt`` and returns INTERRUPTED without suspending.
        """
        if self._park_called:
            raise RuntimeError("waiter can only park once")
        self._park_called = True
        ctx = self.context

        # A pending context-level interrupt takes effect at this park.
        if ctx._pending_interrupt.get():
            if self._lifecycle.compare_and_set(ACTIVE, INTERRUPTED):
                ctx._pending_interrupt.set(False)
                ctx.runtime.emit(("waiter_interrupted", self))
                ctx._current_waiter.set(None)
                on_interrupt()
                return INTERRUPTED

        self._hook.set(on_interrupt)
        if self._lifecycle.compare_and_set(ACTIVE, PARKED):
            self._block()
            status = self._lifecycle.get()
        else:
            # Already decided before we could suspend.
            status = self._lifecycle.get()
            if status == INTERRUPTED:
                hook = self._hook.get_and_set(None)
                if hook is not None:
                    hook()
        ctx._current_waiter.set(None)
        return status

    def discard(self) -> None:
        """Drop a waiter whose installation lost a race; the op retries.

        Closing the lifecycle here keeps a concurrent interrupt from being
        swallowed: if one already hit this never-installed waiter, it is
        re-posted as a pending context interrupt for the next park.
        """
        self.context._current_waiter.set(None)
        if not self._lifecycle.compare_and_set(ACTIVE, RESUMED):
            self.context._pending_interrupt.set(True)

    # -- remote side ----------------------------------------------------

    def try_unpark(self) -> bool:
        """Resume the waiter.  True if this call won the resumption."""
        lc = self._lifecycle
        while True:
            cur = lc.get()
            if cur == ACTIVE:
                # The upcoming park() will return without suspending.
                if lc.compare_and_set(ACTIVE, RESUMED):
                    return True
            elif cur == PARKED:
                if lc.compare_and_set(PARKED, RESUMED):
                    self._wake()
                    return True
            else:
                return False

    def interrupt(self) -> bool:
        """Cancel the waiter.  True if this call won; the hook has then run
        (parked case) or is left for the upcoming park() (pre-park case)."""
        lc = self._lifecycle
        while True:
            cur = lc.get()
            if cur == ACTIVE:
                if lc.compare_and_set(ACTIVE, INTERRUPTED):
                    self.context.runtime.emit(("waiter_interrupted", self))
                    return True
            elif cur == PARKED:
                if lc.compare_and_set(PARKED, INTERRUPTED):
                    self.context.runtime.emit(("waiter_interrupted", self))
                    hook = self._hook.get_and_set(None)
                    if hook is not None:
                        hook()
                    self._wake()
                    return True
            else:
                return False

    def lifecycle(self) -> str:
        return self._lifecycle.peek()

    # -- backend hooks --------------------------------------------------

    def _block(self) -> None:
        raise NotImplementedError

    def _wake(self) -> None:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"<Waiter {self.context.label} {self.direction}@{self.site} {self._lifecycle.peek()}>"


class Context:
    """An execution context (thread or cooperative task) that channel
    operations run in.  Holds the waiter currently eligible for interrupt."""

    __slots__ = ("runtime", "label", "_current_waiter", "_pending_interrupt")

    def __init__(self, runtime: "Runtime", label: str):
        self.runtime = runtime
        self.label = label
        self._current_waiter = runtime.new_ref(None, name=label + ".cur")
        self._pending_interrupt = runtime.new_ref(False, name=label + ".pending")

    def interrupt(self) -> None:
        """Cancel this context's current suspension point.

        If no waiter is active (or the active one already resumed), the
        interrupt is remembered and lands on the context's next park.
        """
        w = self._current_waiter.get()
        if w is not None and w.interrupt():
            return
        self._pending_interrupt.set(True)


class Runtime:
    """Factory for atomics, contexts, and waiters; see module docstring."""

    # True when an event sink is attached; channels skip building event
    # tuples entirely when it is off, keeping the hot path clean.
    tracing = False

    def new_int(self, value: int = 0, name: str = "") -> AtomicInt:
        raise NotImplementedError

    def new_ref(self, value: Any = None, name: str = "") -> AtomicRef:
        raise NotImplementedError

    def new_plain(self, value: Any = None, name: str = "") -> PlainRef:
        return PlainRef(value, name)

    def current_context(self) -> Context:
        raise NotImplementedError

    def current_waiter(self, direction: str, site: int) -> Waiter:
        """A fresh ACTIVE waiter bound to the calling context at cell ``site``."""
        raise NotImplementedError

    def note_boundary(self) -> None:
        """Hint that the calling context reached a point where its future
        behaviour no longer depends on past observations (e.g. between
        independent operations of a test plan).  Explorer backends use it
        to merge schedule states; elsewhere it is a no-op.
        """

    def spin_hint(self, ref: AtomicRef, observed: Any) -> None:
        """Called inside the two sanctioned transient-state wait loops.

        The caller observed ``observed`` in ``ref`` and is about to re-read.
        Backends may yield, or block until the ref is written.
        """
        raise NotImplementedError

    def emit(self, event: tuple) -> None:
        """Instrumentation sink; a no-op outside the deterministic runtime."""


# ---------------------------------------------------------------------------
# Thread-backed runtime
# ---------------------------------------------------------------------------


class _ThreadWaiter(Waiter):
    __slots__ = ("_event",)

    def __init__(self, context: Context, direction: str, site: int):
        super().__init__(context, direction, site)
        self._event = threading.Event()

    def _block(self) -> None:
        self._event.wait()

    def _wake(self) -> None:
        self._event.set()


class ThreadRuntime(Runtime):
    """Production runtime: one context per OS thread."""

    def __init__(self):
        self._local = threading.local()
        self._label_lock = threading.Lock()
        self._next_label = 0

    def new_int(self, value: int = 0, name: str = "") -> AtomicInt:
        return AtomicInt(value, name)

    def new_ref(self, value: Any = None, name: str = "") -> AtomicRef:
        return AtomicRef(value, name)

    def current_context(self) -> Context:
        ctx: Optional[Context] = getattr(self._local, "ctx", None)
        if ctx is None:
            with self._label_lock:
                label = f"t{self._next_label}"
                self._next_label += 1
            ctx = Context(self, label)
            self._local.ctx = ctx
        return ctx

    def current_waiter(self, direction: str, site: int) -> Waiter:
        ctx = self.current_context()
        w = _ThreadWaiter(ctx, direction, site)
        ctx._current_waiter.set(w)
        return w

    def spin_hint(self, ref: AtomicRef, observed: Any) -> None:
        # The writer holds no lock we could wait on; yield and re-read.
        time.sleep(0)

    def emit(self, event: tuple) -> None:
        pass
