"""Bounded interleaving exploration with history conformance checking.

``explore`` enumerates schedules of a small deterministic program on the
cooperative runtime by depth-first replay: the first run takes the first
runnable context at every step and records the untried alternatives; each
later run replays a recorded prefix and diverges at its last position.
States already seen (channel census + per-context continuation + checker
ledger) prune the search, which keeps the enumeration finite on the
diamond-shaped graphs these programs produce.  Retry storms can still make
individual schedules arbitrarily long (the algorithms are lock-free, not
wait-free), so runs are depth-capped and the cap is reported as partial
coverage instead of an error.

Checking is two-layered.  While a run executes, every channel event feeds
a ``HistoryChecker`` that maintains a ledger per registered operation
(one registration = one counter increment = one cell index) and fails the
moment an emission contradicts the rules: a suspension with an illegal
counter snapshot, a pairing with a missing or mismatched partner, a value
surfacing twice or vanishing.  When a run goes idle, the ledger is
replayed in cell-index order against ``SequentialChannel``; the run
passes iff the recorded registrations, in that order, drive the
sequential model through identical outcomes.  Interrupted operations are
linearized lazily: a dead waiter may be removed from the model at any
point consistent with the pairings that skipped it (``_pop_head``).
"""

from __future__ import annotations

from typing import Any, Callable, Optional

from .runtime import Interrupted, Waiter
from .segments import TRANSIENT_STATES
from .sequential import SequentialChannel, SequentialInvariantError
from .coop import CoopRuntime

__all__ = ["ConformanceError", "HistoryChecker", "ExploreStats", "explore",
           "build_case", "explore_case"]


class ConformanceError(Exception):
    """A run contradicted the sequential model or the protocol rules."""

    def __init__(self, reason: str, schedule: Optional[list] = None,
                 events: Optional[list] = None):
        self.reason = reason
        self.schedule = list(schedule) if schedule else []
        self.events = list(events) if events else []
        super().__init__(reason)

    def __str__(self) -> str:
        lines = [self.reason]
        if self.schedule:
            lines.append(f"schedule: {self.schedule}")
        if self.events:
            lines.append("trailing events:")
            for ev in self.events[-12:]:
                lines.append(f"  {ev}")
        return "\n".join(lines)


def _canon_value(v: Any) -> Any:
    token = getattr(v, "fp_token", None)
    if token is not None:
        return token
    if isinstance(v, (int, float, str, bool, tuple)) or v is None:
        return v
    return repr(v)


_MISSING = object()


class _Attempt:
    """One registration: a counter increment that owns one cell index."""

    __slots__ = ("ctx", "state", "how", "via", "elem", "waiter")

    def __init__(self, ctx: str):
        self.ctx = ctx
        self.state = "open"     # open|parked|doomed|restarted|cancelled|completed
        self.how = None         # buffered|eliminated|from_buffer|paired|resumed
        self.via = None         # for resumed ops: paired|promoted
        self.elem = None
        self.waiter = None      # fp token once suspended

    def token(self) -> tuple:
        return (self.ctx, self.state, self.how, self.via,
                _canon_value(self.elem), self.waiter)


class HistoryChecker:
    """Online ledger over channel events plus a terminal sequential replay.

    Feed it ``(label, kind, *payload)`` tuples (the cooperative runtime's
    sink shape).  Any contradiction raises ConformanceError immediately;
    ``finish`` runs the terminal census and the replay.
    """

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.attempts: dict[tuple, _Attempt] = {}   # (side, idx) -> attempt
        self.parked: dict[tuple, tuple] = {}        # waiter token -> (side, idx, elem)
        self.waiter_key: dict[tuple, tuple] = {}    # waiter token -> (side, idx)
        self.interrupted: set = set()               # waiter tokens
        self.expected_resume: dict[tuple, Any] = {} # waiter token -> promised value|None
        self.buffer_records: dict[int, Any] = {}    # idx -> element placed, unconsumed
        self.consumed: set = set()                  # idx taken via from_buffer
        self.poisoned: set = set()
        self.dead_cells: dict[int, str] = {}        # idx -> side that cancelled there
        self.eb_marked: set = set()
        self.promotions: list[tuple] = []           # (idx, waiter token) in event order
        self.completed_send: dict[int, Any] = {}
        self.completed_recv: dict[int, Any] = {}
        self.ctx_open: dict[str, Optional[tuple]] = {}
        self.cur_op: dict[str, Optional[list]] = {} # label -> [kind, value, [keys]]
        self.done_ops: dict[str, list] = {}

    # -- event intake -------------------------------------------------------

    def feed(self, event: tuple) -> None:
        label, kind = event[0], event[1]
        handler = getattr(self, "_ev_" + kind, None)
        if handler is None:
            self._fail(f"unknown event kind {kind!r} from {label}")
        handler(label, *event[2:])

    def _fail(self, msg: str):
        raise ConformanceError(msg)

    def _ev_faa(self, label, side, idx, opp, buf):
        key = (side, idx)
        if key in self.attempts:
            self._fail(f"cell index reused: {side} {idx}")
        if self.ctx_open.get(label) is not None:
            self._fail(f"{label} registered {side} {idx} with an unresolved registration")
        self.attempts[key] = _Attempt(label)
        self.ctx_open[label] = key
        op = self.cur_op.get(label)
        if op is not None:
            op[2].append(key)

    def _ev_restart(self, label, side, idx, why):
        key = (side, idx)
        att = self.attempts.get(key)
        if att is None or att.ctx != label:
            self._fail(f"restart for unknown registration {side} {idx}")
        if att.state != "open":
            self._fail(f"restart of {side} {idx} in state {att.state}")
        att.state = "restarted"
        self.ctx_open[label] = None

    def _ev_suspended(self, label, side, idx, w, opp, buf, elem):
        key = (side, idx)
        att = self.attempts.get(key)
        if att is None or att.ctx != label or att.state != "open":
            self._fail(f"suspension without open registration at {side} {idx}")
        if idx < opp:
            self._fail(f"illegal suspension: {side} {idx} parked with opposite "
                       f"counter already at {opp}")
        if side == "send" and buf is not None and idx < buf:
            self._fail(f"illegal suspension: send {idx} parked inside the "
                       f"buffered range (buffer end {buf})")
        token = w.fp_token
        att.waiter = token
        att.elem = elem
        self.waiter_key[token] = key
        if token in self.interrupted:
            att.state = "doomed"    # the interrupt won first; park will cancel
        else:
            att.state = "parked"
            self.parked[token] = (side, idx, elem)

    def _ev_waiter_interrupted(self, label, w):
        token = w.fp_token
        if token in self.expected_resume:
            self._fail(f"waiter {token} interrupted after being resumed")
        self.interrupted.add(token)
        self.parked.pop(token, None)

    def _ev_cancelled(self, label, side, idx):
        key = (side, idx)
        att = self.attempts.get(key)
        if att is None or att.ctx != label:
            self._fail(f"cancellation for unknown registration {side} {idx}")
        if att.state not in ("parked", "doomed"):
            self._fail(f"cancellation of {side} {idx} in state {att.state}")
        if att.waiter not in self.interrupted:
            self._fail(f"cancelled {side} {idx} but its waiter was never interrupted")
        att.state = "cancelled"
        self.dead_cells[idx] = side
        self.ctx_open[label] = None

    def _ev_completed(self, label, side, idx, how, elem, peer):
        key = (side, idx)
        att = self.attempts.get(key)
        if att is None or att.ctx != label:
            self._fail(f"completion for unknown registration {side} {idx}")
        if elem is None:
            self._fail(f"{side} {idx} completed via {how} with no element")
        if how == "resumed":
            if att.state not in ("parked",):
                self._fail(f"{side} {idx} resumed but its state is {att.state}")
            promised = self.expected_resume.pop(att.waiter, _MISSING)
            if promised is _MISSING:
                self._fail(f"{side} {idx} woke without a recorded resume")
            if side == "recv" and elem != promised:
                self._fail(f"recv {idx} woke with {elem!r}, promised {promised!r}")
            if side == "send" and elem != att.elem:
                self._fail(f"send {idx} woke reporting {elem!r}, sent {att.elem!r}")
        elif how == "paired":
            if att.state != "open":
                self._fail(f"{side} {idx} paired in state {att.state}")
            if not isinstance(peer, Waiter):
                self._fail(f"{side} {idx} paired with non-waiter {peer!r}")
            ptoken = peer.fp_token
            opp_side = "recv" if side == "send" else "send"
            entry = self.parked.pop(ptoken, None)
            if entry is None or entry[0] != opp_side or entry[1] != idx:
                self._fail(f"{side} {idx} paired with {ptoken} which is not "
                           f"parked there (entry {entry})")
            if side == "recv" and elem != entry[2]:
                self._fail(f"recv {idx} took {elem!r} from a sender that "
                           f"parked with {entry[2]!r}")
            self.expected_resume[ptoken] = elem if side == "send" else None
            patt = self.attempts[(opp_side, idx)]
            patt.via = "paired"
        elif how in ("buffered", "eliminated"):
            if side != "send":
                self._fail(f"receive {idx} reported {how}")
            if att.state != "open":
                self._fail(f"send {idx} {how} in state {att.state}")
            if idx in self.buffer_records or idx in self.consumed:
                self._fail(f"cell {idx} stored twice")
            self.buffer_records[idx] = elem
        elif how == "from_buffer":
            if side != "recv":
                self._fail(f"send {idx} reported from_buffer")
            if att.state != "open":
                self._fail(f"recv {idx} from_buffer in state {att.state}")
            if idx not in self.buffer_records:
                self._fail(f"recv {idx} took from an empty cell")
            stored = self.buffer_records.pop(idx)
            if stored != elem:
                self._fail(f"recv {idx} took {elem!r}, cell held {stored!r}")
            self.consumed.add(idx)
        else:
            self._fail(f"unknown completion {how!r} at {side} {idx}")
        att.state = "completed"
        att.how = how
        att.elem = elem
        if side == "send":
            self.completed_send[idx] = elem
        else:
            self.completed_recv[idx] = elem
        self.ctx_open[label] = None

    def _ev_poisoned(self, label, idx):
        if idx in self.poisoned:
            self._fail(f"cell {idx} poisoned twice")
        self.poisoned.add(idx)

    def _ev_promoted(self, label, idx, w):
        token = w.fp_token
        entry = self.parked.pop(token, None)
        if entry is None or entry[0] != "send" or entry[1] != idx:
            self._fail(f"promotion of {token} at {idx} which is not parked "
                       f"there (entry {entry})")
        if idx in self.buffer_records or idx in self.consumed:
            self._fail(f"promotion stores into occupied cell {idx}")
        self.buffer_records[idx] = entry[2]
        self.expected_resume[token] = None
        self.attempts[("send", idx)].via = "promoted"
        self.promotions.append((idx, token))

    def _ev_eb_marked(self, label, idx):
        self.eb_marked.add(idx)

    def _ev_op_begin(self, label, kind, value):
        if self.cur_op.get(label) is not None:
            self._fail(f"{label} began an operation inside an operation")
        self.cur_op[label] = [kind, value, []]

    def _ev_op_return(self, label, kind, outcome, value):
        op = self.cur_op.get(label)
        if op is None or op[0] != kind:
            self._fail(f"{label} returned from {kind} it never began")
        self.cur_op[label] = None
        self.done_ops.setdefault(label, []).append((kind, outcome, value))
        keys = op[2]
        if kind == "interrupt":
            if keys:
                self._fail(f"{label} interrupt op registered on a counter")
            return
        if not keys:
            self._fail(f"{label} {kind} returned without registering")
        for key in keys[:-1]:
            if self.attempts[key].state != "restarted":
                self._fail(f"{label} {kind} moved on from {key} in state "
                           f"{self.attempts[key].state}")
        last = self.attempts[keys[-1]]
        if outcome == "ok":
            if last.state != "completed":
                self._fail(f"{label} {kind} returned ok with final "
                           f"registration {keys[-1]} in state {last.state}")
            if value != last.elem:
                self._fail(f"{label} {kind} returned {value!r} but its "
                           f"registration carried {last.elem!r}")
        elif outcome == "interrupted":
            if last.state != "cancelled":
                self._fail(f"{label} {kind} raised with final registration "
                           f"{keys[-1]} in state {last.state}")
        else:
            self._fail(f"unknown op outcome {outcome!r}")

    # -- fingerprint ----------------------------------------------------------

    def token(self) -> tuple:
        """The ledger state that can still influence future checking.

        Deliberately excludes resolved history (completed attempts, consumed
        and poisoned cells, finished ops): those facts mirror cell states the
        explorer already folds into its merge key via the channel fingerprint,
        so keeping them here would only block state merging.  Consequence:
        terminal census and replay run once per reachable state class rather
        than once per schedule; every online check still runs on every step.
        """
        return (
            tuple(sorted((k, a.token()) for k, a in self.attempts.items()
                         if a.state in ("open", "parked", "doomed"))),
            tuple(sorted((t, s, i, _canon_value(e))
                         for t, (s, i, e) in self.parked.items())),
            tuple(sorted((t, _canon_value(v))
                         for t, v in self.expected_resume.items())),
            tuple(sorted((i, _canon_value(e))
                         for i, e in self.buffer_records.items())),
            tuple(self.promotions),
            tuple(sorted((l, (op[0], _canon_value(op[1]), len(op[2])))
                         for l, op in self.cur_op.items() if op is not None)),
        )

    # -- terminal checks --------------------------------------------------------

    def finish(self, channel, runtime, verdict: str) -> None:
        if verdict not in ("done", "parked"):
            self._fail(f"finish on non-terminal verdict {verdict!r}")
        for label, key in self.ctx_open.items():
            if key is None:
                continue
            att = self.attempts[key]
            if att.state != "parked":
                self._fail(f"run idle with {key} in state {att.state}")
        for token in self.expected_resume:
            self._fail(f"waiter {token} was resumed but never ran")
        parked_labels = {t[1] for t in self.parked}
        runtime_parked = {c.label for c in runtime.parked_contexts()}
        if parked_labels != runtime_parked:
            self._fail(f"ledger parked {sorted(parked_labels)} but runtime "
                       f"parked {sorted(runtime_parked)}")
        if verdict == "done" and parked_labels:
            self._fail("verdict done with parked registrations")
        for label, op in self.cur_op.items():
            if op is not None and label not in runtime_parked:
                self._fail(f"{label} never returned from {op[0]} yet is not parked")
        for idx, elem in self.completed_recv.items():
            if idx not in self.completed_send:
                self._fail(f"recv {idx} completed without a send there")
            if self.completed_send[idx] != elem:
                self._fail(f"cell {idx} sent {self.completed_send[idx]!r} "
                           f"but received {elem!r}")
        for idx in self.buffer_records:
            if idx not in self.completed_send:
                self._fail(f"cell {idx} holds a value no send completed")
        if len(self.completed_send) != len(self.completed_recv) + len(self.buffer_records):
            self._fail("completed sends != completed receives + stored values")
        if self.capacity == 0 and self.buffer_records:
            self._fail(f"rendezvous channel idle with stored values "
                       f"{self.buffer_records}")
        if self.capacity and len(self.buffer_records) > self.capacity:
            self._fail(f"{len(self.buffer_records)} stored values exceed "
                       f"capacity {self.capacity}")
        self._check_census(channel.inspect())
        self._replay()

    def _check_census(self, census: dict) -> None:
        seen_waiters: dict[tuple, int] = {}
        buffered_cells: dict[int, Any] = {}
        consumed_cells: set = set()
        for seg in census["segments"]:
            k = len(seg["cells"])
            for i, (token, elem) in enumerate(seg["cells"]):
                idx = seg["id"] * k + i
                if token == "empty":
                    if (idx in self.completed_send or idx in self.completed_recv
                            or idx in self.buffer_records or idx in self.poisoned
                            or idx in self.dead_cells):
                        self._fail(f"cell {idx} is empty but has history")
                elif token == "buffered":
                    if elem is not None:
                        buffered_cells[idx] = elem
                    else:
                        consumed_cells.add(idx)
                elif token in ("done", "done_receive"):
                    if idx not in self.completed_send or idx not in self.completed_recv:
                        self._fail(f"cell {idx} marked done without both halves")
                elif token == "broken":
                    if idx not in self.poisoned:
                        self._fail(f"cell {idx} broken but never poisoned")
                elif token == "interrupted_send":
                    if self.dead_cells.get(idx) != "send":
                        self._fail(f"cell {idx} holds a dead send, ledger says "
                                   f"{self.dead_cells.get(idx)!r}")
                elif token == "in_buffer":
                    if idx not in self.eb_marked or idx in self.completed_send:
                        self._fail(f"cell {idx} pre-marked incorrectly")
                elif token == "interrupted_receive":
                    if self.dead_cells.get(idx) != "recv":
                        self._fail(f"cell {idx} holds a dead receive, ledger "
                                   f"says {self.dead_cells.get(idx)!r}")
                elif isinstance(token, tuple):
                    base, lifecycle = token[:-1], token[-1]
                    if lifecycle != "parked":
                        self._fail(f"idle cell {idx} has waiter in {lifecycle}")
                    entry = self.parked.get(base)
                    if entry is None or entry[1] != idx:
                        self._fail(f"cell {idx} holds waiter {base} the ledger "
                                   f"does not park there")
                    seen_waiters[base] = idx
                elif token in TRANSIENT_STATES:
                    self._fail(f"idle cell {idx} stuck in transient {token}")
                else:
                    self._fail(f"cell {idx} in unrecognized state {token!r}")
        for token, (side, idx, _) in self.parked.items():
            if seen_waiters.get(token) != idx:
                self._fail(f"parked {side} {idx} missing from the census")
        for idx, elem in self.buffer_records.items():
            if buffered_cells.get(idx) != elem:
                self._fail(f"stored value at {idx} missing from the census")
        for idx in buffered_cells:
            if idx not in self.buffer_records:
                self._fail(f"census cell {idx} holds a value the ledger lost")
        for idx in consumed_cells:
            if idx not in self.consumed:
                self._fail(f"census cell {idx} consumed, ledger disagrees")

    # -- sequential replay -------------------------------------------------------

    def _replay(self) -> None:
        seq = SequentialChannel(self.capacity)
        promotions = list(self.promotions)
        promo_at = 0
        indexes = sorted({idx for (_, idx) in self.attempts})
        for idx in indexes:
            send = self.attempts.get(("send", idx))
            recv = self.attempts.get(("recv", idx))
            if send is not None and send.state in ("open", "restarted"):
                send = None
            if recv is not None and recv.state in ("open", "restarted"):
                recv = None
            recv_first = recv is not None and recv.waiter is not None
            if recv_first:
                self._replay_recv_parker(seq, idx, recv, send)
            else:
                promo_at = self._replay_send_first(seq, idx, send, recv,
                                                   promotions, promo_at)
        for token in list(self.interrupted):
            seq.interrupt(token)
        self._compare_terminal(seq)

    def _sweep_dead(self, seq) -> None:
        # Linearize pending interrupts for waiters that never resumed.  A
        # dead waiter pairs with nothing, so retiring it the moment it would
        # otherwise block a later operation is observably identical to
        # retiring it at its real interrupt time.
        for token, _ in list(seq.waiting_senders):
            if token in self.interrupted:
                seq.interrupt(token)
        for token in list(seq.waiting_receivers):
            if token in self.interrupted:
                seq.interrupt(token)

    def _replay_recv_parker(self, seq, idx, recv, send) -> None:
        self._sweep_dead(seq)
        if seq.waiting_senders or seq.buffer:
            self._fail(f"recv {idx} parked while the model still holds "
                       f"values or senders")
        seq.park_receiver(recv.waiter)
        if send is None:
            return
        if send.state == "completed" and send.how == "paired":
            self._pop_head(seq, "receivers", recv.waiter)
            out = seq.send(("s", idx), send.elem)
            if out[0] != "rendezvous" or out[1] != recv.waiter:
                self._fail(f"send {idx} paired in reality, model says {out!r}")
        else:
            self._fail(f"send {idx} resolved as {send.state}/{send.how} "
                       f"against a parked receive")

    def _replay_send_first(self, seq, idx, send, recv, promotions, promo_at) -> int:
        self._sweep_dead(seq)
        if send is not None:
            if send.waiter is not None:
                if seq.waiting_receivers:
                    self._fail(f"send {idx} parked while the model holds "
                               f"waiting receivers")
                seq.park_sender(send.waiter, send.elem)
                if send.via == "promoted":
                    if promo_at >= len(promotions) or promotions[promo_at][0] != idx:
                        self._fail(f"promotion order diverged at cell {idx}")
                    promo_at += 1
                    self._pop_head(seq, "senders", send.waiter)
                    token, elem = seq.promote()
                    if token != send.waiter or elem != send.elem:
                        self._fail(f"model promoted {token!r} at cell {idx}, "
                                   f"reality promoted {send.waiter!r}")
                    if self.capacity and len(seq.buffer) > self.capacity:
                        self._fail(f"promotion at {idx} overfilled the buffer")
            elif send.how == "buffered":
                out = seq.send(("s", idx), send.elem)
                if out[0] != "buffered":
                    self._fail(f"send {idx} stored its value, model says {out[0]}")
            elif send.how == "eliminated":
                # zero-length suspension: the racing receive is already past
                seq.park_sender(("s", idx), send.elem)
            elif send.how == "paired":
                self._fail(f"send {idx} paired but no receive parked there")
        if recv is None:
            return promo_at
        if recv.state == "completed" and recv.how == "from_buffer":
            if self.capacity == 0:
                # consume the eliminated sender parked just above
                self._pop_head(seq, "senders", ("s", idx))
                out = seq.receive(("r", idx))
                if out[0] != "rendezvous" or out[1] != recv.elem or out[2] != ("s", idx):
                    self._fail(f"recv {idx} took {recv.elem!r}, model says {out!r}")
            else:
                out = seq.receive(("r", idx))
                if out[0] != "value" or out[1] != recv.elem:
                    self._fail(f"recv {idx} took {recv.elem!r}, model says {out!r}")
        elif recv.state == "completed" and recv.how == "paired":
            target = send.waiter if send is not None else None
            if target is None:
                self._fail(f"recv {idx} paired but no send parked there")
            self._pop_head(seq, "senders", target)
            out = seq.receive(("r", idx))
            if out[0] != "rendezvous" or out[1] != recv.elem or out[2] != target:
                self._fail(f"recv {idx} paired with {target!r}, model says {out!r}")
        elif recv.state in ("cancelled", "parked", "doomed"):
            self._fail(f"recv {idx} {recv.state} behind a send registration")
        elif recv is not None and recv.state == "completed":
            self._fail(f"recv {idx} completed via {recv.how} in a send-first cell")
        return promo_at

    def _pop_head(self, seq, which: str, target) -> None:
        """Linearize interrupts blocking the list head; fail on a live head."""
        lst = seq.waiting_senders if which == "senders" else seq.waiting_receivers
        while lst:
            head = lst[0] if which == "receivers" else lst[0][0]
            if head == target:
                return
            if head in self.interrupted:
                seq.interrupt(head)
                continue
            self._fail(f"model expects {which} head {target!r}, found live "
                       f"{head!r} (order violation)")
        self._fail(f"model has no waiting {which} for {target!r}")

    def _compare_terminal(self, seq: SequentialChannel) -> None:
        want_buffer = [self.buffer_records[i] for i in sorted(self.buffer_records)]
        if seq.buffer != want_buffer:
            self._fail(f"model buffer {seq.buffer!r} != stored values {want_buffer!r}")
        want_senders = sorted(
            ((i, t, e) for t, (s, i, e) in self.parked.items() if s == "send"))
        got_senders = [(self.waiter_key[t][1], t, e) for t, e in seq.waiting_senders]
        if got_senders != [(i, t, e) for (i, t, e) in want_senders]:
            self._fail(f"model senders {got_senders!r} != parked {want_senders!r}")
        want_receivers = sorted(
            ((i, t) for t, (s, i, e) in self.parked.items() if s == "recv"))
        got_receivers = [(self.waiter_key[t][1], t) for t in seq.waiting_receivers]
        if got_receivers != [(i, t) for (i, t) in want_receivers]:
            self._fail(f"model receivers {got_receivers!r} != parked "
                       f"{want_receivers!r}")


class ExploreStats:
    __slots__ = ("runs", "pruned", "retry_cut", "capped", "states",
                 "max_depth", "exhausted")

    def __init__(self):
        self.runs = 0        # schedules driven to idle and conformance-checked
        self.pruned = 0      # schedules cut at an already-visited state
        self.retry_cut = 0   # schedules cut at the retry bound (chases)
        self.capped = 0      # schedules cut at max_steps (should stay 0)
        self.states = 0
        self.max_depth = 0
        self.exhausted = True

    def __repr__(self) -> str:
        return (f"<ExploreStats runs={self.runs} pruned={self.pruned} "
                f"retry_cut={self.retry_cut} capped={self.capped} "
                f"states={self.states} max_depth={self.max_depth} "
                f"exhausted={self.exhausted}>")


def explore(build: Callable[[CoopRuntime], Any], *,
            max_steps: int = 2000,
            max_restarts: int = 4,
            max_runs: Optional[int] = None,
            max_states: int = 500_000) -> ExploreStats:
    """Enumerate schedules of ``build`` and conformance-check every run.

    ``build(runtime)`` spawns the program's contexts and returns the
    channel under test.  Raises ConformanceError (with the offending
    schedule and event tail attached) on the first failing run.

    The algorithms are lock-free, not wait-free: two operations can chase
    each other through poisoned cells forever, so the raw schedule tree is
    infinite.  Runs are therefore cut once they accumulate more than
    ``max_restarts`` cell retries; within that bound the enumeration is
    exhaustive (``exhausted`` stays True, ``retry_cut`` counts the cut
    chases).  Hitting ``max_steps`` or ``max_states`` instead clears
    ``exhausted``: those budgets exist as backstops, not as part of the
    bounded model.
    """
    stats = ExploreStats()
    visited: set = set()
    prefix: list[int] = []
    alt_stack: list[list[int]] = []

    while True:
        events: list = []
        checker_box: list[HistoryChecker] = []
        restarts = [0]

        def sink(ev, _events=events, _box=checker_box, _r=restarts):
            _events.append(ev)
            if ev[1] == "restart":
                _r[0] += 1
            if _box:
                _box[0].feed(ev)

        rt = CoopRuntime(strict_spin=TRANSIENT_STATES, sink=sink)
        channel = build(rt)
        checker = HistoryChecker(channel.capacity)
        for ev in events:        # events emitted during setup, if any
            checker.feed(ev)
        checker_box.append(checker)

        cut = [None]    # "seen" | "retries" | "states"

        def chooser(cands: list[int], step: int) -> Optional[int]:
            if step < len(prefix):
                pick = prefix[step]
                if pick not in cands:
                    raise RuntimeError(
                        f"replay diverged at step {step}: {pick} not in {cands}")
                return pick
            if restarts[0] > max_restarts:
                cut[0] = "retries"
                return None
            # hash only: full tuples for thousands of states dominate memory,
            # and a 64-bit collision merely skips coverage of one interleaving
            fp = hash((rt.context_fingerprint(), channel.fp(), checker.token()))
            if fp in visited:
                cut[0] = "seen"
                return None
            if len(visited) >= max_states:
                cut[0] = "states"
                return None
            visited.add(fp)
            prefix.append(cands[0])
            alt_stack.append(list(cands[1:]))
            return cands[0]

        try:
            verdict = rt.run(chooser, max_steps=max_steps)
            if verdict in ("done", "parked"):
                checker.finish(channel, rt, verdict)
                stats.runs += 1
            elif verdict == "stopped":
                if cut[0] == "retries":
                    stats.retry_cut += 1
                elif cut[0] == "states":
                    stats.pruned += 1
                    stats.exhausted = False
                else:
                    stats.pruned += 1
            elif verdict == "steps-exhausted":
                stats.capped += 1
                stats.exhausted = False
            else:   # deadlock
                raise ConformanceError(f"scheduler verdict {verdict}")
        except (ConformanceError, SequentialInvariantError) as exc:
            if isinstance(exc, ConformanceError) and not exc.schedule:
                exc.schedule = list(prefix)
                exc.events = events
                raise
            raise ConformanceError(str(exc), list(prefix), events) from exc
        finally:
            rt.dispose()    # abandoned greenlets retain whole stacks

        stats.max_depth = max(stats.max_depth, len(prefix))
        stats.states = len(visited)
        if max_runs is not None and (stats.runs + stats.pruned + stats.capped
                                     + stats.retry_cut) >= max_runs:
            stats.exhausted = False
            return stats
        while alt_stack and not alt_stack[-1]:
            alt_stack.pop()
            prefix.pop()
        if not alt_stack:
            return stats
        prefix[-1] = alt_stack[-1].pop(0)


# -- canned programs -----------------------------------------------------------


def _run_send(rt, chan, value) -> None:
    rt.emit(("op_begin", "send", value))
    try:
        chan.send(value)
    except Interrupted:
        rt.emit(("op_return", "send", "interrupted", value))
    else:
        rt.emit(("op_return", "send", "ok", value))
    rt.note_boundary()


def _run_recv(rt, chan) -> None:
    rt.emit(("op_begin", "recv", None))
    try:
        got = chan.receive()
    except Interrupted:
        rt.emit(("op_return", "recv", "interrupted", None))
    else:
        rt.emit(("op_return", "recv", "ok", got))
    rt.note_boundary()


def _run_interrupt(rt, ctxs, target: int) -> None:
    rt.emit(("op_begin", "interrupt", target))
    ctxs[target].interrupt()
    rt.emit(("op_return", "interrupt", "ok", target))
    rt.note_boundary()


def build_case(capacity: int, plans: list, *, segment_size: int = 2,
               channel_factory: Optional[Callable] = None):
    """Make an ``explore`` target from per-context op lists.

    Each plan is a list of ("send", value) / ("recv",) /
    ("interrupt", context_index) steps, one plan per context.
    """

    def build(rt: CoopRuntime):
        if channel_factory is not None:
            chan = channel_factory(rt)
        elif capacity == 0:
            from .rendezvous import RendezvousChannel
            chan = RendezvousChannel(runtime=rt, segment_size=segment_size)
        else:
            from .buffered import BufferedChannel
            chan = BufferedChannel(capacity, runtime=rt,
                                   segment_size=segment_size)
        ctxs: list = []

        def make_body(plan):
            def body():
                for step in plan:
                    if step[0] == "send":
                        _run_send(rt, chan, step[1])
                    elif step[0] == "recv":
                        _run_recv(rt, chan)
                    elif step[0] == "interrupt":
                        _run_interrupt(rt, ctxs, step[1])
                    else:
                        raise ValueError(f"unknown plan step {step!r}")
            return body

        for i, plan in enumerate(plans):
            ctxs.append(rt.spawn(make_body(plan), label=f"p{i}"))
        return chan

    return build


def explore_case(capacity: int, plans: list, **kwargs) -> ExploreStats:
    extra = {k: kwargs.pop(k) for k in ("segment_size", "channel_factory")
             if k in kwargs}
    return explore(build_case(capacity, plans, **extra), **kwargs)
