"""Producer-consumer benchmark CLI.

Transfers a fixed number of unique integers through one shared channel
from N producer threads to N consumer threads, optionally burning a
geometrically distributed busy loop between operations, and prints one
line of key=value statistics.  A coarse-lock bounded queue is included
as the comparison baseline.

Exit codes: 0 on success, 2 when the watchdog aborts a wedged or
corrupted run, 1 on a configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
import threading
import time
from collections import deque
from random import Random
from typing import Any, Optional

from .buffered import BufferedChannel
from .metrics import ChannelMetrics
from .rendezvous import RendezvousChannel

__all__ = ["LockChannel", "run_bench", "main"]


class LockChannel:
    """Bounded queue under one mutex, the benchmark's lock-based baseline.

    Same ``send``/``receive`` surface as the lock-free channels.  With
    capacity zero it degenerates to a handshake: one send at a time
    deposits its element and blocks until a receive takes it.
    """

    def __init__(self, capacity: int):
        if capacity < 0:
            raise ValueError("capacity must not be negative")
        self.capacity = capacity
        self._mutex = threading.Lock()
        self._can_send = threading.Condition(self._mutex)
        self._can_recv = threading.Condition(self._mutex)
        self._taken = threading.Condition(self._mutex)
        self._items: deque = deque()
        self._handing_off = False

    def send(self, element: Any) -> None:
        if element is None:
            raise ValueError("None cannot be sent through a channel")
        with self._mutex:
            if self.capacity > 0:
                while len(self._items) >= self.capacity:
                    self._can_send.wait()
                self._items.append(element)
                self._can_recv.notify()
            else:
                while self._handing_off:
                    self._can_send.wait()
                self._handing_off = True
                self._items.append(element)
                self._can_recv.notify()
                while self._items:
                    self._taken.wait()
                self._handing_off = False
                self._can_send.notify()

    def receive(self) -> Any:
        with self._mutex:
            while not self._items:
                self._can_recv.wait()
            element = self._items.popleft()
            if self.capacity > 0:
                self._can_send.notify()
            else:
                self._taken.notify()
            return element


def _make_channel(impl: str, capacity: int, segment_size: int,
                  metrics: ChannelMetrics):
    if impl == "rendezvous":
        return RendezvousChannel(segment_size=segment_size, metrics=metrics)
    if impl == "buffered":
        return BufferedChannel(capacity, segment_size=segment_size,
                               metrics=metrics)
    if impl == "lock":
        return LockChannel(capacity)
    raise ValueError(f"unknown implementation {impl!r}")


class _WorkerTally:
    """Per-thread element accounting, merged after the joins."""

    __slots__ = ("count", "total", "xor", "error")

    def __init__(self):
        self.count = 0
        self.total = 0
        self.xor = 0
        self.error: Optional[BaseException] = None

    def add(self, value: int) -> None:
        self.count += 1
        self.total += value
        self.xor ^= value


def _producer(chan, lo: int, hi: int, work_p: float, rng: Random,
              tally: _WorkerTally, barrier: threading.Barrier) -> None:
    try:
        barrier.wait()
        send = chan.send
        r = rng.random
        for value in range(lo, hi):
            if work_p:
                # one trial per loop cycle: geometrically many cycles
                while r() >= work_p:
                    pass
            send(value)
            tally.add(value)
    except BaseException as exc:        # surfaced by the main thread
        tally.error = exc


def _consumer(chan, quota: int, work_p: float, rng: Random,
              tally: _WorkerTally, barrier: threading.Barrier) -> None:
    try:
        barrier.wait()
        receive = chan.receive
        r = rng.random
        for _ in range(quota):
            if work_p:
                while r() >= work_p:
                    pass
            tally.add(receive())
    except BaseException as exc:
        tally.error = exc


def run_bench(impl: str, capacity: int, producers: int, consumers: int,
              elements: int, work: int, segment_size: int, seed: int,
              timeout_secs: float) -> dict:
    """Run one configuration and return its statistics record.

    The record always carries ``ok``; on a wedged run it is False and
    ``timed_out`` says which workers never finished.
    """
    metrics = ChannelMetrics()
    chan = _make_channel(impl, capacity, segment_size, metrics)
    work_p = 1.0 / work if work > 0 else 0.0
    per_producer = elements // producers
    per_consumer = elements // consumers
    barrier = threading.Barrier(producers + consumers + 1)

    threads = []
    sent = []
    received = []
    for i in range(producers):
        tally = _WorkerTally()
        sent.append(tally)
        rng = Random((seed, "producer", i))
        lo = i * per_producer
        t = threading.Thread(target=_producer,
                             args=(chan, lo, lo + per_producer, work_p, rng,
                                   tally, barrier),
                             name=f"producer-{i}", daemon=True)
        threads.append(t)
    for i in range(consumers):
        tally = _WorkerTally()
        received.append(tally)
        rng = Random((seed, "consumer", i))
        t = threading.Thread(target=_consumer,
                             args=(chan, per_consumer, work_p, rng, tally,
                                   barrier),
                             name=f"consumer-{i}", daemon=True)
        threads.append(t)

    for t in threads:
        t.start()
    barrier.wait()
    started = time.perf_counter()
    deadline = started + timeout_secs
    stragglers = []
    for t in threads:
        t.join(max(0.0, deadline - time.perf_counter()))
        if t.is_alive():
            stragglers.append(t.name)
    elapsed = time.perf_counter() - started

    errors = [t.error for t in sent + received if t.error is not None]
    got = _merge(received)
    want = _merge(sent)
    counters = chan.counters() if hasattr(chan, "counters") else {}
    cells_used = max(counters.values()) if counters else elements
    stats = metrics.snapshot()
    record = {
        "impl": impl,
        "capacity": capacity,
        "producers": producers,
        "consumers": consumers,
        "elements": elements,
        "work": work,
        "segment_size": segment_size,
        "seed": seed,
        "elapsed": round(elapsed, 6),
        "throughput": round(elements / elapsed, 1) if elapsed > 0 else 0.0,
        "poisoned_fraction": (round(stats["broken_cells"] / cells_used, 6)
                              if cells_used else 0.0),
        "park_count": stats["parks"],
        "restart_count": stats["restarts"],
        "suspension_violations": stats["suspension_violations"],
        "checksum_ok": got == want and not stragglers and not errors,
        "timed_out": stragglers,
    }
    record["ok"] = bool(record["checksum_ok"] and not stragglers
                        and not errors and not stats["suspension_violations"])
    if errors:
        record["worker_error"] = repr(errors[0])
    if stragglers:
        record["counters"] = counters
    return record


def _merge(tallies) -> tuple:
    return (sum(t.count for t in tallies),
            sum(t.total for t in tallies),
            _xor_all(t.xor for t in tallies))


def _xor_all(values) -> int:
    acc = 0
    for v in values:
        acc ^= v
    return acc


def _parse_args(argv) -> argparse.Namespace:
    p = argparse.ArgumentParser(
        prog="lfchan-bench",
        description="Producer-consumer throughput benchmark over one "
                    "shared channel.")
    p.add_argument("--impl", choices=["rendezvous", "buffered", "lock"],
                   default="buffered")
    p.add_argument("--capacity", type=int, default=None,
                   help="buffer capacity (default: 64; rendezvous: 0)")
    p.add_argument("--producers", type=int, default=1)
    p.add_argument("--consumers", type=int, default=1)
    p.add_argument("--elements", type=int, default=1_000_000)
    p.add_argument("--work", type=int, default=100,
                   help="mean busy-loop cycles between operations "
                        "(geometric; 0 disables)")
    p.add_argument("--segment-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timeout-secs", type=float, default=300.0)
    p.add_argument("--output", type=str, default=None,
                   help="also write the full record as JSON to this path")
    return p.parse_args(argv)


def _validate(args: argparse.Namespace) -> Optional[str]:
    if args.capacity is None:
        args.capacity = 0 if args.impl == "rendezvous" else 64
    if args.impl == "rendezvous" and args.capacity != 0:
        return "rendezvous has no buffer; --capacity must be 0 or omitted"
    if args.impl == "buffered" and args.capacity < 1:
        return "buffered needs --capacity >= 1 (use --impl rendezvous for 0)"
    if args.capacity < 0:
        return "--capacity must not be negative"
    if args.producers < 1 or args.consumers < 1:
        return "--producers and --consumers must be at least 1"
    if args.producers != args.consumers:
        return "workload is symmetric: --producers must equal --consumers"
    if args.elements < 1:
        return "--elements must be at least 1"
    if args.elements % args.producers:
        return "--elements must be divisible by --producers"
    if args.work < 0:
        return "--work must not be negative"
    if args.segment_size < 1:
        return "--segment-size must be at least 1"
    if args.timeout_secs <= 0:
        return "--timeout-secs must be positive"
    return None


def main(argv=None) -> int:
    args = _parse_args(sys.argv[1:] if argv is None else argv)
    problem = _validate(args)
    if problem is not None:
        print(f"error: {problem}", file=sys.stderr)
        return 1
    record = run_bench(args.impl, args.capacity, args.producers,
                       args.consumers, args.elements, args.work,
                       args.segment_size, args.seed, args.timeout_secs)
    line = " ".join(f"{k}={_fmt(v)}" for k, v in record.items()
                    if k not in ("counters",))
    print(line)
    if args.output:
        with open(args.output, "w") as f:
            json.dump(record, f, indent=2, sort_keys=True)
            f.write("\n")
    if record["timed_out"]:
        print(f"watchdog: workers still running after "
              f"{args.timeout_secs}s: {', '.join(record['timed_out'])}; "
              f"channel counters: {record.get('counters', {})}",
              file=sys.stderr)
        return 2
    if not record["ok"]:
        print("benchmark failed verification (see checksum_ok / "
              "suspension_violations / worker_error)", file=sys.stderr)
        return 2
    return 0


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(map(str, value)) if value else "-"
    return str(value)


if __name__ == "__main__":
    sys.exit(main())
