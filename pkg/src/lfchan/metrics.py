"""Optional channel statistics.

A channel constructed with a ``ChannelMetrics`` records suspension and
retry behavior.  Counters are guarded by one lock; they sit on rare paths
(parks, poisonings, retries), never on the straight-through fast path.
"""

from __future__ import annotations

import threading

__all__ = ["ChannelMetrics"]


class ChannelMetrics:
    __slots__ = ("_lock", "parks", "restarts", "broken_cells",
                 "suspension_violations")

    def __init__(self):
        self._lock = threading.Lock()
        self.parks = 0
        self.restarts = 0
        self.broken_cells = 0
        # (side, index, counter_values) for every suspension that broke the
        # counter rule; empty on a correct implementation.
        self.suspension_violations: list[tuple] = []

    def on_park(self) -> None:
        with self._lock:
            self.parks += 1

    def on_restart(self) -> None:
        with self._lock:
            self.restarts += 1

    def on_broken(self) -> None:
        with self._lock:
            self.broken_cells += 1

    def on_suspend(self, side: str, idx: int, opposite: int,
                   buffer_end: int | None = None) -> None:
        """Record a suspension decision; flag it if the counters forbid it.

        A send may suspend only when its index is not yet covered by the
        receive counter (and, in buffered mode, not inside the buffer);
        symmetrically for receive.
        """
        bad = idx < opposite or (buffer_end is not None and idx < buffer_end)
        if bad:
            with self._lock:
                self.suspension_violations.append((side, idx, opposite, buffer_end))

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "parks": self.parks,
                "restarts": self.restarts,
                "broken_cells": self.broken_cells,
                "suspension_violations": len(self.suspension_violations),
            }
