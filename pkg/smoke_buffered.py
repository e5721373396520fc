"""Throwaway: drive the buffered channel through the explorer."""
import sys
import time

sys.path.insert(0, "src")

from lfchan.explorer import explore_case

CASES = [
    ("b1-store", 1, [[("send", 1)]], 2),
    ("b1-pingpong", 1, [[("send", 1)], [("recv",)]], 2),
    ("b1-recv-first", 1, [[("recv",)], [("send", 5)]], 2),
    ("b1-two-sends", 1, [[("send", 1), ("send", 2)],
                         [("recv",), ("recv",)]], 2),
    ("b2-2x2", 2, [[("send", 1), ("send", 2)],
                   [("recv",), ("recv",)]], 2),
    ("b1-intr-send", 1, [[("send", 1), ("send", 2)],
                         [("interrupt", 0)]], 2),
    ("b1-intr-recv", 1, [[("recv",)], [("interrupt", 0)]], 2),
    ("b1-intr-race", 1, [[("send", 1), ("send", 2)],
                         [("recv",), ("recv",)],
                         [("interrupt", 0)]], 1),
]

for name, cap, plans, restarts in CASES:
    t0 = time.time()
    stats = explore_case(cap, plans, max_restarts=restarts)
    dt = time.time() - t0
    print(f"{name}: runs={stats.runs} states={stats.states} "
          f"pruned={stats.pruned} retry_cut={stats.retry_cut} "
          f"exhausted={stats.exhausted} {dt:.1f}s", flush=True)

print("BUFFERED SMOKE OK")
