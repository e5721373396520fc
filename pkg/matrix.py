"""Throwaway: time the acceptance-candidate exploration matrix."""
import sys
import time

sys.path.insert(0, "src")

from lfchan.explorer import explore_case

S1 = ("send", 1)
S2 = ("send", 2)
RV = ("recv",)
I0 = ("interrupt", 0)

CASES = [
    ("c0-a", 0, [[S1], [RV]], 2),
    ("c0-b", 0, [[S1, S2], [RV, RV]], 2),
    ("c0-c", 0, [[S1], [I0]], 2),
    ("c0-d", 0, [[S1], [RV], [I0]], 2),
    ("c0-e", 0, [[S1, S2], [RV], [I0]], 2),
    ("c1-a", 1, [[S1]], 2),
    ("c1-b", 1, [[S1], [RV]], 2),
    ("c1-c", 1, [[RV], [S1]], 2),
    ("c1-f", 1, [[RV], [I0]], 2),
    ("c1-g", 1, [[S1, S2], [I0]], 2),
    ("c1-d", 1, [[S1, S2], [RV, RV]], 1),
    ("c1-e", 1, [[S1, S2], [RV], [I0]], 1),
    ("c2-a", 2, [[S1, S2], [RV, RV]], 2),
    ("c2-b", 2, [[S1, S2], [RV], [I0]], 1),
    ("c2-c", 2, [[RV], [S1], [I0]], 2),
]

with open("matrix_out.txt", "w") as f:
    for name, cap, plans, restarts in CASES:
        t0 = time.time()
        try:
            stats = explore_case(cap, plans, max_restarts=restarts,
                                 max_states=2_000_000)
            line = (f"{name} cap={cap} r={restarts}: runs={stats.runs} "
                    f"states={stats.states} retry_cut={stats.retry_cut} "
                    f"exhausted={stats.exhausted} {time.time()-t0:.1f}s")
        except Exception as exc:
            line = f"{name} cap={cap} r={restarts}: FAILED {type(exc).__name__}: {exc}"
        print(line, flush=True)
        f.write(line + "\n")
        f.flush()
print("MATRIX DONE")
