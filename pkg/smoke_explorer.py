import sys, time
sys.path.insert(0, "src")
from lfchan.explorer import explore_case

cases = [
    ("handoff",    0, [[("send", 1)], [("recv",)]]),
    ("2x2",        0, [[("send", 1), ("send", 2)], [("recv",), ("recv",)]]),
    ("lone-send",  0, [[("send", 7)]]),
    ("intr-park",  0, [[("send", 7)], [("interrupt", 0)]]),
    ("intr-race",  0, [[("send", 7)], [("recv",)], [("interrupt", 0)]]),
    ("cross-intr", 0, [[("send", 1), ("recv",)], [("recv",), ("send", 2)],
                       [("interrupt", 1)]]),
]
for name, cap, plans in cases:
    t = time.time()
    st = explore_case(cap, plans, max_restarts=2)
    print(f"{name:11s} {st} {time.time()-t:.1f}s", flush=True)
print("EXPLORER SMOKE OK")
