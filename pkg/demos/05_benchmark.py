"""Compare the three channel implementations on one small workload.

The CLI equivalent:  lfchan-bench --impl buffered --producers 2 \\
    --consumers 2 --elements 20000 --work 0
"""

from lfchan.bench import run_bench

for impl, capacity in [("lock", 16), ("buffered", 16), ("rendezvous", 0)]:
    r = run_bench(impl=impl, capacity=capacity, producers=2, consumers=2,
                  elements=20_000, work=0, segment_size=32, seed=0,
                  timeout_secs=60)
    print(f"{impl:>10}: {r['throughput']:>9.0f} elem/s  "
          f"parks={r['park_count']:<6} poisoned={r['poisoned_fraction']:.3f} "
          f"exactly_once={r['checksum_ok']}")
