"""How much preparation buys, per backend.

The tape backend records once and replays; without preparation every call
records again.  The dual backend preallocates its seed bank, so prepared
calls allocate nothing.  Finite differences have almost nothing to prepare.

Run: python demos/02_preparation.py
"""

from adkit.harness import bench

print(f"{'backend':8s} {'n':>6s} {'prepared':>10s} {'unprepared':>12s} {'ratio':>7s} {'allocs':>7s}")
for backend in ["tape", "dual", "fd"]:
    for n in [100, 1000]:
        fast = bench("sqnorm_gradient", backend, prepared=True, size=n, samples=30, budget_ms=500)
        slow = bench("sqnorm_gradient", backend, prepared=False, size=n, samples=10, budget_ms=500)
        ratio = slow.time_ns_median / fast.time_ns_median
        print(f"{backend:8s} {n:6d} {fast.time_ns_median / 1e3:8.1f}us {slow.time_ns_median / 1e3:10.1f}us "
              f"{ratio:6.1f}x {fast.allocs:7d}")

# the same numbers as a CSV: adkit bench --scenarios sqnorm_gradient --sizes 100,1000 --out prep.csv
