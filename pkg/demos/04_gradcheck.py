"""Finite-difference checks for every op of the autodiff engine.

Each op is run on small random inputs and its backward pass is compared to
central differences of ``sum(out * R)`` for a random projection ``R``.

Run: python3 demos/04_gradcheck.py
"""

from acfseg.autodiff.gradcheck import STEP, TOLERANCE, run_suite

results = run_suite(seeds=range(5))
worst = {}
for r in results:
    worst[r.name] = max(worst.get(r.name, 0.0), r.max_rel_error)
print(f"step {STEP}, tolerance {TOLERANCE}, 5 seeds per op")
for name, err in sorted(worst.items(), key=lambda kv: -kv[1]):
    print(f"  {'ok ' if err < TOLERANCE else 'BAD'} {name:<18} {err:.2e}")
