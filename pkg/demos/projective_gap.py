"""Projective measurements can fall short of general POVMs.

In the two-trit scenario both ternary parities are hidden and the two
ternary measurements average to the same effects. The projective
relaxation caps the success at 1/3, below the noncontextual 1/2, while a
qutrit see-saw with general POVMs passes the noncontextual bound.

Run: python3 demos/projective_gap.py
"""

from ctxwb import (build_mporac23, build_projective_relaxation, build_unitary_relaxation, max_noncontextual,
                   seesaw, upper_bound)
from ctxwb.scenario import mporac23_metric
from ctxwb.seesaw import naimark_check

sc, m = build_mporac23(), mporac23_metric()
qpi = upper_bound(build_projective_relaxation(sc), m)
print(f"noncontextual bound      {max_noncontextual(sc, m).value:.7f}")
print(f"projective relaxation    {qpi.status} {qpi.value:.7f}")
res = seesaw(sc, m, dim=3, restarts=10, seed=0)
print(f"qutrit see-saw (POVMs)   {res.value:.7f}")
print(f"unitary relaxation       {upper_bound(build_unitary_relaxation(sc), m).value:.7f}")

# the optimal POVMs really are not projective
for y, povm in enumerate(res.realization.povms):
    worst = max(abs((M @ M - M)).max() for M in povm)
    print(f"measurement {y}: max |M^2 - M| = {worst:.3f}")

# and a Naimark dilation would break the measurement equivalence
try:
    naimark_check(res.realization, sc)
except ValueError as exc:
    print("dilation refused:", exc)
