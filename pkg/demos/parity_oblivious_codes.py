"""Parity-oblivious random access codes, with and without a measurement
equivalence.

porac(n) hides every parity of two or more input bits. The noncontextual
value is (1 + 1/n)/2 and the quantum value (1 + 1/sqrt(n))/2. Adding the
equivalence "the average of all outcome-0 effects equals the average of all
outcome-1 effects" (mporac) caps even the contextual value at 3/4.

Run: python3 demos/parity_oblivious_codes.py
"""

import math

from ctxwb import (build_mporac, build_porac, build_projective_relaxation, build_unitary_relaxation,
                   max_contextual, max_noncontextual, upper_bound)
from ctxwb.scenario import porac_metric

print(f"{'n':>2}{'NC':>10}{'Q1':>12}{'QPi1':>12}{'(1+1/sqrt n)/2':>16}")
for n in (2, 3, 4):
    sc, m = build_porac(n), porac_metric(n)
    nc = max_noncontextual(sc, m).value
    q1 = upper_bound(build_unitary_relaxation(sc), m).value
    qpi = upper_bound(build_projective_relaxation(sc), m).value
    print(f"{n:>2}{nc:>10.5f}{q1:>12.7f}{qpi:>12.7f}{0.5 * (1 + 1 / math.sqrt(n)):>16.7f}")

print(f"\n{'n':>2}{'C':>10}{'NC':>10}{'Q1':>12}   with the measurement equivalence")
for n in (2, 3, 4):
    sc, m = build_mporac(n), porac_metric(n)
    print(f"{n:>2}{max_contextual(sc, m).value:>10.5f}{max_noncontextual(sc, m).value:>10.5f}"
          f"{upper_bound(build_unitary_relaxation(sc), m).value:>12.7f}")
