"""Six preparations, three binary measurements: the four bounds on each facet.

For every facet metric the contextual LP, the noncontextual LP, a qubit
see-saw and the first-level unitary relaxation are computed. When the
see-saw value meets the relaxation the quantum optimum is certified.

Run: python3 demos/table1_walkthrough.py
"""

from ctxwb import build_632, build_unitary_relaxation, max_contextual, max_noncontextual, seesaw, upper_bound
from ctxwb.scenario import table1_metrics

scenario = build_632()
relaxation = build_unitary_relaxation(scenario)  # built once, reused for every metric

print(f"{'metric':<8}{'S_C':>10}{'S_NC':>10}{'see-saw':>12}{'Q1':>12}  certified")
for metric in table1_metrics():
    c = max_contextual(scenario, metric).value
    nc = max_noncontextual(scenario, metric).value
    low = seesaw(scenario, metric, dim=2, restarts=10, seed=0)
    high = upper_bound(relaxation, metric).value
    print(f"{metric.name:<8}{c:>10.4f}{nc:>10.4f}{low.value:>12.7f}{high:>12.7f}  {abs(high - low.value) < 1e-5}")

# the best qubit strategy for the second facet, as explicit matrices
best = seesaw(scenario, table1_metrics()[1], dim=2, restarts=10, seed=0).realization
print("\nstate 0 of the optimal qubit strategy:\n", best.states[0].round(4))
print("effect [0|M0]:\n", best.povms[0][0].round(4))
