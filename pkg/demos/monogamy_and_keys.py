"""Two parties decoding the same three-bit parity-oblivious preparations.

Charlie's best score shrinks as Bob's grows. With Eve in Charlie's place,
that trade-off gives a lower bound on a secret-key rate between Alice and
Bob, positive once Bob's score is close to its maximum.

Run: python3 demos/monogamy_and_keys.py  (about a minute)
"""

from ctxwb import multiparty as mp

ts = mp.build_tripartite_porac()
print(f"no-signalling bound on S_B + S_C: {mp.ns_monogamy_bound(ts):.4f}")
problem = mp.build_bipartite_relaxation(ts)
print(f"moment relaxation bound:          {mp.max_sum_bound(problem).value:.4f}")

curve = mp.monogamy_curve(problem, points=10)
print("\n   S_B    max S_C   key rate")
for s_b, s_c in zip(curve.s_b, curve.values):
    rate = mp.key_rate(s_b, max(s_c, 0.5))
    print(f"{s_b:7.4f} {s_c:9.4f} {rate:+10.4f}")
