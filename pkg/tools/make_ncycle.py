"""Write the bundled n-cycle scenario files (``ctxwb/data/ncycle_<n>.json``).

Layout for an n-cycle:

* measurements ``y = 0..n-1`` are ternary; outcome 0 of ``M_y`` and
  outcome 1 of ``M_{y-1}`` are the same effect (the shared projector of
  the cycle), outcome 2 is the remainder;
* preparation 0 is the target, preparation 1 its complement, and
  preparations ``2 + 3y + k`` are meant to give outcome ``k`` of ``M_y``
  with certainty;
* one preparation class: the uniform mixture of ``{2+3y+k}_k`` is the same
  for every ``y`` and equals ``P_0/3 + 2 P_1/3``.

The metric is the sum of the outcome-0 probabilities of the target over
all measurements plus ``1/n`` times each predictability term, so a
perfectly predictable strategy earns 3 on top of the cycle sum.
"""

import json
import sys
from fractions import Fraction
from pathlib import Path


def ncycle(n: int) -> dict:
    X, Y, K = 2 + 3 * n, n, 3

    def point(i, size):
        return ["1" if j == i else "0" for j in range(size)]

    def mix(pairs):
        d = [Fraction(0)] * X
        for a, c in pairs:
            d[a] += c
        return [str(v) for v in d]

    third = Fraction(1, 3)
    prep = [[mix([(2 + 3 * y + k, third) for k in range(K)]) for y in range(Y)]
            + [mix([(0, third), (1, 2 * third)])]]
    meas = [[point(((i - 1) % n) * K + 1, Y * K), point(i * K, Y * K)] for i in range(n)]
    terms = [{"x": 0, "y": i, "k": 0, "c": "1"} for i in range(n)]
    terms += [{"x": 2 + 3 * y + k, "y": y, "k": k, "c": str(Fraction(1, n))} for y in range(Y) for k in range(K)]
    return {
        "X": X, "Y": Y, "K": K,
        "prep_equivalences": prep,
        "meas_equivalences": meas,
        "metric": {"terms": terms},
        "notes": f"KCBS-style {n}-cycle; noncontextual bound {Fraction(n + 5, 2)}",
    }


if __name__ == "__main__":
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "src/ctxwb/data")
    for n in (5, 7):
        (out / f"ncycle_{n}.json").write_text(json.dumps(ncycle(n), indent=1) + "\n", encoding="utf-8")
