"""Two measuring parties sharing one preparation: monogamy and key rates.

Alice prepares ``rho_x`` on a joint system; Bob and Charlie (or Eve) each
measure their share with binary projective measurements that commute with
each other. The relaxation ``Q_{1+BC}`` indexes the moment matrices by

    I,  M_y (Bob),  N_y (Charlie),  M_y N_y' (products across the parties),

and never by products of two operators of the same party. Only outcome 0 of
each binary measurement appears; outcome 1 is ``I - M``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.linalg import null_space

from .relax import RelaxBound, _class_differences, _independent, _Moments
from .scenario import Scenario, ScenarioError, SuccessMetric, _uniform, bit
from .solver import ConicProgram, SolverOptions, complex_rows, solve

logger = logging.getLogger(__name__)

READINGS = ("uniform", "literal", "two-setting")


# -- scenario ------------------------------------------------------------------------


@dataclass(frozen=True)
class TripartiteScenario:
    """Eight three-bit preparations measured by two parties.

    Each party has ``settings`` binary measurements; setting ``y`` asks for
    bit ``x_y``. A party's success is ``weight * sum_{x,y} p(x_y|x,y)``.
    """

    settings: int
    prep_equivalences: tuple
    weight: Fraction
    reading: str = "uniform"
    name: str = "tripartite-porac"
    X: int = 8

    @property
    def max_score(self) -> float:
        """The score of a party that always answers correctly."""
        return float(self.weight * self.X * self.settings)

    def single_party(self) -> Scenario:
        """The prepare-and-measure scenario seen by one party alone."""
        return Scenario(self.X, self.settings, 2, self.prep_equivalences, (), name=f"{self.name}-single")

    def party_metric(self) -> SuccessMetric:
        """The success functional on a single party's behaviour."""
        terms = [(x, y, bit(x, y, 3), self.weight) for x in range(self.X) for y in range(self.settings)]
        return SuccessMetric(tuple(terms), name=f"{self.name}-S")


def build_tripartite_porac(reading: str = "uniform") -> TripartiteScenario:
    """The three-bit parity-oblivious game shared between two parties.

    Seven preparation classes: for each pair of bits and each value of the
    third, the even and odd pair parities mix to the same state, and the
    full three-bit parity is hidden.

    ``reading`` fixes how scores are normalized:

    ``"uniform"``
        three settings, weight 1/24, so a perfect party scores 1.
    ``"literal"``
        three settings, weight 1/16; a perfect party scores 1.5.
    ``"two-setting"``
        settings 0 and 1 only, weight 1/16; a perfect party scores 1.
    """
    if reading not in READINGS:
        raise ScenarioError(f"unknown reading {reading!r}; expected one of {READINGS}")
    X = 8
    classes = []
    for i, j in ((0, 1), (0, 2), (1, 2)):
        spectator = 3 - i - j
        for s in (0, 1):
            group = [x for x in range(X) if bit(x, spectator, 3) == s]
            even = [x for x in group if bit(x, i, 3) == bit(x, j, 3)]
            odd = [x for x in group if bit(x, i, 3) != bit(x, j, 3)]
            classes.append([_uniform(even, X), _uniform(odd, X)])
    even = [x for x in range(X) if bin(x).count("1") % 2 == 0]
    odd = [x for x in range(X) if bin(x).count("1") % 2 == 1]
    classes.append([_uniform(even, X), _uniform(odd, X)])
    settings, weight = {"uniform": (3, Fraction(1, 24)), "literal": (3, Fraction(1, 16)),
                        "two-setting": (2, Fraction(1, 16))}[reading]
    return TripartiteScenario(settings, tuple(tuple(c) for c in classes), weight, reading,
                              name=f"tripartite-porac-{reading}")


# -- no-signalling linear program ------------------------------------------------------


def _success_weights(ts: TripartiteScenario) -> np.ndarray:
    """``w[x, y, k]`` with ``S = sum w * p(k|x,y)``."""
    w = np.zeros((ts.X, ts.settings, 2))
    for x in range(ts.X):
        for y in range(ts.settings):
            w[x, y, bit(x, y, 3)] = float(ts.weight)
    return w


def ns_monogamy_bound(ts: TripartiteScenario, no_signalling: bool = True, equivalences: bool = True,
                      options: SolverOptions | None = None) -> float:
    """Largest ``S_B + S_C`` over joint behaviours obeying the preparation
    equivalences and, optionally, no-signalling between the parties.

    Raises
    ------
    RuntimeError
        If the linear program does not solve to optimality.
    """
    X, S = ts.X, ts.settings
    prog = ConicProgram("max")
    pb = prog.add_block("nonneg", X * S * S * 4, "p")

    def idx(x, yb, yc, kb, kc):
        return (pb, (((x * S + yb) * S + yc) * 2 + kb) * 2 + kc)

    for x in range(X):
        for yb in range(S):
            for yc in range(S):
                prog.add_constraint({idx(x, yb, yc, kb, kc): 1.0 for kb in (0, 1) for kc in (0, 1)},
                                    "==", 1.0, "norm")
    if equivalences:
        D = _independent(_class_differences(ts.single_party().prep_arrays()))
        for row in D:
            for yb, yc, kb, kc in np.ndindex(S, S, 2, 2):
                prog.add_constraint({idx(x, yb, yc, kb, kc): row[x] for x in range(X) if abs(row[x]) > 1e-14},
                                    "==", 0.0, "prep")
    if no_signalling:
        for x in range(X):
            for yb in range(S):
                for yc in range(1, S):
                    for kb in (0, 1):
                        row = {idx(x, yb, 0, kb, kc): 1.0 for kc in (0, 1)}
                        for kc in (0, 1):
                            row[idx(x, yb, yc, kb, kc)] = -1.0
                        prog.add_constraint(row, "==", 0.0, "ns-bob")
            for yc in range(S):
                for yb in range(1, S):
                    for kc in (0, 1):
                        row = {idx(x, 0, yc, kb, kc): 1.0 for kb in (0, 1)}
                        for kb in (0, 1):
                            row[idx(x, yb, yc, kb, kc)] = -1.0
                        prog.add_constraint(row, "==", 0.0, "ns-charlie")
    # Each party's marginal is read off at the other's setting 0.
    w = _success_weights(ts)
    obj: dict = {}
    for x, y, k in zip(*np.nonzero(w)):
        for other in (0, 1):
            for key in (idx(x, y, 0, k, other), idx(x, 0, y, other, k)):
                obj[key] = obj.get(key, 0.0) + w[x, y, k]
    prog.set_objective(obj)
    sol = solve(prog, options)
    if not sol.optimal:
        raise RuntimeError(f"no-signalling LP ended with status {sol.status}")
    return sol.value


# -- Q_{1+BC} relaxation --------------------------------------------------------------


def _collapse(word: tuple) -> tuple:
    """Projector word with repeated neighbours merged (``P P = P``)."""
    out: list = []
    for a in word:
        if not out or out[-1] != a:
            out.append(a)
    return tuple(out)


def bipartite_words(settings: int) -> list:
    """Index words as ``(bob_word, other_word)`` pairs of setting tuples."""
    words = [((), ())]
    words += [((y,), ()) for y in range(settings)]
    words += [((), (y,)) for y in range(settings)]
    words += [((b,), (c,)) for b in range(settings) for c in range(settings)]
    return words


def _entry_key(u, v) -> tuple:
    """Canonical form of ``u^dagger v`` for commuting parties.

    Real moment matrices identify a word with its adjoint, so the key is the
    smaller of the two orientations.
    """
    bob = _collapse(tuple(reversed(u[0])) + v[0])
    other = _collapse(tuple(reversed(u[1])) + v[1])
    return min((bob, other), (tuple(reversed(bob)), tuple(reversed(other))))


@dataclass
class BipartiteMomentProblem:
    """``Q_{1+BC}`` moment matrices for a :class:`TripartiteScenario`."""

    scenario: TripartiteScenario
    words: list
    program: ConicProgram
    moments: _Moments
    meta: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.words)

    def _cell(self, x: int, word) -> dict:
        return complex_rows(self.moments.gamma(x, 0, self.words.index(word)))[0]

    def score_terms(self, party: str) -> tuple[float, dict]:
        """Affine form of the party's score, ``party`` in ``{"B", "C"}``."""
        if party not in ("B", "C"):
            raise ValueError("party must be 'B' or 'C'")
        ts = self.scenario
        const, terms = 0.0, {}
        w = float(ts.weight)
        for x in range(ts.X):
            for y in range(ts.settings):
                word = ((y,), ()) if party == "B" else ((), (y,))
                sign = 1.0 if bit(x, y, 3) == 0 else -1.0
                if sign < 0:
                    const += w
                for key, v in self._cell(x, word).items():
                    terms[key] = terms.get(key, 0.0) + sign * w * v
        return const, terms

    def joint_probabilities(self, solution) -> np.ndarray:
        """``p[x, yb, yc, kb, kc]`` read from a solved program."""
        ts = self.scenario
        S = ts.settings
        p = np.zeros((ts.X, S, S, 2, 2))
        for x in range(ts.X):
            for yb in range(S):
                for yc in range(S):
                    pb = solution.evaluate(self._cell(x, ((yb,), ())))
                    pc = solution.evaluate(self._cell(x, ((), (yc,))))
                    pbc = solution.evaluate(self._cell(x, ((yb,), (yc,))))
                    p[x, yb, yc] = [[pbc, pb - pbc], [pc - pbc, 1 - pb - pc + pbc]]
        return p


def build_bipartite_relaxation(ts: TripartiteScenario) -> BipartiteMomentProblem:
    """Real moment matrices over :func:`bipartite_words` with commuting
    projective parties and the preparation equivalences built in."""
    words = bipartite_words(ts.settings)
    m = len(words)
    prog = ConicProgram("max")
    D = _class_differences(ts.single_party().prep_arrays())
    N = null_space(D) if D.size else None
    moments = _Moments(prog, ts.X, m, False, N)
    moments.uniform({(0, 0): 1.0}, 1.0, "normalization", real_only=True)
    groups: dict = {}
    for i in range(m):
        for j in range(i, m):
            groups.setdefault(_entry_key(words[i], words[j]), []).append((i, j))
    for cells in groups.values():
        first = cells[0]
        for other in cells[1:]:
            moments.uniform({first: 1.0, other: -1.0}, 0.0, "identify", real_only=True)
    return BipartiteMomentProblem(ts, words, prog, moments, {"groups": len(groups)})


def _maximize(problem: BipartiteMomentProblem, terms: dict, const: float, extra=(),
              options: SolverOptions | None = None) -> RelaxBound:
    prog = problem.program.copy()
    for row, sense, rhs in extra:
        prog.add_constraint(row, sense, rhs, "score")
    prog.set_objective(terms, const, "max")
    sol = solve(prog, options)
    if not sol.optimal:
        return RelaxBound(sol.value, sol.status, certificate=sol.ray)
    return RelaxBound(sol.value, "optimal", behaviour=problem.joint_probabilities(sol),
                      dual_bound=sol.dual_bound)


def max_sum_bound(problem: BipartiteMomentProblem, options: SolverOptions | None = None) -> RelaxBound:
    """Upper bound on ``S_B + S_C`` over the relaxation."""
    cb, tb = problem.score_terms("B")
    cc, tc = problem.score_terms("C")
    terms = dict(tb)
    for k, v in tc.items():
        terms[k] = terms.get(k, 0.0) + v
    return _maximize(problem, terms, cb + cc, options=options)


def single_party_bound(problem: BipartiteMomentProblem, party: str = "B",
                       options: SolverOptions | None = None) -> RelaxBound:
    const, terms = problem.score_terms(party)
    return _maximize(problem, terms, const, options=options)


def monogamy_point(problem: BipartiteMomentProblem, s_b: float,
                   options: SolverOptions | None = None) -> RelaxBound:
    """Upper bound on Charlie's score given Bob's score is at least ``s_b``.

    The result has status ``"infeasible"`` when ``s_b`` exceeds Bob's
    largest attainable score.
    """
    cb, tb = problem.score_terms("B")
    cc, tc = problem.score_terms("C")
    return _maximize(problem, tc, cc, extra=[(tb, ">=", s_b - cb)], options=options)


@dataclass
class MonogamyCurve:
    s_b: np.ndarray
    values: np.ndarray
    statuses: list
    reading: str
    meta: dict = field(default_factory=dict)

    def is_monotone(self, tol: float = 1e-6) -> bool:
        """Charlie's bound never increases with Bob's score (solved points only)."""
        ok = [i for i, s in enumerate(self.statuses) if s == "optimal"]
        v = self.values[ok]
        return bool(np.all(np.diff(v) <= tol))

    def max_sum(self) -> float:
        ok = [i for i, s in enumerate(self.statuses) if s == "optimal"]
        return float(np.max(self.s_b[ok] + self.values[ok]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s_B", "value", "status"])
        for s, v, st in zip(self.s_b, self.values, self.statuses):
            w.writerow([f"{s:.10f}", f"{v:.10f}" if np.isfinite(v) else "nan", st])
        return buf.getvalue()


def default_grid(problem: BipartiteMomentProblem, points: int = 50,
                 options: SolverOptions | None = None) -> np.ndarray:
    """``points`` uniform values on ``(trivial, best]`` for Bob's score.

    The trivial score is half the perfect one (guessing at random).
    """
    best = single_party_bound(problem, "B", options)
    if best.status != "optimal":
        raise RuntimeError(f"single-party bound ended with status {best.status}")
    low = problem.scenario.max_score / 2
    return np.linspace(low, best.value, points + 1)[1:]


def monogamy_curve(problem: BipartiteMomentProblem, grid=None, points: int = 50,
                   options: SolverOptions | None = None) -> MonogamyCurve:
    """Charlie's bound at every grid value of Bob's score.

    A failed point is recorded with its status and a NaN value; the curve
    continues.
    """
    grid = default_grid(problem, points, options) if grid is None else np.asarray(grid, dtype=float)
    values, statuses = [], []
    for s in grid:
        r = monogamy_point(problem, float(s), options)
        values.append(r.value if r.status == "optimal" else float("nan"))
        statuses.append(r.status)
        if r.status != "optimal":
            logger.warning("monogamy point s_B=%.6f ended with %s", s, r.status)
    return MonogamyCurve(np.asarray(grid), np.asarray(values), statuses, problem.scenario.reading)


# -- key rate ----------------------------------------------------------------------


def binary_entropy(p: float) -> float:
    """``-p log2 p - (1-p) log2 (1-p)`` with ``0 log 0 = 0``.

    Raises
    ------
    ValueError
        If ``p`` lies outside ``[0, 1]``.
    """
    p = float(p)
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ValueError(f"binary entropy needs p in [0, 1], got {p}")
    return -sum(q * math.log2(q) for q in (p, 1.0 - p) if q > 0)


@dataclass
class KeyRatePoint:
    s_b: float
    s_e: float
    rate: float
    status: str


def key_rate(s_b: float, s_e: float) -> float:
    """``-log2 S_E - h(S_B)`` in bits per round."""
    return -math.log2(s_e) - binary_entropy(s_b)


def key_rate_curve(problem: BipartiteMomentProblem, grid=None, points: int = 50,
                   options: SolverOptions | None = None) -> list[KeyRatePoint]:
    """Lower bounds on the key rate along a grid of Bob's score.

    Eve takes Charlie's place, so her guessing probability ``S_E`` is
    bounded by :func:`monogamy_point`. Scores must be probabilities, so the
    ``"literal"`` reading is rejected.
    """
    if problem.scenario.max_score != 1.0:
        raise ValueError("key rates need scores normalized to probabilities (perfect score 1)")
    grid = default_grid(problem, points, options) if grid is None else np.asarray(grid, dtype=float)
    out = []
    for s in grid:
        r = monogamy_point(problem, float(s), options)
        if r.status != "optimal":
            logger.warning("key-rate point s_B=%.6f ended with %s", s, r.status)
            out.append(KeyRatePoint(float(s), float("nan"), float("nan"), r.status))
            continue
        s_e = min(max(r.value, 0.5), 1.0)
        out.append(KeyRatePoint(float(s), r.value, key_rate(float(s), s_e), "optimal"))
    return out


def key_rate_csv(points: list[KeyRatePoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s_B", "s_E", "rate", "status"])
    for p in points:
        w.writerow([f"{p.s_b:.10f}", f"{p.s_e:.10f}", f"{p.rate:.10f}", p.status])
    return buf.getvalue()


# -- explicit realizations ---------------------------------------------------------


def tripartite_scores(ts: TripartiteScenario, states, bob, charlie, tol: float = 1e-8) -> tuple[float, float]:
    """``(S_B, S_C)`` of joint states measured by ``bob[y][k] (x) charlie[y][k]``.

    Raises
    ------
    ValueError
        If the states break a preparation equivalence by more than ``tol``.
    """
    states = [np.asarray(r, dtype=complex) for r in states]
    for v, alphas in enumerate(ts.single_party().prep_arrays()):
        mix = [sum(a[x] * states[x] for x in range(ts.X)) for a in alphas]
        if max(np.max(np.abs(m - mix[0])) for m in mix) > tol:
            raise ValueError(f"preparation class {v} is violated")
    db = np.asarray(bob[0][0]).shape[0]
    dc = np.asarray(charlie[0][0]).shape[0]
    w = _success_weights(ts)
    s_b = s_c = 0.0
    for x, y, k in zip(*np.nonzero(w)):
        mb = np.kron(bob[y][k], np.eye(dc))
        mc = np.kron(np.eye(db), charlie[y][k])
        s_b += w[x, y, k] * np.real(np.trace(states[x] @ mb))
        s_c += w[x, y, k] * np.real(np.trace(states[x] @ mc))
    return float(s_b), float(s_c)
