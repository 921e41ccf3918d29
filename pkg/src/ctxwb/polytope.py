"""Linear-programming bounds over the contextual and noncontextual polytopes.

The contextual polytope holds every behaviour compatible with the
operational equivalences. The noncontextual polytope is parametrised by a
finite ontic space: the vertices of the polytope of response schemes that
respect the measurement equivalences, together with epistemic states
``mu(lambda|x)`` that respect the preparation equivalences pointwise in
``lambda``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .scenario import Behaviour, Scenario, ScenarioError, SuccessMetric, check_behaviour
from .solver import ConicProgram, SolverOptions, solve

MAX_RESPONSE_DIM = 24
DEDUP_TOL = 1e-9
VALUE_TOL = 1e-7


class VertexEnumerationError(ScenarioError):
    """Raised when the response polytope is too large to enumerate."""


@dataclass
class BoundResult:
    value: float
    status: str
    argument: Behaviour | None = None
    certificate: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"value": self.value, "status": self.status}
        if self.argument is not None:
            out["behaviour"] = self.argument.p.tolist()
        if self.certificate is not None:
            out["certificate"] = np.asarray(self.certificate).tolist()
        return out


@dataclass
class NoncontextualModel:
    """A finite ontological model: response schemes ``xi[lambda, y, k]`` and
    epistemic states ``mu[lambda, x]``."""

    ontic_states: np.ndarray
    epistemic: np.ndarray

    def behaviour(self) -> np.ndarray:
        return np.einsum("lx,lyk->xyk", self.epistemic, self.ontic_states)


@dataclass
class MembershipReport:
    feasible: bool
    status: str
    distance: float
    model: NoncontextualModel | None = None
    separating_metric: SuccessMetric | None = None
    metric_value: float | None = None
    metric_bound: float | None = None


def _clip_behaviour(p: np.ndarray) -> Behaviour:
    p = np.clip(p, 0.0, 1.0)
    p = p / p.sum(axis=2, keepdims=True)
    return Behaviour(p)


# -- contextual polytope ----------------------------------------------------------


def contextual_program(scenario: Scenario) -> tuple[ConicProgram, int]:
    X, Y, K = scenario.shape
    prog = ConicProgram("max")
    pb = prog.add_block("nonneg", X * Y * K, "p")
    idx = lambda x, y, k: (pb, (x * Y + y) * K + k)  # noqa: E731
    for x in range(X):
        for y in range(Y):
            prog.add_constraint({idx(x, y, k): 1.0 for k in range(K)}, "==", 1.0, f"norm[{x},{y}]")
    for v, alphas in enumerate(scenario.prep_arrays()):
        qb = prog.add_block("nonneg", Y * K, f"q{v}")
        for y in range(Y):
            for k in range(K):
                prog.add_constraint({(qb, y * K + k): 1.0}, "<=", 1.0)
                for j, a in enumerate(alphas):
                    row = {idx(x, y, k): -a[x] for x in range(X) if a[x]}
                    row[(qb, y * K + k)] = 1.0
                    prog.add_constraint(row, "==", 0.0, f"prep[{v},{j},{y},{k}]")
    for w, betas in enumerate(scenario.meas_arrays()):
        eb = prog.add_block("nonneg", X, f"e{w}")
        for x in range(X):
            prog.add_constraint({(eb, x): 1.0}, "<=", 1.0)
            for j, beta in enumerate(betas):
                row = {idx(x, y, k): -beta[y, k] for y in range(Y) for k in range(K) if beta[y, k]}
                row[(eb, x)] = 1.0
                prog.add_constraint(row, "==", 0.0, f"meas[{w},{j},{x}]")
    return prog, pb


def max_contextual(scenario: Scenario, metric: SuccessMetric, options: SolverOptions | None = None) -> BoundResult:
    """Maximize ``metric`` over the contextual polytope."""
    c = metric.to_array(scenario.shape)
    prog, pb = contextual_program(scenario)
    prog.set_objective({(pb, i): v for i, v in enumerate(c.ravel()) if v})
    sol = solve(prog, options)
    if not sol.optimal:
        return BoundResult(sol.value, sol.status, certificate=sol.ray)
    p = sol.primal[pb].reshape(scenario.shape)
    return BoundResult(sol.value, "optimal", _clip_behaviour(p), sol.duals)


# -- response-scheme vertices ---------------------------------------------------------


def _response_system(scenario: Scenario):
    """Equality system ``A xi = b`` (exact rationals) of the response polytope."""
    Y, K = scenario.Y, scenario.K
    N = Y * K
    rows, rhs = [], []
    for y in range(Y):
        r = [Fraction(0)] * N
        for k in range(K):
            r[y * K + k] = Fraction(1)
        rows.append(r)
        rhs.append(Fraction(1))
    for cls in scenario.meas_equivalences:
        for d in cls[1:]:
            rows.append([a - b for a, b in zip(d, cls[0])])
            rhs.append(Fraction(0))
    return rows, rhs


def _rref_independent(rows, rhs):
    """Keep a maximal linearly independent subset of the rows (exactly)."""
    kept, kept_rhs = [], []
    basis: list[tuple[int, list]] = []  # (pivot column, reduced row)
    for r, b in zip(rows, rhs):
        v = list(r) + [b]
        for piv, br in basis:
            if v[piv] != 0:
                f = v[piv] / br[piv]
                v = [a - f * c for a, c in zip(v, br)]
        piv = next((i for i, a in enumerate(v[:-1]) if a != 0), None)
        if piv is None:
            if v[-1] != 0:
                raise ScenarioError("measurement equivalences are contradictory")
            continue
        basis.append((piv, v))
        kept.append(r)
        kept_rhs.append(b)
    return kept, kept_rhs


def _exact_solve(A, b):
    """Solve a square rational system; return None if singular."""
    n = len(A)
    M = [list(A[i]) + [b[i]] for i in range(n)]
    for c in range(n):
        piv = next((r for r in range(c, n) if M[r][c] != 0), None)
        if piv is None:
            return None
        M[c], M[piv] = M[piv], M[c]
        inv = 1 / M[c][c]
        M[c] = [v * inv for v in M[c]]
        for r in range(n):
            if r != c and M[r][c] != 0:
                f = M[r][c]
                M[r] = [a - f * bb for a, bb in zip(M[r], M[c])]
    return [M[i][n] for i in range(n)]


def _supports(Y: int, K: int, r: int):
    """Column subsets of size ``r`` hitting every measurement block."""
    blocks = [[y * K + k for k in range(K)] for y in range(Y)]

    def rec(y, remaining):
        if y == Y:
            if remaining == 0:
                yield ()
            return
        left = Y - y - 1
        for size in range(1, K + 1):
            if size > remaining or remaining - size < left or remaining - size > left * K:
                continue
            for combo in itertools.combinations(blocks[y], size):
                for rest in rec(y + 1, remaining - size):
                    yield combo + rest

    yield from rec(0, r)


def response_vertices(scenario: Scenario, exact: bool = False):
    """All vertices of the response-scheme polytope, as arrays ``(n, Y, K)``.

    The polytope is ``{xi >= 0 : sum_k xi(k|y) = 1, and every measurement
    equivalence holds}``. With no measurement equivalences its vertices are
    the ``K**Y`` deterministic schemes. Otherwise basic feasible solutions
    are enumerated over supports that meet every measurement, and each
    candidate is refined to an exact rational vertex.

    With ``exact=True`` a list of tuples of :class:`Fraction` is returned
    instead.
    """
    Y, K = scenario.Y, scenario.K
    N = Y * K
    if N > MAX_RESPONSE_DIM:
        raise VertexEnumerationError(
            f"response polytope has dimension Y*K = {N} > {MAX_RESPONSE_DIM}; "
            "vertex enumeration refused")
    if scenario.W == 0:
        verts = []
        for ks in itertools.product(range(K), repeat=Y):
            v = [Fraction(0)] * N
            for y, k in enumerate(ks):
                v[y * K + k] = Fraction(1)
            verts.append(tuple(v))
    else:
        rows, rhs = _response_system(scenario)
        rows, rhs = _rref_independent(rows, rhs)
        r = len(rows)
        A = np.array([[float(a) for a in row] for row in rows])
        bf = np.array([float(b) for b in rhs])
        found: set = set()
        verts = []
        for S in _supports(Y, K, r):
            cols = list(S)
            As = A[:, cols]
            try:
                xs = np.linalg.solve(As, bf)
            except np.linalg.LinAlgError:
                continue
            if np.linalg.cond(As) > 1e12 or np.any(xs < -DEDUP_TOL):
                continue
            exact_xs = _exact_solve([[rows[i][c] for c in cols] for i in range(r)], rhs)
            if exact_xs is None or any(v < 0 for v in exact_xs):
                continue
            v = [Fraction(0)] * N
            for c, val in zip(cols, exact_xs):
                v[c] = val
            t = tuple(v)
            if t not in found:
                found.add(t)
                verts.append(t)
        verts.sort(reverse=True)
    if exact:
        return verts
    return np.array([[float(a) for a in v] for v in verts]).reshape(len(verts), Y, K)


# -- noncontextual polytope ---------------------------------------------------------


def _nc_program(scenario: Scenario, xi: np.ndarray):
    X = scenario.X
    L = len(xi)
    prog = ConicProgram("max")
    mb = prog.add_block("nonneg", L * X, "mu")
    idx = lambda lam, x: (mb, lam * X + x)  # noqa: E731
    for x in range(X):
        prog.add_constraint({idx(lam, x): 1.0 for lam in range(L)}, "==", 1.0, f"norm[{x}]")
    for v, alphas in enumerate(scenario.prep_arrays()):
        for j in range(1, len(alphas)):
            diff = alphas[j] - alphas[0]
            for lam in range(L):
                row = {idx(lam, x): diff[x] for x in range(X) if diff[x]}
                prog.add_constraint(row, "==", 0.0, f"prep[{v},{j},{lam}]")
    return prog, mb


def max_noncontextual(scenario: Scenario, metric: SuccessMetric, options: SolverOptions | None = None,
                      vertices: np.ndarray | None = None) -> BoundResult:
    """Maximize ``metric`` over the noncontextual polytope."""
    c = metric.to_array(scenario.shape)
    xi = response_vertices(scenario) if vertices is None else vertices
    X = scenario.X
    prog, mb = _nc_program(scenario, xi)
    gain = np.einsum("xyk,lyk->lx", c, xi)
    prog.set_objective({(mb, lam * X + x): gain[lam, x] for lam, x in np.ndindex(gain.shape) if gain[lam, x]})
    sol = solve(prog, options)
    if not sol.optimal:
        return BoundResult(sol.value, sol.status, certificate=sol.ray)
    mu = np.clip(sol.primal[mb].reshape(len(xi), X), 0.0, None)
    model = NoncontextualModel(xi, mu)
    res = BoundResult(sol.value, "optimal", _clip_behaviour(model.behaviour()), sol.duals)
    res.extra["model"] = model
    return res


def membership_nc(behaviour: Behaviour, scenario: Scenario, metric: SuccessMetric | None = None,
                  tol: float = 1e-8, options: SolverOptions | None = None) -> MembershipReport:
    """Decide whether ``behaviour`` has a noncontextual model.

    Solves ``min t`` subject to ``|sum_lambda mu(lambda|x) xi_lambda(k|y) -
    p(k|x,y)| <= t``. When ``t > tol`` the dual multipliers of the two
    one-sided rows give a metric ``c`` (with ``||c||_1 <= 1``) whose value on
    ``p`` exceeds its noncontextual maximum; that gap is re-verified with
    :func:`max_noncontextual` before being reported.
    """
    check_behaviour(behaviour, scenario)
    X, Y, K = scenario.shape
    xi = response_vertices(scenario)
    L = len(xi)
    prog, mb = _nc_program(scenario, xi)
    prog.sense = "min"
    tb = prog.add_block("nonneg", 1, "t")
    p = behaviour.p
    for x, y, k in np.ndindex(p.shape):
        row = {(mb, lam * X + x): xi[lam, y, k] for lam in range(L) if xi[lam, y, k]}
        up = dict(row)
        up[(tb, 0)] = -1.0
        prog.add_constraint(up, "<=", p[x, y, k], f"up[{x},{y},{k}]")
        lo = {key: -v for key, v in row.items()}
        lo[(tb, 0)] = -1.0
        prog.add_constraint(lo, "<=", -p[x, y, k], f"lo[{x},{y},{k}]")
    prog.set_objective({(tb, 0): 1.0})
    sol = solve(prog, options)
    if not sol.optimal:
        return MembershipReport(False, sol.status, float("nan"))
    t = sol.value
    mu = np.clip(sol.primal[mb].reshape(L, X), 0.0, None)
    report = MembershipReport(t <= tol, "optimal", t, NoncontextualModel(xi, mu))
    if metric is not None:
        report.metric_value = float(np.sum(metric.to_array(p.shape) * p))
        report.metric_bound = max_noncontextual(scenario, metric, options, vertices=xi).value
    if report.feasible:
        return report
    report.model = None
    marg = np.asarray(sol.ineq_duals)
    c = (marg[0::2] - marg[1::2]).reshape(p.shape)
    for cand in (c, -c):
        sep = SuccessMetric.from_array(cand, name="separator", tol=1e-12)
        bound = max_noncontextual(scenario, sep, options, vertices=xi).value
        val = float(np.sum(cand * p))
        if val > bound + tol:
            report.separating_metric = sep
            if metric is None:
                report.metric_value, report.metric_bound = val, bound
            break
    return report
