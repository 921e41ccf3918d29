"""See-saw lower bounds: alternate between optimal states for fixed
measurements and optimal measurements for fixed states, at a fixed Hilbert
space dimension.

Every half-step is a small SDP whose feasible set never changes, so each is
compiled once (:class:`~ctxwb.solver.PreparedProgram`) and only the
objective is swapped between iterations.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from .scenario import Behaviour, Scenario, ScenarioError, SuccessMetric, evaluate_metric
from .solver import ConicProgram, PreparedProgram, SolverError, SolverOptions, solve

logger = logging.getLogger(__name__)

PSD_TOL = 1e-9
TRACE_TOL = 1e-10
COMPLETENESS_TOL = 1e-9
EQUIVALENCE_TOL = 1e-8


class RealizationError(ValueError):
    """A realization violates a state, POVM or equivalence condition."""


class ProjectionError(RuntimeError):
    """No realization satisfying the equivalences is near the input."""


class SeesawError(RuntimeError):
    """Every restart of a see-saw run failed."""


# -- realizations ------------------------------------------------------------------


def _encode(M) -> list:
    M = np.asarray(M, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in M]


def _decode(rows) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows])


@dataclass
class QuantumRealization:
    """States ``rho_x`` and POVMs ``M^y_k`` on a ``dim``-dimensional space."""

    dim: int
    states: list
    povms: list  # povms[y][k]

    def __post_init__(self):
        self.states = [np.asarray(r, dtype=complex) for r in self.states]
        self.povms = [[np.asarray(m, dtype=complex) for m in povm] for povm in self.povms]
        for M in self.states + [m for povm in self.povms for m in povm]:
            if M.shape != (self.dim, self.dim):
                raise RealizationError(f"matrix of shape {M.shape}, expected ({self.dim}, {self.dim})")

    @property
    def shape(self) -> tuple:
        return len(self.states), len(self.povms), len(self.povms[0]) if self.povms else 0

    def probabilities(self) -> np.ndarray:
        X, Y, K = self.shape
        p = np.empty((X, Y, K))
        for x, rho in enumerate(self.states):
            for y, povm in enumerate(self.povms):
                for k, M in enumerate(povm):
                    p[x, y, k] = np.real(np.trace(rho @ M))
        return p

    def violations(self, scenario: Scenario | None = None) -> list[str]:
        """Messages for every invariant that fails its tolerance."""
        out = []
        eye = np.eye(self.dim)
        for x, rho in enumerate(self.states):
            if np.max(np.abs(rho - rho.conj().T)) > PSD_TOL:
                out.append(f"state {x} is not Hermitian")
            if np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() < -PSD_TOL:
                out.append(f"state {x} is not PSD")
            if abs(np.trace(rho).real - 1) > TRACE_TOL:
                out.append(f"state {x} has trace {np.trace(rho).real:.12g}")
        for y, povm in enumerate(self.povms):
            for k, M in enumerate(povm):
                if np.linalg.eigvalsh((M + M.conj().T) / 2).min() < -PSD_TOL:
                    out.append(f"effect ({y},{k}) is not PSD")
            if np.max(np.abs(sum(povm) - eye)) > COMPLETENESS_TOL:
                out.append(f"measurement {y} does not sum to the identity")
        if scenario is not None:
            if self.shape != scenario.shape:
                out.append(f"realization shape {self.shape} does not match scenario {scenario.shape}")
                return out
            for v, alphas in enumerate(scenario.prep_arrays()):
                mix = [sum(a[x] * self.states[x] for x in range(len(a))) for a in alphas]
                if max(np.max(np.abs(m - mix[0])) for m in mix) > EQUIVALENCE_TOL:
                    out.append(f"preparation class {v} is violated")
            for w, betas in enumerate(scenario.meas_arrays()):
                mix = [sum(b[y, k] * self.povms[y][k] for y, k in np.ndindex(b.shape)) for b in betas]
                if max(np.max(np.abs(m - mix[0])) for m in mix) > EQUIVALENCE_TOL:
                    out.append(f"measurement class {w} is violated")
        return out

    def check(self, scenario: Scenario | None = None) -> None:
        bad = self.violations(scenario)
        if bad:
            raise RealizationError("; ".join(bad))

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "states": [_encode(r) for r in self.states],
            "povms": [[_encode(m) for m in povm] for povm in self.povms],
        }

    @classmethod
    def from_dict(cls, data) -> "QuantumRealization":
        return cls(int(data["dim"]), [_decode(r) for r in data["states"]],
                   [[_decode(m) for m in povm] for povm in data["povms"]])

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "QuantumRealization":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def behaviour_of(realization: QuantumRealization, scenario: Scenario | None = None) -> Behaviour:
    """``p(k|x,y) = tr(rho_x M^y_k)``, with rounding noise below 1e-12 clipped.

    Raises
    ------
    RealizationError
        If the realization (or, given ``scenario``, its equivalences) fails
        an invariant.
    """
    realization.check(scenario)
    p = realization.probabilities()
    p = np.where((p < 0) & (p > -1e-12), 0.0, p)
    p = np.where((p > 1) & (p < 1 + 1e-12), 1.0, p)
    return Behaviour(p)


# -- helpers -----------------------------------------------------------------------


def _trace_terms(block: int, H) -> dict:
    """Linear form of ``Re tr(A H)`` over the entry keys of Hermitian block A."""
    H = np.asarray(H, dtype=complex)
    n = H.shape[0]
    terms = {}
    for i in range(n):
        terms[(block, i, i, "re")] = H[i, i].real
        for j in range(i + 1, n):
            terms[(block, i, j, "re")] = 2 * H[i, j].real
            terms[(block, i, j, "im")] = 2 * H[i, j].imag
    return terms


def _frobenius_terms(block: int, R) -> tuple[dict, dict, float]:
    """Linear terms, quadratic weights and constant of ``||A - R||_F^2``."""
    R = np.asarray(R, dtype=complex)
    n = R.shape[0]
    lin, quad, const = {}, {}, 0.0
    for i in range(n):
        for j in range(i, n):
            w = 1.0 if i == j else 2.0
            parts = [("re", R[i, j].real)] + ([("im", R[i, j].imag)] if i != j else [])
            for part, r in parts:
                key = (block, i, j, part)
                quad[key] = w
                lin[key] = -2 * w * r
                const += w * r * r
    return lin, quad, const


def _hermitize(M) -> np.ndarray:
    return (M + M.conj().T) / 2


def _psd_sqrt(M) -> np.ndarray:
    w, v = np.linalg.eigh(_hermitize(M))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def _clean_state(rho) -> np.ndarray:
    rho = _hermitize(rho)
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 0.0, None)
    rho = (v * w) @ v.conj().T
    return rho / np.trace(rho).real


def _clean_povm(povm) -> list:
    effects = []
    for M in povm:
        w, v = np.linalg.eigh(_hermitize(M))
        effects.append((v * np.clip(w, 0.0, None)) @ v.conj().T)
    S = sum(effects)
    w, v = np.linalg.eigh(_hermitize(S))
    inv_sqrt = (v / np.sqrt(w)) @ v.conj().T
    return [_hermitize(inv_sqrt @ M @ inv_sqrt) for M in effects]


def _independent_differences(classes) -> np.ndarray:
    rows = [c[j] - c[0] for c in classes for j in range(1, len(c))]
    if not rows:
        return np.zeros((0, 0))
    D = np.vstack([np.asarray(r, dtype=float).ravel() for r in rows])
    basis = null_space(null_space(D).T) if D.any() else np.zeros((D.shape[1], 0))
    return basis.T


def _state_program(scenario: Scenario, dim: int) -> tuple[ConicProgram, list]:
    prog = ConicProgram("max")
    blocks = [prog.add_block("herm", dim, f"rho{x}") for x in range(scenario.X)]
    for b in blocks:
        prog.add_constraint({(b, i, i, "re"): 1.0 for i in range(dim)}, "==", 1.0, "trace")
    for r, diff in enumerate(_independent_differences(scenario.prep_arrays())):
        for i in range(dim):
            for j in range(i, dim):
                for part in ("re", "im") if i != j else ("re",):
                    prog.add_constraint({(blocks[x], i, j, part): diff[x] for x in range(scenario.X)
                                         if abs(diff[x]) > 1e-14}, "==", 0.0, f"prep[{r}]")
    return prog, blocks


def _povm_program(scenario: Scenario, dim: int) -> tuple[ConicProgram, list]:
    Y, K = scenario.Y, scenario.K
    prog = ConicProgram("max")
    blocks = [[prog.add_block("herm", dim, f"M{y}_{k}") for k in range(K)] for y in range(Y)]
    for y in range(Y):
        for i in range(dim):
            for j in range(i, dim):
                for part in ("re", "im") if i != j else ("re",):
                    rhs = 1.0 if (i == j and part == "re") else 0.0
                    prog.add_constraint({(blocks[y][k], i, j, part): 1.0 for k in range(K)}, "==", rhs,
                                        f"complete[{y}]")
    for r, diff in enumerate(_independent_differences(scenario.meas_arrays())):
        diff = diff.reshape(Y, K)
        for i in range(dim):
            for j in range(i, dim):
                for part in ("re", "im") if i != j else ("re",):
                    prog.add_constraint({(blocks[y][k], i, j, part): diff[y, k] for y in range(Y)
                                         for k in range(K) if abs(diff[y, k]) > 1e-14}, "==", 0.0,
                                        f"meas[{r}]")
    return prog, blocks


def _metric_tensor(metric: SuccessMetric, shape) -> np.ndarray:
    return metric.to_array(shape)


# -- projection --------------------------------------------------------------------


def project_to_equivalences(raw_states, raw_povms, scenario: Scenario,
                            options: SolverOptions | None = None) -> QuantumRealization:
    """Nearest realization (Frobenius norm) obeying the scenario's equivalences.

    States and POVMs are projected separately, each by one small SDP. An
    input that already satisfies every invariant is returned unchanged.

    Raises
    ------
    ProjectionError
        If a projection SDP is infeasible or fails.
    """
    states = [_hermitize(np.asarray(r, dtype=complex)) for r in raw_states]
    povms = [[_hermitize(np.asarray(m, dtype=complex)) for m in povm] for povm in raw_povms]
    dim = states[0].shape[0]
    candidate = QuantumRealization(dim, states, povms)
    if candidate.shape != scenario.shape:
        raise ProjectionError(f"input shape {candidate.shape} does not match scenario {scenario.shape}")
    if not candidate.violations(scenario):
        return candidate

    prog, blocks = _state_program(scenario, dim)
    new_states = _project(prog, blocks, states, options, "states")
    prog, mblocks = _povm_program(scenario, dim)
    flat_blocks = [b for row in mblocks for b in row]
    flat = _project(prog, flat_blocks, [m for povm in povms for m in povm], options, "measurements")
    K = scenario.K
    new_povms = [flat[y * K:(y + 1) * K] for y in range(scenario.Y)]
    out = QuantumRealization(dim, [_clean_state(r) for r in new_states], [_clean_povm(p) for p in new_povms])
    bad = out.violations(scenario)
    if bad:
        raise ProjectionError("projection left violations: " + "; ".join(bad))
    return out


def _project(prog: ConicProgram, blocks: list, targets: list, options, what: str) -> list:
    lin, quad, const = {}, {}, 0.0
    for b, R in zip(blocks, targets):
        l, q, c = _frobenius_terms(b, R)
        lin.update(l)
        quad.update(q)
        const += c
    prog.set_objective(lin, const, "min", quadratic=quad)
    sol = solve(prog, options)
    if not sol.optimal:
        raise ProjectionError(f"projection of the {what} failed with status {sol.status}")
    return [sol.primal[b] for b in blocks]


# -- see-saw -----------------------------------------------------------------------


@dataclass
class SeesawResult:
    value: float
    realization: QuantumRealization
    iterations: int
    restarts: int
    seed: int | None
    best_restart: int
    traces: list = field(default_factory=list)
    failures: int = 0

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "iterations": self.iterations,
            "restarts": self.restarts,
            "seed": self.seed,
            "best_restart": self.best_restart,
            "failures": self.failures,
            "traces": self.traces,
            "realization": self.realization.to_dict(),
        }


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    G = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def random_povm(dim: int, K: int, rng: np.random.Generator) -> list:
    effects = []
    for _ in range(K):
        G = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        effects.append(G @ G.conj().T)
    return _clean_povm(effects)


class _Alternation:
    """Both half-step programs of one scenario, compiled once."""

    def __init__(self, scenario: Scenario, metric: SuccessMetric, dim: int, options: SolverOptions | None):
        self.scenario = scenario
        self.dim = dim
        self.c = _metric_tensor(metric, scenario.shape)
        prog, self.state_blocks = _state_program(scenario, dim)
        self.state_step = PreparedProgram(prog, options)
        prog, self.povm_blocks = _povm_program(scenario, dim)
        self.povm_step = PreparedProgram(prog, options)

    def value(self, states, povms) -> float:
        X, Y, K = self.scenario.shape
        return float(sum(self.c[x, y, k] * np.real(np.trace(states[x] @ povms[y][k]))
                         for x, y, k in zip(*np.nonzero(self.c))))

    def best_states(self, povms) -> list:
        X, Y, K = self.scenario.shape
        terms: dict = {}
        for x in range(X):
            H = sum(self.c[x, y, k] * povms[y][k] for y in range(Y) for k in range(K))
            terms.update(_trace_terms(self.state_blocks[x], H))
        sol = self.state_step.solve(terms)
        if not sol.optimal:
            raise SolverError(f"state step ended with {sol.status}")
        return [_clean_state(sol.primal[b]) for b in self.state_blocks]

    def best_povms(self, states) -> list:
        X, Y, K = self.scenario.shape
        terms: dict = {}
        for y in range(Y):
            for k in range(K):
                H = sum(self.c[x, y, k] * states[x] for x in range(X))
                terms.update(_trace_terms(self.povm_blocks[y][k], H))
        sol = self.povm_step.solve(terms)
        if not sol.optimal:
            raise SolverError(f"measurement step ended with {sol.status}")
        return [_clean_povm([sol.primal[b] for b in row]) for row in self.povm_blocks]


def seesaw(scenario: Scenario, metric: SuccessMetric, dim: int = 2, restarts: int = 20,
           seed: int | None = 0, max_iter: int = 200, threshold: float = 1e-9,
           options: SolverOptions | None = None) -> SeesawResult:
    """Best see-saw value of ``metric`` over ``restarts`` random starts.

    Each restart draws Ginibre states and POVMs from its own sub-seed,
    projects them onto the equivalences, then alternates (states, then
    measurements) until a full round improves the value by less than
    ``threshold`` or ``max_iter`` rounds have run. A half-step that would
    lower the value (solver noise) is rejected, so every trace is
    non-decreasing.

    Raises
    ------
    ValueError
        If ``dim < 2`` or ``restarts < 1``.
    SeesawError
        If every restart fails.
    """
    if dim < 2:
        raise ValueError("dim must be at least 2")
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    metric.check(scenario.shape)
    alt = _Alternation(scenario, metric, dim, options)
    children = np.random.SeedSequence(seed).spawn(restarts)
    best = None
    traces = []
    failures = 0
    for r, child in enumerate(children):
        try:
            value, real, trace = _run(alt, np.random.default_rng(child), max_iter, threshold, options)
        except (SolverError, ProjectionError, ScenarioError, np.linalg.LinAlgError) as exc:
            logger.warning("see-saw restart %d discarded: %s", r, exc)
            failures += 1
            traces.append([])
            continue
        traces.append(trace)
        if best is None or value > best[0]:
            best = (value, real, len(trace) - 1, r)
    if best is None:
        raise SeesawError(f"all {restarts} see-saw restarts failed")
    value, real, iters, r = best
    return SeesawResult(value, real, iters, restarts, seed, r, traces, failures)


def _run(alt: _Alternation, rng, max_iter: int, threshold: float, options):
    sc = alt.scenario
    states = [random_state(alt.dim, rng) for _ in range(sc.X)]
    povms = [random_povm(alt.dim, sc.K, rng) for _ in range(sc.Y)]
    real = project_to_equivalences(states, povms, sc, options)
    states, povms = real.states, real.povms
    value = alt.value(states, povms)
    trace = [value]
    for _ in range(max_iter):
        start = value
        cand = alt.best_states(povms)
        v = alt.value(cand, povms)
        if v > value:
            states, value = cand, v
        cand = alt.best_povms(states)
        v = alt.value(states, cand)
        if v > value:
            povms, value = cand, v
        trace.append(value)
        if value - start < threshold:
            break
    real = QuantumRealization(alt.dim, states, povms)
    real.check(sc)
    return value, real, trace


# -- Naimark dilation ----------------------------------------------------------------


def naimark_check(realization: QuantumRealization, scenario: Scenario) -> QuantumRealization:
    """Projective realization on ``dim * K`` dimensions with the same behaviour.

    Each POVM is dilated by the isometry ``V|psi> = sum_k |k> sqrt(M_k)|psi>``,
    completed to a unitary ``W_y`` whose first ``dim`` columns are ``V``;
    states are embedded as ``rho (+) 0`` and the projectors are
    ``W_y^dagger (|k><k| x I) W_y``. Measurement equivalences would not
    survive this, so scenarios with any are refused.

    Raises
    ------
    ValueError
        If the scenario has measurement equivalences.
    """
    if scenario.W > 0:
        raise ValueError("Naimark dilation only preserves scenarios without measurement equivalences")
    realization.check(scenario)
    d, K = realization.dim, scenario.K
    D = d * K
    states = []
    for rho in realization.states:
        big = np.zeros((D, D), dtype=complex)
        big[:d, :d] = rho
        states.append(big)
    povms = []
    for povm in realization.povms:
        V = np.vstack([_psd_sqrt(M) for M in povm])  # block k is sqrt(M_k); V^dagger V = I
        W = np.hstack([V, null_space(V.conj().T)])
        proj = []
        for k in range(K):
            P = np.zeros((D, D))
            P[k * d:(k + 1) * d, k * d:(k + 1) * d] = np.eye(d)
            proj.append(_hermitize(W.conj().T @ P @ W))
        povms.append(proj)
    return QuantumRealization(D, states, povms)
