"""Moment-matrix SDP relaxations of the quantum behaviour sets.

Each preparation ``x`` gets a moment matrix ``Gamma_x`` indexed by a list of
operator words, ``Gamma_x[u, v] = tr(rho_x u^dagger v)``. Three variants are
built:

``unitary``
    words ``{I, U^y_k, U^y_k^dagger}`` for ``k <= K-2``, where each effect is
    written ``M = I/2 + (U + U^dagger)/4`` (see :func:`unitary_from_effect`).
    Diagonals are fixed to one and POVMs need not be projective.
``projective``
    words of projectors ``Pi^y_k`` (``k <= K-2``) up to a given length, with
    ``Pi^2 = Pi`` and same-measurement orthogonality.
``pure``
    the unitary list extended by the state projectors ``Psi_z``; pure states
    let ``Psi_x`` be absorbed next to ``rho_x`` and tie overlaps between
    different preparations.

Atoms are tuples: ``("U", y, k)``, ``("V", y, k)`` for ``U^dagger``,
``("P", y, k)`` and ``("S", z)``. A word is a tuple of atoms; ``()`` is the
identity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, null_space, qr

from .scenario import Behaviour, Scenario, SuccessMetric, check_behaviour
from .solver import ConicProgram, SolverOptions, complex_rows, solve

VARIANTS = ("unitary", "projective", "pure")
ZERO = None  # reduced form of a vanishing word


# -- effects as unitaries ----------------------------------------------------------


def unitary_from_effect(M, tol: float = 1e-10) -> np.ndarray:
    """Return a unitary ``U`` with ``M = I/2 + (U + U^dagger)/4``.

    In the eigenbasis of ``M`` each eigenvalue ``lam = (1 + cos a)/2`` is
    mapped to the phase ``exp(i a)``.

    Raises
    ------
    ValueError
        If ``M`` is not Hermitian or has eigenvalues outside ``[0, 1]`` by
        more than ``tol``.
    """
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("effect must be a square matrix")
    if np.max(np.abs(M - M.conj().T), initial=0.0) > tol:
        raise ValueError("effect is not Hermitian")
    lam, vecs = eigh((M + M.conj().T) / 2)
    if lam.min() < -tol or lam.max() > 1 + tol:
        raise ValueError(f"effect eigenvalues {lam.min():.3g}..{lam.max():.3g} outside [0, 1]")
    lam = np.clip(lam, 0.0, 1.0)
    alpha = np.arccos(np.clip(2 * lam - 1, -1.0, 1.0))
    return (vecs * np.exp(1j * alpha)) @ vecs.conj().T


# -- words -------------------------------------------------------------------------


def _dag(atom):
    if atom[0] == "U":
        return ("V",) + atom[1:]
    if atom[0] == "V":
        return ("U",) + atom[1:]
    return atom


def adjoint(word):
    return tuple(_dag(a) for a in reversed(word))


def reduce_word(word, variant: str, x: int | None = None):
    """Canonical reduced form of ``word`` under the rules of ``variant``.

    Returns ``None`` when the word vanishes. With ``x`` given (pure variant)
    the reduction is of the moment ``tr(rho_x word)``: ``Psi_x`` is stripped
    from both ends of the word.
    """
    out: list = []
    for a in word:
        if out:
            b = out[-1]
            if a[0] in "UV" and b[0] in "UV" and a[0] != b[0] and a[1:] == b[1:]:
                out.pop()
                continue
            if a[0] in "PS" and a == b:
                continue
            if a[0] == "P" and b[0] == "P" and a[1] == b[1] and a[2] != b[2]:
                return ZERO
        out.append(a)
    if x is not None:
        s = ("S", x)
        while out and out[0] == s:
            out.pop(0)
        while out and out[-1] == s:
            out.pop()
    return tuple(out)


def index_words(scenario: Scenario, variant: str, level: int = 1) -> list:
    """Operator list of a relaxation, in the order used for the matrices."""
    Y, K = scenario.Y, scenario.K
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if level not in (1, 2) or (level == 2 and variant != "projective"):
        raise ValueError("level 2 is available for the projective variant only")
    if variant == "projective":
        atoms = [("P", y, k) for y in range(Y) for k in range(K - 1)]
    else:
        atoms = [(t, y, k) for y in range(Y) for k in range(K - 1) for t in "UV"]
    words = [()] + [(a,) for a in atoms]
    if level == 2:
        seen = set(words)
        for a in atoms:
            for b in atoms:
                w = reduce_word((a, b), variant)
                if w is not ZERO and w not in seen:
                    seen.add(w)
                    words.append(w)
    if variant == "pure":
        words.extend(((("S", z),) for z in range(scenario.X)))
    return words


# -- problem -------------------------------------------------------------------------


@dataclass
class MomentProblem:
    """A built relaxation: constraints without objective, plus the affine map
    from moment entries to probabilities."""

    scenario: Scenario
    variant: str
    level: int
    words: list
    program: ConicProgram
    blocks: list
    # prob[x][y][k] = (constant, {(b, i, j): complex coefficient}) for k <= K-2
    prob: list
    complex: bool
    mixing: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.words)

    def probability_terms(self, x: int, y: int, k: int) -> tuple[float, dict]:
        """Real affine form ``(constant, {entry key: coef})`` of ``p(k|x,y)``."""
        K = self.scenario.K
        if k < K - 1:
            const, expr = self.prob[x][y][k]
            return const, complex_rows(expr)[0]
        const = 1.0
        terms: dict = {}
        for kk in range(K - 1):
            c, expr = self.prob[x][y][kk]
            const -= c
            for key, v in complex_rows(expr)[0].items():
                terms[key] = terms.get(key, 0.0) - v
        return const, terms

    def metric_terms(self, metric: SuccessMetric) -> tuple[float, dict]:
        metric.check(self.scenario.shape)
        const = 0.0
        terms: dict = {}
        for x, y, k, c in metric.terms:
            c = float(c)
            k0, t = self.probability_terms(x, y, k)
            const += c * k0
            for key, v in t.items():
                terms[key] = terms.get(key, 0.0) + c * v
        return const, terms

    def moment_matrices(self, solution) -> list:
        """The matrices ``Gamma_x`` of a solved program."""
        Z = [solution.primal[b] for b in self.blocks]
        if self.mixing is None:
            return Z
        return [sum(self.mixing[x, a] * Z[a] for a in range(len(Z))) for x in range(self.scenario.X)]

    def behaviour_from(self, solution) -> np.ndarray:
        X, Y, K = self.scenario.shape
        p = np.zeros((X, Y, K))
        for x, y, k in np.ndindex(p.shape):
            const, terms = self.probability_terms(x, y, k)
            p[x, y, k] = solution.evaluate(terms, const)
        return p

    def to_dict(self) -> dict:
        def wstr(w):
            if not w:
                return "I"
            return "*".join(f"{a[0]}{'_'.join(map(str, a[1:]))}" for a in w)

        extraction = []
        X, Y, K = self.scenario.shape
        for x in range(X):
            for y in range(Y):
                for k in range(K):
                    const, terms = self.probability_terms(x, y, k)
                    extraction.append({"x": x, "y": y, "k": k, "constant": const,
                                       "terms": [[*key, v] for key, v in sorted(terms.items())]})
        return {
            "variant": self.variant,
            "level": self.level,
            "words": [wstr(w) for w in self.words],
            "blocks": self.blocks,
            "mixing": None if self.mixing is None else self.mixing.tolist(),
            "program": self.program.to_dict(),
            "extraction": extraction,
        }

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)


@dataclass
class RelaxBound:
    value: float
    status: str
    moments: list | None = None
    behaviour: np.ndarray | None = None
    certificate: np.ndarray | None = None
    dual_bound: float | None = None

    def to_dict(self) -> dict:
        out = {"value": self.value, "status": self.status}
        if self.dual_bound is not None:
            out["dual_bound"] = self.dual_bound
        if self.behaviour is not None:
            out["behaviour"] = np.asarray(self.behaviour).tolist()
        return out


def _add(acc: dict, other: dict, scale: complex = 1.0) -> dict:
    for k, v in other.items():
        acc[k] = acc.get(k, 0.0) + scale * v
    return acc


def _class_differences(classes) -> np.ndarray:
    """Rows ``alpha_j - alpha_0`` for every class, stacked."""
    rows = [np.asarray(c[j] - c[0], dtype=float) for c in classes for j in range(1, len(c))]
    if not rows:
        return np.zeros((0, 0))
    return np.vstack(rows)


def _independent(D: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """A basis (as rows) of the row space of ``D``."""
    if D.size == 0:
        return D
    _, R, piv = qr(D.T, mode="economic", pivoting=True)
    rank = int(np.sum(np.abs(np.diag(R)) > tol * max(1.0, abs(R[0, 0]))))
    return D[np.sort(piv[:rank])]


def _mixing_matrix(scenario: Scenario) -> np.ndarray | None:
    """Orthonormal ``N`` (X x A) whose columns span the solutions of the
    preparation equivalences, or ``None`` when there are none."""
    D = _class_differences(scenario.prep_arrays())
    if D.size == 0:
        return None
    return null_space(D)


class _Moments:
    """Moment matrices ``Gamma_x = sum_a N[x, a] Z_a`` over free blocks.

    The preparation equivalences hold identically in this form. A linear
    condition that reads the same on every ``Gamma_x`` is imposed once per
    ``Z_a``, with its right-hand side mapped through ``N^T``.
    """

    def __init__(self, prog: ConicProgram, X: int, m: int, use_complex: bool, N: np.ndarray | None,
                 drop: list | None = None):
        self.prog = prog
        self.X = X
        if drop is not None and N is None:
            N = np.eye(X)
        if N is None:
            kind = "herm" if use_complex else "sym"
            self.blocks = [prog.add_block(kind, m, f"Gamma{x}") for x in range(X)]
            self.N = None
        else:
            kind = "hermfree" if use_complex else "symfree"
            self.blocks = [prog.add_block(kind, m, f"Z{a}") for a in range(N.shape[1])]
            N = np.where(np.abs(N) < 1e-14, 0.0, N)
            self.N = N
            for x in range(X):
                keep = None if drop is None else [i for i in range(m) if i != drop[x]]
                prog.add_lmi([(b, N[x, a]) for a, b in enumerate(self.blocks)], f"Gamma{x}", keep)

    def gamma(self, x: int, i: int, j: int, coef: complex = 1.0) -> dict:
        if self.N is None:
            return {(self.blocks[x], i, j): complex(coef)}
        return {(b, i, j): coef * self.N[x, a] for a, b in enumerate(self.blocks) if self.N[x, a]}

    def expr(self, x: int, cells: dict) -> dict:
        """``{(i, j): coef}`` on ``Gamma_x`` as an expression over blocks."""
        acc: dict = {}
        for (i, j), c in cells.items():
            _add(acc, self.gamma(x, i, j, c))
        return acc

    def uniform(self, cells: dict, rhs: complex = 0.0, label: str = "", real_only: bool = False) -> None:
        """Impose ``sum c * Gamma_x[i, j] == rhs`` for every ``x``."""
        if self.N is None:
            targets = [(b, rhs) for b in self.blocks]
        else:
            coef = self.N.sum(axis=0) * rhs
            targets = [(b, coef[a]) for a, b in enumerate(self.blocks)]
        for b, r in targets:
            expr = {(b, i, j): c for (i, j), c in cells.items()}
            if real_only:
                self.prog.add_constraint(complex_rows(expr)[0], "==", complex(r).real, label)
            else:
                self.prog.add_complex_constraint(expr, r, label)


def _build(scenario: Scenario, variant: str, level: int, *, use_complex: bool,
           literal_identification: bool = False, last_outcome_nonneg: bool = True,
           overlap_symmetry: bool = True) -> MomentProblem:
    X, Y, K = scenario.shape
    words = index_words(scenario, variant, level)
    m = len(words)
    pos = {w: i for i, w in enumerate(words)}
    prog = ConicProgram("max")
    # for pure states the row of Psi_x in Gamma_x copies the identity row;
    # leaving it out of the PSD constraint keeps a strictly feasible point
    drop = [pos[(("S", x),)] for x in range(X)] if variant == "pure" else None
    mom = _Moments(prog, X, m, use_complex, _mixing_matrix(scenario), drop)

    # entries carrying the same reduced word are identified in every matrix
    def groups_of(x=None) -> dict:
        groups: dict = {}
        for i, u in enumerate(words):
            for j, v in enumerate(words):
                w = reduce_word(adjoint(u) + v, variant, x)
                if w is not ZERO and not use_complex:
                    w = min(w, adjoint(w))
                    if (j, i) in groups.get(w, ()):
                        continue
                groups.setdefault(w, []).append((i, j))
        return groups

    base = groups_of()
    rep = {}
    for w, cells in base.items():
        for c in cells:
            rep[c] = (cells[0], w)
        if w is ZERO:
            for i, j in cells:
                mom.uniform({(i, j): 1.0}, 0.0, "zero")
            continue
        if w == ():
            for i, j in cells:
                mom.uniform({(i, j): 1.0}, 1.0, "one")
            continue
        i0, j0 = cells[0]
        for i, j in cells[1:]:
            if (i, j) == (j0, i0):
                # self-adjoint word: the moment is real
                mom.uniform({(i0, j0): -0.5j, (j0, i0): 0.5j}, 0.0, "real", real_only=True)
                continue
            mom.uniform({(i, j): 1.0, (i0, j0): -1.0}, 0.0, "ident")

    if variant == "pure":
        # Psi_x is absorbed next to rho_x: further identifications in Gamma_x
        for x in range(X):
            for w, cells in groups_of(x).items():
                heads = sorted({rep[c] for c in cells})
                if w == ():
                    for h, hw in heads:
                        if hw != ():
                            prog.add_complex_constraint(mom.gamma(x, *h), 1.0, f"pure[{x}]")
                    continue
                heads = [h for h, _ in heads]
                for h in heads[1:]:
                    prog.add_complex_constraint(mom.expr(x, {h: 1.0, heads[0]: -1.0}), 0.0, f"pure[{x}]")

    if literal_identification and variant in ("unitary", "pure"):
        # G(j, U) == G(U^dagger, j) and G(U, j) == G(j, U^dagger) for every row j
        for j in range(m):
            for y in range(Y):
                for k in range(K - 1):
                    iu, iv = pos[(("U", y, k),)], pos[(("V", y, k),)]
                    mom.uniform({(j, iu): 1.0, (iv, j): -1.0}, 0.0, "lit")
                    mom.uniform({(iu, j): 1.0, (j, iv): -1.0}, 0.0, "lit")

    # tr(rho O^dagger M^y_k) as cells of Gamma
    def effect(y, k, o) -> dict:
        if k == K - 1:
            acc = {(o, 0): 1.0}
            for kk in range(K - 1):
                _add(acc, effect(y, kk, o), -1.0)
            return acc
        if variant == "projective":
            return {(o, pos[(("P", y, k),)]): 1.0}
        iu, iv = pos[(("U", y, k),)], pos[(("V", y, k),)]
        return {(o, 0): 0.5, (o, iu): 0.25, (o, iv): 0.25}

    # measurement equivalences against every operator of the list; the
    # column orientation tr(rho M O) is the conjugate of the row one for
    # O^dagger, so with Hermitian matrices the row orientation suffices
    meas = [d.reshape(Y, K) for d in
            _independent(_class_differences([b.reshape(len(b), -1) for b in scenario.meas_arrays()]))]
    for r, diff in enumerate(meas):
        for o in range(m):
            acc: dict = {}
            for y in range(Y):
                for k in range(K):
                    if diff[y, k]:
                        _add(acc, effect(y, k, o), diff[y, k])
            acc = {c: v for c, v in acc.items() if abs(v) > 1e-12}
            if acc:
                mom.uniform(acc, 0.0, f"meas[{r}]")

    if variant == "pure" and overlap_symmetry:
        # tr(rho_x Psi_z O) = conj tr(rho_z Psi_x O^dagger), and
        # conj(G[a, c]) = G[c, a]
        for x in range(X):
            for z in range(x + 1, X):
                isz, isx = pos[(("S", z),)], pos[(("S", x),)]
                for o, word in enumerate(words):
                    od = pos.get(adjoint(word))
                    if od is None:
                        continue
                    expr = _add(mom.gamma(x, isz, o), mom.gamma(z, od, isx), -1.0)
                    prog.add_complex_constraint(expr, 0.0, f"overlap[{x},{z}]")

    prob = []
    for x in range(X):
        px = []
        for y in range(Y):
            py = []
            for k in range(K - 1):
                if variant == "projective":
                    py.append((0.0, mom.gamma(x, 0, pos[(("P", y, k),)])))
                else:
                    iu, iv = pos[(("U", y, k),)], pos[(("V", y, k),)]
                    py.append((0.5, mom.expr(x, {(0, iu): 0.25, (0, iv): 0.25})))
            px.append(py)
        prob.append(px)

    problem = MomentProblem(scenario, variant, level, words, prog, mom.blocks, prob, use_complex,
                            mixing=mom.N)
    if last_outcome_nonneg and K > 2 and variant != "projective":
        for x in range(X):
            for y in range(Y):
                const, terms = problem.probability_terms(x, y, K - 1)
                prog.add_constraint(terms, ">=", -const, f"lastpos[{x},{y}]")
    problem.meta.update(literal_identification=literal_identification,
                        last_outcome_nonneg=last_outcome_nonneg)
    return problem


IDENTIFICATIONS = ("words", "tutorial")


def build_unitary_relaxation(scenario: Scenario, *, identification: str = "words",
                             last_outcome_nonneg: bool = True,
                             complex_moments: bool = False) -> MomentProblem:
    """First-level relaxation in the unitary parametrisation of effects.

    Parameters
    ----------
    identification : {"words", "tutorial"}
        ``"words"`` identifies entries only through ``U U^dagger = I``, which
        is valid for every POVM. ``"tutorial"`` additionally imposes
        ``G[O, U] = G[U^dagger, O]`` and ``G[U, O] = G[O, U^dagger]`` for all
        ``O``; these force ``tr(rho U^2) = 1`` and so only hold when the
        effects act projectively on the state. Kept to reproduce reference
        tutorial numbers.
    last_outcome_nonneg : bool
        Require ``p(K-1|x,y) >= 0`` for ``K > 2`` (valid, and not implied by
        positivity of the moment matrices).
    complex_moments : bool
        Use Hermitian instead of real symmetric moment matrices. All
        constraints have real coefficients, so the real part of a feasible
        Hermitian family is feasible with the same value; both choices give
        the same bound and the real one is cheaper.
    """
    if identification not in IDENTIFICATIONS:
        raise ValueError(f"identification must be one of {IDENTIFICATIONS}")
    return _build(scenario, "unitary", 1, use_complex=complex_moments,
                  literal_identification=identification == "tutorial",
                  last_outcome_nonneg=last_outcome_nonneg)


def build_projective_relaxation(scenario: Scenario, level: int = 1) -> MomentProblem:
    """Relaxation for projective measurements, at word length 1 or 2.

    Moment matrices are real symmetric, for the same reason as in
    :func:`build_unitary_relaxation`.
    """
    return _build(scenario, "projective", level, use_complex=False)


def build_pure_state_relaxation(scenario: Scenario, *, overlap_symmetry: bool = True,
                                last_outcome_nonneg: bool = True,
                                complex_moments: bool = False) -> MomentProblem:
    """Unitary relaxation strengthened for pure preparations.

    Adds the projectors ``Psi_z`` to the operator list. ``Psi_z`` is
    idempotent, ``Psi_x`` is absorbed next to ``rho_x``, and the overlaps
    ``tr(rho_x Psi_z O) = conj tr(rho_z Psi_x O^dagger)`` tie different
    preparations together.
    """
    return _build(scenario, "pure", 1, use_complex=complex_moments, overlap_symmetry=overlap_symmetry,
                  last_outcome_nonneg=last_outcome_nonneg)


def build_relaxation(scenario: Scenario, variant: str, level: int = 1, **options) -> MomentProblem:
    """Dispatch on ``variant``; keyword options go to the specific builder."""
    if variant == "unitary":
        return build_unitary_relaxation(scenario, **options)
    if variant == "projective":
        return build_projective_relaxation(scenario, level, **options)
    if variant == "pure":
        return build_pure_state_relaxation(scenario, **options)
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def upper_bound(problem: MomentProblem, metric: SuccessMetric,
                options: SolverOptions | None = None) -> RelaxBound:
    """Maximize ``metric`` over the relaxation."""
    const, terms = problem.metric_terms(metric)
    prog = problem.program.copy()
    prog.set_objective(terms, const, "max")
    sol = solve(prog, options)
    if not sol.optimal:
        return RelaxBound(sol.value, sol.status, certificate=sol.ray)
    moments = problem.moment_matrices(sol)
    return RelaxBound(sol.value, "optimal", moments, problem.behaviour_from(sol), sol.duals, sol.dual_bound)


@dataclass
class QuantumMembership:
    feasible: bool
    status: str
    distance: float
    moments: list | None = None


def membership_q(behaviour: Behaviour, scenario: Scenario, variant: str = "unitary", level: int = 1,
                 tol: float = 1e-6, options: SolverOptions | None = None,
                 problem: MomentProblem | None = None) -> QuantumMembership:
    """Decide whether some moment matrices of the relaxation reproduce
    ``behaviour``.

    Minimizes the largest deviation ``t`` between extracted and given
    probabilities; the behaviour is declared outside the relaxation (and
    hence outside the corresponding quantum set) when ``t > tol``.
    """
    check_behaviour(behaviour, scenario)
    problem = problem or build_relaxation(scenario, variant, level)
    prog = problem.program.copy()
    tb = prog.add_block("nonneg", 1, "t")
    X, Y, K = scenario.shape
    for x in range(X):
        for y in range(Y):
            for k in range(K - 1):
                const, terms = problem.probability_terms(x, y, k)
                target = behaviour.p[x, y, k] - const
                up = dict(terms)
                up[(tb, 0, 0, "re")] = -1.0
                prog.add_constraint(up, "<=", target)
                lo = {key: -v for key, v in terms.items()}
                lo[(tb, 0, 0, "re")] = -1.0
                prog.add_constraint(lo, "<=", -target)
    prog.set_objective({(tb, 0, 0, "re"): 1.0}, 0.0, "min")
    sol = solve(prog, options)
    if not sol.optimal:
        return QuantumMembership(False, sol.status, float("nan"))
    t = max(sol.value, 0.0)
    moments = problem.moment_matrices(sol)
    return QuantumMembership(t <= tol, "optimal", t, moments if t <= tol else None)
