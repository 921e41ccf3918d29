"""Conic programs over scalar and PSD-matrix blocks, and their solution.

A :class:`ConicProgram` declares variable blocks and sparse linear
constraints over block entries. Four block kinds exist:

``free``
    a vector of unconstrained reals,
``nonneg``
    a vector of nonnegative reals,
``sym``
    a real symmetric PSD matrix,
``herm``
    a complex Hermitian PSD matrix, realized through the real embedding
    ``A + iB -> [[A, -B], [B, A]]`` (see :func:`embed_hermitian`).

An entry is addressed by a key ``(block, i, j, part)`` with ``part`` either
``"re"`` or ``"im"``; vector blocks use ``j = 0``. Symmetric references are
canonicalized to the upper triangle on insertion.

Two backends sit behind :func:`solve`: Clarabel for anything with a PSD
block, HiGHS (through :func:`scipy.optimize.linprog`) for pure LPs. The
environment variable ``CTXWB_SOLVER`` overrides the default routing.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse
from scipy.linalg import lstsq, qr

logger = logging.getLogger(__name__)

BLOCK_KINDS = ("free", "nonneg", "sym", "herm", "symfree", "hermfree")
MATRIX_KINDS = ("sym", "herm", "symfree", "hermfree")
PSD_KINDS = ("sym", "herm")
SENSES = ("==", "<=", ">=")
SQRT2 = np.sqrt(2.0)

Key = tuple  # (block, i, j, part)


class SolverError(RuntimeError):
    """Raised when no backend can be used for a program."""


class SizeLimitError(SolverError):
    """Raised when a program exceeds the configured PSD-dimension cap."""


@dataclass(frozen=True)
class SolverOptions:
    backend: str | None = None
    tol_feas: float = 1e-9
    tol_gap: float = 1e-8
    max_iter: int = 400
    max_psd_dim: int = 4000
    verbose: bool = False

    def resolved_backend(self) -> str:
        name = self.backend or os.environ.get("CTXWB_SOLVER", "auto")
        name = name.lower()
        if name not in ("auto", "clarabel", "highs"):
            raise SolverError(f"unknown solver backend {name!r}")
        return name


DEFAULT_OPTIONS = SolverOptions()


@dataclass(frozen=True)
class Block:
    name: str
    kind: str
    size: int


@dataclass(frozen=True)
class LMI:
    """``sum coef * block >= 0`` over matrix blocks of one size."""

    parts: tuple
    name: str = ""
    indices: tuple | None = None  # principal submatrix, all rows if None


@dataclass
class Constraint:
    terms: dict
    sense: str
    rhs: float
    label: str = ""


class ConicProgram:
    """Linear objective over declared blocks, subject to sparse linear rows.

    Block kinds ``sym`` and ``herm`` are PSD matrix variables,
    ``symfree``/``hermfree`` are unconstrained matrices that can enter
    linear matrix inequalities through :meth:`add_lmi`.

    Parameters
    ----------
    sense : {"max", "min"}
        Direction of optimization.
    """

    def __init__(self, sense: str = "max"):
        if sense not in ("max", "min"):
            raise ValueError(f"sense must be 'max' or 'min', got {sense!r}")
        self.sense = sense
        self.blocks: list[Block] = []
        self.constraints: list[Constraint] = []
        self.lmis: list[LMI] = []
        self.objective: dict = {}
        self.quadratic: dict = {}
        self.constant = 0.0

    # -- declaration -------------------------------------------------------

    def add_block(self, kind: str, size: int, name: str = "") -> int:
        if kind not in BLOCK_KINDS:
            raise ValueError(f"unknown block kind {kind!r}")
        if size < 1:
            raise ValueError("block size must be positive")
        self.blocks.append(Block(name or f"b{len(self.blocks)}", kind, int(size)))
        return len(self.blocks) - 1

    def add_lmi(self, parts, name: str = "", indices=None) -> int:
        """Require ``sum coef * block`` to be PSD; ``parts`` is a sequence of
        ``(block, coef)`` over matrix blocks of equal size. With ``indices``
        only that principal submatrix is constrained."""
        parts = tuple((int(b), float(c)) for b, c in parts if c != 0.0)
        if not parts:
            raise ValueError("an LMI needs at least one block")
        sizes = set()
        for b, _ in parts:
            blk = self.blocks[b]
            if blk.kind not in MATRIX_KINDS:
                raise ValueError(f"block {blk.name} is not a matrix block")
            sizes.add(blk.size)
        if len(sizes) != 1:
            raise ValueError("LMI blocks must share one size")
        n = sizes.pop()
        if indices is not None:
            indices = tuple(sorted(int(i) for i in indices))
            if not indices or len(set(indices)) != len(indices) or not all(0 <= i < n for i in indices):
                raise ValueError("LMI indices must be distinct rows of the blocks")
        self.lmis.append(LMI(parts, name or f"lmi{len(self.lmis)}", indices))
        return len(self.lmis) - 1

    def lmi_kind(self, lmi: LMI) -> str:
        return "herm" if any(self.blocks[b].kind in ("herm", "hermfree") for b, _ in lmi.parts) else "sym"

    def _canon(self, key, coef):
        """Return the canonical (key, coef) for an entry reference, or None if
        the entry is identically zero."""
        b, i, j, part = key
        if not 0 <= b < len(self.blocks):
            raise IndexError(f"block {b} not declared")
        blk = self.blocks[b]
        if part not in ("re", "im"):
            raise ValueError(f"part must be 're' or 'im', got {part!r}")
        if blk.kind in ("free", "nonneg"):
            if j != 0 or not 0 <= i < blk.size:
                raise IndexError(f"entry ({i},{j}) out of range for vector block {blk.name}")
            if part == "im":
                return None
            return (b, i, 0, "re"), coef
        if not (0 <= i < blk.size and 0 <= j < blk.size):
            raise IndexError(f"entry ({i},{j}) out of range for block {blk.name}")
        if part == "re" or blk.kind in ("sym", "symfree"):
            if part == "im":
                return None
            return (b, min(i, j), max(i, j), "re"), coef
        # imaginary part of a Hermitian entry is antisymmetric
        if i == j:
            return None
        if i < j:
            return (b, i, j, "im"), coef
        return (b, j, i, "im"), -coef

    def _collect(self, terms) -> dict:
        items = terms.items() if isinstance(terms, Mapping) else terms
        out: dict = {}
        for key, coef in items:
            if len(key) == 3:
                key = (*key, "re")
            elif len(key) == 2:
                key = (key[0], key[1], 0, "re")
            c = self._canon(tuple(key), float(coef))
            if c is None:
                continue
            k, v = c
            out[k] = out.get(k, 0.0) + v
        return {k: v for k, v in out.items() if v != 0.0}

    def add_constraint(self, terms, sense: str = "==", rhs: float = 0.0, label: str = ""):
        if sense not in SENSES:
            raise ValueError(f"sense must be one of {SENSES}")
        row = self._collect(terms)
        if not row:
            if not _trivially_holds(sense, float(rhs)):
                raise ValueError(f"constraint {label!r} has no terms and cannot hold")
            return
        self.constraints.append(Constraint(row, sense, float(rhs), label))

    def add_complex_constraint(self, expr: Mapping, rhs: complex = 0.0, label: str = ""):
        """Impose ``sum c * Gamma[b][i, j] == rhs`` with complex coefficients.

        ``expr`` maps ``(b, i, j)`` to a complex coefficient. Real and
        imaginary parts become two real rows; a row that vanishes
        identically is dropped.
        """
        re_row, im_row = complex_rows(expr)
        rhs = complex(rhs)
        self.add_constraint(re_row, "==", rhs.real, label + ":re")
        self.add_constraint(im_row, "==", rhs.imag, label + ":im")

    def set_objective(self, terms, constant: float = 0.0, sense: str | None = None,
                      quadratic=None):
        """Set the linear objective; ``quadratic`` maps entry keys to
        nonnegative weights ``w`` adding ``w * x**2`` (minimization only)."""
        if sense is not None:
            if sense not in ("max", "min"):
                raise ValueError("sense must be 'max' or 'min'")
            self.sense = sense
        self.objective = self._collect(terms)
        self.constant = float(constant)
        self.quadratic = self._collect(quadratic or {})
        if self.quadratic and (self.sense != "min" or min(self.quadratic.values()) < 0):
            raise ValueError("quadratic terms need sense 'min' and nonnegative weights")

    def copy(self) -> "ConicProgram":
        new = ConicProgram(self.sense)
        new.blocks = list(self.blocks)
        new.constraints = [Constraint(dict(c.terms), c.sense, c.rhs, c.label) for c in self.constraints]
        new.lmis = list(self.lmis)
        new.objective = dict(self.objective)
        new.quadratic = dict(self.quadratic)
        new.constant = self.constant
        return new

    @property
    def psd_dimension(self) -> int:
        dims = [b.size * (2 if b.kind == "herm" else 1) for b in self.blocks if b.kind in PSD_KINDS]
        for lmi in self.lmis:
            n = len(lmi.indices) if lmi.indices is not None else self.blocks[lmi.parts[0][0]].size
            dims.append(n * (2 if self.lmi_kind(lmi) == "herm" else 1))
        return sum(dims)

    @property
    def is_lp(self) -> bool:
        return all(b.kind in ("free", "nonneg") for b in self.blocks) and not self.lmis and not self.quadratic

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        def enc(terms):
            return [[b, i, j, p, v] for (b, i, j, p), v in sorted(terms.items())]

        return {
            "sense": self.sense,
            "blocks": [{"name": b.name, "kind": b.kind, "size": b.size} for b in self.blocks],
            "constraints": [
                {"terms": enc(c.terms), "sense": c.sense, "rhs": c.rhs, "label": c.label}
                for c in self.constraints
            ],
            "lmis": [{"parts": [list(p) for p in lmi.parts], "name": lmi.name,
                      "indices": None if lmi.indices is None else list(lmi.indices)} for lmi in self.lmis],
            "objective": {"terms": enc(self.objective), "constant": self.constant,
                          "quadratic": enc(self.quadratic)},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ConicProgram":
        prog = cls(data.get("sense", "max"))
        for b in data["blocks"]:
            prog.add_block(b["kind"], b["size"], b.get("name", ""))

        def dec(rows):
            return [((int(b), int(i), int(j), p), v) for b, i, j, p, v in rows]

        for c in data.get("constraints", []):
            prog.add_constraint(dec(c["terms"]), c["sense"], c["rhs"], c.get("label", ""))
        for lmi in data.get("lmis", []):
            prog.add_lmi([(b, c) for b, c in lmi["parts"]], lmi.get("name", ""), lmi.get("indices"))
        obj = data.get("objective", {})
        prog.set_objective(dec(obj.get("terms", [])), obj.get("constant", 0.0),
                           quadratic=dec(obj.get("quadratic", [])))
        return prog

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "ConicProgram":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _trivially_holds(sense: str, rhs: float) -> bool:
    if sense == "==":
        return abs(rhs) <= 1e-12
    if sense == "<=":
        return rhs >= -1e-12
    return rhs <= 1e-12


def complex_rows(expr: Mapping) -> tuple[dict, dict]:
    """Split ``sum c * Gamma[b][i, j]`` into real-part and imaginary-part rows
    over ``re``/``im`` entry keys."""
    re_row: dict = {}
    im_row: dict = {}
    for (b, i, j), c in expr.items():
        c = complex(c)
        for row, key, v in (
            (re_row, (b, i, j, "re"), c.real),
            (re_row, (b, i, j, "im"), -c.imag),
            (im_row, (b, i, j, "re"), c.imag),
            (im_row, (b, i, j, "im"), c.real),
        ):
            if v != 0.0:
                row[key] = row.get(key, 0.0) + v
    return re_row, im_row


# -- Hermitian embedding ------------------------------------------------------


@dataclass(frozen=True)
class HermitianEmbedding:
    """The map ``H = A + iB  ->  [[A, -B], [B, A]]`` for ``n x n`` blocks.

    The embedded matrix is PSD iff ``H`` is, and for Hermitian ``C``,
    ``Re tr(C H) = tr(embed(C) embed(H)) / 2``.
    """

    n: int

    @property
    def size(self) -> int:
        return 2 * self.n

    def embed(self, H) -> np.ndarray:
        H = np.asarray(H)
        A, B = H.real, H.imag
        return np.block([[A, -B], [B, A]])

    def extract(self, E) -> np.ndarray:
        n = self.n
        E = np.asarray(E, dtype=float)
        A = (E[:n, :n] + E[n:, n:]) / 2
        B = (E[n:, :n] - E[:n, n:]) / 2
        return A + 1j * B

    def coupling_constraints(self, block: int) -> list[Constraint]:
        """Equalities forcing a real ``2n x 2n`` symmetric block to have the
        ``[[A, -B], [B, A]]`` structure: equal diagonal copies of ``A`` and an
        antisymmetric ``B``."""
        n = self.n
        rows = []
        for i in range(n):
            for j in range(i, n):
                rows.append(Constraint({(block, i, j, "re"): 1.0, (block, n + i, n + j, "re"): -1.0},
                                       "==", 0.0, f"A[{i},{j}]"))
        for i in range(n):
            for j in range(i, n):
                # B[i,j] sits at (n+i, j); -B[i,j] at (i, n+j)
                if i == j:
                    rows.append(Constraint({(block, i, n + i, "re"): 1.0}, "==", 0.0, f"B[{i},{i}]"))
                else:
                    rows.append(Constraint({(block, j, n + i, "re"): 1.0, (block, i, n + j, "re"): 1.0},
                                           "==", 0.0, f"B[{i},{j}]"))
        return rows


def embed_hermitian(n: int) -> HermitianEmbedding:
    if n < 1:
        raise ValueError("n must be positive")
    return HermitianEmbedding(int(n))


# -- solutions ----------------------------------------------------------------


@dataclass
class Solution:
    status: str
    value: float
    primal: list = field(default_factory=list)
    duals: np.ndarray | None = None
    dual_bound: float | None = None
    residuals: dict = field(default_factory=dict)
    ray: np.ndarray | None = None
    backend: str = ""
    solve_time: float = 0.0
    # multipliers of the inequality rows, in declaration order, for the
    # problem written as a minimization (nonnegative at an optimum)
    ineq_duals: np.ndarray | None = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def entry(self, key) -> float:
        b, i, j, part = key
        val = self.primal[b]
        if np.ndim(val) == 1:
            return float(val[i])
        z = val[i, j]
        return float(z.real if part == "re" else z.imag)

    def evaluate(self, terms: Mapping, constant: float = 0.0) -> float:
        return constant + sum(c * self.entry(k) for k, c in terms.items())


# -- compilation to standard form ----------------------------------------------


class _Compiled:
    """Standard form ``min q'x  s.t.  A x + s = b,  s in K`` for Clarabel."""

    def __init__(self, prog: ConicProgram):
        self.prog = prog
        index: dict = {}
        offsets = []
        nvar = 0
        for b, blk in enumerate(prog.blocks):
            offsets.append(nvar)
            if blk.kind in ("free", "nonneg"):
                for i in range(blk.size):
                    index[(b, i, 0, "re")] = nvar
                    nvar += 1
            else:
                for j in range(blk.size):
                    for i in range(j + 1):
                        index[(b, i, j, "re")] = nvar
                        nvar += 1
                if blk.kind in ("herm", "hermfree"):
                    for j in range(blk.size):
                        for i in range(j):
                            index[(b, i, j, "im")] = nvar
                            nvar += 1
        self.index = index
        self.nvar = nvar

        rows, cols, vals, rhs = [], [], [], []
        nrow = 0

        def put(terms, scale=1.0):
            for k, v in terms.items():
                rows.append(nrow)
                cols.append(index[k])
                vals.append(scale * v)

        eqs = [c for c in prog.constraints if c.sense == "=="]
        ineqs = [c for c in prog.constraints if c.sense != "=="]
        eqs = _independent_rows(_dedupe_rows(eqs), index)
        self.eq_constraints = eqs
        self.ineq_constraints = ineqs
        for c in eqs:
            put(c.terms)
            rhs.append(c.rhs)
            nrow += 1
        n_zero = nrow
        for c in ineqs:
            s = 1.0 if c.sense == "<=" else -1.0
            put(c.terms, s)
            rhs.append(s * c.rhs)
            nrow += 1
        for b, blk in enumerate(prog.blocks):
            if blk.kind == "nonneg":
                for i in range(blk.size):
                    rows.append(nrow)
                    cols.append(index[(b, i, 0, "re")])
                    vals.append(-1.0)
                    rhs.append(0.0)
                    nrow += 1
        n_nonneg = nrow - n_zero
        cones = []
        if n_zero:
            cones.append(("zero", n_zero))
        if n_nonneg:
            cones.append(("nonneg", n_nonneg))
        psd = [(((b, 1.0),), blk.kind, blk.size, None) for b, blk in enumerate(prog.blocks)
               if blk.kind in PSD_KINDS]
        psd += [(lmi.parts, prog.lmi_kind(lmi), prog.blocks[lmi.parts[0][0]].size, lmi.indices)
                for lmi in prog.lmis]
        for parts, kind, size, sub in psd:
            n = size if sub is None else len(sub)
            N = n if kind == "sym" else 2 * n
            for c in range(N):
                for r in range(c + 1):
                    scale = 1.0 if r == c else SQRT2
                    for b, coef in parts:
                        bkind = "sym" if prog.blocks[b].kind in ("sym", "symfree") else "herm"
                        if bkind == "sym" and kind == "herm":
                            # a real symmetric part sits on both diagonal quadrants
                            entries = _embedded_entry(b, "herm", n, r, c)
                            entries = [(k, v) for k, v in entries if k[3] == "re"]
                        else:
                            entries = _embedded_entry(b, bkind, n, r, c)
                        for k, v in entries:
                            if sub is not None:
                                k = _lift_key(k, sub)
                            rows.append(nrow)
                            cols.append(index[k])
                            vals.append(-scale * coef * v)
                    rhs.append(0.0)
                    nrow += 1
            cones.append(("psd", N))
        self.A = sparse.csc_matrix((vals, (rows, cols)), shape=(nrow, nvar))
        self.b = np.asarray(rhs, dtype=float)
        self.cones = cones
        self.n_zero = n_zero
        self.n_ineq = len(ineqs)

        self.set_objective(prog.objective, prog.quadratic)

    def set_objective(self, objective: Mapping, quadratic: Mapping) -> None:
        q = np.zeros(self.nvar)
        for k, v in objective.items():
            q[self.index[k]] += v
        self.c = q  # objective of the max/min problem
        self.q = -q if self.prog.sense == "max" else q
        self.pdiag = np.zeros(self.nvar)
        for k, w in quadratic.items():
            self.pdiag[self.index[k]] += 2.0 * w

    def objective_value(self, x) -> float:
        return float(self.c @ x + 0.5 * self.pdiag @ (x * x)) + self.prog.constant

    def unpack(self, x) -> list:
        out = []
        for b, blk in enumerate(self.prog.blocks):
            if blk.kind in ("free", "nonneg"):
                out.append(np.array([x[self.index[(b, i, 0, "re")]] for i in range(blk.size)]))
                continue
            n = blk.size
            cplx = blk.kind in ("herm", "hermfree")
            M = np.zeros((n, n), dtype=complex if cplx else float)
            for j in range(n):
                for i in range(j + 1):
                    v = x[self.index[(b, i, j, "re")]]
                    M[i, j] += v
                    if i != j:
                        M[j, i] += v
            if cplx:
                for j in range(n):
                    for i in range(j):
                        v = x[self.index[(b, i, j, "im")]]
                        M[i, j] += 1j * v
                        M[j, i] -= 1j * v
            out.append(M)
        return out


def _lift_key(key, sub):
    """Map an entry key of a principal submatrix (sorted ``sub``) to the
    full block; the order of rows is preserved so no sign changes."""
    b, i, j, part = key
    return (b, sub[i], sub[j], part)


def _embedded_entry(b, kind, n, r, c):
    """Linear form (over entry keys) of entry (r, c), r <= c, of the real
    matrix that must be PSD for block ``b``."""
    if kind == "sym":
        return [((b, r, c, "re"), 1.0)]
    if c < n:
        return [((b, r, c, "re"), 1.0)]
    if r >= n:
        return [((b, r - n, c - n, "re"), 1.0)]
    # top-right quadrant holds -B, with B[i,j] = im(i,j)
    i, j = r, c - n
    if i == j:
        return []
    if i < j:
        return [((b, i, j, "im"), -1.0)]
    return [((b, j, i, "im"), 1.0)]


def _dedupe_rows(rows: list[Constraint]) -> list[Constraint]:
    """Drop exact duplicate equality rows (up to a common scale)."""
    seen = set()
    out = []
    for c in rows:
        items = sorted(c.terms.items())
        lead = items[0][1]
        sig = tuple((k, round(v / lead, 12)) for k, v in items) + (round(c.rhs / lead, 12),)
        if sig in seen:
            continue
        seen.add(sig)
        out.append(c)
    return out


def _independent_rows(rows: list[Constraint], index: dict, max_work: float = 2e11) -> list[Constraint]:
    """Keep a maximal linearly independent subset of consistent equality rows.

    Interior-point KKT systems break down on rank-deficient equality blocks.
    Inconsistent systems are returned unchanged so the backend reports
    infeasibility with a certificate; very large systems are also skipped.
    """
    m = len(rows)
    if m < 2:
        return rows
    used = sorted({index[k] for c in rows for k in c.terms})
    n = len(used)
    if float(m) * n * min(m, n) > max_work:
        return rows
    col = {v: i for i, v in enumerate(used)}
    At = np.zeros((n + 1, m))
    for r, c in enumerate(rows):
        for k, v in c.terms.items():
            At[col[index[k]], r] += v
        At[n, r] = c.rhs
    _, R, piv = qr(At[:n], mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(m, n) * np.finfo(float).eps * (diag[0] if diag.size else 0.0) * 10
    rank = int(np.sum(diag > tol))
    if rank == m:
        return rows
    keep = np.sort(piv[:rank])
    # consistency: dropped rows must follow from the kept ones, rhs included
    sol, *_ = lstsq(At[:n, keep], At[:n], cond=None)
    if np.max(np.abs(At[n, keep] @ sol - At[n]), initial=0.0) > 1e-8:
        return rows
    return [rows[i] for i in keep]


# -- backends -----------------------------------------------------------------


# settings tried in order when an attempt stalls; degenerate moment
# problems (no strictly feasible point in some directions) often need one
_CLARABEL_FALLBACKS = (
    {},
    {"equilibrate_enable": False},
    {"static_regularization_constant": 1e-7},
)


def _solve_clarabel(comp: _Compiled, opts: SolverOptions) -> Solution:
    import clarabel

    cones = []
    for kind, n in comp.cones:
        if kind == "zero":
            cones.append(clarabel.ZeroConeT(n))
        elif kind == "nonneg":
            cones.append(clarabel.NonnegativeConeT(n))
        else:
            cones.append(clarabel.PSDTriangleConeT(n))
    P = sparse.diags(comp.pdiag, format="csc")
    t0 = time.perf_counter()
    almost = None
    for attempt, extra in enumerate(_CLARABEL_FALLBACKS):
        settings = clarabel.DefaultSettings()
        settings.verbose = opts.verbose
        settings.tol_feas = opts.tol_feas
        settings.tol_gap_abs = opts.tol_gap
        settings.tol_gap_rel = opts.tol_gap
        settings.max_iter = opts.max_iter
        settings.max_threads = 1
        for k, v in extra.items():
            setattr(settings, k, v)
        sol = clarabel.DefaultSolver(P, comp.q, comp.A, comp.b, cones, settings).solve()
        st = str(sol.status)
        if st in ("Solved", "PrimalInfeasible", "DualInfeasible"):
            break
        if st.startswith("Almost") and almost is None:
            almost = (sol, st, attempt)
        logger.debug("clarabel attempt %d ended with %s", attempt, st)
    else:
        if almost is not None:
            sol, st, attempt = almost
    elapsed = time.perf_counter() - t0
    x = np.asarray(sol.x)
    z = np.asarray(sol.z)
    sign = 1.0 if comp.prog.sense == "min" else -1.0
    residuals = {"r_prim": float(sol.r_prim), "r_dual": float(sol.r_dual),
                 "iterations": int(sol.iterations), "attempt": attempt}
    if st in ("Solved", "AlmostSolved"):
        value = comp.objective_value(x)
        dual_bound = sign * float(sol.obj_val_dual) + comp.prog.constant
        residuals["gap"] = abs(dual_bound - value)
        residuals["reduced_accuracy"] = st == "AlmostSolved"
        return Solution("optimal", value, comp.unpack(x), z, dual_bound, residuals,
                        backend="clarabel", solve_time=elapsed,
                        ineq_duals=z[comp.n_zero:comp.n_zero + comp.n_ineq].copy())
    if st in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        scale = np.max(np.abs(z)) or 1.0
        ray = z / scale
        residuals["certificate"] = float(comp.b @ ray)
        residuals["ray_residual"] = float(np.max(np.abs(comp.A.T @ ray))) if comp.nvar else 0.0
        return Solution("infeasible", float("nan"), [], None, None, residuals, ray,
                        backend="clarabel", solve_time=elapsed)
    if st in ("DualInfeasible", "AlmostDualInfeasible"):
        return Solution("unbounded", sign * -np.inf, [], None, None, residuals,
                        backend="clarabel", solve_time=elapsed)
    residuals["clarabel_status"] = st
    return Solution("numerical-trouble", float("nan"), [], None, None, residuals,
                    backend="clarabel", solve_time=elapsed)


def _solve_highs(comp: _Compiled, opts: SolverOptions) -> Solution:
    from scipy.optimize import linprog

    prog = comp.prog
    bounds = []
    for blk in prog.blocks:
        lo = 0.0 if blk.kind == "nonneg" else None
        bounds.extend([(lo, None)] * blk.size)
    A = comp.A.tocsr()
    nz = comp.n_zero
    ni = comp.n_ineq
    A_eq, b_eq = A[:nz], comp.b[:nz]
    A_ub, b_ub = A[nz:nz + ni], comp.b[nz:nz + ni]
    t0 = time.perf_counter()
    res = linprog(comp.q, A_ub=A_ub if ni else None, b_ub=b_ub if ni else None,
                  A_eq=A_eq if nz else None, b_eq=b_eq if nz else None, bounds=bounds,
                  method="highs", options={"primal_feasibility_tolerance": opts.tol_feas,
                                           "dual_feasibility_tolerance": opts.tol_feas})
    elapsed = time.perf_counter() - t0
    if res.status == 0:
        x = res.x
        value = float(comp.c @ x) + prog.constant
        duals = np.concatenate([
            res.eqlin.marginals if nz else np.zeros(0),
            res.ineqlin.marginals if ni else np.zeros(0),
        ])
        resid_eq = float(np.max(np.abs(A_eq @ x - b_eq))) if nz else 0.0
        resid_ub = float(max(0.0, np.max(A_ub @ x - b_ub))) if ni else 0.0
        return Solution("optimal", value, comp.unpack(x), duals, value,
                        {"r_prim": max(resid_eq, resid_ub), "gap": 0.0},
                        backend="highs", solve_time=elapsed,
                        ineq_duals=-res.ineqlin.marginals if ni else np.zeros(0))
    if res.status == 2:
        # HiGHS through scipy exposes no Farkas ray; recover one from Clarabel
        sol = _solve_clarabel(comp, opts)
        if sol.status == "infeasible":
            sol.backend = "highs+clarabel"
            return sol
        return Solution("infeasible", float("nan"), backend="highs", solve_time=elapsed)
    if res.status == 3:
        return Solution("unbounded", np.inf if prog.sense == "max" else -np.inf, backend="highs",
                        solve_time=elapsed)
    return Solution("numerical-trouble", float("nan"), residuals={"message": res.message},
                    backend="highs", solve_time=elapsed)


def solve(program: ConicProgram, options: SolverOptions | None = None) -> Solution:
    """Solve ``program`` and return a :class:`Solution`.

    Raises
    ------
    SizeLimitError
        If the total real PSD dimension exceeds ``options.max_psd_dim``.
    """
    opts = options or DEFAULT_OPTIONS
    if program.psd_dimension > opts.max_psd_dim:
        raise SizeLimitError(
            f"total PSD dimension {program.psd_dimension} exceeds cap {opts.max_psd_dim}")
    backend = opts.resolved_backend()
    comp = _Compiled(program)
    if backend == "highs" and not program.is_lp:
        raise SolverError("the highs backend handles linear programs only")
    if backend == "highs" or (backend == "auto" and program.is_lp):
        return _solve_highs(comp, opts)
    return _solve_clarabel(comp, opts)


class PreparedProgram:
    """A program compiled once and solved for many objectives.

    The constraint matrices are built on construction; :meth:`solve` only
    swaps the linear objective. Used by alternating optimizations that
    solve the same feasible set hundreds of times.
    """

    def __init__(self, program: ConicProgram, options: SolverOptions | None = None):
        self.options = options or DEFAULT_OPTIONS
        if program.psd_dimension > self.options.max_psd_dim:
            raise SizeLimitError(
                f"total PSD dimension {program.psd_dimension} exceeds cap {self.options.max_psd_dim}")
        self.program = program.copy()
        self._comp = _Compiled(self.program)

    def solve(self, terms, constant: float = 0.0) -> Solution:
        prog = self.program
        prog.objective = prog._collect(terms)
        prog.constant = float(constant)
        self._comp.set_objective(prog.objective, prog.quadratic)
        if prog.is_lp and self.options.resolved_backend() != "clarabel":
            return _solve_highs(self._comp, self.options)
        return _solve_clarabel(self._comp, self.options)


def with_options(options: SolverOptions | None, **changes) -> SolverOptions:
    return replace(options or DEFAULT_OPTIONS, **changes)


def linear_terms(pairs: Iterable) -> dict:
    out: dict = {}
    for k, v in pairs:
        out[k] = out.get(k, 0.0) + v
    return out
