"""Contextuality scenarios, behaviours and success metrics.

A scenario is the tuple ``(X, Y, K, prep_equivalences, meas_equivalences)``.
Each preparation-equivalence class is a list of at least two distinct
probability distributions over the ``X`` preparations whose mixtures are
declared operationally equivalent. Each measurement-equivalence class is a
list of distributions over the ``Y * K`` effects ``[k|M_y]``, flattened as
``y * K + k``.

Distributions are kept as :class:`fractions.Fraction` so that equivalence
constraints built from named scenario families are exactly satisfiable;
they become floats only at solver boundaries.

Preparation indices of the parity-oblivious families encode Alice's input
string big-endian: ``x = sum_i x_i 2**(n-1-i)``, so bit ``y`` of ``x`` is
``(x >> (n - 1 - y)) & 1``.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

NORM_TOL = 1e-12
DISTINCT_TOL = 1e-12
BEHAVIOUR_TOL = 1e-9
MAX_PARITY_BITS = 8


class ScenarioError(ValueError):
    """Raised for malformed scenario, metric or behaviour data."""


def to_fraction(value) -> Fraction:
    """Parse an int, float, Fraction or a ``"num/den"`` / decimal string."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ScenarioError(f"not a number: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not np.isfinite(value):
            raise ScenarioError(f"not a finite number: {value!r}")
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ScenarioError(f"cannot parse number {value!r}") from exc
    if isinstance(value, (np.integer, np.floating)):
        return to_fraction(value.item())
    raise ScenarioError(f"not a number: {value!r}")


def _fmt(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _dist(values) -> tuple:
    return tuple(to_fraction(v) for v in values)


@dataclass(frozen=True)
class Scenario:
    X: int
    Y: int
    K: int
    prep_equivalences: tuple = ()
    meas_equivalences: tuple = ()
    name: str = field(default="", compare=False)

    def __post_init__(self):
        prep = tuple(tuple(_dist(d) for d in cls) for cls in self.prep_equivalences)
        meas = tuple(tuple(_dist(d) for d in cls) for cls in self.meas_equivalences)
        object.__setattr__(self, "prep_equivalences", prep)
        object.__setattr__(self, "meas_equivalences", meas)

    @property
    def V(self) -> int:
        return len(self.prep_equivalences)

    @property
    def W(self) -> int:
        return len(self.meas_equivalences)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.X, self.Y, self.K)

    def meas_weight(self, dist, y: int, k: int) -> Fraction:
        return dist[y * self.K + k]

    def prep_arrays(self) -> list[np.ndarray]:
        """Preparation classes as float arrays of shape ``(V_v, X)``."""
        return [np.array([[float(a) for a in d] for d in cls]) for cls in self.prep_equivalences]

    def meas_arrays(self) -> list[np.ndarray]:
        """Measurement classes as float arrays of shape ``(W_w, Y, K)``."""
        return [np.array([[float(b) for b in d] for d in cls]).reshape(len(cls), self.Y, self.K)
                for cls in self.meas_equivalences]

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "X": self.X,
            "Y": self.Y,
            "K": self.K,
            "prep_equivalences": [[[_fmt(a) for a in d] for d in cls] for cls in self.prep_equivalences],
            "meas_equivalences": [[[_fmt(b) for b in d] for d in cls] for cls in self.meas_equivalences],
        }

    @classmethod
    def from_dict(cls, data, name: str = "") -> "Scenario":
        if not isinstance(data, dict):
            raise ScenarioError("scenario must be a JSON object")
        for key in ("X", "Y", "K"):
            if key not in data:
                raise ScenarioError(f"missing field {key!r}")
            if not isinstance(data[key], int) or isinstance(data[key], bool):
                raise ScenarioError(f"field {key!r} must be an integer")
        X, Y, K = data["X"], data["Y"], data["K"]
        prep = data.get("prep_equivalences", [])
        meas = data.get("meas_equivalences", [])
        for label, classes, width in (("prep_equivalences", prep, X), ("meas_equivalences", meas, Y * K)):
            if not isinstance(classes, list):
                raise ScenarioError(f"{label} must be a list")
            for v, c in enumerate(classes):
                if not isinstance(c, list):
                    raise ScenarioError(f"{label}[{v}] must be a list of distributions")
                for j, d in enumerate(c):
                    if not isinstance(d, list) or len(d) != width:
                        raise ScenarioError(f"{label}[{v}][{j}] must be a list of {width} numbers")
        try:
            scen = cls(X, Y, K, prep, meas, name=name)
        except ScenarioError as exc:
            raise ScenarioError(f"bad number in scenario: {exc}") from exc
        report = validate(scen)
        if not report.ok:
            raise ScenarioError("; ".join(report.errors))
        return scen


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self) -> bool:
        return self.ok


def _check_classes(classes, width: int, label: str, errors: list) -> None:
    for v, cls in enumerate(classes):
        if len(cls) < 2:
            errors.append(f"{label} class {v}: class needs >= 2 distributions, has {len(cls)}")
        for j, d in enumerate(cls):
            if len(d) != width:
                errors.append(f"{label} class {v}, distribution {j}: length {len(d)} != {width}")
                continue
            if any(a < 0 for a in d):
                errors.append(f"{label} class {v}, distribution {j}: negative entry")
            total = sum(d)
            if abs(float(total) - 1.0) > NORM_TOL:
                errors.append(f"{label} class {v}, distribution {j}: sums to {float(total):.12g}, not 1")
        for (j1, d1), (j2, d2) in itertools.combinations(enumerate(cls), 2):
            if len(d1) == len(d2) == width and max(abs(float(a - b)) for a, b in zip(d1, d2)) <= DISTINCT_TOL:
                errors.append(f"{label} class {v}: distributions {j1} and {j2} coincide")


def validate(scenario: Scenario) -> ValidationReport:
    """Check every scenario invariant and report all violations found."""
    errors: list[str] = []
    if scenario.X < 1:
        errors.append(f"X must be >= 1, got {scenario.X}")
    if scenario.Y < 1:
        errors.append(f"Y must be >= 1, got {scenario.Y}")
    if scenario.K < 2:
        errors.append(f"K must be >= 2, got {scenario.K}")
    if not errors:
        _check_classes(scenario.prep_equivalences, scenario.X, "prep", errors)
        _check_classes(scenario.meas_equivalences, scenario.Y * scenario.K, "meas", errors)
    return ValidationReport(tuple(errors))


# -- metrics and behaviours -----------------------------------------------------


@dataclass(frozen=True)
class SuccessMetric:
    """Sparse coefficient tensor ``c``; ``S(p) = sum c[x,y,k] p(k|x,y)``."""

    terms: tuple
    name: str = field(default="", compare=False)

    def __post_init__(self):
        cleaned = []
        seen = set()
        for t in self.terms:
            x, y, k, c = t
            key = (int(x), int(y), int(k))
            if key in seen:
                raise ScenarioError(f"duplicate metric term {key}")
            seen.add(key)
            cleaned.append((*key, to_fraction(c)))
        object.__setattr__(self, "terms", tuple(cleaned))

    def check(self, shape) -> None:
        X, Y, K = shape
        for x, y, k, _ in self.terms:
            if not (0 <= x < X and 0 <= y < Y and 0 <= k < K):
                raise ScenarioError(f"metric term ({x},{y},{k}) out of range for shape {shape}")

    def to_array(self, shape) -> np.ndarray:
        self.check(shape)
        c = np.zeros(shape)
        for x, y, k, v in self.terms:
            c[x, y, k] = float(v)
        return c

    @classmethod
    def from_array(cls, c, name: str = "", tol: float = 0.0) -> "SuccessMetric":
        c = np.asarray(c, dtype=float)
        terms = [(x, y, k, float(c[x, y, k])) for x, y, k in np.ndindex(c.shape) if abs(c[x, y, k]) > tol]
        return cls(tuple(terms), name=name)

    def to_dict(self) -> dict:
        return {"terms": [{"x": x, "y": y, "k": k, "c": _fmt(v)} for x, y, k, v in self.terms]}

    @classmethod
    def from_dict(cls, data, name: str = "") -> "SuccessMetric":
        try:
            rows = data["terms"]
            return cls(tuple((r["x"], r["y"], r["k"], r["c"]) for r in rows), name=name)
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"malformed metric: {exc}") from exc


ZERO_METRIC = SuccessMetric(())


@dataclass(frozen=True, eq=False)
class Behaviour:
    """Probability tensor ``p[x, y, k] = p(k|x, y)``."""

    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 3:
            raise ScenarioError("behaviour must be a 3-index tensor")
        if np.any(p < -BEHAVIOUR_TOL) or np.any(p > 1 + BEHAVIOUR_TOL):
            raise ScenarioError("behaviour entries must lie in [0, 1]")
        sums = p.sum(axis=2)
        bad = np.argwhere(np.abs(sums - 1) > BEHAVIOUR_TOL)
        if len(bad):
            x, y = bad[0]
            raise ScenarioError(f"p(.|x={x},y={y}) sums to {sums[x, y]:.12g}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def shape(self):
        return self.p.shape

    @classmethod
    def uniform(cls, X: int, Y: int, K: int) -> "Behaviour":
        return cls(np.full((X, Y, K), 1.0 / K))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "k", "p"])
        for x, y, k in np.ndindex(self.p.shape):
            w.writerow([x, y, k, repr(float(self.p[x, y, k]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, shape=None) -> "Behaviour":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ScenarioError("behaviour CSV has no rows")
        try:
            entries = [(int(r["x"]), int(r["y"]), int(r["k"]), float(to_fraction(r["p"]))) for r in rows]
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"behaviour CSV needs columns x,y,k,p: {exc}") from exc
        if shape is None:
            shape = tuple(1 + max(e[i] for e in entries) for i in range(3))
        p = np.full(shape, np.nan)
        for x, y, k, v in entries:
            p[x, y, k] = v
        if np.isnan(p).any():
            raise ScenarioError("behaviour CSV is missing entries")
        return cls(p)


def evaluate_metric(metric: SuccessMetric, behaviour) -> float:
    """Exact weighted sum ``sum c[x,y,k] p(k|x,y)``."""
    p = behaviour.p if isinstance(behaviour, Behaviour) else np.asarray(behaviour, dtype=float)
    metric.check(p.shape)
    return float(sum(float(c) * p[x, y, k] for x, y, k, c in metric.terms))


def check_behaviour(behaviour: Behaviour, scenario: Scenario) -> None:
    if behaviour.shape != scenario.shape:
        raise ScenarioError(f"behaviour shape {behaviour.shape} != scenario shape {scenario.shape}")


# -- file I/O -------------------------------------------------------------------


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=1) + "\n", encoding="utf-8")


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    try:
        return Scenario.from_dict(data, name=path.stem)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def save_metric(metric: SuccessMetric, path) -> None:
    Path(path).write_text(json.dumps(metric.to_dict(), indent=1) + "\n", encoding="utf-8")


def load_metric(path) -> SuccessMetric:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return SuccessMetric.from_dict(data, name=path.stem)


def load_bundled(name: str) -> Scenario:
    """Load one of the scenario files shipped in ``ctxwb/data``."""
    ref = resources.files("ctxwb") / "data" / f"{name}.json"
    data = json.loads(ref.read_text(encoding="utf-8"))
    data.pop("metric", None)
    data.pop("notes", None)
    return Scenario.from_dict(data, name=name)


def bundled_metric(name: str) -> SuccessMetric:
    ref = resources.files("ctxwb") / "data" / f"{name}.json"
    data = json.loads(ref.read_text(encoding="utf-8"))
    if "metric" not in data:
        raise ScenarioError(f"bundled scenario {name!r} carries no metric")
    return SuccessMetric.from_dict(data["metric"], name=name)


# -- named scenario families ------------------------------------------------------


def _uniform(support: Iterable[int], size: int) -> tuple:
    support = list(support)
    w = Fraction(1, len(support))
    d = [Fraction(0)] * size
    for s in support:
        d[s] = w
    return tuple(d)


def bit(x: int, i: int, n: int) -> int:
    """Bit ``i`` of the big-endian ``n``-bit encoding of ``x``."""
    return (x >> (n - 1 - i)) & 1


def build_632() -> Scenario:
    """Six preparations, three binary measurements.

    ``(P0+P1)/2 ~ (P2+P3)/2 ~ (P4+P5)/2`` and
    ``([0|M0]+[0|M1]+[0|M2])/3 ~ ([1|M0]+[1|M1]+[1|M2])/3``.
    """
    prep = [[_uniform((0, 1), 6), _uniform((2, 3), 6), _uniform((4, 5), 6)]]
    K = 2
    meas = [[_uniform([y * K + 0 for y in range(3)], 6), _uniform([y * K + 1 for y in range(3)], 6)]]
    return Scenario(6, 3, 2, prep, meas, name="632")


def _check_parity_n(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ScenarioError(f"n must be an integer >= 2, got {n!r}")
    if n > MAX_PARITY_BITS:
        raise ScenarioError(f"n = {n} exceeds the instance-size guard n <= {MAX_PARITY_BITS}")


def parity_classes(n: int) -> list:
    """One class per parity string of Hamming weight >= 2: the uniform
    mixtures over even- and odd-parity inputs."""
    X = 2 ** n
    classes = []
    for s in range(X):
        if bin(s).count("1") < 2:
            continue
        even = [x for x in range(X) if bin(x & s).count("1") % 2 == 0]
        odd = [x for x in range(X) if bin(x & s).count("1") % 2 == 1]
        classes.append([_uniform(even, X), _uniform(odd, X)])
    return classes


def build_porac(n: int) -> Scenario:
    """The ``(n,2)`` parity-oblivious random access code scenario."""
    _check_parity_n(n)
    return Scenario(2 ** n, n, 2, parity_classes(n), (), name=f"porac{n}")


def mporac_meas_class(n: int) -> list:
    K = 2
    return [_uniform([y * K + 0 for y in range(n)], n * K), _uniform([y * K + 1 for y in range(n)], n * K)]


def build_mporac(n: int) -> Scenario:
    """porac(n) plus ``(1/n) sum_i [0|M_i] ~ (1/n) sum_i [1|M_i]``."""
    _check_parity_n(n)
    return Scenario(2 ** n, n, 2, parity_classes(n), [mporac_meas_class(n)], name=f"mporac{n}")


def build_simplest_family(alpha) -> Scenario:
    """``(P00 + P11)/2 ~ alpha P01 + (1 - alpha) P10`` on two-bit inputs."""
    a = to_fraction(alpha)
    if not 0 <= a <= 1:
        raise ScenarioError(f"alpha must lie in [0, 1], got {alpha!r}")
    h = Fraction(1, 2)
    d1 = (h, Fraction(0), Fraction(0), h)
    d2 = (Fraction(0), a, 1 - a, Fraction(0))
    return Scenario(4, 2, 2, [[d1, d2]], (), name=f"simplest({float(a):g})")


def build_prop7() -> Scenario:
    """Two-bit inputs with ``P11 ~ (P01 + P10)/2``; pure states force the
    three preparations to coincide."""
    h = Fraction(1, 2)
    z = Fraction(0)
    return Scenario(4, 2, 2, [[(z, z, z, Fraction(1)), (z, h, h, z)]], (), name="prop7")


def build_mporac23() -> Scenario:
    """Two trits ``a0, a1`` (``x = 3 a0 + a1``), two ternary measurements.

    Both ternary parities ``a0 + a1`` and ``a0 + 2 a1 (mod 3)`` are hidden:
    for each, the three uniform mixtures over inputs of fixed parity are
    equivalent. ``([k|M0] + [k|M1])/2`` is the same effect for every k.
    """
    X, Y, K = 9, 2, 3
    prep = [[_uniform([x for x in range(X) if (x // 3 + s * (x % 3)) % 3 == t], X) for t in range(3)]
            for s in (1, 2)]
    meas = [[_uniform([y * K + k for y in range(Y)], Y * K) for k in range(K)]]
    return Scenario(X, Y, K, prep, meas, name="mporac23")


# -- canonical metrics ---------------------------------------------------------------


def porac_metric(n: int) -> SuccessMetric:
    """Average probability of decoding bit ``y`` of Alice's ``n``-bit input."""
    X = 2 ** n
    w = Fraction(1, n * X)
    terms = [(x, y, bit(x, y, n), w) for x in range(X) for y in range(n)]
    return SuccessMetric(tuple(terms), name=f"porac{n}")


def mporac23_metric() -> SuccessMetric:
    """Average probability of decoding trit ``a_y`` of ``x = 3 a0 + a1``."""
    w = Fraction(1, 18)
    terms = [(x, y, (x // 3) if y == 0 else (x % 3), w) for x in range(9) for y in range(2)]
    return SuccessMetric(tuple(terms), name="mporac23")


def _p0(coeffs: Sequence[tuple[int, int, int]], name: str) -> SuccessMetric:
    # coefficients given as (y, x, c) on p_{yx} = p(0|x,y)
    return SuccessMetric(tuple((x, y, 0, c) for y, x, c in coeffs), name=name)


def table1_metrics() -> list[SuccessMetric]:
    """The six facet metrics of the 632 scenario, written on ``p_yx = p(0|x,y)``."""
    return [
        _p0([(0, 0, 1), (1, 2, 1), (2, 4, 1)], "t1m1"),
        _p0([(0, 0, 1), (1, 1, 1), (2, 4, 1)], "t1m2"),
        _p0([(0, 0, 1), (0, 2, -1), (0, 4, -2), (1, 1, -2), (1, 2, 2), (2, 4, 2)], "t1m3"),
        _p0([(0, 0, 2), (1, 1, -1), (1, 2, 2)], "t1m4"),
        _p0([(0, 0, 1), (0, 4, -1), (1, 1, 1), (1, 2, 1), (2, 4, 2)], "t1m5"),
        _p0([(0, 0, 1), (0, 4, -1), (1, 1, 2), (2, 4, 2)], "t1m6"),
    ]


def appendix_metrics() -> list[SuccessMetric]:
    """The six facet metrics followed by the variant of the third one that
    replaces ``p02`` with ``p03``."""
    extra = _p0([(0, 0, 1), (0, 3, -1), (0, 4, -2), (1, 1, -2), (1, 2, 2), (2, 4, 2)], "t1m3b")
    return table1_metrics() + [extra]


def ncycle_scenario(n: int) -> Scenario:
    return load_bundled(f"ncycle_{n}")


def ncycle_metric(n: int) -> SuccessMetric:
    return bundled_metric(f"ncycle_{n}")
