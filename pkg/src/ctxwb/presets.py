"""Named reproductions of reference tables and curves, each checked against
the reference values in ``data/anchors.json``."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import multiparty as mp
from .polytope import max_contextual, max_noncontextual
from .relax import (build_projective_relaxation, build_pure_state_relaxation, build_unitary_relaxation,
                    upper_bound)
from .scenario import (Scenario, SuccessMetric, appendix_metrics, build_632, build_mporac, build_mporac23,
                       build_porac, build_prop7, build_simplest_family, mporac23_metric, ncycle_metric,
                       ncycle_scenario, porac_metric, table1_metrics)
from .seesaw import SeesawError, seesaw
from .solver import SolverError, SolverOptions

logger = logging.getLogger(__name__)

PRESETS = ("table1", "table2", "table3", "porac", "appendixB", "fig2", "monogamy", "keyrate", "prop6", "prop7")
COLUMNS = ("C", "NC", "QL", "Q1", "QPi1", "QPi2", "QPsi1")


def load_anchors() -> dict:
    ref = resources.files("ctxwb") / "data" / "anchors.json"
    return json.loads(ref.read_text(encoding="utf-8"))


@dataclass
class Cell:
    value: float
    status: str = "optimal"
    seconds: float = 0.0
    anchor: float | None = None
    tol: float | None = None
    relation: str = "eq"

    @property
    def verdict(self) -> str | None:
        """``"pass"``/``"fail"`` against the anchor, ``None`` without one."""
        if self.anchor is None:
            return None
        if not math.isfinite(self.value):
            return "fail"
        if self.relation == "le":
            ok = self.value <= self.anchor + self.tol
        elif self.relation == "ge":
            ok = self.value >= self.anchor - self.tol
        else:
            ok = abs(self.value - self.anchor) <= self.tol
        return "pass" if ok else "fail"

    def to_dict(self) -> dict:
        out = {"value": self.value, "status": self.status, "seconds": round(self.seconds, 3)}
        if self.anchor is not None:
            out.update(anchor=self.anchor, tol=self.tol, relation=self.relation, verdict=self.verdict)
        return out


@dataclass
class PresetReport:
    name: str
    rows: dict = field(default_factory=dict)  # label -> {column: Cell}
    checks: list = field(default_factory=list)  # (description, passed)
    curves: dict = field(default_factory=dict)  # file stem -> CSV text
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        cells_ok = all(c.verdict != "fail" for row in self.rows.values() for c in row.values())
        return cells_ok and all(ok for _, ok in self.checks)

    @property
    def failures(self) -> list[str]:
        out = [f"{label}/{col}: {c.value:.10g} vs anchor {c.anchor} ({c.relation}, tol {c.tol})"
               for label, row in self.rows.items() for col, c in row.items() if c.verdict == "fail"]
        return out + [desc for desc, ok in self.checks if not ok]

    def to_dict(self) -> dict:
        return {
            "preset": self.name,
            "rows": {label: {col: c.to_dict() for col, c in row.items()} for label, row in self.rows.items()},
            "checks": [{"check": d, "pass": ok} for d, ok in self.checks],
            "passed": self.passed,
            "meta": self.meta,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "column", "value", "status", "anchor", "tol", "relation", "verdict", "seconds"])
        for label, row in self.rows.items():
            for col, c in row.items():
                w.writerow([label, col, f"{c.value:.10g}", c.status, "" if c.anchor is None else c.anchor,
                            "" if c.tol is None else c.tol, c.relation if c.anchor is not None else "",
                            c.verdict or "", f"{c.seconds:.3f}"])
        return buf.getvalue()

    def render(self) -> str:
        cols = [c for c in COLUMNS + ("NS", "Q1BC") if any(c in row for row in self.rows.values())]
        width = max([len(label) for label in self.rows] + [6])
        lines = [f"preset {self.name}"]
        if cols:
            lines.append(" " * width + "".join(f"{c:>16}" for c in cols))
        for label, row in self.rows.items():
            parts = []
            for c in cols:
                cell = row.get(c)
                if cell is None:
                    parts.append(f"{'':>16}")
                    continue
                mark = {"pass": " ", "fail": "!", None: " "}[cell.verdict]
                text = f"{cell.value:.7f}" if cell.status == "optimal" else cell.status
                parts.append(f"{text + mark:>16}")
            lines.append(f"{label:<{width}}" + "".join(parts))
        for key, value in self.meta.items():
            lines.append(f"{key}: {value}")
        for desc, ok in self.checks:
            lines.append(f"[{'pass' if ok else 'FAIL'}] {desc}")
        lines.append("verdict: " + ("pass" if self.passed else "FAIL (" + "; ".join(self.failures) + ")"))
        return "\n".join(lines)


# -- cell evaluation ---------------------------------------------------------------


def _timed(fn) -> Cell:
    start = time.perf_counter()
    try:
        value, status = fn()
    except (SolverError, SeesawError) as exc:
        logger.warning("cell failed: %s", exc)
        value, status = float("nan"), "error"
    return Cell(float(value), status, time.perf_counter() - start)


def compute_cell(column: str, scenario: Scenario, metric: SuccessMetric, *, dim: int = 2, restarts: int = 20,
                 seed: int = 0, identification: str = "words", options: SolverOptions | None = None) -> Cell:
    """One bound of ``metric`` on ``scenario``; ``column`` is one of :data:`COLUMNS`."""

    def run():
        if column == "C":
            r = max_contextual(scenario, metric, options)
        elif column == "NC":
            r = max_noncontextual(scenario, metric, options)
        elif column == "QL":
            r = seesaw(scenario, metric, dim=dim, restarts=restarts, seed=seed, options=options)
            return r.value, "optimal"
        elif column == "Q1":
            r = upper_bound(build_unitary_relaxation(scenario, identification=identification), metric, options)
        elif column in ("QPi1", "QPi2"):
            r = upper_bound(build_projective_relaxation(scenario, int(column[-1])), metric, options)
        elif column == "QPsi1":
            r = upper_bound(build_pure_state_relaxation(scenario), metric, options)
        else:
            raise ValueError(f"unknown column {column!r}")
        return r.value, r.status

    return _timed(run)


def _attach(report: PresetReport, anchors: dict) -> None:
    for label, row in report.rows.items():
        for col, cell in row.items():
            entry = anchors.get(label, {}).get(col)
            if entry:
                cell.anchor, cell.tol = float(entry[0]), float(entry[1])
                cell.relation = entry[2] if len(entry) > 2 else "eq"


def _ordered(row: dict, chain: list[str], tol: float = 1e-5) -> bool:
    vals = [row[c].value for c in chain if c in row and row[c].status == "optimal"]
    return all(a <= b + tol for a, b in zip(vals, vals[1:]))


def sandwich_holds(row: dict, projective_dominates: bool, tol: float = 1e-5) -> bool:
    """Check every inclusion between the sets a row reports.

    ``NC <= QL <= Q1 <= C``, ``QPsi1 <= Q1``, ``QPi2 <= QPi1 <= C``, and,
    when the scenario has no measurement equivalences (so every POVM has a
    projective dilation), ``QL <= QPi2``.
    """
    chains = [["NC", "QL", "Q1", "C"], ["QPsi1", "Q1"], ["QPi2", "QPi1", "C"]]
    if projective_dominates:
        chains.append(["QL", "QPi2", "QPi1"])
    return all(_ordered(row, chain, tol) for chain in chains)


def _sandwich_check(report: "PresetReport", label: str, scenario: Scenario) -> None:
    report.checks.append((f"{label}: sandwich ordering", sandwich_holds(report.rows[label], scenario.W == 0)))


# -- presets -----------------------------------------------------------------------


def _table(name, cases, columns, **cell_options) -> PresetReport:
    report = PresetReport(name)
    for label, scenario, metric in cases:
        report.rows[label] = {c: compute_cell(c, scenario, metric, **cell_options) for c in columns}
        _sandwich_check(report, label, scenario)
    return report


def preset_table1(restarts: int = 20, seed: int = 0, options=None) -> PresetReport:
    sc = build_632()
    cases = [(m.name, sc, m) for m in table1_metrics()]
    report = _table("table1", cases, ["C", "NC", "QL", "Q1"], dim=2, restarts=restarts, seed=seed, options=options)
    return report


def preset_appendix_b(options=None) -> PresetReport:
    sc = build_632()
    cases = [(f"S{i + 1}", sc, m) for i, m in enumerate(appendix_metrics())]
    report = _table("appendixB", cases, ["Q1"], identification="tutorial", options=options)
    report.meta["identification"] = "tutorial"
    return report


def preset_table2(restarts: int = 5, seed: int = 0, options=None) -> PresetReport:
    cases = [(f"n={n}", ncycle_scenario(n), ncycle_metric(n)) for n in (5, 7)]
    report = _table("table2", cases, ["C", "NC", "QL", "QPi1", "Q1"], dim=3, restarts=restarts, seed=seed,
                    options=options)
    return report


def preset_table3(options=None) -> PresetReport:
    cases = [(f"n={n}", build_mporac(n), porac_metric(n)) for n in (2, 3, 4, 5)]
    report = _table("table3", cases, ["C", "NC", "Q1"], options=options)
    return report


def preset_porac(options=None) -> PresetReport:
    cases = [(f"n={n}", build_porac(n), porac_metric(n)) for n in (2, 3, 4, 5)]
    report = _table("porac", cases, ["NC", "Q1", "QPi1"], options=options)
    for label, row in report.rows.items():
        report.checks.append((f"{label}: |Q1 - QPi1| <= 1e-5", abs(row["Q1"].value - row["QPi1"].value) <= 1e-5))
    return report


def preset_prop6(restarts: int = 20, seed: int = 0, options=None) -> PresetReport:
    sc, m = build_mporac23(), mporac23_metric()
    report = _table("prop6", [("mporac23", sc, m)], ["C", "NC", "QPi1", "QL", "Q1"], dim=3, restarts=restarts,
                    seed=seed, options=options)
    row = report.rows["mporac23"]
    qpi = row["QPi1"]
    report.checks.append(("projective relaxation infeasible or <= 1/3",
                          qpi.status == "infeasible" or (qpi.status == "optimal" and qpi.value <= 1 / 3 + 1e-6)))
    report.checks.append(("Q1 >= see-saw value", row["Q1"].value >= row["QL"].value - 1e-6))
    return report


def preset_prop7(restarts: int = 20, seed: int = 0, options=None) -> PresetReport:
    report = _table("prop7", [("prop7", build_prop7(), porac_metric(2))], ["C", "NC", "QL", "Q1", "QPsi1"],
                    dim=3, restarts=restarts, seed=seed, options=options)
    return report


def preset_fig2(points: int = 11, restarts: int = 10, seed: int = 0, options=None) -> PresetReport:
    """Bounds along the one-parameter family; ordering checks only."""
    report = PresetReport("fig2")
    m = porac_metric(2)
    for alpha in np.linspace(0.0, 1.0, points):
        sc = build_simplest_family(float(round(alpha, 12)))
        row = {c: compute_cell(c, sc, m, dim=3, restarts=restarts, seed=seed, options=options)
               for c in ("C", "NC", "QL", "QPi1", "QPi2", "Q1", "QPsi1")}
        label = f"alpha={alpha:.3f}"
        report.rows[label] = row
        _sandwich_check(report, label, sc)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["C", "NC", "QL", "QPi1", "QPi2", "Q1", "QPsi1"]
    w.writerow(["alpha"] + cols)
    for label, row in report.rows.items():
        w.writerow([label.split("=")[1]] + [f"{row[c].value:.10f}" for c in cols])
    report.curves["fig2"] = buf.getvalue()
    return report


def preset_monogamy(points: int = 50, reading: str = "uniform", options=None) -> PresetReport:
    ts = mp.build_tripartite_porac(reading)
    report = PresetReport("monogamy", meta={"reading": reading})
    start = time.perf_counter()
    ns = mp.ns_monogamy_bound(ts, options=options)
    ns_cell = Cell(ns, "optimal", time.perf_counter() - start)
    problem = mp.build_bipartite_relaxation(ts)
    start = time.perf_counter()
    total = mp.max_sum_bound(problem, options)
    q_cell = Cell(total.value, total.status, time.perf_counter() - start)
    report.rows["tripartite"] = {"NS": ns_cell, "Q1BC": q_cell}
    curve = mp.monogamy_curve(problem, points=points, options=options)
    report.curves["monogamy"] = curve.to_csv()
    report.checks.append((f"curve monotone at all {points} points", curve.is_monotone()))
    report.checks.append(("every curve point solved", all(s == "optimal" for s in curve.statuses)))
    report.checks.append(("curve max of S_B + S_C <= Q_{1+BC} bound + 1e-5", curve.max_sum() <= total.value + 1e-5))
    return report


def preset_keyrate(points: int = 50, options=None) -> PresetReport:
    ts = mp.build_tripartite_porac("uniform")
    problem = mp.build_bipartite_relaxation(ts)
    report = PresetReport("keyrate", meta={"reading": "uniform"})
    pts = mp.key_rate_curve(problem, points=points, options=options)
    report.curves["keyrate"] = mp.key_rate_csv(pts)
    good = [p for p in pts if p.status == "optimal"]
    positive = [p for p in good if p.rate > 0]
    report.checks.append(("nonempty region with positive key rate", bool(positive)))
    report.checks.append(("positive region ends at the single-party optimum",
                          bool(positive) and positive[-1].s_b == good[-1].s_b))
    report.checks.append(("rate <= 0 at s_B = 1/2", mp.key_rate(0.5, 0.5) <= 0))
    report.meta["secure_from"] = positive[0].s_b if positive else None
    return report


def run_preset(name: str, anchors: dict | None = None, **kwargs) -> PresetReport:
    """Run a preset by name and attach anchor verdicts.

    Raises
    ------
    KeyError
        If ``name`` is not in :data:`PRESETS`.
    """
    builders = {"table1": preset_table1, "table2": preset_table2, "table3": preset_table3, "porac": preset_porac,
                "appendixB": preset_appendix_b, "fig2": preset_fig2, "monogamy": preset_monogamy,
                "keyrate": preset_keyrate, "prop6": preset_prop6, "prop7": preset_prop7}
    if name not in builders:
        raise KeyError(f"unknown preset {name!r}; expected one of {PRESETS}")
    report = builders[name](**kwargs)
    anchors = load_anchors() if anchors is None else anchors
    _attach(report, anchors["presets"].get(name, {}))
    return report
