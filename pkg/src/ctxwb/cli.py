"""Command-line front end.

Exit codes: 0 ok, 1 error, 2 infeasible, 3 an anchor check failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import presets
from .scenario import (ScenarioError, SuccessMetric, appendix_metrics, build_632, build_mporac, build_mporac23,
                       build_porac, build_prop7, build_simplest_family, load_metric, load_scenario,
                       mporac23_metric, ncycle_metric, ncycle_scenario, porac_metric)
from .seesaw import SeesawError, seesaw
from .solver import SolverError, SolverOptions

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_ANCHOR = 0, 1, 2, 3

SETS = {"c": "C", "nc": "NC", "q1": "Q1", "qpi": "QPi", "qpsi": "QPsi1"}


def resolve_scenario(text: str):
    """A scenario file, or a built-in name: ``632``, ``porac:N``,
    ``mporac:N``, ``mporac23``, ``prop7``, ``simplest:ALPHA``, ``ncycle:N``.

    Returns the scenario and the name of its canonical metric, if any.
    """
    if Path(text).is_file():
        return load_scenario(text), None
    name, _, arg = text.partition(":")
    if name == "632":
        return build_632(), None
    if name in ("porac", "mporac") and arg:
        n = int(arg)
        return (build_porac(n) if name == "porac" else build_mporac(n)), f"porac:{n}"
    if name == "mporac23":
        return build_mporac23(), "mporac23"
    if name == "prop7":
        return build_prop7(), "porac:2"
    if name == "simplest" and arg:
        return build_simplest_family(arg), "porac:2"
    if name == "ncycle" and arg:
        return ncycle_scenario(int(arg)), f"ncycle:{arg}"
    raise ScenarioError(f"no scenario file or built-in named {text!r}")


def resolve_metric(text: str | None, default: str | None) -> SuccessMetric:
    """A metric file or a built-in name: ``t1m1``..``t1m6``, ``t1m3b``,
    ``porac:N``, ``mporac23``, ``ncycle:N``."""
    text = text or default
    if text is None:
        raise ScenarioError("this scenario has no canonical metric; pass --metric")
    if Path(text).is_file():
        return load_metric(text)
    for m in appendix_metrics():
        if m.name == text:
            return m
    name, _, arg = text.partition(":")
    if name == "porac" and arg:
        return porac_metric(int(arg))
    if name == "mporac23":
        return mporac23_metric()
    if name == "ncycle" and arg:
        return ncycle_metric(int(arg))
    raise ScenarioError(f"no metric file or built-in named {text!r}")


def _write(path: str, payload: dict, csv_text: str | None = None) -> None:
    p = Path(path)
    if p.suffix == ".csv" and csv_text is not None:
        p.write_text(csv_text, encoding="utf-8")
    else:
        p.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def cmd_bound(args, options: SolverOptions) -> int:
    scenario, default = resolve_scenario(args.scenario)
    metric = resolve_metric(args.metric, default)
    column = SETS[args.set]
    if column == "QPi":
        column = f"QPi{args.level}"
    cell = presets.compute_cell(column, scenario, metric, identification=args.identification, options=options)
    if args.tol is not None and args.anchor is not None:
        cell.anchor, cell.tol = args.anchor, args.tol
    line = f"{column} = {cell.value:.10f}  status {cell.status}"
    if cell.verdict:
        line += f"  anchor {cell.anchor} tol {cell.tol}: {cell.verdict}"
    print(line)
    if args.out:
        payload = {"scenario": args.scenario, "metric": metric.name, "set": column, **cell.to_dict()}
        csv_text = "set,value,status\n" + f"{column},{cell.value:.12g},{cell.status}\n"
        _write(args.out, payload, csv_text)
    if cell.status == "infeasible":
        return EXIT_INFEASIBLE
    if cell.status != "optimal":
        return EXIT_ERROR
    return EXIT_ANCHOR if cell.verdict == "fail" else EXIT_OK


def cmd_seesaw(args, options: SolverOptions) -> int:
    scenario, default = resolve_scenario(args.scenario)
    metric = resolve_metric(args.metric, default)
    result = seesaw(scenario, metric, dim=args.dim, restarts=args.restarts, seed=args.seed, options=options)
    print(f"QL = {result.value:.10f}  dim {args.dim}  restarts {args.restarts}  seed {args.seed}  "
          f"best restart {result.best_restart}  iterations {result.iterations}")
    if args.dump_realization:
        result.realization.dump(args.dump_realization)
    if args.out:
        payload = result.to_dict()
        payload.pop("realization")
        _write(args.out, payload)
    return EXIT_OK


def cmd_preset(args, options: SolverOptions) -> int:
    kwargs = {"options": options}
    if args.points is not None and args.name in ("fig2", "monogamy", "keyrate"):
        kwargs["points"] = args.points
    if args.restarts is not None and args.name in ("table1", "table2", "prop6", "prop7", "fig2"):
        kwargs["restarts"] = args.restarts
    if args.reading and args.name == "monogamy":
        kwargs["reading"] = args.reading
    report = presets.run_preset(args.name, **kwargs)
    print(report.render())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{args.name}.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
        (out / f"{args.name}.csv").write_text(report.to_csv(), encoding="utf-8")
        for stem, text in report.curves.items():
            (out / f"{stem}_curve.csv").write_text(text, encoding="utf-8")
    return EXIT_OK if report.passed else EXIT_ANCHOR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctxwb", description="Bounds on contextual behaviours.")
    parser.add_argument("--solver", choices=("auto", "clarabel", "highs"), default=None,
                        help="backend (default: $CTXWB_SOLVER or auto)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bound", help="one bound of one metric")
    b.add_argument("--scenario", required=True, help="scenario JSON file or built-in name")
    b.add_argument("--metric", help="metric JSON file or built-in name")
    b.add_argument("--set", choices=sorted(SETS), default="q1")
    b.add_argument("--level", type=int, choices=(1, 2), default=1, help="word length for --set qpi")
    b.add_argument("--identification", choices=("words", "tutorial"), default="words")
    b.add_argument("--anchor", type=float, help="reference value to check against")
    b.add_argument("--tol", type=float, help="tolerance for --anchor")
    b.add_argument("--out", help="write JSON (or CSV for a .csv path)")

    s = sub.add_parser("seesaw", help="see-saw lower bound with a realization")
    s.add_argument("--scenario", required=True)
    s.add_argument("--metric")
    s.add_argument("--dim", type=int, default=2)
    s.add_argument("--restarts", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dump-realization", help="write the best realization as JSON")
    s.add_argument("--out")

    p = sub.add_parser("preset", help="reproduce a reference table or curve")
    p.add_argument("name", choices=presets.PRESETS)
    p.add_argument("--out", help="directory for JSON/CSV reports")
    p.add_argument("--points", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--reading", choices=("uniform", "literal", "two-setting"))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    options = SolverOptions(backend=args.solver)
    handlers = {"bound": cmd_bound, "seesaw": cmd_seesaw, "preset": cmd_preset}
    try:
        return handlers[args.command](args, options)
    except (ScenarioError, SolverError, SeesawError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
