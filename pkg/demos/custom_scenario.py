"""Define a scenario and a metric as JSON, then bound it from Python and
from the command line.

Three preparations where P2 is an equal mixture of P0 and P1: with so few
preparations every behaviour is noncontextual, so all bounds coincide.

Run: python3 demos/custom_scenario.py
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

from ctxwb import load_metric, load_scenario, max_contextual, max_noncontextual, upper_bound
from ctxwb.relax import build_unitary_relaxation

scenario = {
    "X": 3, "Y": 2, "K": 2,
    "prep_equivalences": [[["0", "0", "1"], ["1/2", "1/2", "0"]]],
    "meas_equivalences": [],
}
metric = {"terms": [{"x": 0, "y": 0, "k": 0, "c": "1"}, {"x": 1, "y": 1, "k": 0, "c": "1"},
                    {"x": 2, "y": 0, "k": 1, "c": "1"}]}

with tempfile.TemporaryDirectory() as tmp:
    sc_path, m_path = Path(tmp, "three.json"), Path(tmp, "metric.json")
    sc_path.write_text(json.dumps(scenario))
    m_path.write_text(json.dumps(metric))
    sc, m = load_scenario(sc_path), load_metric(m_path)
    print(f"C  {max_contextual(sc, m).value:.6f}")
    print(f"NC {max_noncontextual(sc, m).value:.6f}")
    print(f"Q1 {upper_bound(build_unitary_relaxation(sc), m).value:.6f}")
    cmd = [sys.executable, "-m", "ctxwb", "bound", "--scenario", str(sc_path), "--metric", str(m_path), "--set", "nc"]
    print("cli:", subprocess.run(cmd, capture_output=True, text=True).stdout.strip())
