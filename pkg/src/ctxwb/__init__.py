"""Bounds on contextual, noncontextual and quantum behaviours in
prepare-and-measure scenarios with operational equivalences."""

from .multiparty import (TripartiteScenario, binary_entropy, build_bipartite_relaxation, build_tripartite_porac,
                         key_rate_curve, monogamy_curve, monogamy_point, ns_monogamy_bound)
from .polytope import max_contextual, max_noncontextual, membership_nc, response_vertices
from .relax import (MomentProblem, RelaxBound, build_projective_relaxation, build_pure_state_relaxation,
                    build_relaxation, build_unitary_relaxation, membership_q, unitary_from_effect, upper_bound)
from .scenario import (Behaviour, Scenario, ScenarioError, SuccessMetric, build_632, build_mporac,
                       build_mporac23, build_porac, build_prop7, build_simplest_family, evaluate_metric,
                       load_metric, load_scenario, validate)
from .seesaw import QuantumRealization, behaviour_of, naimark_check, project_to_equivalences, seesaw
from .solver import ConicProgram, Solution, SolverOptions, solve

__version__ = "0.1.0"

__all__ = [
    "Behaviour", "ConicProgram", "MomentProblem", "QuantumRealization", "RelaxBound", "Scenario",
    "ScenarioError", "Solution", "SolverOptions", "SuccessMetric", "TripartiteScenario", "behaviour_of",
    "binary_entropy", "build_632", "build_bipartite_relaxation", "build_mporac", "build_mporac23", "build_porac",
    "build_projective_relaxation", "build_prop7", "build_pure_state_relaxation", "build_relaxation",
    "build_simplest_family", "build_tripartite_porac", "build_unitary_relaxation", "evaluate_metric",
    "key_rate_curve", "load_metric", "load_scenario", "max_contextual", "max_noncontextual", "membership_nc",
    "membership_q", "monogamy_curve", "monogamy_point", "naimark_check", "ns_monogamy_bound",
    "project_to_equivalences", "response_vertices", "seesaw", "solve", "unitary_from_effect", "upper_bound",
    "validate",
]
