import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from ctxwb.polytope import max_contextual
from ctxwb.relax import (adjoint, build_projective_relaxation, build_pure_state_relaxation, build_relaxation,
                         build_unitary_relaxation, membership_q, reduce_word, unitary_from_effect, upper_bound)
from ctxwb.scenario import (Behaviour, appendix_metrics, build_632, build_mporac, build_porac, build_prop7,
                            porac_metric, table1_metrics)
from ctxwb.seesaw import behaviour_of, seesaw
from ctxwb.solver import ConicProgram, solve
from random_scenarios import random_metric

TABLE1_Q = (3.0, 2.8660254, 3.9209518, 3.3660254, 4.6889010, 4.6457513)


def _random_effect(rng, d=4):
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    H = A + A.conj().T
    lam, V = np.linalg.eigh(H)
    lam = rng.uniform(0, 1, size=d)
    lam[rng.integers(d)] = rng.choice([0.0, 1.0])  # an eigenvalue on the boundary
    return (V * lam) @ V.conj().T


def test_unitary_reconstruction_on_random_effects():
    rng = np.random.default_rng(1)
    eye = np.eye(4)
    for _ in range(50):
        M = _random_effect(rng)
        U = unitary_from_effect(M)
        assert np.max(np.abs(U @ U.conj().T - eye)) <= 1e-10
        assert np.max(np.abs(eye / 2 + (U + U.conj().T) / 4 - M)) <= 1e-10


def test_unitary_reconstruction_rejects_non_effects():
    with pytest.raises(ValueError, match="Hermitian"):
        unitary_from_effect(np.array([[0.5, 1.0], [0.0, 0.5]]))
    with pytest.raises(ValueError, match="outside"):
        unitary_from_effect(np.diag([1.5, 0.0]))


def test_word_rules():
    u = ("U", 0, 0)
    v = ("V", 0, 0)
    assert adjoint((u, ("P", 1, 0))) == (("P", 1, 0), v)
    assert reduce_word((u, v), "unitary") == ()
    assert reduce_word((("P", 0, 0), ("P", 0, 0)), "projective") == (("P", 0, 0),)
    # two outcomes of one measurement are orthogonal projectors
    assert reduce_word((("P", 0, 0), ("P", 0, 1)), "projective") is None


def test_moment_matrix_sizes():
    sc = build_632()
    assert build_unitary_relaxation(sc).size == 1 + 2 * sc.Y * (sc.K - 1)
    assert build_projective_relaxation(sc, 1).size == 1 + sc.Y
    assert build_projective_relaxation(sc, 2).size == 1 + sc.Y + sc.Y * (sc.Y - 1)
    assert build_pure_state_relaxation(sc).size == 7 + sc.X
    # one block per direction of the preparation null space
    assert len(build_unitary_relaxation(sc).blocks) == sc.X - 2


@pytest.fixture(scope="module")
def unitary_632():
    return build_unitary_relaxation(build_632())


@pytest.mark.parametrize("i", range(6))
def test_table1_unitary_bounds(unitary_632, i):
    res = upper_bound(unitary_632, table1_metrics()[i])
    assert res.status == "optimal"
    assert_allclose(res.value, TABLE1_Q[i], atol=1e-5)
    assert res.dual_bound >= res.value - 1e-6
    for G in res.moments:
        assert np.linalg.eigvalsh(G).min() > -1e-7


def test_tutorial_identification_reproduces_the_seventh_metric():
    prob = build_unitary_relaxation(build_632(), identification="tutorial")
    assert_allclose(upper_bound(prob, appendix_metrics()[6]).value, 3.464101523755184, atol=1e-5)


def test_identification_is_checked():
    with pytest.raises(ValueError):
        build_unitary_relaxation(build_632(), identification="matlab")
    with pytest.raises(ValueError):
        build_relaxation(build_632(), "mixed")


def test_real_and_complex_moments_agree():
    sc = build_632()
    real = build_unitary_relaxation(sc)
    cplx = build_unitary_relaxation(sc, complex_moments=True)
    for m in appendix_metrics():
        assert_allclose(upper_bound(cplx, m).value, upper_bound(real, m).value, atol=2e-6)


@pytest.mark.parametrize("n", [2, 3])
def test_porac_unitary_equals_projective(n):
    sc, m = build_porac(n), porac_metric(n)
    q1 = upper_bound(build_unitary_relaxation(sc), m).value
    qpi = upper_bound(build_projective_relaxation(sc), m).value
    expected = 0.5 * (1 + 1 / np.sqrt(n))
    assert_allclose(q1, expected, atol=1e-5)
    assert_allclose(qpi, expected, atol=1e-5)


@pytest.mark.parametrize("n,value", [(2, 0.75), (3, 0.75)])
def test_mporac_unitary_bound(n, value):
    assert_allclose(upper_bound(build_unitary_relaxation(build_mporac(n)), porac_metric(n)).value, value,
                    atol=1e-5)


def test_projective_level_two_never_exceeds_level_one():
    sc = build_632()
    p1, p2 = build_projective_relaxation(sc, 1), build_projective_relaxation(sc, 2)
    rng = np.random.default_rng(10)
    for _ in range(10):
        m = random_metric(rng, sc.shape)
        v1, v2 = upper_bound(p1, m), upper_bound(p2, m)
        assert v1.status == v2.status == "optimal"
        assert v2.value <= v1.value + 1e-6


def test_pure_state_bound_is_tighter():
    rng = np.random.default_rng(11)
    for sc in (build_prop7(), build_porac(2)):
        unitary, pure = build_unitary_relaxation(sc), build_pure_state_relaxation(sc)
        for _ in range(3):
            m = random_metric(rng, sc.shape)
            assert upper_bound(pure, m).value <= upper_bound(unitary, m).value + 1e-6


def test_prop7_pure_state_gap():
    sc, m = build_prop7(), porac_metric(2)
    assert_allclose(upper_bound(build_unitary_relaxation(sc), m).value, 0.875, atol=1e-5)
    assert upper_bound(build_pure_state_relaxation(sc), m).value <= 0.75 + 1e-5


def test_bound_dominates_seesaw_and_extracts_a_behaviour(unitary_632):
    sc, m = build_632(), table1_metrics()[1]
    res = upper_bound(unitary_632, m)
    low = seesaw(sc, m, dim=2, restarts=3, seed=2)
    assert low.value <= res.value + 1e-6
    p = Behaviour(np.clip(res.behaviour, 0, 1))
    assert_allclose(float(np.sum(m.to_array(sc.shape) * p.p)), res.value, atol=1e-6)


def test_quantum_membership(unitary_632):
    sc, m = build_632(), table1_metrics()[1]
    realized = seesaw(sc, m, dim=2, restarts=2, seed=0).realization
    inside = membership_q(behaviour_of(realized, sc), sc, problem=unitary_632)
    assert inside.feasible and inside.distance <= 1e-6
    outside = membership_q(max_contextual(sc, m).argument, sc, problem=unitary_632)
    assert not outside.feasible and outside.distance > 1e-3


def test_relaxation_dump_round_trip(tmp_path, unitary_632):
    path = tmp_path / "relax.json"
    unitary_632.dump(path)
    data = json.loads(path.read_text())
    assert data["variant"] == "unitary" and len(data["words"]) == unitary_632.size
    assert len(data["extraction"]) == 6 * 3 * 2
    prog = ConicProgram.from_dict(data["program"])
    # rebuild the metric objective from the extraction table
    m = table1_metrics()[3]
    c = m.to_array((6, 3, 2))
    terms, const = {}, 0.0
    for row in data["extraction"]:
        w = c[row["x"], row["y"], row["k"]]
        if not w:
            continue
        const += w * row["constant"]
        for b, i, j, part, v in row["terms"]:
            terms[(b, i, j, part)] = terms.get((b, i, j, part), 0.0) + w * v
    prog.set_objective(terms, const, "max")
    assert_allclose(solve(prog).value, TABLE1_Q[3], atol=1e-5)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_relaxation_bounds_every_quantum_realization(seed):
    # any qubit realization obeying the equivalences lies in the relaxation
    sc, m = build_porac(2), porac_metric(2)
    realized = seesaw(sc, m, dim=2, restarts=1, seed=seed, max_iter=2).realization
    res = membership_q(behaviour_of(realized, sc), sc, "unitary")
    assert res.feasible
