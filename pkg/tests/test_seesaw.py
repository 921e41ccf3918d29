import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from ctxwb.scenario import build_632, build_mporac, build_porac, evaluate_metric, porac_metric, table1_metrics
from ctxwb.seesaw import (QuantumRealization, RealizationError, behaviour_of, naimark_check,
                          project_to_equivalences, random_povm, random_state, seesaw)

TABLE1_Q = (3.0, 2.8660254, 3.9209518, 3.3660254, 4.6889010, 4.6457513)


@pytest.mark.parametrize("i", [1, 2, 4])
def test_632_qubit_values(i):
    res = seesaw(build_632(), table1_metrics()[i], dim=2, restarts=20, seed=0)
    assert_allclose(res.value, TABLE1_Q[i], atol=1e-5)
    res.realization.check(build_632())
    assert_allclose(evaluate_metric(table1_metrics()[i], behaviour_of(res.realization)), res.value, atol=1e-7)


def test_porac3_qubit_value():
    res = seesaw(build_porac(3), porac_metric(3), dim=2, restarts=5, seed=1)
    assert_allclose(res.value, 0.5 * (1 + 1 / np.sqrt(3)), atol=1e-5)


def test_seesaw_is_deterministic_for_a_seed():
    sc, m = build_632(), table1_metrics()[1]
    a = seesaw(sc, m, dim=2, restarts=3, seed=42)
    b = seesaw(sc, m, dim=2, restarts=3, seed=42)
    assert a.value == b.value
    assert a.traces == b.traces
    assert a.best_restart == b.best_restart


def test_traces_never_decrease():
    res = seesaw(build_mporac(3), porac_metric(3), dim=2, restarts=4, seed=3)
    for trace in res.traces:
        assert len(trace) >= 1
        assert np.all(np.diff(trace) >= 0)
    assert res.value == max(t[-1] for t in res.traces if t)


def test_seesaw_argument_checks():
    with pytest.raises(ValueError):
        seesaw(build_632(), table1_metrics()[0], dim=1)
    with pytest.raises(ValueError):
        seesaw(build_632(), table1_metrics()[0], restarts=0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 3))
def test_projection_is_idempotent(seed, dim):
    sc = build_632()
    rng = np.random.default_rng(seed)
    states = [random_state(dim, rng) for _ in range(sc.X)]
    povms = [random_povm(dim, sc.K, rng) for _ in range(sc.Y)]
    once = project_to_equivalences(states, povms, sc)
    assert once.violations(sc) == []
    twice = project_to_equivalences(once.states, once.povms, sc)
    for a, b in zip(once.states, twice.states):
        assert_allclose(a, b, atol=1e-7)
    for pa, pb in zip(once.povms, twice.povms):
        for a, b in zip(pa, pb):
            assert_allclose(a, b, atol=1e-7)


def test_naimark_dilation_keeps_the_behaviour():
    sc, m = build_porac(2), porac_metric(2)
    real = seesaw(sc, m, dim=2, restarts=2, seed=0, max_iter=3).realization
    big = naimark_check(real, sc)
    assert big.dim == 4
    big.check(sc)
    assert_allclose(big.probabilities(), real.probabilities(), atol=1e-9)
    for povm in big.povms:
        for P in povm:
            assert_allclose(P @ P, P, atol=1e-9)


def test_naimark_refuses_measurement_equivalences():
    sc = build_mporac(2)
    real = seesaw(sc, porac_metric(2), dim=2, restarts=1, seed=0, max_iter=2).realization
    with pytest.raises(ValueError, match="measurement equivalences"):
        naimark_check(real, sc)


def test_realization_round_trip(tmp_path):
    sc = build_632()
    real = seesaw(sc, table1_metrics()[0], dim=2, restarts=1, seed=5, max_iter=5).realization
    path = tmp_path / "r.json"
    real.dump(path)
    again = QuantumRealization.load(path)
    assert again.dim == real.dim
    assert_allclose(again.probabilities(), real.probabilities(), rtol=0, atol=0)


def test_realization_invariants_are_enforced():
    with pytest.raises(RealizationError):
        QuantumRealization(2, [np.eye(3) / 3], [[np.eye(2), np.zeros((2, 2))]])
    bad = QuantumRealization(2, [np.diag([1.2, -0.2])], [[np.diag([1.0, 0.0]), np.diag([0.0, 0.5])]])
    messages = bad.violations()
    assert any("not PSD" in s for s in messages)
    assert any("identity" in s for s in messages)
    with pytest.raises(RealizationError):
        bad.check()
