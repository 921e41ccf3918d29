import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ctxwb.polytope import (VertexEnumerationError, max_contextual, max_noncontextual, membership_nc,
                            response_vertices)
from ctxwb.scenario import (ZERO_METRIC, Behaviour, Scenario, build_632, build_mporac, build_porac,
                            evaluate_metric, mporac_meas_class, porac_metric, table1_metrics)
from random_scenarios import random_metric, random_scenario

TABLE1_C = (3, 3, 4.5, 3.5, 5, 5)
TABLE1_NC = (2.5, 2.5, 3, 3, 4, 4)


@pytest.mark.parametrize("i", range(6))
def test_table1_polytope_bounds(i):
    sc, metric = build_632(), table1_metrics()[i]
    c = max_contextual(sc, metric)
    nc = max_noncontextual(sc, metric)
    assert c.status == nc.status == "optimal"
    assert_allclose(c.value, TABLE1_C[i], atol=1e-7)
    assert_allclose(nc.value, TABLE1_NC[i], atol=1e-7)
    assert_allclose(evaluate_metric(metric, c.argument), c.value, atol=1e-7)
    assert_allclose(evaluate_metric(metric, nc.argument), nc.value, atol=1e-7)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_porac_noncontextual_value(n):
    assert_allclose(max_noncontextual(build_porac(n), porac_metric(n)).value, 0.5 * (1 + 1 / n), atol=1e-7)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_mporac_polytope_values(n):
    sc, m = build_mporac(n), porac_metric(n)
    assert_allclose(max_contextual(sc, m).value, 0.75, atol=1e-7)
    assert_allclose(max_noncontextual(sc, m).value, 0.5 * (1 + 1 / n), atol=1e-7)


def test_zero_metric_gives_zero():
    sc = build_632()
    res = max_contextual(sc, ZERO_METRIC)
    assert_allclose(res.value, 0.0, atol=1e-12)
    assert membership_nc(Behaviour.uniform(*sc.shape), sc).feasible


def test_contextual_argument_obeys_equivalences():
    sc = build_632()
    p = max_contextual(sc, table1_metrics()[2]).argument.p
    (prep,) = sc.prep_arrays()
    mixes = np.einsum("jx,xyk->jyk", prep, p)
    assert_allclose(mixes, np.broadcast_to(mixes[0], mixes.shape), atol=1e-7)
    (meas,) = sc.meas_arrays()
    effects = np.einsum("jyk,xyk->jx", meas, p)
    assert_allclose(effects[0], effects[1], atol=1e-7)


def test_vertices_without_measurement_equivalences_are_deterministic():
    sc = Scenario(3, 2, 2)
    xi = response_vertices(sc)
    assert len(xi) == 4
    assert set(np.unique(xi)) == {0.0, 1.0}
    assert_allclose(xi.sum(axis=2), 1.0)
    assert len(response_vertices(Scenario(2, 3, 3))) == 27


def _brute_force_vertices(sc: Scenario) -> set:
    """Vertices by fixing every possible zero pattern of the right size and
    keeping unique nonnegative solutions."""
    Y, K = sc.Y, sc.K
    N = Y * K
    rows, rhs = [], []
    for y in range(Y):
        r = np.zeros(N)
        r[y * K:(y + 1) * K] = 1
        rows.append(r)
        rhs.append(1.0)
    for cls in sc.meas_arrays():
        flat = cls.reshape(len(cls), N)
        for j in range(1, len(flat)):
            rows.append(flat[j] - flat[0])
            rhs.append(0.0)
    A, b = np.array(rows), np.array(rhs)
    free = N - np.linalg.matrix_rank(A)
    found = set()
    for zeros in itertools.combinations(range(N), free):
        Z = np.zeros((free, N))
        Z[np.arange(free), list(zeros)] = 1
        M = np.vstack([A, Z])
        if np.linalg.matrix_rank(M) < N:
            continue
        x = np.linalg.lstsq(M, np.concatenate([b, np.zeros(free)]), rcond=None)[0]
        if np.all(x > -1e-9) and np.allclose(M @ x, np.concatenate([b, np.zeros(free)])):
            found.add(tuple(np.round(x, 9) + 0.0))
    return found


@pytest.mark.parametrize("build", [lambda: build_mporac(2), lambda: build_mporac(3), build_632],
                         ids=["mporac2", "mporac3", "632"])
def test_vertices_match_brute_force(build):
    sc = build()
    ours = {tuple(np.round(v.ravel(), 9) + 0.0) for v in response_vertices(sc)}
    assert ours == _brute_force_vertices(sc)


def test_632_vertices_respect_the_equivalence_exactly():
    sc = build_632()
    for v in response_vertices(sc, exact=True):
        assert sum(v[y * 2] for y in range(3)) == sum(v[y * 2 + 1] for y in range(3))


def test_vertex_dimension_guard():
    sc = Scenario(2, 13, 2, (), [mporac_meas_class(13)])
    with pytest.raises(VertexEnumerationError, match="refused"):
        response_vertices(sc)


def test_nc_equals_c_without_preparation_equivalences():
    rng = np.random.default_rng(4)
    for _ in range(20):
        X, Y, K = int(rng.integers(2, 5)), int(rng.integers(1, 4)), int(rng.integers(2, 4))
        sc = random_scenario(rng, X, Y, K, V=0, W=int(rng.integers(0, 3)))
        m = random_metric(rng, sc.shape)
        c, nc = max_contextual(sc, m), max_noncontextual(sc, m)
        assert c.status == nc.status == "optimal"
        assert_allclose(nc.value, c.value, atol=1e-7)


def test_nc_equals_c_with_three_preparations():
    rng = np.random.default_rng(5)
    for _ in range(20):
        X, Y, K = int(rng.integers(2, 4)), int(rng.integers(1, 4)), int(rng.integers(2, 4))
        sc = random_scenario(rng, X, Y, K, V=int(rng.integers(1, 3)), W=int(rng.integers(0, 2)))
        m = random_metric(rng, sc.shape)
        c, nc = max_contextual(sc, m), max_noncontextual(sc, m)
        assert c.status == nc.status == "optimal"
        assert_allclose(nc.value, c.value, atol=1e-7)


def test_noncontextual_never_exceeds_contextual():
    rng = np.random.default_rng(7)
    for sc in (build_632(), build_porac(3), build_mporac(3)):
        for _ in range(5):
            m = random_metric(rng, sc.shape)
            assert max_noncontextual(sc, m).value <= max_contextual(sc, m).value + 1e-7


def test_noncontextual_model_reproduces_optimizer():
    sc, m = build_632(), table1_metrics()[4]
    res = max_noncontextual(sc, m)
    model = res.extra["model"]
    assert_allclose(model.behaviour(), res.argument.p, atol=1e-7)
    assert_allclose(model.epistemic.sum(axis=0), 1.0, atol=1e-7)
    (prep,) = sc.prep_arrays()
    pointwise = model.epistemic @ prep.T  # lambda x class member
    assert_allclose(pointwise, np.broadcast_to(pointwise[:, :1], pointwise.shape), atol=1e-7)


def test_membership_and_separation():
    sc, m = build_632(), table1_metrics()[2]
    inside = membership_nc(max_noncontextual(sc, m).argument, sc)
    assert inside.feasible and inside.model is not None
    outside = membership_nc(max_contextual(sc, m).argument, sc, metric=m)
    assert not outside.feasible
    assert outside.distance > 1e-3
    assert outside.metric_value > outside.metric_bound + 1e-6
    assert outside.separating_metric is not None
