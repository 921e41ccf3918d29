import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from ctxwb.scenario import (Behaviour, Scenario, ScenarioError, SuccessMetric, appendix_metrics, build_632,
                            build_mporac, build_mporac23, build_porac, build_prop7, build_simplest_family,
                            evaluate_metric, load_metric, load_scenario, ncycle_metric, ncycle_scenario,
                            porac_metric, save_metric, save_scenario, table1_metrics, to_fraction, validate)


@pytest.mark.parametrize("build", [build_632, lambda: build_porac(3), lambda: build_mporac(4), build_mporac23,
                                   build_prop7, lambda: build_simplest_family("1/3"),
                                   lambda: ncycle_scenario(5), lambda: ncycle_scenario(7)])
def test_builtin_scenarios_validate(build):
    assert validate(build()).ok


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_porac_class_count(n):
    sc = build_porac(n)
    assert sc.X == 2 ** n and sc.Y == n and sc.K == 2
    assert sc.V == 2 ** n - n - 1
    assert build_mporac(n).W == 1


def test_simplest_half_is_porac2():
    a = build_simplest_family(Fraction(1, 2))
    b = build_porac(2)
    assert a.prep_equivalences == b.prep_equivalences
    assert a.shape == b.shape


def test_simplest_rejects_alpha_outside_unit_interval():
    with pytest.raises(ScenarioError):
        build_simplest_family(1.5)


def test_parity_guard():
    with pytest.raises(ScenarioError):
        build_porac(1)
    with pytest.raises(ScenarioError):
        build_porac(9)


def test_validate_reports_every_violation():
    bad = Scenario(3, 1, 2, [[(1, 0, 0), (1, 0, 0)], [(Fraction(1, 2), Fraction(1, 3), 0)]])
    errors = validate(bad).errors
    assert any("coincide" in e for e in errors)
    assert any("sums to" in e for e in errors)
    assert any(">= 2 distributions" in e for e in errors)


def test_from_dict_rejects_bad_input():
    with pytest.raises(ScenarioError, match="missing field"):
        Scenario.from_dict({"X": 2, "Y": 1})
    with pytest.raises(ScenarioError):
        Scenario.from_dict({"X": 2, "Y": 1, "K": 2, "prep_equivalences": [[[1, 0], [0, 1, 0]]]})


def test_load_reports_json_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"X": 2,\n "Y": }', encoding="utf-8")
    with pytest.raises(ScenarioError, match="line 2"):
        load_scenario(path)


def test_to_fraction_forms():
    assert to_fraction("1/3") == Fraction(1, 3)
    assert to_fraction(0.25) == Fraction(1, 4)
    assert to_fraction(np.int64(2)) == 2
    for bad in ("one", True, float("nan"), None):
        with pytest.raises(ScenarioError):
            to_fraction(bad)


@pytest.mark.parametrize("build", [build_632, lambda: build_mporac(3), build_mporac23, lambda: ncycle_scenario(5)])
def test_scenario_file_round_trip(build, tmp_path):
    sc = build()
    path = tmp_path / "s.json"
    save_scenario(sc, path)
    again = load_scenario(path)
    assert again == sc
    assert json.loads(path.read_text())["X"] == sc.X


@pytest.mark.parametrize("metric", appendix_metrics() + [porac_metric(3), ncycle_metric(7)],
                         ids=lambda m: m.name)
def test_metric_file_round_trip(metric, tmp_path):
    path = tmp_path / "m.json"
    save_metric(metric, path)
    assert load_metric(path) == metric


def test_metric_rejects_duplicates_and_out_of_range():
    with pytest.raises(ScenarioError):
        SuccessMetric(((0, 0, 0, 1), (0, 0, 0, 2)))
    with pytest.raises(ScenarioError):
        SuccessMetric(((6, 0, 0, 1),)).check((6, 3, 2))


def test_table1_metric_coefficients():
    m3 = table1_metrics()[2]
    c = m3.to_array((6, 3, 2))
    # p00 - p02 - 2 p04 - 2 p11 + 2 p12 + 2 p24, with p_yx = p(0|x,y)
    expected = {(0, 0): 1, (2, 0): -1, (4, 0): -2, (1, 1): -2, (2, 1): 2, (4, 2): 2}
    for (x, y), v in expected.items():
        assert c[x, y, 0] == v
    assert np.count_nonzero(c) == len(expected)
    assert not c[:, :, 1].any()


def test_porac_metric_on_perfect_decoder():
    n = 3
    p = np.zeros((8, n, 2))
    for x in range(8):
        for y in range(n):
            p[x, y, (x >> (n - 1 - y)) & 1] = 1.0
    assert_allclose(evaluate_metric(porac_metric(n), Behaviour(p)), 1.0)
    assert_allclose(evaluate_metric(porac_metric(n), Behaviour.uniform(8, n, 2)), 0.5)


def test_behaviour_checks_normalization():
    with pytest.raises(ScenarioError, match="sums to"):
        Behaviour(np.full((2, 1, 2), 0.6))
    with pytest.raises(ScenarioError):
        Behaviour(np.full((2, 2), 0.5))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(2, 3), st.integers(0, 2 ** 32 - 1))
def test_behaviour_csv_round_trip(X, Y, K, seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(K), size=(X, Y))
    b = Behaviour(p)
    again = Behaviour.from_csv(b.to_csv())
    assert_allclose(again.p, b.p, rtol=0, atol=0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_evaluate_metric_is_linear(seed):
    rng = np.random.default_rng(seed)
    sc = build_632()
    metric = table1_metrics()[seed % 6]
    p, q = (Behaviour(rng.dirichlet(np.ones(2), size=(6, 3))) for _ in range(2))
    t = rng.uniform()
    mixed = Behaviour(t * p.p + (1 - t) * q.p)
    assert_allclose(evaluate_metric(metric, mixed),
                    t * evaluate_metric(metric, p) + (1 - t) * evaluate_metric(metric, q), atol=1e-12)
    assert metric.to_array(sc.shape).shape == sc.shape


def test_632_classes_are_what_the_docstring_says():
    sc = build_632()
    (prep,) = sc.prep_arrays()
    assert_allclose(prep, [[.5, .5, 0, 0, 0, 0], [0, 0, .5, .5, 0, 0], [0, 0, 0, 0, .5, .5]])
    (meas,) = sc.meas_arrays()
    assert_allclose(meas[0, :, 0], [1 / 3] * 3)
    assert_allclose(meas[1, :, 1], [1 / 3] * 3)


def test_mporac23_hides_both_parities():
    sc = build_mporac23()
    assert sc.V == 2 and sc.W == 1
    for cls in sc.prep_arrays():
        assert len(cls) == 3
        assert_allclose(cls.sum(axis=0), np.full(9, 1 / 3))


def test_ncycle_files_carry_their_metric():
    for n in (5, 7):
        sc, m = ncycle_scenario(n), ncycle_metric(n)
        m.check(sc.shape)
        assert sc.shape == (2 + 3 * n, n, 3)
        # the last member of the one class is the target mixed with its complement
        (cls,) = sc.prep_arrays()
        assert len(cls) == n + 1
        assert_allclose(cls[-1][:2], [1 / 3, 2 / 3])
        assert not cls[-1][2:].any()
