import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from ctxwb.solver import (ConicProgram, SizeLimitError, SolverError, SolverOptions, embed_hermitian, solve,
                          with_options)


def test_lp_max_x_le_one():
    prog = ConicProgram("max")
    b = prog.add_block("free", 1)
    prog.add_constraint({(b, 0): 1.0}, "<=", 1.0)
    prog.set_objective({(b, 0): 1.0})
    sol = solve(prog)
    assert sol.optimal and sol.backend == "highs"
    assert_allclose(sol.value, 1.0, atol=1e-9)


def test_lp_infeasible_and_unbounded():
    prog = ConicProgram("max")
    b = prog.add_block("nonneg", 1)
    prog.add_constraint({(b, 0): 1.0}, "<=", -1.0)
    prog.set_objective({(b, 0): 1.0})
    sol = solve(prog)
    assert sol.status == "infeasible"
    assert sol.ray is not None

    prog = ConicProgram("max")
    b = prog.add_block("nonneg", 1)
    prog.set_objective({(b, 0): 1.0})
    assert solve(prog).status == "unbounded"


def _correlation_program(kind="sym"):
    # max <A1 B1> + <A1 B2> + <A2 B1> - <A2 B2> over 2x2 correlation Gram
    # matrices: a 4x4 PSD block with unit diagonal; optimum 2 sqrt 2.
    prog = ConicProgram("max")
    G = prog.add_block(kind, 4)
    for i in range(4):
        prog.add_constraint({(G, i, i, "re"): 1.0}, "==", 1.0)
    prog.set_objective({(G, 0, 2, "re"): 1.0, (G, 0, 3, "re"): 1.0, (G, 1, 2, "re"): 1.0, (G, 1, 3, "re"): -1.0})
    return prog


@pytest.mark.parametrize("kind", ["sym", "herm"])
def test_correlation_sdp(kind):
    sol = solve(_correlation_program(kind))
    assert sol.optimal and sol.backend == "clarabel"
    assert_allclose(sol.value, 2 * np.sqrt(2), atol=1e-7)
    assert np.linalg.eigvalsh(sol.primal[0]).min() > -1e-7


def test_two_by_two_sdp_value_two():
    # max X01 + X10 with unit diagonal: the all-ones matrix gives 2
    prog = ConicProgram("max")
    X = prog.add_block("sym", 2)
    prog.add_constraint({(X, 0, 0): 1.0}, "==", 1.0)
    prog.add_constraint({(X, 1, 1): 1.0}, "==", 1.0)
    prog.set_objective({(X, 0, 1): 1.0, (X, 1, 0): 1.0})
    assert_allclose(solve(prog).value, 2.0, atol=1e-7)


def test_min_trace_with_fixed_entry():
    # min tr X subject to X01 = 1/2 and X PSD: X = [[1/2, 1/2],[1/2, 1/2]], value 1
    prog = ConicProgram("min")
    X = prog.add_block("sym", 2)
    prog.add_constraint({(X, 0, 1): 1.0}, "==", 0.5)
    prog.set_objective({(X, 0, 0): 1.0, (X, 1, 1): 1.0})
    sol = solve(prog)
    assert_allclose(sol.value, 1.0, atol=1e-7)


def test_hermitian_block_imaginary_entries():
    # max Im H01 with unit diagonal: H = [[1, i],[-i, 1]]
    prog = ConicProgram("max")
    H = prog.add_block("herm", 2)
    prog.add_constraint({(H, 0, 0, "re"): 1.0}, "==", 1.0)
    prog.add_constraint({(H, 1, 1, "re"): 1.0}, "==", 1.0)
    prog.set_objective({(H, 0, 1, "im"): 1.0})
    sol = solve(prog)
    assert_allclose(sol.value, 1.0, atol=1e-7)
    assert_allclose(sol.primal[H], [[1, 1j], [-1j, 1]], atol=1e-6)


def test_lmi_over_free_blocks():
    # A - B PSD with A, B free 2x2: max B00 subject to A = I gives 1
    prog = ConicProgram("max")
    A = prog.add_block("symfree", 2)
    B = prog.add_block("symfree", 2)
    prog.add_lmi([(A, 1.0), (B, -1.0)])
    for i in range(2):
        for j in range(i, 2):
            prog.add_constraint({(A, i, j): 1.0}, "==", float(i == j))
    prog.set_objective({(B, 0, 0): 1.0})
    assert_allclose(solve(prog).value, 1.0, atol=1e-7)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2 ** 32 - 1))
def test_hermitian_embedding_preserves_psd(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    H = A @ A.conj().T - rng.uniform(0, 2) * np.trace(A @ A.conj().T).real / n * np.eye(n)
    emb = embed_hermitian(n)
    E = emb.embed(H)
    assert_allclose(E, E.T, atol=1e-12)
    lam_h = np.linalg.eigvalsh(H)
    lam_e = np.linalg.eigvalsh(E)
    # each eigenvalue appears twice in the embedding
    assert_allclose(np.sort(np.repeat(lam_h, 2)), lam_e, atol=1e-9)
    assert (lam_h.min() >= -1e-9) == (lam_e.min() >= -1e-9)
    assert_allclose(emb.extract(E), H, atol=1e-12)
    C = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    C = C + C.conj().T
    assert_allclose(np.trace(C @ H).real, np.trace(emb.embed(C) @ E) / 2, atol=1e-9)


def test_dump_load_round_trip(tmp_path):
    prog = _correlation_program("herm")
    path = tmp_path / "p.json"
    prog.dump(path)
    again = ConicProgram.load(path)
    assert again.to_dict() == prog.to_dict()
    assert_allclose(solve(again).value, solve(prog).value, atol=1e-9)


def test_solve_is_deterministic():
    a = solve(_correlation_program())
    b = solve(_correlation_program())
    assert a.value == b.value
    assert_allclose(a.primal[0], b.primal[0], rtol=0, atol=0)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2 ** 32 - 1))
def test_weak_duality_on_random_sdps(n, seed):
    # max <C, X> s.t. tr X = 1, X PSD. Primal feasible points never beat the
    # value, the dual bound never falls below it, and the optimum is lambda_max(C).
    rng = np.random.default_rng(seed)
    C = rng.normal(size=(n, n))
    C = (C + C.T) / 2
    prog = ConicProgram("max")
    X = prog.add_block("sym", n)
    prog.add_constraint({(X, i, i): 1.0 for i in range(n)}, "==", 1.0)
    prog.set_objective({(X, i, j): C[i, j] * (1 if i == j else 2) for i in range(n) for j in range(i, n)})
    sol = solve(prog)
    assert sol.optimal
    assert sol.dual_bound >= sol.value - 1e-7
    v = rng.normal(size=n)
    v /= np.linalg.norm(v)
    assert v @ C @ v <= sol.value + 1e-7
    assert_allclose(sol.value, np.linalg.eigvalsh(C).max(), atol=1e-6)


def test_backend_selection_and_errors(monkeypatch):
    with pytest.raises(SolverError):
        solve(_correlation_program(), SolverOptions(backend="highs"))
    with pytest.raises(SolverError):
        SolverOptions(backend="cplex").resolved_backend()
    monkeypatch.setenv("CTXWB_SOLVER", "clarabel")
    prog = ConicProgram("max")
    b = prog.add_block("free", 1)
    prog.add_constraint({(b, 0): 1.0}, "<=", 1.0)
    prog.set_objective({(b, 0): 1.0})
    assert solve(prog).backend == "clarabel"


def test_size_guard():
    with pytest.raises(SizeLimitError):
        solve(_correlation_program(), with_options(None, max_psd_dim=3))


def test_declaration_errors():
    prog = ConicProgram()
    b = prog.add_block("nonneg", 2)
    with pytest.raises(IndexError):
        prog.add_constraint({(b, 5): 1.0}, "<=", 1.0)
    with pytest.raises(ValueError):
        prog.add_constraint({}, "==", 1.0)
    with pytest.raises(ValueError):
        prog.set_objective({(b, 0): 1.0}, quadratic={(b, 0): 1.0})
    with pytest.raises(ValueError):
        ConicProgram("maximize")


@pytest.mark.parametrize("backend", ["highs", "clarabel"])
def test_inequality_duals_agree_across_backends(backend):
    # max x + 2y s.t. x <= 1, y <= 1, x + y == 2 (redundant copy dropped in presolve)
    prog = ConicProgram("max")
    b = prog.add_block("free", 2)
    prog.add_constraint({(b, 0): 1.0, (b, 1): 1.0}, "==", 2.0)
    prog.add_constraint({(b, 0): 2.0, (b, 1): 2.0}, "==", 4.0)
    prog.add_constraint({(b, 0): 1.0}, "<=", 1.0)
    prog.add_constraint({(b, 1): 1.0}, "<=", 1.0)
    prog.set_objective({(b, 0): 1.0, (b, 1): 2.0})
    sol = solve(prog, SolverOptions(backend=backend))
    assert_allclose(sol.value, 3.0, atol=1e-7)
    assert sol.ineq_duals.shape == (2,)
    assert np.all(sol.ineq_duals > -1e-7)
    # the equality row absorbs a common shift, so only the difference is pinned
    assert_allclose(sol.ineq_duals[1] - sol.ineq_duals[0], 1.0, atol=1e-6)
