import sys

import numpy as np
import pytest
from scipy import sparse

from iccert.lp import LinearProgram, read_lp, read_solution, solve_lp, write_lp, write_solution

INF = np.inf


def lp(c, A, b, lower, upper, names=None):
    names = names or [f"v{j}" for j in range(len(c))]
    return LinearProgram(np.array(c, float), sparse.csr_matrix(np.array(A, float)), np.array(b, float), np.array(lower, float), np.array(upper, float), names)


def delta_eta(rows, rhs):
    return lp([1, 1], rows, rhs, [-INF, 1e-3], [INF, INF], ["delta", "eta"])


@pytest.mark.parametrize("backend", ["simplex", "highs"])
def test_single_row(backend):
    res = solve_lp(delta_eta([[1, 0]], [1]), backend)
    assert res.status == "optimal"
    assert res.x[0] == pytest.approx(1) and res.x[1] == pytest.approx(1e-3)


@pytest.mark.parametrize("backend", ["simplex", "highs"])
def test_infeasible(backend):
    assert solve_lp(delta_eta([[1, 0], [-1, 0]], [1, 1]), backend).status == "infeasible"


@pytest.mark.parametrize("backend", ["simplex", "highs"])
def test_unbounded(backend):
    assert solve_lp(delta_eta([[0, 1]], [0]), backend).status == "unbounded"


def test_unknown_backend_is_a_status():
    res = solve_lp(delta_eta([[1, 0]], [1]), "nope")
    assert res.status == "solver-error"


def _random_lp(rng, m, n):
    A = rng.normal(size=(m, n))
    x0 = rng.uniform(-1, 1, n)
    b = A @ x0 - rng.uniform(0, 1, m)  # x0 is strictly feasible
    c = rng.normal(size=n)
    lower = np.where(rng.random(n) < 0.3, -INF, -2.0)
    upper = np.where(rng.random(n) < 0.3, INF, 2.0)
    lower = np.minimum(lower, x0)
    upper = np.maximum(upper, x0)
    return lp(c, A, b, lower, upper)


@pytest.mark.parametrize("seed", range(12))
def test_simplex_agrees_with_highs(seed):
    rng = np.random.default_rng(seed)
    prob = _random_lp(rng, int(rng.integers(3, 25)), int(rng.integers(2, 10)))
    a, b = solve_lp(prob, "simplex"), solve_lp(prob, "highs")
    assert a.status == b.status
    if a.status == "optimal":
        assert a.objective == pytest.approx(b.objective, rel=1e-7, abs=1e-7)
        assert prob.max_violation(a.x) <= 1e-7


def test_lp_file_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    prob = _random_lp(rng, 8, 5)
    path = tmp_path / "p.lp"
    write_lp(prob, path)
    back = read_lp(path)
    assert back.names == prob.names
    np.testing.assert_array_equal(back.c, prob.c)
    np.testing.assert_array_equal(back.A.toarray(), prob.A.toarray())
    np.testing.assert_array_equal(back.b, prob.b)
    np.testing.assert_array_equal(back.lower, prob.lower)
    np.testing.assert_array_equal(back.upper, prob.upper)
    write_lp(back, tmp_path / "q.lp")
    assert (tmp_path / "q.lp").read_text() == path.read_text()


def test_solution_file_round_trip(tmp_path):
    path = tmp_path / "s.txt"
    write_solution(path, "optimal", ["a", "b"], np.array([1.5, -2.0]))
    res = read_solution(path, ["a", "b"])
    assert res.status == "optimal" and res.x.tolist() == [1.5, -2.0]


def test_reference_external_solver(monkeypatch):
    monkeypatch.setenv("ICC_SOLVER", "reference")
    res = solve_lp(delta_eta([[1, 0]], [1]), "external")
    assert res.status == "optimal" and res.x[0] == pytest.approx(1)
    assert solve_lp(delta_eta([[1, 0], [-1, 0]], [1, 1]), "external").status == "infeasible"


def test_missing_external_solver(monkeypatch):
    monkeypatch.delenv("ICC_SOLVER", raising=False)
    assert solve_lp(delta_eta([[1, 0]], [1]), "external").status == "solver-error"
    broken = solve_lp(delta_eta([[1, 0]], [1]), "external", solver_path=sys.executable + "-missing")
    assert broken.status == "solver-error"


def test_shape_validation():
    with pytest.raises(ValueError):
        lp([1, 1], [[1, 0, 0]], [1], [0, 0], [1, 1])
    with pytest.raises(ValueError):
        lp([1], [[1]], [1], [2], [1])
