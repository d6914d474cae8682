import warnings

import numpy as np
import pytest

from iccert import load_config
from iccert.certificate import (
    Hyperparameters,
    IccLtl,
    IccPersistence,
    IccSafety,
    certificate_from_dict,
    certificate_to_dict,
    ibc_to_icc,
    load_certificate,
    ltl_residuals,
    persistence_residuals,
    residuals_for,
    safety_residuals,
    save_certificate,
)
from iccert.geometry import Box
from iccert.poly import DimensionError, Polynomial, monomial_basis, parse_polynomial
from iccert.system import System


def toy():
    return load_config("toy_contraction").system


@pytest.fixture(scope="module")
def lv():
    return load_config("lotka_volterra")


@pytest.fixture(scope="module")
def heat():
    return load_config("heat_transfer")


def _quiet_load(path):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return load_certificate(path)


def test_hyperparameter_validation():
    assert Hyperparameters(2, 0.01, 1.0).gamma == (1.0, 1.0, 1.0)
    for bad in [dict(eta=0.0), dict(gamma=-1.0), dict(rho1=0.0), dict(rho2=-2.0)]:
        args = dict(k=1, eta=0.1, gamma=1.0) | bad
        with pytest.raises(ValueError):
            Hyperparameters(**args)
    with pytest.raises(ValueError):
        Hyperparameters(1, 0.1, (1.0,))


def test_arity_checked():
    with pytest.raises(DimensionError):
        IccSafety(1, (Polynomial.zero(3),))


def test_k0_families_and_constant_certificate():
    S = toy()
    hp = Hyperparameters(0, 0.01, 1.0)
    res = safety_residuals(S, IccSafety(1, (Polynomial.constant(2, 1.0),)), hp)
    assert res.names == ["transition", "closure", "init[0]"]
    assert res["transition"].polynomial == Polynomial.constant(1, 1.0)
    assert res["init[0]"].polynomial == Polynomial.constant(2, -1.01)
    assert all(r.polynomial.arity == r.dimension for r in res)


def test_safety_families_for_k2():
    S = toy()
    hp = Hyperparameters(2, 0.01, (1.0, 0.5, 2.0))
    T = tuple(Polynomial.constant(2, 0.0) for _ in range(3))
    names = safety_residuals(S, IccSafety(1, T), hp).names
    assert names == ["transition", "chain[0]", "chain[1]", "closure", "init[0]", "init[1]", "init[2]"]


def test_residual_values_match_definition():
    S = toy()
    names = ["x1", "y1"]
    T0 = parse_polynomial("x1**2 - y1 + 0.5", names)
    T1 = parse_polynomial("x1*y1 + y1**2", names)
    hp = Hyperparameters(1, 0.05, (0.8, 1.5))
    res = safety_residuals(S, IccSafety(1, (T0, T1)), hp)
    x, y = 0.6, -0.3
    f = 0.5 * x
    assert res["transition"].polynomial.evaluate([x]) == pytest.approx(T0.evaluate([x, f]))
    assert res["chain[0]"].polynomial.evaluate([x, y]) == pytest.approx(T1.evaluate([x, y]) - 0.8 * T0.evaluate([f, y]))
    assert res["closure"].polynomial.evaluate([x, y]) == pytest.approx(T1.evaluate([x, y]) - 1.5 * T1.evaluate([f, y]))
    assert res["init[1]"].polynomial.evaluate([x, y]) == pytest.approx(-0.05 - T1.evaluate([x, y]))


def test_missing_sets_rejected(lv):
    S = toy()
    no_unsafe = System(1, S.state_set, S.initial_set, S.transitions)
    cert = IccSafety(1, (Polynomial.zero(2),))
    with pytest.raises(ValueError):
        safety_residuals(no_unsafe, cert, Hyperparameters(0, 0.01, 1.0))
    with pytest.raises(ValueError):
        persistence_residuals(S, IccPersistence(1, (Polynomial.zero(2),)), Hyperparameters(0, 0.01, 1.0))


def test_appendix_persistence_fixture(lv):
    cert, hp = _quiet_load(lv.certificate)
    assert (cert.k, cert.n, cert.basis.shape) == (2, 3, (210, 6))
    assert (hp.eta, hp.gamma, hp.rho1, hp.rho2) == (0.01, (1.0, 1.0, 1.0), 1.0, 1.0)
    res = residuals_for(lv.target, cert, hp)
    assert res.names == ["transition", "chain[0]", "chain[1]", "closure", "rank"]
    assert [r.dimension for r in res] == [3, 6, 6, 6, 9]


def test_rank_first_term_vanishes_at_rho1_one():
    S = load_config("lotka_volterra").system
    n = 3
    T = tuple(Polynomial.constant(2 * n, 2.0) for _ in range(2))
    one = persistence_residuals(S, IccPersistence(n, T), Hyperparameters(1, 0.01, 1.0, rho1=1.0))["rank"]
    half = persistence_residuals(S, IccPersistence(n, T), Hyperparameters(1, 0.01, 1.0, rho1=0.5))["rank"]
    assert len(one.spec.terms) == len(half.spec.terms) - 1
    assert all(t.scale != 0 for t in one.spec.terms)


def test_appendix_ltl_fixture_and_family_count(heat):
    cert, hp = _quiet_load(heat.certificate)
    assert isinstance(cert, IccLtl) and (cert.k, cert.states, cert.basis.shape[0]) == (2, 4, 35)
    assert (hp.eta, hp.rho1, hp.rho2) == (0.1, 0.5, 1.0)
    res = ltl_residuals(heat.product, cert, hp)
    edges = len(heat.nba.edges())
    # per edge: one transition, then chain and closure for every target state p
    ranks = len(heat.nba.initial) * len(heat.nba.accepting) ** 2
    assert len(res) == edges * (1 + (cert.k + 1) * cert.states) + ranks == 212
    assert [n for n in res.names if n.startswith("rank")] == ["rank[0,0,0]", "rank[0,0,3]", "rank[0,3,0]", "rank[0,3,3]"]
    assert "chain[1][b:0->1][p=2]" in res.names


def test_missing_ltl_entries_default_to_zero():
    with pytest.warns(UserWarning, match=r"\(0, 0, 1\)"):
        cert = IccLtl(1, 0, 2, {(0, 0, 0): Polynomial.constant(2, 1.0)})
    assert cert.function((0, 1, 1)).is_zero()
    with pytest.raises(ValueError):
        IccLtl(1, 0, 1, {(1, 0, 0): Polynomial.zero(2)})


def _random_cert(rng, kind):
    n = 2
    basis = monomial_basis(2 * n, 2)
    def poly():
        return Polynomial(2 * n, basis, rng.normal(size=len(basis)))
    if kind == "ltl":
        return IccLtl(n, 1, 2, {key: poly() for key in IccLtl(n, 1, 2, {(i, q, p): Polynomial.zero(4) for i in range(2) for q in range(2) for p in range(2)}).keys()}, basis)
    cls = IccSafety if kind == "safety" else IccPersistence
    return cls(n, (poly(), poly()), basis)


@pytest.mark.parametrize("kind", ["safety", "persistence", "ltl"])
def test_serialisation_round_trip(kind, tmp_path):
    rng = np.random.default_rng(5)
    cert = _random_cert(rng, kind)
    hp = Hyperparameters(1, 0.02, (1.0, 0.5), 0.7, 1.3)
    path = tmp_path / "cert.json"
    save_certificate(cert, path, hp)
    back, hp2 = load_certificate(path)
    assert hp2 == hp and back.kind == kind
    pts = rng.uniform(-3, 3, size=(100, 4))
    for key in cert.keys():
        a, b = cert.function(key).evaluate_many(pts), back.function(key).evaluate_many(pts)
        assert np.max(np.abs(a - b)) <= 1e-12


def test_basis_mismatch_rejected():
    data = certificate_to_dict(IccSafety(1, (parse_polynomial("x1*y1", ["x1", "y1"]),)))
    data["functions"][0]["coefficients"].append(1.0)
    with pytest.raises(DimensionError):
        certificate_from_dict(data)


def test_k_mismatch_between_certificate_and_hyperparameters():
    with pytest.raises(ValueError, match="k="):
        safety_residuals(toy(), IccSafety(1, (Polynomial.zero(2),)), Hyperparameters(1, 0.01, 1.0))


def test_single_barrier_case_formula():
    B0 = parse_polynomial("x1 - 0.5", ["x1"])
    icc = ibc_to_icc([B0], 0.1)
    assert icc.k == 0
    x = np.array([[0.7], [0.2], [0.2]])
    y = np.array([[0.9], [0.3], [0.9]])
    # B0(x) > 0, B0(y) <= 0, neither
    np.testing.assert_array_equal(icc.evaluate(0, x, y), [0.0, 0.0, -0.1])


def test_positive_first_barrier_zeroes_every_function():
    bars = [lambda p: p[:, 0] - 0.5, lambda p: p[:, 0] - 0.8, lambda p: p[:, 0] - 0.9]
    icc = ibc_to_icc(bars, 0.2)
    rng = np.random.default_rng(0)
    x = rng.uniform(0.55, 0.8, (50, 1))
    y = rng.uniform(-1, 1, (50, 1))
    hit = (x[:, 0] > 0.5) & (x[:, 0] > 0.8) | (x[:, 0] > 0.5) & (y[:, 0] <= 0.9)
    for i in range(icc.k + 1):
        assert np.all(icc.evaluate(i, x, y)[hit] == 0)


def test_ibc_rejects_empty():
    with pytest.raises(ValueError):
        ibc_to_icc([], 0.1)
