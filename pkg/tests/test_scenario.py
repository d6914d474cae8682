import warnings

import numpy as np
import pytest
from sklearn.base import clone

from iccert import load_config
from iccert.certificate import Hyperparameters, residuals_for, safety_residuals
from iccert.checker import SAMPLE, SOUND, check
from iccert.lp import read_lp
from iccert.scenario import (
    LabelAlignmentError,
    ScenarioSynthesizer,
    Template,
    build_sp,
    plan_sp,
    reconstruct,
    search_multipliers,
    solve,
    synthesize,
)


@pytest.fixture(scope="module")
def toy():
    return load_config("toy_contraction").system


@pytest.fixture(scope="module")
def drift():
    return load_config("toy_drift").system


def hp0(k=0, gamma=1.0):
    return Hyperparameters(k, 1e-3, gamma)


def test_toy_program_shape(toy):
    sp = build_sp(toy, Template.of_degree(1, 0, 2), hp0(), 0.01, "safety")
    assert sp.template.size == 6
    assert sp.lp.names == [f"c0_{j}" for j in range(6)] + ["delta", "eta"]
    assert sp.shape[1] == 8
    assert (sp.delta_index, sp.eta_index) == (6, 7)
    sp1 = build_sp(toy, Template.of_degree(1, 1, 2), hp0(1), 0.01, "safety")
    assert sp1.template.size == 12 and sp1.shape[1] == 14


def test_row_count_matches_sample_tuples(toy):
    plan = plan_sp(toy, Template.of_degree(1, 0, 2), hp0(), 0.05, "safety")
    sp = build_sp(toy, Template.of_degree(1, 0, 2), hp0(), 0.05, "safety")
    assert {f.name: f.samples for f in sp.families} == plan
    assert plan == {"transition": 20, "closure": 400, "init[0]": 2}
    assert sp.shape[0] == sum(f.rows for f in sp.families)
    assert all(f.rows <= f.samples for f in sp.families)


def test_duplicate_rows_are_merged():
    from iccert.geometry import Box
    from iccert.poly import parse_polynomial
    from iccert.system import System

    # f(x) = 0 makes every transition row T(x, 0) over a degree-0-in-x template identical
    S = System(1, Box([-1], [1]), Box([-0.1], [0.1]), ((parse_polynomial("0*x1", ["x1"]),),), unsafe_set=Box([0.8], [1]))
    tpl = Template(1, 0, np.array([[0, 0], [0, 1]]))
    sp = build_sp(S, tpl, hp0(), 0.1, "safety")
    fam = sp.family("transition")
    assert fam.samples == 10 and fam.rows == 1 and fam.kept.tolist() == [0]


def test_reconstruction_matches_residuals(toy):
    sp = build_sp(toy, Template.of_degree(1, 1, 2), hp0(1), 0.05, "safety")
    sol = solve(sp)
    assert sol.status == "optimal"
    cert, hp = reconstruct(sp, sol)
    res = residuals_for(toy, cert, hp)
    activity = sp.lp.A @ sol.x
    for fam, spec in zip(sp.families, sp.specs):
        pts = sp.sample_tuples(fam.name)
        vals = res[fam.name].polynomial.evaluate_many(pts)
        rows = activity[fam.start:fam.stop] - sol.delta
        np.testing.assert_allclose(rows, vals, atol=1e-6)


def test_eta_sits_at_its_lower_bound(drift):
    res = synthesize(drift, Template.of_degree(1, 0, 1), hp0(), 0.01, "safety", eta_min=1e-3)
    assert res.solution.eta == pytest.approx(1e-3, abs=1e-12)
    assert res.hyperparameters.eta == res.solution.eta
    assert res.solution.max_violation <= 1e-7


def test_drift_sound_pass_survives_finer_check(drift):
    res = synthesize(drift, Template.of_degree(1, 0, 1), hp0(), 0.01, "safety")
    assert res.solution.status == "optimal" and res.solution.delta < 0
    assert res.report.verdict == SOUND and all(f.gate for f in res.report.families)
    fine = check(safety_residuals(drift, res.certificate, res.hyperparameters), 0.0025)
    assert all(f.violation_count == 0 for f in fine.families)


def test_coarse_grid_fails_the_gate(drift):
    res = synthesize(drift, Template.of_degree(1, 0, 1), hp0(), 0.5, "safety")
    assert res.solution.status == "optimal"
    assert not all(f.gate for f in res.report.families)
    assert res.report.verdict == SAMPLE and res.report.exit_code == 2
    assert any("gate" in n for n in res.report.notes)


def test_toy_contraction_synthesis(toy):
    res = synthesize(toy, Template.of_degree(1, 0, 2), hp0(), 0.01, "safety")
    assert res.solution.status == "optimal"
    assert res.solution.max_violation <= 1e-7


def test_search_multipliers_picks_smallest_delta(drift):
    grid = (0.5, 1.0)
    best = search_multipliers(drift, Template.of_degree(1, 0, 1), hp0(), 0.05, "safety", grid=grid)
    deltas = [synthesize(drift, Template.of_degree(1, 0, 1), hp0(gamma=g), 0.05, "safety").solution.delta for g in grid]
    assert best.solution.delta == pytest.approx(min(deltas))


def test_template_arity_mismatch(toy):
    with pytest.raises(Exception):
        build_sp(toy, Template.of_degree(2, 0, 2), hp0(), 0.1, "safety")
    with pytest.raises(ValueError):
        build_sp(toy, Template.of_degree(1, 1, 2), hp0(0), 0.1, "safety")


def test_heat_labels_misaligned_at_unit_epsilon():
    heat = load_config("heat_transfer")
    tpl = Template.of_degree(2, 2, 1, heat.nba.states)
    hp = heat.hyperparameters
    with pytest.raises(LabelAlignmentError):
        plan_sp(heat.product, tpl, hp, 1.0, "ltl")
    with pytest.warns(UserWarning):
        plan = plan_sp(heat.product, tpl, hp, 1.0, "ltl", strict_labels=False)
    assert len(plan) == 212
    assert plan["transition[a:0->0]"] > 0 and plan["rank[0,0,0]"] > 0


def test_heat_ltl_program_at_aligned_epsilon():
    heat = load_config("heat_transfer")
    tpl = Template.of_degree(2, 0, 1, heat.nba.states)
    hp = Hyperparameters(0, 0.1, 1.0, 0.5, 1.0)
    sp = build_sp(heat.product, tpl, hp, 0.5, "ltl")
    assert sp.aligned and sp.template.size == 16 * 5
    assert sp.lp.names[:2] == ["c0_0_0_0", "c0_0_0_1"]


def test_lp_export_round_trip(toy, tmp_path):
    sp = build_sp(toy, Template.of_degree(1, 0, 2), hp0(), 0.1, "safety")
    sp.export(tmp_path / "toy.lp")
    back = read_lp(tmp_path / "toy.lp")
    assert back.names == sp.lp.names
    np.testing.assert_array_equal(back.A.toarray(), sp.lp.A.toarray())


def test_backends_agree(drift):
    a = synthesize(drift, Template.of_degree(1, 0, 1), hp0(), 0.02, "safety", backend="simplex")
    b = synthesize(drift, Template.of_degree(1, 0, 1), hp0(), 0.02, "safety", backend="highs")
    assert a.solution.objective == pytest.approx(b.solution.objective, abs=1e-7)


def test_estimator_api(drift):
    est = ScenarioSynthesizer(kind="safety", k=0, degree=1, epsilon=0.01)
    params = est.get_params()
    assert params["degree"] == 1 and params["coef_bound"] == 1.0
    twin = clone(est).set_params(epsilon=0.02)
    assert twin.epsilon == 0.02 and est.epsilon == 0.01
    with pytest.raises(AttributeError):
        est.score()
    est.fit(drift)
    assert est.solution_.status == "optimal"
    assert est.score() == pytest.approx(-est.delta_star_) and est.score() > 0
    assert est.report_.verdict == SOUND and est.certificate_.k == 0
