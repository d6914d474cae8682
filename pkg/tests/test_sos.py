import json
import warnings

import numpy as np
import pytest

from iccert import load_certificate, load_config
from iccert.certificate import Hyperparameters, cc_safety_residuals, specs_for
from iccert.checker import falsify
from iccert.certificate import safety_residuals
from iccert.poly import DimensionError, Polynomial, parse_polynomial
from iccert.scenario import Template
from iccert.sos import (
    SosSizeError,
    SosWitness,
    compile_program,
    export_sdp,
    load_mapping,
    load_witness,
    multiplier_degree,
    polynomial_program,
    save_witness,
    sweep_plan,
    verify_witness,
    witness_certificate,
)

from test_acceptance import toy_transition_witness

HP0 = Hyperparameters(0, 1e-3, 1.0)


@pytest.fixture(scope="module")
def toy():
    return load_config("toy_contraction").system


@pytest.fixture(scope="module")
def program(toy):
    return compile_program("safety", toy, Template.of_degree(1, 0, 2), HP0)


def read_sdpa(path):
    """Minimal SDPA-sparse reader: (c, sizes, {(row, block): dense matrix})."""
    lines = [ln for ln in open(path).read().splitlines() if ln and not ln.startswith(('"', "*"))]
    m, nblocks = int(lines[0]), int(lines[1])
    sizes = [int(v) for v in lines[2].split()]
    c = np.array([float(v) for v in lines[3].split()]) if m else np.zeros(0)
    F = {}
    for ln in lines[4:]:
        i, b, a, d, v = ln.split()
        i, b, a, d, v = int(i), int(b), int(a), int(d), float(v)
        n = abs(sizes[b - 1])
        M = F.setdefault((i, b), np.zeros((n, n)))
        M[a - 1, d - 1] = v
        M[d - 1, a - 1] = v
    assert len(sizes) == nblocks
    return c, sizes, F


def test_polynomial_examples():
    sq = polynomial_program(parse_polynomial("x1**2", ["x1"]), basis=[[1]])
    assert verify_witness(sq, SosWitness([], [[[1.0]]])).passed
    shifted = polynomial_program(parse_polynomial("x1**2 - 1", ["x1"]))
    for Q in (np.eye(2), np.diag([0.0, 1.0]), np.array([[2.0, 1.0], [1.0, 1.0]])):
        rep = verify_witness(shifted, SosWitness([], [Q]))
        assert not rep.passed and rep.checks[0].identity_residual >= 1
    two = polynomial_program(parse_polynomial("(x1 - 1)**2 + (x2 + 1)**2", ["x1", "x2"]))
    v1, v2 = np.array([-1.0, 1, 0]), np.array([1.0, 0, 1])  # over (1, x1, x2)
    rep = verify_witness(two, SosWitness([], [np.outer(v1, v1) + np.outer(v2, v2)]))
    assert rep.passed and rep.checks[0].identity_residual == 0


def test_non_psd_gram_is_rejected():
    p = polynomial_program(parse_polynomial("x1**2", ["x1"]), basis=[[0], [1]])
    Q = np.array([[1.0, 0.0], [0.0, 1.0]])
    bad = np.array([[-1.0, 0.0], [0.0, 1.0]])
    assert not verify_witness(p, SosWitness([], [Q])).passed  # identity off by 1
    rep = verify_witness(polynomial_program(parse_polynomial("x1**2 - 1", ["x1"]), basis=[[0], [1]]), SosWitness([], [bad]))
    assert rep.checks[0].identity_residual == 0 and rep.checks[0].psd_margin < 0 and not rep.passed


def test_toy_structure(program):
    assert [c.name for c in program.constraints] == ["transition", "closure", "init[0]"]
    n_mult = sum(len(c.inequalities) for c in program.constraints)
    assert len(program.blocks) == len(program.constraints) + n_mult == 8
    for c in program.constraints:
        for g, wb in zip(c.inequalities, c.multiplier_bases):
            dl = 2 * int(wb.sum(axis=1).max())
            assert dl == multiplier_degree(c.degree, g.degree())
            assert dl + g.degree() <= 2 * int(c.basis.sum(axis=1).max())
    used = np.zeros(program.n_coefficients, bool)
    for c in program.constraints:
        used |= np.any(c.expression.coef != 0, axis=0)
    assert used.all()


def test_zero_multipliers_give_the_residual(program, toy):
    T = parse_polynomial("0.3 + x1*y1 - 0.2*y1**2", ["x1", "y1"])
    basis = program.template.basis
    c = np.array([T.coefficient(tuple(e)) for e in basis])
    expr = program.constraints[program.constraint_index("transition")].expression.polynomial(c)
    assert expr == T.compose([Polynomial.variable(1, 0), parse_polynomial("0.5*x1", ["x1"])])


def test_k0_expressions_equal_plain_conditions(program, toy):
    rng = np.random.default_rng(11)
    c = rng.integers(-8, 9, program.n_coefficients) / 4.0
    T = Polynomial(2, program.template.basis, c)
    plain = cc_safety_residuals(toy, T, 1.0, HP0.eta)
    for con in program.constraints:
        assert con.expression.polynomial(c) == plain[con.name]


def test_export_counts_and_determinism(program, tmp_path):
    m1 = export_sdp(program, tmp_path / "a.dat-s")
    m2 = export_sdp(program, tmp_path / "b.dat-s")
    assert (tmp_path / "a.dat-s").read_bytes() == (tmp_path / "b.dat-s").read_bytes()
    assert m1 == m2 == load_mapping(tmp_path / "a.dat-s")
    c, sizes, _ = read_sdpa(tmp_path / "a.dat-s")
    assert len(sizes) == len(program.blocks) + 1 and sizes[-1] == -2 * program.n_coefficients
    assert [b["size"] for b in m1["blocks"]] == sizes
    assert len(m1["rows"]) == c.size
    assert [r["row"] for r in m1["rows"]] == list(range(1, c.size + 1))
    assert [b["block"] for b in m1["blocks"]] == list(range(1, len(sizes) + 1))


def test_single_gram_exports_one_block(tmp_path):
    p = polynomial_program(Polynomial.constant(1, 2.0), basis=[[0]])
    m = export_sdp(p, tmp_path / "one.dat-s")
    c, sizes, F = read_sdpa(tmp_path / "one.dat-s")
    assert sizes == [1] and c.tolist() == [2.0] and F[(1, 1)].tolist() == [[1.0]]
    assert m["coefficients"] == []


def test_independent_reader_accepts_the_toy_witness(program, tmp_path):
    mapping = export_sdp(program, tmp_path / "toy.dat-s")
    c, sizes, F = read_sdpa(tmp_path / "toy.dat-s")
    w = toy_transition_witness(program)
    Y = w.grams + [np.diag(np.concatenate([np.maximum(w.coefficients, 0), np.maximum(-w.coefficients, 0)]))]
    j = program.constraint_index("transition")
    rows = [r["row"] for r in mapping["rows"] if r["constraint"] == j]
    assert rows
    for i in rows:
        lhs = sum(np.sum(M * Y[b - 1]) for (r, b), M in F.items() if r == i)
        assert lhs == pytest.approx(c[i - 1], abs=1e-12)
    # the same witness through a block-form file
    path = tmp_path / "w.json"
    path.write_text(json.dumps({"blocks": [q.tolist() for q in Y]}))
    assert verify_witness(program, load_witness(path, mapping), constraints=["transition"]).passed


def test_witness_passes_and_falsify_agrees(program, toy):
    w = toy_transition_witness(program)
    rep = verify_witness(program, w, constraints=["transition"])
    chk = rep.check("transition")
    assert rep.passed and chk.identity_residual <= 1e-9 and chk.psd_margin >= 0
    cert = witness_certificate(program, w)
    res = safety_residuals(toy, cert, HP0).subset(["transition"])
    assert falsify(res, 10_000) == []
    # T0 = 1 cannot satisfy the init condition
    assert not verify_witness(program, w, constraints=["init[0]"]).passed


def test_truncated_witness(program, tmp_path):
    w = toy_transition_witness(program)
    path = tmp_path / "w.json"
    save_witness(w, path)
    assert verify_witness(program, load_witness(path), constraints=["transition"]).passed
    data = json.loads(path.read_text())
    data["grams"] = data["grams"][:-1]
    path.write_text(json.dumps(data))
    with pytest.raises(DimensionError):
        verify_witness(program, load_witness(path))
    with pytest.raises(DimensionError):
        verify_witness(program, SosWitness(w.coefficients[:-1], w.grams))


def test_basis_cap(toy):
    with pytest.raises(SosSizeError):
        compile_program("safety", toy, Template.of_degree(1, 0, 2), HP0, basis_cap=2)


def test_persistence_program_matches_appendix_structure():
    cfg = load_config("lotka_volterra")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cert, hp = load_certificate(cfg.certificate)
    tpl = Template.of_degree(3, 2, 4)
    assert tpl.basis.shape[0] == 210
    assert {tuple(r) for r in tpl.basis} == {tuple(r) for r in cert.basis}
    prog = compile_program("persistence", cfg.system, tpl, hp)
    assert [c.name for c in prog.constraints] == [s.name for s in specs_for("persistence", cfg.system, hp)]
    assert [c.arity for c in prog.constraints] == [3, 6, 6, 6, 9]
    values = np.concatenate([[T.coefficient(tuple(e)) for e in tpl.basis] for T in cert.T])
    from iccert.certificate import persistence_residuals
    res = persistence_residuals(cfg.system, cert, hp)
    for con in prog.constraints:
        assert con.expression.polynomial(values).allclose(res[con.name].polynomial, atol=1e-9)


def test_sweep_plan():
    assert len(sweep_plan()) == 12 and sweep_plan()[0] == (0, 1) and sweep_plan()[-1] == (2, 4)
