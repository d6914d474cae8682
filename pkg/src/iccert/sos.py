"""Sum-of-squares programs for closure certificates: compile, export, verify.

Every residual family ``g >= 0`` on a box-product domain becomes one SOS
constraint through the S-procedure::

    g(z) - sum_j lambda_j(z) h_j(z) = m(z)^T Q m(z),    lambda_j = w_j^T Q_j w_j,

with one domain inequality ``h_j = (z_j - lo_j)(up_j - z_j)`` per coordinate.
The unknowns are the template coefficients (free) and the Gram matrices
``Q, Q_j`` (PSD). Matching coefficients monomial by monomial gives a linear
equality system, exported in SDPA sparse format with a JSON sidecar that names
every block and row.

Solving the SDP is left to external tools. :func:`verify_witness` checks a
returned decomposition directly on polynomials, independently of the
equality system.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .automaton import ProductSystem
from .certificate import Factor, Hyperparameters, IccLtl, IccPersistence, IccSafety, ResidualSpec, specs_for
from .geometry import Box
from .poly import DimensionError, Polynomial, monomial_basis
from .scenario import Template
from .system import System

__all__ = [
    "SosConstraint",
    "SosProgram",
    "SosWitness",
    "SosReport",
    "ConstraintCheck",
    "SosSizeError",
    "compile_program",
    "export_sdp",
    "load_mapping",
    "load_witness",
    "save_witness",
    "verify_witness",
    "witness_certificate",
    "multiplier_degree",
    "box_inequalities",
    "polynomial_program",
    "sweep_plan",
    "BASIS_CAP",
]

BASIS_CAP = 2000
FORMAT = "sdpa-sparse/iccert-1"


class SosSizeError(ValueError):
    """A Gram basis would exceed the configured size cap."""


def multiplier_degree(expr_degree: int, g_degree: int) -> int:
    """Smallest even degree covering ``expr_degree - g_degree`` (never negative)."""
    d = max(0, expr_degree - g_degree)
    return d + (d % 2)


def box_inequalities(factors: Sequence[Factor]) -> list[Polynomial]:
    """One quadratic ``(z - lo)(up - z) >= 0`` per coordinate of the factor product.

    A labeled factor uses the box of its letter when that letter has exactly
    one region; otherwise it falls back to the factor's own box. Either way the
    described set contains the labeled domain.
    """
    N = sum(f.dimension for f in factors)
    out = []
    off = 0
    for f in factors:
        box = _factor_box(f)
        for j in range(f.dimension):
            z = Polynomial.variable(N, off + j)
            out.append((z - float(box.lower[j])) * (float(box.upper[j]) - z))
        off += f.dimension
    return out


def _factor_box(f: Factor) -> Box:
    if f.letter is None:
        return f.box
    regions = [b for b, a in f.labeling.regions if a == f.letter]
    if len(regions) != 1:
        return f.box
    r = regions[0]
    lo = np.maximum(r.lower, f.box.lower)
    up = np.minimum(r.upper, f.box.upper)
    if np.any(lo > up):
        return f.box
    return Box(lo, up)


# linear polynomial expressions -------------------------------------------


@dataclass(eq=False)
class LinearExpression:
    """``const(z) + sum_u coef_u(z) c_u``: monomials ``exps``, constants, and a dense coefficient matrix."""

    arity: int
    exps: np.ndarray  # (M, arity)
    const: np.ndarray  # (M,)
    coef: np.ndarray  # (M, n_unknowns)

    @property
    def degree(self) -> int:
        active = (self.const != 0) | np.any(self.coef != 0, axis=1)
        return int(self.exps[active].sum(axis=1).max()) if active.any() else 0

    def polynomial(self, values: np.ndarray) -> Polynomial:
        return Polynomial(self.arity, self.exps, self.const + self.coef @ np.asarray(values, dtype=float))


def _linear_expression(system: System, spec: ResidualSpec, template: Template, eta: float) -> LinearExpression:
    N = spec.dimension
    nb = template.basis.shape[0]
    key_col = {key: j * nb for j, key in enumerate(template.keys())}
    basis_polys = [Polynomial(2 * template.n, row[None, :], [1.0]) for row in template.basis]
    table: dict[tuple, dict[int, float]] = {}
    const: dict[tuple, float] = {}
    if spec.eta_coef:
        const[(0,) * N] = spec.eta_coef * eta

    def subs(arg):
        off = spec.offsets()[arg.factor]
        n = spec.factors[arg.factor].dimension
        if arg.branch is None:
            return [Polynomial.variable(N, off + j) for j in range(n)]
        return [c.embed(N, range(off, off + n)) for c in system.transitions[arg.branch]]

    for term in spec.terms:
        if term.key not in key_col:
            raise ValueError(f"constraint {spec.name} uses key {term.key} absent from the template")
        s = subs(term.args[0]) + subs(term.args[1])
        base = key_col[term.key]
        for j, m in enumerate(basis_polys):
            for c, e in m.compose(s).terms:
                row = table.setdefault(e, {})
                row[base + j] = row.get(base + j, 0.0) + term.scale * c
    monos = sorted(set(table) | set(const), key=lambda e: (sum(e), tuple(-v for v in e)))
    M = len(monos)
    exps = np.array(monos, dtype=np.int64).reshape(M, N)
    cvec = np.array([const.get(e, 0.0) for e in monos])
    coef = np.zeros((M, template.size))
    for r, e in enumerate(monos):
        for u, v in table.get(e, {}).items():
            coef[r, u] = v
    return LinearExpression(N, exps, cvec, coef)


# program -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GramBlock:
    """PSD block over monomial basis ``basis``; ``role`` is ``"sos"`` or ``"multiplier[j]"``."""

    constraint: int
    role: str
    basis: np.ndarray

    @property
    def size(self) -> int:
        return self.basis.shape[0]


@dataclass(eq=False)
class SosConstraint:
    name: str
    spec: ResidualSpec = field(repr=False)
    expression: LinearExpression = field(repr=False)
    inequalities: list[Polynomial] = field(repr=False)
    multiplier_bases: list[np.ndarray] = field(repr=False)
    basis: np.ndarray = field(repr=False)

    @property
    def arity(self) -> int:
        return self.expression.arity

    @property
    def degree(self) -> int:
        return self.expression.degree


@dataclass(eq=False)
class SosProgram:
    kind: str
    template: Template
    hyperparameters: Hyperparameters
    constraints: list[SosConstraint]
    blocks: list[GramBlock]

    @property
    def coefficient_names(self) -> list[str]:
        return self.template.variable_names() if self.template is not None else []

    @property
    def n_coefficients(self) -> int:
        return self.template.size if self.template is not None else 0

    def constraint_index(self, name: str) -> int:
        for j, c in enumerate(self.constraints):
            if c.name == name:
                return j
        raise KeyError(name)

    def blocks_of(self, j: int) -> list[int]:
        return [b for b, blk in enumerate(self.blocks) if blk.constraint == j]


def _half_basis(arity: int, degree: int, cap: int, label: str) -> np.ndarray:
    size = math.comb(arity + degree, degree)
    if size > cap:
        raise SosSizeError(f"{label}: Gram basis of degree {degree} in {arity} variables has {size} monomials (cap {cap})")
    return monomial_basis(arity, degree)


def compile_program(kind: str, target, template: Template, hp: Hyperparameters, basis_cap: int = BASIS_CAP) -> SosProgram:
    """One SOS constraint per residual family, with one multiplier per domain inequality.

    Families and their order are those of the residual specifications, so a
    ``k = 0`` safety program lines up with the plain closure-certificate
    conditions. ``eta`` and the multipliers ``gamma``, ``rho`` are fixed by ``hp``.
    """
    if hp.k != template.k:
        raise ValueError(f"template has k={template.k}, hyperparameters say k={hp.k}")
    system = target.system if isinstance(target, ProductSystem) else target
    if template.n != system.dimension:
        raise DimensionError(f"template is over {template.n} states, system has {system.dimension}")
    if kind == "ltl" and (not isinstance(target, ProductSystem) or template.states != target.nba.states):
        raise ValueError("an LTL program needs a product system and a template over its automaton states")
    constraints, blocks = [], []
    for spec in specs_for(kind, target, hp):
        expr = _linear_expression(system, spec, template, hp.eta)
        D = expr.degree
        ineqs = box_inequalities(spec.factors)
        mult_bases = []
        top = D
        for j, g in enumerate(ineqs):
            dl = multiplier_degree(D, g.degree())
            mult_bases.append(_half_basis(spec.dimension, dl // 2, basis_cap, f"{spec.name} multiplier {j}"))
            top = max(top, dl + g.degree())
        basis = _half_basis(spec.dimension, (top + 1) // 2, basis_cap, spec.name)
        idx = len(constraints)
        constraints.append(SosConstraint(spec.name, spec, expr, ineqs, mult_bases, basis))
        blocks.append(GramBlock(idx, "sos", basis))
        blocks += [GramBlock(idx, f"multiplier[{j}]", b) for j, b in enumerate(mult_bases)]
    return SosProgram(kind, template, hp, constraints, blocks)


def polynomial_program(
    p: Polynomial,
    inequalities: Sequence[Polynomial] = (),
    name: str = "p",
    basis: np.ndarray | None = None,
    basis_cap: int = BASIS_CAP,
) -> SosProgram:
    """Program for one fixed polynomial: ``p - sum_j lambda_j h_j`` is SOS.

    ``basis`` overrides the Gram basis, which otherwise holds every monomial
    up to half the (even-rounded) degree.
    """
    N = p.arity
    expr = LinearExpression(N, p.exponents.copy(), p.coefficients.copy(), np.zeros((len(p), 0)))
    D = p.degree()
    mult_bases, top = [], D
    for j, g in enumerate(inequalities):
        if g.arity != N:
            raise DimensionError(f"inequality {j} has arity {g.arity}, expected {N}")
        dl = multiplier_degree(D, g.degree())
        mult_bases.append(_half_basis(N, dl // 2, basis_cap, f"{name} multiplier {j}"))
        top = max(top, dl + g.degree())
    if basis is None:
        basis = _half_basis(N, (top + 1) // 2, basis_cap, name)
    basis = np.asarray(basis, dtype=np.int64).reshape(-1, N)
    con = SosConstraint(name, None, expr, list(inequalities), mult_bases, basis)
    blocks = [GramBlock(0, "sos", basis)] + [GramBlock(0, f"multiplier[{j}]", b) for j, b in enumerate(mult_bases)]
    return SosProgram("polynomial", None, None, [con], blocks)


# equality system -----------------------------------------------------------


def _gram_entries(basis: np.ndarray, g: Polynomial | None):
    """``(monomial, a, b, weight)`` with ``a <= b`` for ``g * w^T Q w`` (``g = 1`` when ``None``)."""
    gt = [(1.0, (0,) * basis.shape[1])] if g is None else g.terms
    rows = [tuple(int(v) for v in r) for r in basis]
    for a in range(len(rows)):
        for b in range(a, len(rows)):
            s = tuple(x + y for x, y in zip(rows[a], rows[b]))
            for c, e in gt:
                yield tuple(x + y for x, y in zip(s, e)), a, b, c


def _equalities(program: SosProgram):
    """Rows ``(constraint, monomial, rhs, gram entries, coefficient entries)`` in a fixed order."""
    out = []
    for j, con in enumerate(program.constraints):
        bidx = program.blocks_of(j)
        rows: dict[tuple, list] = {}
        for e, a, b, w in _gram_entries(con.basis, None):
            rows.setdefault(e, []).append((bidx[0], a, b, w))
        for m, (g, wb) in enumerate(zip(con.inequalities, con.multiplier_bases)):
            for e, a, b, w in _gram_entries(wb, g):
                rows.setdefault(e, []).append((bidx[1 + m], a, b, w))
        expr = con.expression
        erow = {tuple(int(v) for v in e): r for r, e in enumerate(expr.exps)}
        for e in erow:
            rows.setdefault(e, [])
        for e in sorted(rows, key=lambda e: (sum(e), tuple(-v for v in e))):
            r = erow.get(e)
            rhs = float(expr.const[r]) if r is not None else 0.0
            coefs = [] if r is None else [(u, float(v)) for u, v in enumerate(expr.coef[r]) if v != 0]
            grams: dict[tuple, float] = {}
            for blk, a, b, w in rows[e]:
                grams[(blk, a, b)] = grams.get((blk, a, b), 0.0) + w
            out.append((j, e, rhs, sorted(grams.items()), coefs))
    return out


def export_sdp(program: SosProgram, path) -> dict:
    """Write ``path`` (SDPA sparse) and ``path + '.map.json'``; returns the mapping.

    The SDP is in SDPA's dual form ``F_i . Y = c_i, Y >= 0`` with ``F_0 = 0``:
    one row per (constraint, monomial), one PSD block per Gram matrix and a
    final diagonal block holding ``c+`` then ``c-`` for the free template
    coefficients ``c = c+ - c-``. Off-diagonal Gram entries are listed once,
    upper triangle; ``F . Y`` counts both triangles, matching ``2 Q_ab``.
    """
    path = Path(path)
    eqs = _equalities(program)
    nc = program.n_coefficients
    lp_block = len(program.blocks) + 1
    sizes = [b.size for b in program.blocks] + ([-2 * nc] if nc else [])
    lines = [f"\"iccert {program.kind} SOS program\"", str(len(eqs)), str(len(sizes)), " ".join(str(s) for s in sizes)]
    lines.append(" ".join(repr(rhs) for _, _, rhs, _, _ in eqs) if eqs else "")
    for i, (_, _, _, grams, coefs) in enumerate(eqs, start=1):
        for (blk, a, b), w in grams:
            lines.append(f"{i} {blk + 1} {a + 1} {b + 1} {w!r}")
        for u, v in coefs:
            lines.append(f"{i} {lp_block} {u + 1} {u + 1} {-v!r}")
            lines.append(f"{i} {lp_block} {nc + u + 1} {nc + u + 1} {v!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    mapping = {
        "format": FORMAT,
        "kind": program.kind,
        "k": program.template.k if program.template else None,
        "n": program.template.n if program.template else None,
        "states": program.template.states if program.template else None,
        "template_basis": program.template.basis.tolist() if program.template else None,
        "coefficients": [
            {"name": nm, "plus": [lp_block, u + 1], "minus": [lp_block, nc + u + 1]}
            for u, nm in enumerate(program.coefficient_names)
        ],
        "constraints": [
            {"index": j, "name": c.name, "arity": c.arity, "degree": c.degree, "blocks": [b + 1 for b in program.blocks_of(j)]}
            for j, c in enumerate(program.constraints)
        ],
        "blocks": [
            {"block": b + 1, "constraint": blk.constraint, "role": blk.role, "size": blk.size, "basis": blk.basis.tolist()}
            for b, blk in enumerate(program.blocks)
        ]
        + ([{"block": lp_block, "constraint": None, "role": "free-split", "size": -2 * nc, "basis": None}] if nc else []),
        "rows": [{"row": i, "constraint": j, "monomial": list(e)} for i, (j, e, _, _, _) in enumerate(eqs, start=1)],
    }
    Path(str(path) + ".map.json").write_text(json.dumps(mapping, indent=1) + "\n", encoding="utf-8")
    return mapping


def load_mapping(path) -> dict:
    """Read a sidecar written by :func:`export_sdp` (either the ``.map.json`` or the SDP path)."""
    p = Path(path)
    if not p.name.endswith(".map.json"):
        p = Path(str(p) + ".map.json")
    data = json.loads(p.read_text(encoding="utf-8"))
    if data.get("format") != FORMAT:
        raise ValueError(f"unknown mapping format {data.get('format')!r}")
    return data


# witnesses -------------------------------------------------------------------


@dataclass(eq=False)
class SosWitness:
    """Template coefficients and one Gram matrix per program block, in block order."""

    coefficients: np.ndarray
    grams: list[np.ndarray]

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float).reshape(-1)
        self.grams = [np.atleast_2d(np.asarray(q, dtype=float)) for q in self.grams]
        for q in self.grams:
            if q.shape[0] != q.shape[1]:
                raise DimensionError(f"Gram matrix of shape {q.shape} is not square")
            if not np.allclose(q, q.T, rtol=0, atol=1e-12 * max(1.0, float(np.abs(q).max(initial=0.0)))):
                raise ValueError("Gram matrices must be symmetric")

    @classmethod
    def from_sdp_blocks(cls, mapping: Mapping, blocks: Sequence) -> "SosWitness":
        """From the solver's ``Y`` blocks; the last holds the ``c+, c-`` diagonal."""
        nc = len(mapping["coefficients"])
        if len(blocks) != len(mapping["blocks"]):
            raise DimensionError(f"expected {len(mapping['blocks'])} blocks, got {len(blocks)}")
        if nc == 0:
            return cls(np.zeros(0), list(blocks))
        lp = np.asarray(blocks[-1], dtype=float)
        lp = np.diag(lp) if lp.ndim == 2 else lp.reshape(-1)
        if lp.size != 2 * nc:
            raise DimensionError(f"free-split block needs {2 * nc} entries, got {lp.size}")
        return cls(lp[:nc] - lp[nc:], list(blocks[:-1]))

    def to_dict(self) -> dict:
        return {"coefficients": self.coefficients.tolist(), "grams": [q.tolist() for q in self.grams]}


def load_witness(path, mapping: Mapping | None = None) -> SosWitness:
    """JSON ``{"coefficients": [...], "grams": [...]}``, or ``{"blocks": [...]}`` with a mapping."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if "blocks" in data:
        if mapping is None:
            raise ValueError("a block-form witness needs the program mapping")
        return SosWitness.from_sdp_blocks(mapping, data["blocks"])
    return SosWitness(data["coefficients"], data["grams"])


def save_witness(witness: SosWitness, path) -> None:
    Path(path).write_text(json.dumps(witness.to_dict(), indent=1) + "\n", encoding="utf-8")


@dataclass
class ConstraintCheck:
    name: str
    psd_margin: float  # smallest Gram eigenvalue over the constraint's blocks
    psd_tolerance: float
    identity_residual: float  # largest |coefficient| of the identity defect
    passed: bool


@dataclass
class SosReport:
    checks: list[ConstraintCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> ConstraintCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "constraints": [c.__dict__ for c in self.checks]}

    def to_text(self) -> str:
        lines = [f"{'constraint':<28} {'psd margin':>12} {'identity':>12}  result"]
        for c in self.checks:
            lines.append(f"{c.name:<28} {c.psd_margin:>12.4g} {c.identity_residual:>12.4g}  {'pass' if c.passed else 'FAIL'}")
        lines.append(f"verdict: {'pass' if self.passed else 'fail'}")
        return "\n".join(lines)


def _gram_polynomial(basis: np.ndarray, Q: np.ndarray) -> Polynomial:
    m = basis.shape[0]
    a, b = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    exps = basis[a.ravel()] + basis[b.ravel()]
    return Polynomial(basis.shape[1], exps, Q.ravel())


def _structure_check(program: SosProgram, witness: SosWitness) -> None:
    if witness.coefficients.size != program.n_coefficients:
        raise DimensionError(f"witness has {witness.coefficients.size} coefficients, program needs {program.n_coefficients}")
    if len(witness.grams) != len(program.blocks):
        raise DimensionError(f"witness has {len(witness.grams)} Gram matrices, program has {len(program.blocks)} blocks")
    for b, (q, blk) in enumerate(zip(witness.grams, program.blocks)):
        if q.shape != (blk.size, blk.size):
            raise DimensionError(f"block {b + 1} ({program.constraints[blk.constraint].name} {blk.role}) needs {blk.size}x{blk.size}, got {q.shape}")


def verify_witness(
    program: SosProgram,
    witness: SosWitness,
    tol_psd: float | None = None,
    tol_id: float = 1e-6,
    constraints: Iterable[str] | None = None,
) -> SosReport:
    """Check PSD-ness and the polynomial identity of each (selected) constraint.

    ``tol_psd`` defaults to ``1e-8 * ||Q||_2`` per Gram matrix. The identity
    defect is recomputed from polynomials, not from the exported rows.
    """
    _structure_check(program, witness)
    wanted = None if constraints is None else set(constraints)
    if wanted is not None:
        unknown = wanted - {c.name for c in program.constraints}
        if unknown:
            raise KeyError(f"unknown constraints {sorted(unknown)}")
    checks = []
    for j, con in enumerate(program.constraints):
        if wanted is not None and con.name not in wanted:
            continue
        bidx = program.blocks_of(j)
        margin, ok_psd, tol_used = math.inf, True, 0.0
        for b in bidx:
            Q = witness.grams[b]
            eig = float(np.linalg.eigvalsh(Q).min())
            tol = tol_psd if tol_psd is not None else 1e-8 * float(np.linalg.norm(Q, 2))
            margin = min(margin, eig)
            tol_used = max(tol_used, tol)
            ok_psd &= eig >= -tol
        defect = con.expression.polynomial(witness.coefficients) - _gram_polynomial(con.basis, witness.grams[bidx[0]])
        for m, g in enumerate(con.inequalities):
            defect = defect - _gram_polynomial(con.multiplier_bases[m], witness.grams[bidx[1 + m]]) * g
        resid = defect.max_abs_coefficient() if len(defect) else 0.0
        checks.append(ConstraintCheck(con.name, margin, tol_used, resid, bool(ok_psd and resid <= tol_id)))
    return SosReport(checks)


def witness_certificate(program: SosProgram, witness: SosWitness):
    """Certificate defined by the witness coefficients (hyperparameters are the program's)."""
    t = program.template
    if t is None:
        raise ValueError("this program has no certificate template")
    c = np.asarray(witness.coefficients, dtype=float)
    if c.size != t.size:
        raise DimensionError(f"need {t.size} coefficients, got {c.size}")
    nb = t.basis.shape[0]
    polys = {key: Polynomial(2 * t.n, t.basis, c[j * nb:(j + 1) * nb]) for j, key in enumerate(t.keys())}
    if program.kind == "ltl":
        return IccLtl(t.n, t.k, t.states, polys, t.basis)
    cls = IccSafety if program.kind == "safety" else IccPersistence
    return cls(t.n, tuple(polys[(i,)] for i in range(t.k + 1)), t.basis)


def sweep_plan(ks: Iterable[int] = (0, 1, 2), degrees: Iterable[int] = (1, 2, 3, 4)) -> list[tuple[int, int]]:
    """``(k, degree)`` pairs of a template sweep, ``k`` outermost."""
    return list(itertools.product(ks, degrees))
