"""Scenario programs: certificate synthesis as a linear program over grid samples.

With the multipliers fixed, every residual is linear in the certificate
coefficients ``c`` and in ``eta``. Each residual family contributes one row per
sample tuple,

    g(sample; c, eta) + delta >= 0,

and the program minimises ``delta + eta`` subject to ``|c_j| <= coef_bound`` and
``eta >= eta_min``. An optimum with ``L' * eps + delta* <= 0`` for every family
lifts sampled feasibility to the whole domain.

Row layout is deterministic: families in specification order, sample tuples in
row-major order over the factor grids, first occurrence kept when rows repeat.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse
from sklearn.base import BaseEstimator

from .automaton import ProductSystem
from .certificate import (
    Hyperparameters,
    IccLtl,
    IccPersistence,
    IccSafety,
    ResidualSpec,
    residuals_for,
    specs_for,
)
from .checker import CheckReport, check, check_thm12_gate, factor_grid
from .geometry import SampleGrid
from .lp import LinearProgram, LpResult, solve_lp, write_lp
from .poly import DimensionError, Polynomial, monomial_basis, monomial_matrix
from .system import System

__all__ = [
    "Template",
    "ScenarioProgram",
    "LpSolution",
    "SynthesisResult",
    "LabelAlignmentError",
    "build_sp",
    "plan_sp",
    "solve",
    "reconstruct",
    "synthesize",
    "search_multipliers",
    "ScenarioSynthesizer",
    "MULTIPLIER_GRID",
]

ETA_MIN = 1e-3
COEF_BOUND = 1.0
FEASIBILITY_TOL = 1e-7
MULTIPLIER_GRID = (0.25, 0.5, 1.0, 2.0)


class LabelAlignmentError(ValueError):
    """A labeled domain factor whose label regions cut through grid cells."""


@dataclass(frozen=True, eq=False)
class Template:
    """Unknown certificate: one coefficient vector on ``basis`` per key.

    ``basis`` rows are exponents over ``(x, y)``, arity ``2n``. With ``states``
    set the keys are ``(i, q, p)``, otherwise ``(i,)``.
    """

    n: int
    k: int
    basis: np.ndarray
    states: int | None = None

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=np.int64)
        if basis.ndim != 2 or basis.shape[1] != 2 * self.n:
            raise DimensionError(f"template basis must have 2n = {2 * self.n} columns")
        if basis.shape[0] == 0:
            raise ValueError("template basis is empty")
        object.__setattr__(self, "basis", basis)
        if self.k < 0:
            raise ValueError("k must be nonnegative")

    @classmethod
    def of_degree(cls, n: int, k: int, degree: int, states: int | None = None) -> "Template":
        """All monomials in ``(x, y)`` up to total degree ``degree``."""
        if degree < 1:
            raise ValueError("template degree must be at least 1")
        return cls(n, k, monomial_basis(2 * n, degree), states)

    @property
    def degree(self) -> int:
        return int(self.basis.sum(axis=1).max())

    def keys(self) -> list[tuple]:
        if self.states is None:
            return [(i,) for i in range(self.k + 1)]
        s = range(self.states)
        return [(i, q, p) for i in range(self.k + 1) for q in s for p in s]

    def variable_names(self) -> list[str]:
        names = []
        for key in self.keys():
            stem = "c" + "_".join(str(v) for v in key)
            names += [f"{stem}_{j}" for j in range(self.basis.shape[0])]
        return names

    @property
    def size(self) -> int:
        return len(self.keys()) * self.basis.shape[0]


@dataclass(frozen=True)
class FamilyRows:
    """Rows ``start:stop`` of the program belong to residual family ``name``."""

    name: str
    start: int
    stop: int
    samples: int
    kept: np.ndarray = field(repr=False)  # flat sample-tuple index of each kept row

    @property
    def rows(self) -> int:
        return self.stop - self.start


@dataclass(eq=False)
class ScenarioProgram:
    lp: LinearProgram
    template: Template
    kind: str
    hyperparameters: Hyperparameters
    epsilon: float | Mapping
    target: System | ProductSystem = field(repr=False)
    specs: list[ResidualSpec] = field(repr=False)
    grids: list[list[SampleGrid]] = field(repr=False)
    families: list[FamilyRows] = field(default_factory=list)
    aligned: bool = True

    @property
    def delta_index(self) -> int:
        return self.template.size

    @property
    def eta_index(self) -> int:
        return self.template.size + 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.lp.shape

    def family(self, name: str) -> FamilyRows:
        for f in self.families:
            if f.name == name:
                return f
        raise KeyError(name)

    def sample_tuples(self, name: str) -> np.ndarray:
        """Concatenated sample points behind each kept row of a family."""
        j = next(i for i, s in enumerate(self.specs) if s.name == name)
        grids = self.grids[j]
        fam = self.families[j]
        sub = np.unravel_index(fam.kept, [g.size for g in grids])
        return np.hstack([g.centers[s] for g, s in zip(grids, sub)])

    def export(self, path) -> None:
        """CPLEX LP text, rows in assembly order."""
        write_lp(self.lp, path)


@dataclass
class LpSolution:
    status: str
    coefficients: dict[tuple, np.ndarray] | None
    delta: float | None
    eta: float | None
    objective: float | None
    x: np.ndarray | None = None
    max_violation: float | None = None
    message: str = ""


@dataclass
class SynthesisResult:
    certificate: IccSafety | IccPersistence | IccLtl | None
    hyperparameters: Hyperparameters | None
    solution: LpSolution
    report: CheckReport
    program: ScenarioProgram


# assembly ------------------------------------------------------------------


def _eps(epsilon, factor) -> float:
    if isinstance(epsilon, Mapping):
        return float(epsilon.get(factor.name, epsilon.get("default")))
    return float(epsilon)


def _validate(target, template: Template, kind: str, epsilon) -> System:
    system = target.system if isinstance(target, ProductSystem) else target
    values = list(epsilon.values()) if isinstance(epsilon, Mapping) else [epsilon]
    if any(v is None or not float(v) > 0 for v in values):
        raise ValueError("epsilon must be positive")
    if template.n != system.dimension:
        raise DimensionError(f"template is over {template.n} states, system has {system.dimension}")
    if template.degree < 1:
        raise ValueError("template degree must be at least 1")
    if kind == "ltl":
        if not isinstance(target, ProductSystem):
            raise ValueError("an LTL scenario program needs a product system")
        if template.states != target.nba.states:
            raise ValueError(f"template indexes {template.states} automaton states, automaton has {target.nba.states}")
    elif template.states is not None:
        raise ValueError(f"{kind} templates are not indexed by automaton states")
    return system


def _family_grids(spec: ResidualSpec, epsilon, cache, strict: bool) -> tuple[list[SampleGrid], bool]:
    grids, aligned = [], True
    for f in spec.factors:
        g, ok = factor_grid(f, _eps(epsilon, f), cache)
        grids.append(g)
        aligned &= ok
    if not aligned:
        msg = f"label regions are not aligned with the grid for family {spec.name}"
        if strict:
            raise LabelAlignmentError(msg)
        warnings.warn(msg, stacklevel=3)
    return grids, aligned


def plan_sp(target, template: Template, hp: Hyperparameters, epsilon, kind: str, strict_labels: bool = True) -> dict[str, int]:
    """Sample-tuple count per family (before deduplication), without assembling rows."""
    _validate(target, template, kind, epsilon)
    cache: dict = {}
    out = {}
    for spec in specs_for(kind, target, _hp_for(template, hp)):
        grids, _ = _family_grids(spec, epsilon, cache, strict_labels)
        out[spec.name] = math.prod(g.size for g in grids)
    return out


def _hp_for(template: Template, hp: Hyperparameters) -> Hyperparameters:
    if hp.k != template.k:
        raise ValueError(f"template has k={template.k}, hyperparameters say k={hp.k}")
    return hp


def _family_block(system: System, spec: ResidualSpec, grids: list[SampleGrid], basis: np.ndarray, key_col: dict):
    """Dense per-key coefficient blocks of one family, one row per sample tuple."""
    sizes = [g.size for g in grids]
    N = math.prod(sizes)
    idx = np.indices(sizes).reshape(len(sizes), -1)
    mapped: dict = {}

    def points(arg):
        key = (arg.factor, arg.branch)
        if key not in mapped:
            c = grids[arg.factor].centers
            mapped[key] = c if arg.branch is None else system.step_many(c, arg.branch)
        return mapped[key][idx[arg.factor]]

    blocks: dict[tuple, np.ndarray] = {}
    for term in spec.terms:
        vals = monomial_matrix(np.hstack([points(term.args[0]), points(term.args[1])]), basis)
        if term.key in blocks:
            blocks[term.key] = blocks[term.key] + term.scale * vals
        else:
            blocks[term.key] = term.scale * vals
    keys = sorted(blocks, key=lambda k: key_col[k])
    dense = np.hstack([blocks[k] for k in keys]) if keys else np.zeros((N, 0))
    return keys, dense, N


def build_sp(
    target,
    template: Template,
    hp: Hyperparameters,
    epsilon,
    kind: str,
    eta_min: float = ETA_MIN,
    coef_bound: float = COEF_BOUND,
    strict_labels: bool = True,
) -> ScenarioProgram:
    """Assemble the scenario LP.

    ``hp`` supplies ``k`` and the fixed multipliers; its ``eta`` is ignored
    because ``eta`` is a decision variable here. Unaligned label regions raise
    :class:`LabelAlignmentError`, or only warn with ``strict_labels=False``.
    """
    system = _validate(target, template, kind, epsilon)
    hp = _hp_for(template, hp)
    if not eta_min > 0:
        raise ValueError("eta_min must be positive")
    if not coef_bound > 0:
        raise ValueError("coef_bound must be positive")
    nb = template.basis.shape[0]
    keys = template.keys()
    key_col = {key: j * nb for j, key in enumerate(keys)}
    nvar = template.size + 2
    d_col, e_col = template.size, template.size + 1
    specs = specs_for(kind, target, hp)
    cache: dict = {}
    rows_i, cols_i, vals_i = [], [], []
    families, all_grids = [], []
    aligned_all = True
    start = 0
    for spec in specs:
        missing = [t.key for t in spec.terms if t.key not in key_col]
        if missing:
            raise ValueError(f"family {spec.name} uses certificate keys {missing} absent from the template")
        grids, aligned = _family_grids(spec, epsilon, cache, strict_labels)
        aligned_all &= aligned
        all_grids.append(grids)
        if any(g.size == 0 for g in grids):
            families.append(FamilyRows(spec.name, start, start, 0, np.zeros(0, dtype=np.int64)))
            continue
        fkeys, dense, N = _family_block(system, spec, grids, template.basis, key_col)
        _, first = np.unique(dense, axis=0, return_index=True)
        kept = np.sort(first)
        dense = dense[kept]
        r = dense.shape[0]
        local_cols = np.concatenate([np.arange(key_col[k], key_col[k] + nb) for k in fkeys]) if fkeys else np.zeros(0, dtype=np.int64)
        rr, cc = np.nonzero(dense)
        rows_i.append(start + rr)
        cols_i.append(local_cols[cc])
        vals_i.append(dense[rr, cc])
        rows_i.append(start + np.arange(r))
        cols_i.append(np.full(r, d_col))
        vals_i.append(np.ones(r))
        if spec.eta_coef:
            rows_i.append(start + np.arange(r))
            cols_i.append(np.full(r, e_col))
            vals_i.append(np.full(r, spec.eta_coef))
        families.append(FamilyRows(spec.name, start, start + r, N, kept.astype(np.int64)))
        start += r
    cat = lambda parts, dt: np.concatenate(parts).astype(dt) if parts else np.zeros(0, dtype=dt)
    A = sparse.coo_matrix(
        (cat(vals_i, float), (cat(rows_i, np.int64), cat(cols_i, np.int64))), shape=(start, nvar)
    ).tocsr()
    A.sum_duplicates()
    c = np.zeros(nvar)
    c[d_col] = c[e_col] = 1.0
    lower = np.full(nvar, -float(coef_bound))
    upper = np.full(nvar, float(coef_bound))
    lower[d_col], upper[d_col] = -np.inf, np.inf
    lower[e_col], upper[e_col] = eta_min, np.inf
    names = template.variable_names() + ["delta", "eta"]
    lp = LinearProgram(c, A, np.zeros(start), lower, upper, names)
    return ScenarioProgram(lp, template, kind, hp, epsilon, target, specs, all_grids, families, aligned_all)


# solving -------------------------------------------------------------------


def _relative_violation(lp: LinearProgram, z: np.ndarray) -> float:
    A = lp.A
    act = A @ z - lp.b
    scale = np.maximum(1.0, np.asarray(abs(A).max(axis=1).todense()).ravel()) if A.shape[0] else np.ones(0)
    worst = float(np.max(-act / scale, initial=0.0))
    worst = max(worst, float(np.max(lp.lower - z, initial=0.0)), float(np.max(z - lp.upper, initial=0.0)))
    return max(worst, 0.0)


def solve(sp: ScenarioProgram, backend: str = "simplex", solver_path: str | None = None) -> LpSolution:
    """Solve through :func:`iccert.lp.solve_lp`; failures are reported in ``status``."""
    res: LpResult = solve_lp(sp.lp, backend, solver_path)
    if res.status != "optimal" or res.x is None:
        return LpSolution(res.status, None, None, None, None, message=res.message)
    z = np.asarray(res.x, dtype=float)
    viol = _relative_violation(sp.lp, z)
    nb = sp.template.basis.shape[0]
    coefs = {key: z[j * nb:(j + 1) * nb].copy() for j, key in enumerate(sp.template.keys())}
    status, msg = "optimal", res.message
    if viol > FEASIBILITY_TOL:
        status, msg = "solver-error", f"returned point violates constraints by {viol:.3g}"
    return LpSolution(
        status,
        coefs,
        float(z[sp.delta_index]),
        float(z[sp.eta_index]),
        float(sp.lp.c @ z),
        z,
        viol,
        msg,
    )


def reconstruct(sp: ScenarioProgram, solution: LpSolution):
    """Certificate from the optimal coefficients, with hyperparameters carrying ``eta*``."""
    if solution.coefficients is None:
        raise ValueError(f"no coefficients to reconstruct from (status {solution.status})")
    t = sp.template
    arity = 2 * t.n
    polys = {key: Polynomial(arity, t.basis, c) for key, c in solution.coefficients.items()}
    hp = Hyperparameters(t.k, solution.eta, sp.hyperparameters.gamma, sp.hyperparameters.rho1, sp.hyperparameters.rho2)
    if sp.kind == "ltl":
        return IccLtl(t.n, t.k, t.states, polys, t.basis), hp
    cls = IccSafety if sp.kind == "safety" else IccPersistence
    return cls(t.n, tuple(polys[(i,)] for i in range(t.k + 1)), t.basis), hp


def synthesize(
    target,
    template: Template,
    hp: Hyperparameters,
    epsilon,
    kind: str,
    backend: str = "simplex",
    solver_path: str | None = None,
    lipschitz_mode: str = "interval",
    eta_min: float = ETA_MIN,
    coef_bound: float = COEF_BOUND,
    strict_labels: bool = True,
    threads: int = 1,
) -> SynthesisResult:
    """Build, solve, reconstruct and gate.

    Every family is checked on the program's own sample grids. Its gate is
    ``L' * eps_eff + delta* <= 0`` with ``L'`` from ``lipschitz_mode``; a
    family is sound-pass only when the gate holds.
    """
    sp = build_sp(target, template, hp, epsilon, kind, eta_min, coef_bound, strict_labels)
    sol = solve(sp, backend, solver_path)
    eps_report = max(float(v) for v in epsilon.values()) if isinstance(epsilon, Mapping) else float(epsilon)
    if sol.status != "optimal":
        report = CheckReport(kind, eps_report, lipschitz_mode, [], None, [f"solver: {sol.message}"] if sol.message else [], sol.status)
        return SynthesisResult(None, None, sol, report, sp)
    cert, hp_star = reconstruct(sp, sol)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        residuals = residuals_for(target, cert, hp_star)
        report = check(residuals, epsilon, lipschitz_mode, threads)
    for fam in report.families:
        fam.gate = check_thm12_gate(sol.delta, fam.lipschitz, fam.epsilon_effective)
    report.delta_star = sol.delta
    report.solver_status = sol.status
    failed = [f.name for f in report.families if not f.gate]
    if failed:
        shown = ", ".join(failed[:4]) + (" ..." if len(failed) > 4 else "")
        report.notes.append(f"gate L'*eps + delta* <= 0 fails for {len(failed)} families: {shown}")
    return SynthesisResult(cert, hp_star, sol, report, sp)


def search_multipliers(
    target,
    template: Template,
    hp: Hyperparameters,
    epsilon,
    kind: str,
    grid: Sequence[float] = MULTIPLIER_GRID,
    **options,
) -> SynthesisResult:
    """Try every ``(gamma, rho1, rho2)`` from ``grid`` (gamma shared by all ``i``).

    Returns the optimal run with the smallest ``delta*``, the first one in
    grid order on ties. ``rho`` values are only searched for specifications
    that use them.
    """
    rhos = [(hp.rho1, hp.rho2)] if kind == "safety" else list(itertools.product(grid, grid))
    best = None
    for g in grid:
        for r1, r2 in rhos:
            cand = hp.with_multipliers(gamma=g, rho1=r1, rho2=r2)
            res = synthesize(target, template, cand, epsilon, kind, **options)
            if res.solution.status != "optimal":
                if best is None:
                    best = res
                continue
            if best is None or best.solution.status != "optimal" or res.solution.delta < best.solution.delta:
                best = res
    return best


# estimator facade ----------------------------------------------------------


class ScenarioSynthesizer(BaseEstimator):
    """Estimator-style wrapper around :func:`synthesize`.

    ``fit`` takes a :class:`System` (safety, persistence) or a
    :class:`ProductSystem` (LTL) in place of a data matrix; the samples are
    the grid the program builds itself.
    """

    def __init__(
        self,
        kind: str = "safety",
        k: int = 0,
        degree: int = 2,
        epsilon: float = 0.01,
        gamma=1.0,
        rho1: float = 1.0,
        rho2: float = 1.0,
        eta_min: float = ETA_MIN,
        coef_bound: float = COEF_BOUND,
        backend: str = "simplex",
        solver_path: str | None = None,
        lipschitz_mode: str = "interval",
        strict_labels: bool = True,
        multiplier_grid: Sequence[float] | None = None,
        threads: int = 1,
    ):
        self.kind = kind
        self.k = k
        self.degree = degree
        self.epsilon = epsilon
        self.gamma = gamma
        self.rho1 = rho1
        self.rho2 = rho2
        self.eta_min = eta_min
        self.coef_bound = coef_bound
        self.backend = backend
        self.solver_path = solver_path
        self.lipschitz_mode = lipschitz_mode
        self.strict_labels = strict_labels
        self.multiplier_grid = multiplier_grid
        self.threads = threads

    def fit(self, X, y=None):
        system = X.system if isinstance(X, ProductSystem) else X
        states = X.nba.states if self.kind == "ltl" and isinstance(X, ProductSystem) else None
        template = Template.of_degree(system.dimension, self.k, self.degree, states)
        hp = Hyperparameters(self.k, self.eta_min, self.gamma, self.rho1, self.rho2)
        options = dict(
            backend=self.backend,
            solver_path=self.solver_path,
            lipschitz_mode=self.lipschitz_mode,
            eta_min=self.eta_min,
            coef_bound=self.coef_bound,
            strict_labels=self.strict_labels,
            threads=self.threads,
        )
        if self.multiplier_grid:
            res = search_multipliers(X, template, hp, self.epsilon, self.kind, self.multiplier_grid, **options)
        else:
            res = synthesize(X, template, hp, self.epsilon, self.kind, **options)
        self.template_ = template
        self.program_ = res.program
        self.solution_ = res.solution
        self.certificate_ = res.certificate
        self.hyperparameters_ = res.hyperparameters
        self.report_ = res.report
        self.delta_star_ = res.solution.delta
        self.eta_star_ = res.solution.eta
        return self

    def score(self, X=None, y=None) -> float:
        """``-delta*``: larger is a more robust certificate; ``-inf`` without an optimum."""
        if not hasattr(self, "solution_"):
            raise AttributeError("call fit first")
        return -self.delta_star_ if self.delta_star_ is not None else -math.inf
