"""Closure-certificate data model and residual construction.

A certificate is a chain ``T_0, ..., T_k`` of polynomials over state pairs
``(x, y)`` (arity ``2n``, the ``x`` block first). For the automaton product each
``T_i`` is further indexed by a pair of automaton states ``(q, p)``.

The checker and the scenario program never look at implications. They work
with residuals, polynomials that must be nonnegative on a box-product domain
and that imply the certificate conditions when they are. Each residual is kept
in two forms: a symbolic :class:`ResidualSpec` (linear in the unknown
certificate functions, used to assemble LP rows) and, once a certificate is
known, the expanded :class:`Polynomial`.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .automaton import ProductSystem
from .geometry import Box
from .poly import DimensionError, Polynomial
from .system import LabelingMap, System

__all__ = [
    "Hyperparameters",
    "IccSafety",
    "IccPersistence",
    "IccLtl",
    "Factor",
    "Arg",
    "Term",
    "ResidualSpec",
    "Residual",
    "ResidualSet",
    "safety_specs",
    "persistence_specs",
    "ltl_specs",
    "safety_residuals",
    "persistence_residuals",
    "ltl_residuals",
    "residuals_for",
    "cc_safety_residuals",
    "PiecewiseIcc",
    "ibc_to_icc",
    "load_certificate",
    "save_certificate",
    "certificate_from_dict",
    "certificate_to_dict",
]

KINDS = ("safety", "persistence", "ltl")


@dataclass(frozen=True)
class Hyperparameters:
    """Chain length ``k``, margin ``eta`` and the fixed multipliers."""

    k: int
    eta: float
    gamma: tuple[float, ...]
    rho1: float = 1.0
    rho2: float = 1.0

    def __post_init__(self):
        if self.k < 0 or int(self.k) != self.k:
            raise ValueError(f"k must be a nonnegative integer, got {self.k}")
        gamma = self.gamma
        if np.isscalar(gamma):
            gamma = (float(gamma),) * (self.k + 1)
        gamma = tuple(float(g) for g in gamma)
        object.__setattr__(self, "gamma", gamma)
        if len(gamma) != self.k + 1:
            raise ValueError(f"gamma needs k+1 = {self.k + 1} entries, got {len(gamma)}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if any(not g > 0 for g in gamma):
            raise ValueError("every gamma must be positive")
        if not (self.rho1 > 0 and self.rho2 > 0):
            raise ValueError("rho1 and rho2 must be positive")

    @classmethod
    def from_dict(cls, data: Mapping, k: int | None = None) -> "Hyperparameters":
        k = data.get("k", k)
        if k is None:
            raise ValueError("hyperparameters need k")
        return cls(
            int(k),
            float(data["eta"]),
            data.get("gamma", 1.0),
            float(data.get("rho1", 1.0)),
            float(data.get("rho2", 1.0)),
        )

    def to_dict(self) -> dict:
        return {"k": self.k, "eta": self.eta, "gamma": list(self.gamma), "rho1": self.rho1, "rho2": self.rho2}

    def with_multipliers(self, gamma=None, rho1=None, rho2=None) -> "Hyperparameters":
        return Hyperparameters(
            self.k,
            self.eta,
            self.gamma if gamma is None else gamma,
            self.rho1 if rho1 is None else rho1,
            self.rho2 if rho2 is None else rho2,
        )


# certificates -------------------------------------------------------------


def _check_function(T: Polynomial, n: int, label: str) -> None:
    if T.arity != 2 * n:
        raise DimensionError(f"{label} has arity {T.arity}, expected 2n = {2 * n}")


@dataclass(frozen=True, eq=False)
class IccSafety:
    """``T_0..T_k`` over pairs ``(x, y)`` for a safety specification."""

    n: int
    T: tuple[Polynomial, ...]
    basis: np.ndarray | None = field(default=None, repr=False)

    kind = "safety"

    def __post_init__(self):
        object.__setattr__(self, "T", tuple(self.T))
        if not self.T:
            raise ValueError("a certificate needs at least one function")
        for i, t in enumerate(self.T):
            _check_function(t, self.n, f"T_{i}")

    @property
    def k(self) -> int:
        return len(self.T) - 1

    def keys(self) -> list[tuple]:
        return [(i,) for i in range(len(self.T))]

    def function(self, key: tuple) -> Polynomial:
        return self.T[key[0]]

    def map_functions(self, fn: Callable[[Polynomial], Polynomial]) -> "IccSafety":
        return type(self)(self.n, tuple(fn(t) for t in self.T), self.basis)


class IccPersistence(IccSafety):
    """Same data as :class:`IccSafety`, checked against a finite-visit set."""

    kind = "persistence"


@dataclass(frozen=True, eq=False)
class IccLtl:
    """``T_i^{(q,p)}`` for ``i <= k`` and automaton states ``q, p``."""

    n: int
    k: int
    states: int
    T: Mapping[tuple[int, int, int], Polynomial]
    basis: np.ndarray | None = field(default=None, repr=False)

    kind = "ltl"

    def __post_init__(self):
        table = dict(self.T)
        missing = []
        for key in self.keys():
            if key not in table:
                missing.append(key)
                table[key] = Polynomial.zero(2 * self.n)
        extra = set(table) - set(self.keys())
        if extra:
            raise ValueError(f"certificate entries outside 0..k x Q x Q: {sorted(extra)[:5]}")
        if missing:
            shown = ", ".join(str(m) for m in missing[:6])
            more = "" if len(missing) <= 6 else f" and {len(missing) - 6} more"
            warnings.warn(f"missing certificate entries default to zero: {shown}{more}", stacklevel=2)
        for key, t in table.items():
            _check_function(t, self.n, f"T_{key}")
        object.__setattr__(self, "T", table)
        object.__setattr__(self, "missing", tuple(missing))

    def keys(self) -> list[tuple[int, int, int]]:
        return [(i, q, p) for i in range(self.k + 1) for q in range(self.states) for p in range(self.states)]

    def function(self, key: tuple) -> Polynomial:
        return self.T[key]

    def map_functions(self, fn: Callable[[Polynomial], Polynomial]) -> "IccLtl":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return IccLtl(self.n, self.k, self.states, {key: fn(t) for key, t in self.T.items()}, self.basis)


Certificate = IccSafety | IccPersistence | IccLtl


# residual specifications ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class Factor:
    """One quantified block of a residual domain.

    With ``letter`` set, only grid cells of ``box`` that ``labeling`` maps to
    that letter belong to the domain.
    """

    name: str
    box: Box
    letter: str | None = None
    labeling: LabelingMap | None = field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return self.box.dimension


@dataclass(frozen=True)
class Arg:
    """Certificate argument: factor ``factor`` passed through map ``branch`` (identity if ``None``)."""

    factor: int
    branch: int | None = None


@dataclass(frozen=True)
class Term:
    """``scale * T_key(args[0], args[1])``."""

    scale: float
    key: tuple
    args: tuple[Arg, Arg]


@dataclass(frozen=True, eq=False)
class ResidualSpec:
    """Residual ``sum(terms) + eta_coef * eta``, required to be ``>= 0`` on the factor product."""

    name: str
    kind: str
    factors: tuple[Factor, ...]
    terms: tuple[Term, ...]
    eta_coef: float = 0.0

    @property
    def dimension(self) -> int:
        return sum(f.dimension for f in self.factors)

    def offsets(self) -> list[int]:
        out, acc = [], 0
        for f in self.factors:
            out.append(acc)
            acc += f.dimension
        return out


@dataclass(frozen=True, eq=False)
class Residual:
    spec: ResidualSpec
    polynomial: Polynomial

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def factors(self) -> tuple[Factor, ...]:
        return self.spec.factors

    @property
    def dimension(self) -> int:
        return self.spec.dimension


@dataclass(frozen=True, eq=False)
class ResidualSet:
    kind: str
    system: System
    hyperparameters: Hyperparameters
    residuals: tuple[Residual, ...]

    def __iter__(self):
        return iter(self.residuals)

    def __len__(self) -> int:
        return len(self.residuals)

    @property
    def names(self) -> list[str]:
        return [r.name for r in self.residuals]

    def __getitem__(self, name: str) -> Residual:
        for r in self.residuals:
            if r.name == name:
                return r
        raise KeyError(name)

    def subset(self, names: Iterable[str]) -> "ResidualSet":
        wanted = set(names)
        return ResidualSet(self.kind, self.system, self.hyperparameters, tuple(r for r in self.residuals if r.name in wanted))


def _suffix(system: System, b: int) -> str:
    return f"@b{b}" if system.branches > 1 else ""


def _chain_specs(system: System, hp: Hyperparameters, x_factor: Factor, y_factor: Factor, key: Callable, tag: str = "") -> list[ResidualSpec]:
    """Chain and closure residuals ``T_{i+1}(x,y) - gamma_i T_i(f(x),y)``.

    ``key(i, stage)`` maps a chain index to a certificate key, ``stage`` being
    ``"pre"`` for the left function and ``"post"`` for the one composed with f.
    """
    specs = []
    k = hp.k
    for b in range(system.branches):
        for i in range(k):
            specs.append(
                ResidualSpec(
                    f"chain[{i}]{tag}{_suffix(system, b)}",
                    "chain",
                    (x_factor, y_factor),
                    (
                        Term(1.0, key(i + 1, "pre"), (Arg(0), Arg(1))),
                        Term(-hp.gamma[i], key(i, "post"), (Arg(0, b), Arg(1))),
                    ),
                )
            )
        specs.append(
            ResidualSpec(
                f"closure{tag}{_suffix(system, b)}",
                "closure",
                (x_factor, y_factor),
                (
                    Term(1.0, key(k, "pre"), (Arg(0), Arg(1))),
                    Term(-hp.gamma[k], key(k, "post"), (Arg(0, b), Arg(1))),
                ),
            )
        )
    return specs


def _transition_specs(system: System, factor: Factor, key: tuple, tag: str = "") -> list[ResidualSpec]:
    return [
        ResidualSpec(
            f"transition{tag}{_suffix(system, b)}",
            "transition",
            (factor,),
            (Term(1.0, key, (Arg(0), Arg(0, b))),),
        )
        for b in range(system.branches)
    ]


def _rank_spec(name: str, hp: Hyperparameters, factors: tuple[Factor, Factor, Factor], k_first, k_second, k_pair) -> ResidualSpec:
    terms = []
    if 1.0 - hp.rho1 != 0.0:
        terms.append(Term(1.0 - hp.rho1, k_first, (Arg(0), Arg(1))))
    terms.append(Term(-1.0, k_second, (Arg(0), Arg(2))))
    terms.append(Term(-hp.rho2, k_pair, (Arg(1), Arg(2))))
    return ResidualSpec(name, "rank", factors, tuple(terms), eta_coef=-1.0)


def safety_specs(system: System, hp: Hyperparameters) -> list[ResidualSpec]:
    if system.unsafe_set is None:
        raise ValueError("safety residuals need an unsafe set")
    X = Factor("x", system.state_set)
    Y = Factor("y", system.state_set)
    specs = _transition_specs(system, X, (0,))
    specs += _chain_specs(system, hp, X, Y, lambda i, _: (i,))
    X0 = Factor("x0", system.initial_set)
    XU = Factor("xu", system.unsafe_set)
    for i in range(hp.k + 1):
        specs.append(ResidualSpec(f"init[{i}]", "init", (X0, XU), (Term(-1.0, (i,), (Arg(0), Arg(1))),), eta_coef=-1.0))
    return specs


def persistence_specs(system: System, hp: Hyperparameters) -> list[ResidualSpec]:
    if system.visit_set is None:
        raise ValueError("persistence residuals need a finite-visit set")
    X = Factor("x", system.state_set)
    Y = Factor("y", system.state_set)
    specs = _transition_specs(system, X, (0,))
    specs += _chain_specs(system, hp, X, Y, lambda i, _: (i,))
    k = hp.k
    factors = (Factor("x0", system.initial_set), Factor("y", system.visit_set), Factor("y2", system.visit_set))
    specs.append(_rank_spec("rank", hp, factors, (k,), (k,), (k,)))
    return specs


def ltl_specs(product: ProductSystem, hp: Hyperparameters) -> list[ResidualSpec]:
    """Residuals on the product, one group per automaton edge ``(q, sigma, q')``."""
    system, nba, labeling = product.system, product.nba, product.labeling
    Y = Factor("y", system.state_set)
    specs: list[ResidualSpec] = []
    k = hp.k
    for q, sigma, q2 in nba.edges():
        Xs = Factor("x", system.state_set, sigma, labeling)
        edge = f"[{sigma}:{q}->{q2}]"
        specs += _transition_specs(system, Xs, (0, q, q2), edge)
        for p in range(nba.states):
            specs += _chain_specs(
                system,
                hp,
                Xs,
                Y,
                lambda i, stage, q=q, q2=q2, p=p: (i, q, p) if stage == "pre" else (i, q2, p),
                f"{edge}[p={p}]",
            )
    factors = (Factor("x0", system.initial_set), Factor("y", system.state_set), Factor("y2", system.state_set))
    for q0 in sorted(nba.initial):
        for r in sorted(nba.accepting):
            for r2 in sorted(nba.accepting):
                specs.append(_rank_spec(f"rank[{q0},{r},{r2}]", hp, factors, (k, q0, r), (k, q0, r2), (k, r, r2)))
    return specs


def _arg_substitutions(system: System, spec: ResidualSpec, arg: Arg) -> list[Polynomial]:
    N = spec.dimension
    off = spec.offsets()[arg.factor]
    n = spec.factors[arg.factor].dimension
    if arg.branch is None:
        return [Polynomial.variable(N, off + j) for j in range(n)]
    return [c.embed(N, range(off, off + n)) for c in system.transitions[arg.branch]]


def instantiate(system: System, spec: ResidualSpec, lookup: Callable[[tuple], Polynomial], eta: float) -> Residual:
    """Expand a residual spec for concrete certificate functions."""
    N = spec.dimension
    total = Polynomial.constant(N, spec.eta_coef * eta) if spec.eta_coef else Polynomial.zero(N)
    for term in spec.terms:
        T = lookup(term.key)
        subs = _arg_substitutions(system, spec, term.args[0]) + _arg_substitutions(system, spec, term.args[1])
        total = total + T.compose(subs).scale(term.scale)
    return Residual(spec, total)


def _residual_set(kind: str, system: System, specs, cert, hp: Hyperparameters) -> ResidualSet:
    if cert.kind != kind:
        raise ValueError(f"certificate kind {cert.kind!r} does not match specification {kind!r}")
    if cert.n != system.dimension:
        raise DimensionError(f"certificate is over {cert.n} states, system has {system.dimension}")
    if cert.k != hp.k:
        raise ValueError(f"certificate has k={cert.k}, hyperparameters say k={hp.k}")
    residuals = tuple(instantiate(system, s, cert.function, hp.eta) for s in specs)
    return ResidualSet(kind, system, hp, residuals)


def safety_residuals(system: System, icc: IccSafety, hp: Hyperparameters) -> ResidualSet:
    return _residual_set("safety", system, safety_specs(system, hp), icc, hp)


def persistence_residuals(system: System, icc: IccPersistence, hp: Hyperparameters) -> ResidualSet:
    return _residual_set("persistence", system, persistence_specs(system, hp), icc, hp)


def ltl_residuals(product: ProductSystem, icc: IccLtl, hp: Hyperparameters) -> ResidualSet:
    if icc.states != product.nba.states:
        raise ValueError(f"certificate indexes {icc.states} automaton states, automaton has {product.nba.states}")
    return _residual_set("ltl", product.system, ltl_specs(product, hp), icc, hp)


def residuals_for(target, icc, hp: Hyperparameters) -> ResidualSet:
    """Dispatch on the certificate kind; ``target`` is a System or ProductSystem."""
    if icc.kind == "ltl":
        if not isinstance(target, ProductSystem):
            raise ValueError("LTL certificates need a product system")
        return ltl_residuals(target, icc, hp)
    system = target.system if isinstance(target, ProductSystem) else target
    if icc.kind == "safety":
        return safety_residuals(system, icc, hp)
    return persistence_residuals(system, icc, hp)


def specs_for(kind: str, target, hp: Hyperparameters) -> list[ResidualSpec]:
    if kind == "ltl":
        return ltl_specs(target, hp)
    system = target.system if isinstance(target, ProductSystem) else target
    if kind == "safety":
        return safety_specs(system, hp)
    if kind == "persistence":
        return persistence_specs(system, hp)
    raise ValueError(f"unknown specification kind {kind!r}")


# plain closure certificate (k = 0), built without compose -----------------


def _substitute(T: Polynomial, first: Sequence[Polynomial], second: Sequence[Polynomial]) -> Polynomial:
    """``T(first, second)`` expanded term by term with repeated products."""
    subs = list(first) + list(second)
    arity = subs[0].arity
    total = Polynomial.zero(arity)
    for c, e in T.terms:
        m = Polynomial.constant(arity, c)
        for s, power in zip(subs, e):
            for _ in range(power):
                m = m * s
        total = total + m
    return total


def cc_safety_residuals(system: System, T: Polynomial, gamma: float, eta: float) -> dict[str, Polynomial]:
    """Strengthened closure-certificate conditions for safety.

    ``T(x, f(x)) >= 0`` on X, ``T(x, y) - gamma T(f(x), y) >= 0`` on X x X and
    ``-eta - T(x0, xu) >= 0`` on X0 x Xu, keyed by the same names that
    :func:`safety_residuals` uses for ``k = 0``.
    """
    n = system.dimension
    out: dict[str, Polynomial] = {}
    one = [Polynomial.variable(n, j) for j in range(n)]
    two_y = [Polynomial.variable(2 * n, n + j) for j in range(n)]
    for b, fmap in enumerate(system.transitions):
        sfx = _suffix(system, b)
        out[f"transition{sfx}"] = _substitute(T, one, fmap)
        fx = [c.embed(2 * n, range(n)) for c in fmap]
        out[f"closure{sfx}"] = T - _substitute(T, fx, two_y).scale(gamma)
    out["init[0]"] = -T - eta
    return out


# Theorem-6 style construction from interpolation barrier functions ---------


BarrierFn = Callable[[np.ndarray], np.ndarray]


def _as_barrier(b) -> BarrierFn:
    if isinstance(b, Polynomial):
        return lambda pts: b.evaluate_many(np.atleast_2d(pts))
    return lambda pts: np.asarray(b(np.atleast_2d(pts)), dtype=float).reshape(-1)


@dataclass(frozen=True, eq=False)
class PiecewiseIcc:
    """Evaluable ``T_i`` with values in ``{0, -eta}`` built from barriers ``B_0..B_kb``.

    ``T_i(x, y) = 0`` when, for every ``l``, ``B_l(x) > 0`` or ``B_m(y) <= 0``
    with ``m = min(kb, l + i + 1)``; otherwise ``-eta``.
    """

    barriers: tuple[BarrierFn, ...]
    eta: float

    @property
    def kb(self) -> int:
        return len(self.barriers) - 1

    @property
    def k(self) -> int:
        """Index of the last function; ``kb`` barriers give ``kb`` functions, a single barrier gives one."""
        return max(self.kb - 1, 0)

    def evaluate(self, i: int, x, y) -> np.ndarray:
        if not 0 <= i <= self.k:
            raise IndexError(f"function index {i} outside 0..{self.k}")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        bx = [b(x) for b in self.barriers]
        by = [b(y) for b in self.barriers]
        ok = np.ones(x.shape[0], dtype=bool)
        for ell in range(self.kb + 1):
            m = min(self.kb, ell + i + 1)
            ok &= (bx[ell] > 0) | (by[m] <= 0)
        return np.where(ok, 0.0, -self.eta)

    def residuals(self, system: System, x, y, gamma: float = 1.0, x0=None, xu=None) -> dict[str, np.ndarray]:
        """Strengthened safety conditions at sample pairs ``(x, y)``.

        With ``x0`` and ``xu`` also given, the ``init[i]`` conditions are
        evaluated at the pairs ``(x0, xu)``.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        out = {}
        for b in range(system.branches):
            sfx = _suffix(system, b)
            fx = system.step_many(x, b)
            out[f"transition{sfx}"] = self.evaluate(0, x, fx)
            for i in range(self.k):
                out[f"chain[{i}]{sfx}"] = self.evaluate(i + 1, x, y) - gamma * self.evaluate(i, fx, y)
            out[f"closure{sfx}"] = self.evaluate(self.k, x, y) - gamma * self.evaluate(self.k, fx, y)
        if x0 is not None and xu is not None:
            for i in range(self.k + 1):
                out[f"init[{i}]"] = -self.eta - self.evaluate(i, x0, xu)
        return out


def ibc_to_icc(barriers: Sequence, eta: float) -> PiecewiseIcc:
    """Closure certificate from interpolation barrier functions ``B_0..B_kb``.

    Each barrier is a :class:`Polynomial` or a vectorised callable on an
    ``(N, n)`` array.
    """
    if not barriers:
        raise ValueError("need at least one barrier function")
    if not eta > 0:
        raise ValueError("eta must be positive")
    return PiecewiseIcc(tuple(_as_barrier(b) for b in barriers), float(eta))


# serialisation ---------------------------------------------------------------


def _coefficients_on(basis: np.ndarray, T: Polynomial) -> list[float]:
    index = {tuple(int(v) for v in row): j for j, row in enumerate(basis)}
    coefs = [0.0] * len(index)
    for c, e in T.terms:
        if e not in index:
            raise ValueError(f"monomial {e} is not in the certificate basis")
        coefs[index[e]] = c
    return coefs


def _union_basis(polys: Iterable[Polynomial], arity: int) -> np.ndarray:
    rows = [p.exponents for p in polys if len(p)]
    if not rows:
        return np.zeros((1, arity), dtype=np.int64)
    return Polynomial(arity, np.vstack(rows), np.ones(sum(r.shape[0] for r in rows))).exponents


def certificate_to_dict(cert, hp: Hyperparameters | None = None) -> dict:
    arity = 2 * cert.n
    polys = [cert.function(key) for key in cert.keys()]
    basis = cert.basis if cert.basis is not None else _union_basis(polys, arity)
    functions = []
    for key in cert.keys():
        entry = {"i": key[0]}
        if cert.kind == "ltl":
            entry["q"], entry["p"] = key[1], key[2]
        entry["coefficients"] = _coefficients_on(basis, cert.function(key))
        functions.append(entry)
    out = {"kind": cert.kind, "k": cert.k, "n": cert.n}
    if cert.kind == "ltl":
        out["states"] = cert.states
    out["hyperparameters"] = hp.to_dict() if hp is not None else None
    out["basis"] = [[int(v) for v in row] for row in basis]
    out["functions"] = functions
    return out


def certificate_from_dict(data: Mapping):
    """Inverse of :func:`certificate_to_dict`; returns ``(certificate, hyperparameters or None)``."""
    kind = data["kind"]
    if kind not in KINDS:
        raise ValueError(f"unknown certificate kind {kind!r}")
    k, n = int(data["k"]), int(data["n"])
    basis = np.asarray(data["basis"], dtype=np.int64)
    if basis.ndim != 2 or basis.shape[1] != 2 * n:
        raise DimensionError(f"basis rows must have 2n = {2 * n} exponents")
    hp = data.get("hyperparameters")
    hp = Hyperparameters.from_dict(hp, k) if hp else None

    def poly(entry) -> Polynomial:
        coefs = np.asarray(entry["coefficients"], dtype=float)
        if coefs.shape != (basis.shape[0],):
            raise DimensionError(f"function {entry.get('i')} has {coefs.size} coefficients, basis has {basis.shape[0]}")
        return Polynomial(2 * n, basis, coefs)

    if kind == "ltl":
        states = int(data.get("states", 1 + max(max(f["q"], f["p"]) for f in data["functions"])))
        table = {}
        for entry in data["functions"]:
            key = (int(entry["i"]), int(entry["q"]), int(entry["p"]))
            if key in table:
                raise ValueError(f"duplicate certificate entry {key}")
            table[key] = poly(entry)
        return IccLtl(n, k, states, table, basis), hp
    by_index = {}
    for entry in data["functions"]:
        i = int(entry["i"])
        if i in by_index:
            raise ValueError(f"duplicate certificate function {i}")
        by_index[i] = poly(entry)
    if sorted(by_index) != list(range(k + 1)):
        raise ValueError(f"certificate must define functions 0..{k}, found {sorted(by_index)}")
    cls = IccSafety if kind == "safety" else IccPersistence
    return cls(n, tuple(by_index[i] for i in range(k + 1)), basis), hp


def load_certificate(path):
    with open(path, encoding="utf-8") as fh:
        return certificate_from_dict(json.load(fh))


def save_certificate(cert, path, hp: Hyperparameters | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(certificate_to_dict(cert, hp), fh, indent=1)
        fh.write("\n")
