"""Project configuration files (YAML, ``schema_version: 1``).

Errors carry the file and line of the offending entry. Validation builds the
system, labeling, automaton and hyperparameters eagerly, so a config that
loads is ready for every subcommand.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .automaton import Nba, ProductSystem
from .certificate import KINDS, Hyperparameters
from .geometry import Box
from .poly import DimensionError, parse_polynomial
from .system import LabelingMap, System

__all__ = ["ConfigError", "ProjectConfig", "load_config", "fixture_path", "list_fixtures", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1
BACKENDS = ("simplex", "highs", "external")


class ConfigError(ValueError):
    def __init__(self, message: str, path=None, line: int | None = None):
        self.path, self.line = path, line
        where = f"{path}:{line}: " if path is not None and line is not None else (f"{path}: " if path else "")
        super().__init__(where + message)


class _Map(dict):
    line: int = 0
    lines: dict


class _List(list):
    line: int = 0
    lines: list


class _Loader(yaml.SafeLoader):
    pass


def _map(loader, node):
    out = _Map()
    out.line = node.start_mark.line + 1
    out.lines = {}
    for kn, vn in node.value:
        key = loader.construct_object(kn, deep=True)
        out[key] = loader.construct_object(vn, deep=True)
        out.lines[key] = kn.start_mark.line + 1
    return out


def _seq(loader, node):
    out = _List(loader.construct_object(v, deep=True) for v in node.value)
    out.line = node.start_mark.line + 1
    out.lines = [v.start_mark.line + 1 for v in node.value]
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _map)
_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_SEQUENCE_TAG, _seq)


def list_fixtures() -> list[str]:
    data = resources.files("iccert") / "data"
    return sorted(p.name[:-5] for p in data.iterdir() if p.name.endswith(".yaml"))


def fixture_path(name: str) -> Path:
    """Packaged file ``name`` (a fixture stem like ``lotka_volterra`` or a file name)."""
    data = resources.files("iccert") / "data"
    for cand in (name, name + ".yaml"):
        p = data / cand
        if p.is_file():
            return Path(str(p))
    raise FileNotFoundError(f"no packaged fixture {name!r}; available: {', '.join(list_fixtures())}")


@dataclass
class SolverConfig:
    backend: str | None = None
    coef_bound: float = 1.0
    eta_min: float = 1e-3
    path: str | None = None


@dataclass
class SimulateConfig:
    horizon: int = 100
    runs: int = 1
    seed: int = 0


@dataclass(eq=False)
class ProjectConfig:
    path: Path
    name: str
    kind: str
    variables: list[str]
    system: System
    hyperparameters: Hyperparameters
    k: int
    degree: int | None
    epsilon: float | dict
    labeling: LabelingMap | None = None
    nba: Nba | None = None
    certificate: Path | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    output: Path | None = None

    @property
    def product(self) -> ProductSystem | None:
        if self.nba is None:
            return None
        return ProductSystem(self.system, self.nba, self.labeling)

    @property
    def target(self):
        return self.product if self.kind == "ltl" else self.system

    def resolve(self, value) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.path.parent / p


class _Ctx:
    def __init__(self, path):
        self.path = path

    def fail(self, msg, line=None):
        raise ConfigError(msg, self.path, line)

    def get(self, m: _Map, key, required=True, default=None):
        if not isinstance(m, dict):
            self.fail(f"expected a mapping", getattr(m, "line", None))
        if key not in m:
            if required:
                self.fail(f"missing required key {key!r}", getattr(m, "line", None))
            return default
        return m[key]

    def line(self, m, key):
        if isinstance(m, _Map):
            return m.lines.get(key, m.line)
        if isinstance(m, _List):
            return m.lines[key] if 0 <= key < len(m.lines) else m.line
        return None

    def number(self, m, key, required=True, default=None, positive=False) -> float | None:
        v = self.get(m, key, required, default)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(f"{key!r} must be a number, got {v!r}", self.line(m, key))
        if positive and not v > 0:
            self.fail(f"{key!r} must be positive, got {v!r}", self.line(m, key))
        return float(v)

    def integer(self, m, key, required=True, default=None, minimum=None) -> int | None:
        v = self.get(m, key, required, default)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(f"{key!r} must be an integer, got {v!r}", self.line(m, key))
        if minimum is not None and v < minimum:
            self.fail(f"{key!r} must be at least {minimum}, got {v}", self.line(m, key))
        return int(v)

    def box(self, m, key, n, required=True) -> Box | None:
        v = self.get(m, key, required)
        if v is None:
            return None
        ln = self.line(m, key)
        if not isinstance(v, dict) or "lower" not in v or "upper" not in v:
            self.fail(f"{key!r} must be a mapping with 'lower' and 'upper'", ln)
        lo, up = v["lower"], v["upper"]
        for side, vec in (("lower", lo), ("upper", up)):
            if not isinstance(vec, list) or len(vec) != n:
                self.fail(f"{key}.{side} must list {n} numbers", self.line(v, side))
            if any(isinstance(t, bool) or not isinstance(t, (int, float)) for t in vec):
                self.fail(f"{key}.{side} must contain numbers only", self.line(v, side))
        try:
            return Box(lo, up)
        except ValueError as exc:
            self.fail(f"{key}: {exc}", ln)


def _parse_transitions(ctx: _Ctx, sysd, names):
    raw = ctx.get(sysd, "transitions")
    ln = ctx.line(sysd, "transitions")
    if not isinstance(raw, list) or not raw:
        ctx.fail("'transitions' must be a non-empty list of maps", ln)
    maps = []
    for b, comp in enumerate(raw):
        bl = ctx.line(raw, b)
        if not isinstance(comp, list) or len(comp) != len(names):
            ctx.fail(f"transition {b} must list {len(names)} component expressions", bl)
        polys = []
        for j, text in enumerate(comp):
            cl = ctx.line(comp, j)
            if not isinstance(text, (str, int, float)) or isinstance(text, bool):
                ctx.fail(f"transition {b} component {j} must be an expression string", cl)
            try:
                polys.append(parse_polynomial(str(text), names))
            except (ValueError, SyntaxError) as exc:
                ctx.fail(f"transition {b} component {j}: {exc}", cl)
        maps.append(tuple(polys))
    return tuple(maps)


def load_config(path) -> ProjectConfig:
    """Read and validate a project file; ``path`` may also name a packaged fixture."""
    p = Path(path)
    if not p.exists():
        try:
            p = fixture_path(str(path))
        except FileNotFoundError:
            raise ConfigError(f"no such configuration file or fixture", path) from None
    ctx = _Ctx(p)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        ctx.fail(f"cannot read: {exc}")
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        ctx.fail(f"invalid YAML: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None)
    if not isinstance(doc, dict):
        ctx.fail("top level must be a mapping", 1)

    version = ctx.get(doc, "schema_version")
    if version != SCHEMA_VERSION:
        ctx.fail(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})", ctx.line(doc, "schema_version"))
    known = {
        "schema_version", "name", "specification", "system", "labeling", "automaton", "hyperparameters",
        "template", "epsilon", "solver", "certificate", "simulate", "output",
    }
    for key in doc:
        if key not in known:
            ctx.fail(f"unknown top-level key {key!r}", ctx.line(doc, key))
    name = str(ctx.get(doc, "name", False, p.stem))
    kind = ctx.get(doc, "specification")
    if kind not in KINDS:
        ctx.fail(f"specification must be one of {list(KINDS)}, got {kind!r}", ctx.line(doc, "specification"))

    sysd = ctx.get(doc, "system")
    sys_line = ctx.line(doc, "system")
    names = ctx.get(sysd, "variables")
    if not isinstance(names, list) or not names or not all(isinstance(v, str) and v.isidentifier() for v in names):
        ctx.fail("'variables' must be a non-empty list of identifiers", ctx.line(sysd, "variables"))
    if len(set(names)) != len(names):
        ctx.fail("variable names must be distinct", ctx.line(sysd, "variables"))
    n = len(names)
    state = ctx.box(sysd, "state_set", n)
    init = ctx.box(sysd, "initial_set", n)
    unsafe = ctx.box(sysd, "unsafe_set", n, required=False)
    visit = ctx.box(sysd, "visit_set", n, required=False)
    if kind == "safety" and unsafe is None:
        ctx.fail("a safety specification needs system.unsafe_set", sys_line)
    if kind == "persistence" and visit is None:
        ctx.fail("a persistence specification needs system.visit_set", sys_line)
    maps = _parse_transitions(ctx, sysd, names)
    try:
        system = System(n, state, init, maps, unsafe, visit, name)
    except (ValueError, DimensionError) as exc:
        ctx.fail(f"invalid system: {exc}", sys_line)

    labeling = nba = None
    if kind == "ltl":
        lab = ctx.get(doc, "labeling")
        regions = ctx.get(lab, "regions")
        if not isinstance(regions, list):
            ctx.fail("'labeling.regions' must be a list", ctx.line(lab, "regions"))
        parsed = []
        for j, r in enumerate(regions):
            letter = ctx.get(r, "letter")
            try:
                parsed.append((Box(r["lower"], r["upper"]), str(letter)))
            except (KeyError, ValueError, TypeError) as exc:
                ctx.fail(f"labeling region {j}: {exc}", ctx.line(regions, j))
            if parsed[-1][0].dimension != n:
                ctx.fail(f"labeling region {j} has dimension {parsed[-1][0].dimension}, expected {n}", ctx.line(regions, j))
        labeling = LabelingMap(tuple(parsed), str(ctx.get(lab, "default")))
        ref = ctx.get(doc, "automaton")
        al = ctx.line(doc, "automaton")
        ap = _resolve(p, ref)
        if not ap.is_file():
            ctx.fail(f"automaton file {ref!r} not found", al)
        try:
            nba = Nba.load(ap)
        except (ValueError, KeyError, OSError) as exc:
            ctx.fail(f"automaton {ref!r}: {exc}", al)
        try:
            ProductSystem(system, nba, labeling)
        except ValueError as exc:
            ctx.fail(str(exc), ctx.line(doc, "labeling"))
    elif "labeling" in doc or "automaton" in doc:
        ctx.fail(f"labeling/automaton are only used by ltl specifications", ctx.line(doc, "labeling" if "labeling" in doc else "automaton"))

    tpl = ctx.get(doc, "template")
    k = ctx.integer(tpl, "k", minimum=0)
    degree = ctx.integer(tpl, "degree", required=False, minimum=1)
    hpd = ctx.get(doc, "hyperparameters", False, None) or _Map()
    defaults = {"ltl": (0.1, 0.5)}.get(kind, (1e-3, 1.0))
    eta = ctx.number(hpd, "eta", False, defaults[0], positive=True)
    gamma = ctx.get(hpd, "gamma", False, 1.0)
    rho1 = ctx.number(hpd, "rho1", False, defaults[1], positive=True)
    rho2 = ctx.number(hpd, "rho2", False, 1.0, positive=True)
    try:
        hp = Hyperparameters(k, eta, gamma if not isinstance(gamma, list) else list(gamma), rho1, rho2)
    except (ValueError, TypeError) as exc:
        ctx.fail(f"hyperparameters: {exc}", ctx.line(doc, "hyperparameters"))

    eps = ctx.get(doc, "epsilon", False, None)
    el = ctx.line(doc, "epsilon")
    if isinstance(eps, dict):
        for key, v in eps.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                ctx.fail(f"epsilon.{key} must be a positive number", ctx.line(eps, key))
        epsilon = {str(a): float(v) for a, v in eps.items()}
    elif eps is None:
        epsilon = 0.25
    else:
        epsilon = ctx.number(doc, "epsilon", positive=True)

    sol = ctx.get(doc, "solver", False, None) or _Map()
    backend = ctx.get(sol, "backend", False, None)
    if backend is not None and backend not in BACKENDS:
        ctx.fail(f"solver.backend must be one of {list(BACKENDS)}", ctx.line(sol, "backend"))
    solver = SolverConfig(
        backend,
        ctx.number(sol, "coef_bound", False, 1.0, positive=True),
        ctx.number(sol, "eta_min", False, 1e-3, positive=True),
        ctx.get(sol, "path", False, None),
    )

    cert = ctx.get(doc, "certificate", False, None)
    cert_path = None
    if cert is not None:
        cert_path = _resolve(p, cert)
        if not cert_path.is_file():
            ctx.fail(f"certificate file {cert!r} not found", ctx.line(doc, "certificate"))

    simd = ctx.get(doc, "simulate", False, None) or _Map()
    simulate = SimulateConfig(
        ctx.integer(simd, "horizon", False, 100, minimum=1),
        ctx.integer(simd, "runs", False, 1, minimum=1),
        ctx.integer(simd, "seed", False, 0),
    )
    out = ctx.get(doc, "output", False, None)
    return ProjectConfig(
        p, name, kind, list(names), system, hp, k, degree, epsilon, labeling, nba, cert_path, solver, simulate,
        _resolve(p, out) if out else None,
    )


def _resolve(config_path: Path, ref: Any) -> Path:
    q = Path(os.path.expanduser(str(ref)))
    return q if q.is_absolute() else config_path.parent / q
