"""Grid-plus-Lipschitz checking of residual families and random falsification.

A family is evaluated at every tuple of cell centres of its domain factors.
If the smallest sampled value ``m`` and a Lipschitz bound ``L`` (infinity norm)
satisfy ``m >= L * eps_eff``, the residual is nonnegative on the whole domain,
because every point lies within ``eps_eff`` of some centre.

Products of grids are never materialised. A residual over factors
``(z_0, z_1, ...)`` is written as ``M_0(z_0) C R(z_1, ...)^T`` where ``M_0`` and
``R`` are monomial matrices, and the matrix product is formed block by
block.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .certificate import Factor, Residual, ResidualSet
from .geometry import SampleGrid, grid, is_grid_aligned
from .poly import Polynomial, monomial_matrix

__all__ = [
    "Violation",
    "FamilyReport",
    "CheckReport",
    "check",
    "falsify",
    "check_thm12_gate",
    "lipschitz",
    "factor_grid",
    "evaluate_family",
    "VIOLATION_CAP",
]

VIOLATION_CAP = 1000
SOUND, SAMPLE, FAIL = "sound-pass", "sample-pass", "fail"
_BLOCK = 1 << 22  # entries per evaluated block


@dataclass(frozen=True)
class Violation:
    family: str
    point: tuple[float, ...]
    value: float


@dataclass
class FamilyReport:
    name: str
    samples: int
    minimum: float | None
    argmin: tuple[float, ...] | None
    violation_count: int
    violations: list[Violation]
    lipschitz: float
    epsilon_effective: float
    sound: bool
    labels_aligned: bool = True
    gate: bool | None = None

    @property
    def verdict(self) -> str:
        if self.violation_count:
            return FAIL
        return SOUND if self.sound and (self.gate is None or self.gate) else SAMPLE

    @property
    def margin(self) -> float | None:
        """``min - L * eps_eff``; nonnegative exactly when the family is sound."""
        if self.minimum is None:
            return None
        return self.minimum - self.lipschitz * self.epsilon_effective

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "samples": self.samples,
            "minimum": self.minimum,
            "argmin": list(self.argmin) if self.argmin is not None else None,
            "violation_count": self.violation_count,
            "violations": [{"point": list(v.point), "value": v.value} for v in self.violations],
            "lipschitz": self.lipschitz,
            "epsilon_effective": self.epsilon_effective,
            "margin": self.margin,
            "sound": self.sound,
            "labels_aligned": self.labels_aligned,
            "gate": self.gate,
            "verdict": self.verdict,
        }


@dataclass
class CheckReport:
    kind: str
    epsilon: float
    lipschitz_mode: str
    families: list[FamilyReport]
    delta_star: float | None = None
    notes: list[str] = field(default_factory=list)
    solver_status: str | None = None

    @property
    def verdict(self) -> str:
        verdicts = [f.verdict for f in self.families]
        if self.solver_status not in (None, "optimal") or FAIL in verdicts:
            return FAIL
        if all(v == SOUND for v in verdicts):
            return SOUND
        return SAMPLE

    @property
    def exit_code(self) -> int:
        return {SOUND: 0, SAMPLE: 2, FAIL: 1}[self.verdict]

    def family(self, name: str) -> FamilyReport:
        for f in self.families:
            if f.name == name:
                return f
        raise KeyError(name)

    def minima(self) -> dict[str, float | None]:
        return {f.name: f.minimum for f in self.families}

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "epsilon": self.epsilon,
            "lipschitz_mode": self.lipschitz_mode,
            "verdict": self.verdict,
            "delta_star": self.delta_star,
            "solver_status": self.solver_status,
            "notes": list(self.notes),
            "families": [f.to_dict() for f in self.families],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def to_text(self) -> str:
        rows = [("family", "samples", "min", "L'", "eps_eff", "margin", "verdict")]
        for f in self.families:
            rows.append(
                (
                    f.name,
                    str(f.samples),
                    "-" if f.minimum is None else f"{f.minimum:.6g}",
                    f"{f.lipschitz:.4g}",
                    f"{f.epsilon_effective:.4g}",
                    "-" if f.margin is None else f"{f.margin:.4g}",
                    f.verdict if f.gate is None else f"{f.verdict} (gate {'ok' if f.gate else 'failed'})",
                )
            )
        widths = [max(len(r[j]) for r in rows) for j in range(len(rows[0]))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        head = f"{self.kind} check, epsilon={self.epsilon:g}, lipschitz={self.lipschitz_mode}"
        if self.solver_status is not None:
            head += f", solver={self.solver_status}"
        if self.delta_star is not None:
            head += f", delta*={self.delta_star:.6g}"
        tail = [f"verdict: {self.verdict}"] + [f"note: {n}" for n in self.notes]
        return "\n".join([head] + lines + tail)


# grids -------------------------------------------------------------------


def factor_grid(factor: Factor, epsilon: float, cache: dict | None = None) -> tuple[SampleGrid, bool]:
    """Grid of one domain factor and whether its label regions are cell-aligned."""
    key = (factor.box, float(epsilon), factor.letter, id(factor.labeling))
    if cache is not None and key in cache:
        return cache[key]
    g = grid(factor.box, epsilon)
    aligned = True
    if factor.letter is not None:
        labels = factor.labeling.label_many(g.centers)
        aligned = all(is_grid_aligned(box, g) for box, _ in factor.labeling.regions)
        g = g.restrict(labels == factor.letter)
    if cache is not None:
        cache[key] = (g, aligned)
    return g, aligned


def _cells_box(g: SampleGrid) -> tuple[np.ndarray, np.ndarray] | None:
    if g.size == 0:
        return None
    hw = g.half_widths
    lo = np.maximum(g.centers.min(axis=0) - hw, g.box.lower)
    up = np.minimum(g.centers.max(axis=0) + hw, g.box.upper)
    return lo, up


def domain_box(grids: list[SampleGrid]) -> tuple[np.ndarray, np.ndarray] | None:
    parts = [_cells_box(g) for g in grids]
    if any(p is None for p in parts):
        return None
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


# Lipschitz bounds ------------------------------------------------------------


def lipschitz(poly: Polynomial, box, mode: str = "interval", samples: int = 4096, seed: int = 0) -> float:
    """Infinity-norm Lipschitz constant of ``poly`` over ``box``.

    ``interval`` is a sound upper bound. ``sampled`` is the largest gradient
    l1-norm seen at random points, an estimate that can undershoot.
    """
    if mode == "interval":
        return poly.lipschitz_bound(box)
    if mode == "sampled":
        lo, up = (np.asarray(b, dtype=float) for b in box)
        rng = np.random.default_rng(seed)
        pts = rng.uniform(lo, up, size=(samples, lo.size))
        total = np.zeros(samples)
        for g in poly.gradient():
            total += np.abs(g.evaluate_many(pts))
        return float(total.max()) if samples else 0.0
    raise ValueError(f"unknown lipschitz mode {mode!r}")


# separable evaluation ------------------------------------------------------


class _Separable:
    """``P(z_0, z_1, ...) = M_0(z_0) @ C @ R(z_1, ...)^T`` over a grid product."""

    def __init__(self, poly: Polynomial, grids: list[SampleGrid]):
        dims = [g.dimension for g in grids]
        offs = np.cumsum([0] + dims)
        exps = poly.exponents
        self.grids = grids
        self.sizes = [g.size for g in grids]
        self.rest_size = math.prod(self.sizes[1:])
        e0 = exps[:, : offs[1]]
        u0, i0 = np.unique(e0, axis=0, return_inverse=True)
        er = exps[:, offs[1]:]
        ur, ir = np.unique(er, axis=0, return_inverse=True)
        C = np.zeros((u0.shape[0], ur.shape[0]))
        np.add.at(C, (i0.ravel(), ir.ravel()), poly.coefficients)
        self.M0 = monomial_matrix(grids[0].centers, u0) if grids[0].size else np.zeros((0, u0.shape[0]))
        self.C = C
        self.parts = []  # per rest factor: (monomial matrix, column index into it per rest monomial)
        for f in range(1, len(grids)):
            cols = ur[:, offs[f] - offs[1]: offs[f + 1] - offs[1]]
            uf, jf = np.unique(cols, axis=0, return_inverse=True)
            mf = monomial_matrix(grids[f].centers, uf) if grids[f].size else np.zeros((0, uf.shape[0]))
            self.parts.append((mf, jf.ravel()))

    def rest_rows(self, start: int, stop: int) -> np.ndarray:
        idx = np.arange(start, stop)
        sub = np.unravel_index(idx, self.sizes[1:]) if len(self.sizes) > 1 else ()
        R = None
        for (mf, jf), rows in zip(self.parts, sub):
            block = mf[rows][:, jf]
            R = block if R is None else R * block
        return R



def _blocks(rows: int, rest: int, width: int, block: int):
    """Rest chunks (each materialised once), then row slabs within each chunk."""
    rest_chunk = max(1, min(rest, block // max(1, width)))
    row_chunk = max(1, block // rest_chunk)
    for b in range(0, rest, rest_chunk):
        yield (b, min(b + rest_chunk, rest)), [(a, min(a + row_chunk, rows)) for a in range(0, rows, row_chunk)]


@dataclass
class _Partial:
    minimum: float = math.inf
    argmin: int = -1
    count: int = 0
    violations: list = field(default_factory=list)  # (flat index, value)


def _reduce_block(values: np.ndarray, row0: int, col0: int, stride: int, cap: int) -> _Partial:
    """Reduce a 2-D block whose entry ``(i, j)`` has flat index ``(row0+i)*stride + col0+j``."""
    out = _Partial()
    if values.size == 0:
        return out
    values = values.reshape(values.shape[0], -1)
    width = values.shape[1]

    def flat(t):
        return (row0 + t // width) * stride + col0 + t % width

    j = int(np.argmin(values))
    out.minimum, out.argmin = float(values.flat[j]), int(flat(j))
    neg = np.flatnonzero(values < 0)
    out.count = int(neg.size)
    out.violations = [(int(flat(t)), float(values.flat[t])) for t in neg[:cap]]
    return out


def _merge(parts: Iterable[_Partial], cap: int) -> _Partial:
    total = _Partial()
    viol = []
    for p in parts:
        if p.argmin >= 0 and (p.minimum, p.argmin) < (total.minimum, total.argmin if total.argmin >= 0 else math.inf):
            total.minimum, total.argmin = p.minimum, p.argmin
        total.count += p.count
        viol.extend(p.violations)
    viol.sort()
    total.violations = viol[:cap]
    return total


def evaluate_family(
    poly: Polynomial,
    grids: list[SampleGrid],
    cap: int = VIOLATION_CAP,
    block: int = _BLOCK,
    threads: int = 1,
) -> _Partial:
    """Minimum, argmin (flat row-major index) and violations of ``poly`` over a grid product.

    The result does not depend on ``block`` or ``threads``: blocks are reduced
    by ``(value, flat index)`` and violations are kept in flat-index order.
    """
    if any(g.size == 0 for g in grids):
        return _Partial()
    if len(grids) == 1:
        pts = grids[0].centers
        N = pts.shape[0]
        step = max(1, block // max(1, len(poly)))

        def run(a):
            vals = poly.evaluate_many(pts[a: a + step])
            return _reduce_block(vals[:, None], a, 0, 1, cap)

        starts = range(0, N, step)
        return _merge(_map(run, starts, threads), cap)
    sep = _Separable(poly, grids)
    R = sep.rest_size
    left = sep.M0 @ sep.C
    parts = []
    for (c, d), slabs in _blocks(sep.sizes[0], R, sep.C.shape[1], block):
        rest = np.ascontiguousarray(sep.rest_rows(c, d).T)

        def run(rows, rest=rest, c=c):
            a, b = rows
            return _reduce_block(left[a:b] @ rest, a, c, R, cap)

        parts.extend(_map(run, slabs, threads))
    return _merge(parts, cap)


def _map(fn, jobs, threads: int):
    jobs = list(jobs)
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


def _flat_point(grids: list[SampleGrid], flat: int) -> tuple[float, ...]:
    sub = np.unravel_index(flat, [g.size for g in grids])
    return tuple(float(v) for g, s in zip(grids, sub) for v in g.centers[s])


# public API ----------------------------------------------------------------


def _epsilon_for(epsilon, factor: Factor) -> float:
    if isinstance(epsilon, Mapping):
        return float(epsilon.get(factor.name, epsilon.get("default")))
    return float(epsilon)


def check(
    residuals: ResidualSet,
    epsilon,
    lipschitz_mode: str = "interval",
    threads: int = 1,
    cap: int = VIOLATION_CAP,
    block: int = _BLOCK,
    families: Iterable[str] | None = None,
) -> CheckReport:
    """Evaluate every residual family on cell-centre grids of its domain.

    ``epsilon`` is a number or a mapping from factor name (``x``, ``y``,
    ``x0``, ...) to a grid radius, with an optional ``"default"`` entry.
    """
    eps_values = list(epsilon.values()) if isinstance(epsilon, Mapping) else [epsilon]
    if any(e is None or not float(e) > 0 for e in eps_values):
        raise ValueError("epsilon must be positive")
    if lipschitz_mode not in ("interval", "sampled"):
        raise ValueError(f"unknown lipschitz mode {lipschitz_mode!r}")
    wanted = None if families is None else set(families)
    cache: dict = {}
    reports = []
    notes = []
    for res in residuals:
        if wanted is not None and res.name not in wanted:
            continue
        reports.append(_check_family(res, epsilon, lipschitz_mode, threads, cap, block, cache))
    if any(not r.labels_aligned for r in reports):
        notes.append("label regions are not aligned with the grid; affected families cannot be sound")
    if any(r.sound for r in reports):
        notes.append("sound-pass means min >= L' * eps_eff for that family (grid cover plus Lipschitz margin)")
    if lipschitz_mode == "sampled":
        notes.append("sampled Lipschitz estimates are not guaranteed upper bounds")
    eps_report = max(float(e) for e in eps_values)
    return CheckReport(residuals.kind, eps_report, lipschitz_mode, reports, notes=notes)


def _check_family(res: Residual, epsilon, mode, threads, cap, block, cache) -> FamilyReport:
    grids, aligned = [], True
    for f in res.factors:
        g, ok = factor_grid(f, _epsilon_for(epsilon, f), cache)
        grids.append(g)
        aligned &= ok
    eps_eff = max(g.effective_epsilon for g in grids)
    samples = math.prod(g.size for g in grids)
    partial = evaluate_family(res.polynomial, grids, cap, block, threads)
    box = domain_box(grids)
    L = 0.0 if box is None else lipschitz(res.polynomial, box, mode)
    if samples == 0:
        return FamilyReport(res.name, 0, None, None, 0, [], L, eps_eff, True, aligned)
    viol = [Violation(res.name, _flat_point(grids, i), v) for i, v in partial.violations]
    sound = aligned and partial.count == 0 and partial.minimum >= L * eps_eff
    return FamilyReport(
        res.name,
        samples,
        partial.minimum,
        _flat_point(grids, partial.argmin),
        partial.count,
        viol,
        L,
        eps_eff,
        sound,
        aligned,
    )


def check_thm12_gate(delta_star: float, lipschitz_bound: float, epsilon_effective: float) -> bool:
    """``L' * eps + delta* <= 0``: sampled feasibility with slack lifts to the whole domain."""
    if not epsilon_effective > 0:
        raise ValueError("epsilon_effective must be positive")
    return lipschitz_bound * epsilon_effective + delta_star <= 0


def _sample_factor(factor: Factor, count: int, rng: np.random.Generator) -> np.ndarray:
    if factor.letter is None:
        return factor.box.sample(rng, count)
    # rejection sampling inside the labeled region; may return fewer points
    out = []
    have = 0
    for _ in range(50):
        pts = factor.box.sample(rng, max(count, 64))
        keep = pts[factor.labeling.label_many(pts) == factor.letter]
        out.append(keep)
        have += keep.shape[0]
        if have >= count:
            break
    pts = np.vstack(out) if out else np.zeros((0, factor.dimension))
    return pts[:count]


def falsify(residuals: ResidualSet, budget: int, seed: int = 0, tol: float = 0.0) -> list[Violation]:
    """Uniform random search for points where a residual is below ``-tol``.

    ``budget`` points are drawn per family. Results are sorted by value.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    rng = np.random.default_rng(seed)
    found: list[Violation] = []
    for res in residuals:
        blocks = [_sample_factor(f, budget, rng) for f in res.factors]
        m = min(b.shape[0] for b in blocks)
        if m == 0:
            continue
        pts = np.hstack([b[:m] for b in blocks])
        vals = res.polynomial.evaluate_many(pts)
        for j in np.flatnonzero(vals < -tol):
            found.append(Violation(res.name, tuple(float(v) for v in pts[j]), float(vals[j])))
    found.sort(key=lambda v: (v.value, v.family))
    return found


def warn_unaligned(report: CheckReport) -> None:
    if any(not f.labels_aligned for f in report.families):
        warnings.warn("label regions are not aligned with the sample grid", stacklevel=2)
