"""Axis-aligned boxes, semi-algebraic sets and cell-centre sample grids."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .poly import DimensionError, Polynomial

__all__ = [
    "Box",
    "SemiAlgebraicSet",
    "SampleGrid",
    "box_to_set",
    "contains",
    "grid",
    "product_grid",
    "product_size",
    "is_grid_aligned",
]

MEMBERSHIP_TOL = 1e-12


def _vector(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Box:
    """Closed box ``[lower, upper]`` in R^n."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _vector(self.lower, "lower")
        up = _vector(self.upper, "upper")
        if lo.shape != up.shape:
            raise DimensionError(f"lower has {lo.size} entries, upper has {up.size}")
        if lo.size == 0:
            raise DimensionError("a box needs at least one dimension")
        if np.any(lo > up):
            raise ValueError(f"empty box: lower {lo.tolist()} exceeds upper {up.tolist()}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @classmethod
    def from_dict(cls, data) -> "Box":
        return cls(data["lower"], data["upper"])

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @property
    def dimension(self) -> int:
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, point, tol: float = MEMBERSHIP_TOL) -> bool:
        p = np.asarray(point, dtype=float).reshape(-1)
        if p.size != self.dimension:
            raise DimensionError(f"point has {p.size} entries, box dimension {self.dimension}")
        return bool(np.all(p >= self.lower - tol) and np.all(p <= self.upper + tol))

    def contains_many(self, points, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dimension:
            raise DimensionError(f"points have {pts.shape[1]} columns, box dimension {self.dimension}")
        return np.all((pts >= self.lower - tol) & (pts <= self.upper + tol), axis=1)

    def includes(self, other: "Box") -> bool:
        """Box inclusion ``other ⊆ self``."""
        self._same_dim(other)
        return bool(np.all(other.lower >= self.lower) and np.all(other.upper <= self.upper))

    def intersects(self, other: "Box") -> bool:
        self._same_dim(other)
        return bool(np.all(self.lower <= other.upper) and np.all(other.lower <= self.upper))

    def product(self, *others: "Box") -> "Box":
        boxes = (self,) + others
        return Box(np.concatenate([b.lower for b in boxes]), np.concatenate([b.upper for b in boxes]))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(count, self.dimension))

    def _same_dim(self, other: "Box") -> None:
        if other.dimension != self.dimension:
            raise DimensionError(f"box dimensions differ: {self.dimension} vs {other.dimension}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Box):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def __hash__(self) -> int:
        return hash((self.lower.tobytes(), self.upper.tobytes()))

    def __repr__(self) -> str:
        sides = " x ".join(f"[{lo:g},{up:g}]" for lo, up in zip(self.lower, self.upper))
        return f"Box({sides})"


@dataclass(frozen=True)
class SemiAlgebraicSet:
    """``{x | g_i(x) >= 0 for all i}``, optionally with a known bounding box."""

    dimension: int
    inequalities: tuple[Polynomial, ...]
    bounding_box: Box | None = None

    def __post_init__(self):
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        for g in self.inequalities:
            if g.arity != self.dimension:
                raise DimensionError(f"inequality arity {g.arity} differs from set dimension {self.dimension}")
        if self.bounding_box is not None and self.bounding_box.dimension != self.dimension:
            raise DimensionError("bounding box dimension differs from set dimension")

    def contains(self, point, tol: float = MEMBERSHIP_TOL) -> bool:
        p = np.asarray(point, dtype=float).reshape(-1)
        if p.size != self.dimension:
            raise DimensionError(f"point has {p.size} entries, set dimension {self.dimension}")
        return all(g.evaluate(p) >= -tol for g in self.inequalities)

    def product(self, other: "SemiAlgebraicSet") -> "SemiAlgebraicSet":
        """Cartesian product; variables of ``self`` come first."""
        n = self.dimension + other.dimension
        left = [g.embed(n, range(self.dimension)) for g in self.inequalities]
        right = [g.embed(n, range(self.dimension, n)) for g in other.inequalities]
        box = None
        if self.bounding_box is not None and other.bounding_box is not None:
            box = self.bounding_box.product(other.bounding_box)
        return SemiAlgebraicSet(n, tuple(left + right), box)


def box_to_set(box: Box) -> SemiAlgebraicSet:
    """The box as ``2n`` affine inequalities ``x_j - lo_j >= 0`` and ``up_j - x_j >= 0``."""
    n = box.dimension
    ineqs = []
    for j in range(n):
        x = Polynomial.variable(n, j)
        ineqs.append(x - float(box.lower[j]))
        ineqs.append(float(box.upper[j]) - x)
    return SemiAlgebraicSet(n, tuple(ineqs), box)


def contains(region, point, tol: float = MEMBERSHIP_TOL) -> bool:
    """Closed-set membership for a :class:`Box` or :class:`SemiAlgebraicSet`."""
    return region.contains(point, tol)


def _cell_count(width: float, epsilon: float) -> int:
    if width <= 0:
        return 1
    # relative slack so that 1.0 / 0.1 style ratios do not round up a cell
    return max(1, math.ceil(width / (2.0 * epsilon) * (1.0 - 1e-12)))


@dataclass(frozen=True, eq=False)
class SampleGrid:
    """Centres of a uniform partition of ``box`` into cells of half-width at most ``epsilon``.

    ``centers`` is row-major over the axes (last axis fastest). A grid may be
    restricted to a subset of its cells; the cover radius is then only
    guaranteed for the union of the kept cells.
    """

    epsilon: float
    box: Box
    counts: tuple[int, ...]
    centers: np.ndarray = field(repr=False)
    cell_index: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    def __len__(self) -> int:
        return self.size

    @property
    def dimension(self) -> int:
        return self.box.dimension

    @property
    def half_widths(self) -> np.ndarray:
        return self.box.widths / (2.0 * np.asarray(self.counts, dtype=float))

    @property
    def effective_epsilon(self) -> float:
        """Realised infinity-norm cover radius (never larger than ``epsilon``)."""
        return float(self.half_widths.max())

    def axis_edges(self, axis: int) -> np.ndarray:
        lo, up = self.box.lower[axis], self.box.upper[axis]
        return np.linspace(lo, up, self.counts[axis] + 1)

    def restrict(self, mask) -> "SampleGrid":
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (self.size,):
            raise DimensionError("mask length must equal the grid size")
        centers = self.centers[mask]
        centers.setflags(write=False)
        index = self.cell_index[mask]
        index.setflags(write=False)
        return SampleGrid(self.epsilon, self.box, self.counts, centers, index)

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.centers)


def grid(box: Box, epsilon: float) -> SampleGrid:
    """Cell-centre grid with ``ceil(width / 2 epsilon)`` cells per axis."""
    if not epsilon > 0 or not math.isfinite(epsilon):
        raise ValueError(f"epsilon must be positive and finite, got {epsilon}")
    counts = tuple(_cell_count(float(w), epsilon) for w in box.widths)
    axes = []
    for lo, up, m in zip(box.lower, box.upper, counts):
        side = (up - lo) / m
        axes.append(lo + side * (np.arange(m) + 0.5))
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=1)
    centers.setflags(write=False)
    index = np.arange(centers.shape[0])
    index.setflags(write=False)
    return SampleGrid(float(epsilon), box, counts, centers, index)


def product_size(*grids: SampleGrid) -> int:
    return math.prod(g.size for g in grids)


def product_grid(*grids: SampleGrid) -> Iterator[tuple[np.ndarray, ...]]:
    """Lazy Cartesian product of grid centres, last grid fastest."""
    if not grids:
        raise ValueError("product_grid needs at least one grid")
    return itertools.product(*(g.centers for g in grids))


def is_grid_aligned(region: Box, sample_grid: SampleGrid, tol: float = 1e-9) -> bool:
    """True when every face of ``region`` inside the grid box lies on a cell edge.

    Under this condition each grid cell lies either entirely inside or
    entirely outside ``region`` (up to shared faces).
    """
    box = sample_grid.box
    if region.dimension != box.dimension:
        raise DimensionError("region and grid dimensions differ")
    for j in range(box.dimension):
        edges = sample_grid.axis_edges(j)
        for face in (region.lower[j], region.upper[j]):
            if face <= box.lower[j] + tol or face >= box.upper[j] - tol:
                continue
            if np.min(np.abs(edges - face)) > tol * max(1.0, abs(face)):
                return False
    return True

