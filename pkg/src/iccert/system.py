"""Discrete-time polynomial systems, labeling maps, simulation and trace monitors."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import Box
from .poly import DimensionError, Polynomial

__all__ = [
    "System",
    "LabelingMap",
    "Trajectory",
    "step",
    "simulate",
    "label_trace",
    "monitor_persistence",
    "monitor_safety",
    "trajectory_csv",
]

Map = tuple[Polynomial, ...]


class _MapEvaluator:
    """Pure-Python evaluator for one polynomial map, tuned for single points."""

    __slots__ = ("terms",)

    def __init__(self, components: Map):
        self.terms = [
            [(c, tuple((j, v) for j, v in enumerate(e) if v)) for c, e in comp.terms]
            for comp in components
        ]

    def __call__(self, x: Sequence[float]) -> list[float]:
        out = []
        for comp in self.terms:
            vals = []
            for c, factors in comp:
                v = c
                for j, e in factors:
                    v *= x[j] if e == 1 else x[j] ** e
                vals.append(v)
            out.append(math.fsum(vals))
        return out


@dataclass(frozen=True, eq=False)
class System:
    """``x_{t+1} = f_b(x_t)`` for some branch ``b`` among ``transitions``.

    A deterministic system has a single map. Sets are boxes; the unsafe and
    finitely-visited sets are optional and only one of them is normally used.
    """

    dimension: int
    state_set: Box
    initial_set: Box
    transitions: tuple[Map, ...]
    unsafe_set: Box | None = None
    visit_set: Box | None = None
    name: str = "system"

    def __post_init__(self):
        n = self.dimension
        maps = tuple(tuple(m) for m in self.transitions)
        object.__setattr__(self, "transitions", maps)
        if not maps:
            raise ValueError("a system needs at least one transition map")
        for b, m in enumerate(maps):
            if len(m) != n:
                raise DimensionError(f"transition {b} has {len(m)} components, expected {n}")
            for j, comp in enumerate(m):
                if comp.arity != n:
                    raise DimensionError(f"transition {b} component {j} has arity {comp.arity}, expected {n}")
        for label, box in self._sets():
            if box.dimension != n:
                raise DimensionError(f"{label} has dimension {box.dimension}, expected {n}")
            if label != "state set" and not self.state_set.includes(box):
                raise ValueError(f"{label} {box!r} is not contained in the state set {self.state_set!r}")
        if self.unsafe_set is not None and self.initial_set.intersects(self.unsafe_set):
            raise ValueError("initial and unsafe sets must be disjoint")
        object.__setattr__(self, "_evaluators", tuple(_MapEvaluator(m) for m in maps))

    def _sets(self):
        yield "state set", self.state_set
        yield "initial set", self.initial_set
        if self.unsafe_set is not None:
            yield "unsafe set", self.unsafe_set
        if self.visit_set is not None:
            yield "finite-visit set", self.visit_set

    @property
    def branches(self) -> int:
        return len(self.transitions)

    @property
    def deterministic(self) -> bool:
        return len(self.transitions) == 1

    def step(self, state, branch: int = 0) -> np.ndarray:
        return step(self, state, branch)

    def step_many(self, points, branch: int = 0) -> np.ndarray:
        """Vectorised image of many states under one branch."""
        self._check_branch(branch)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.stack([c.evaluate_many(pts) for c in self.transitions[branch]], axis=1)

    def _check_branch(self, branch: int) -> None:
        if not 0 <= branch < len(self.transitions):
            raise IndexError(f"branch {branch} out of range for {len(self.transitions)} map(s)")


def step(system: System, state, branch: int = 0) -> np.ndarray:
    """Apply transition map ``branch`` to ``state``."""
    system._check_branch(branch)
    x = np.asarray(state, dtype=float).reshape(-1)
    if x.size != system.dimension:
        raise DimensionError(f"state has {x.size} entries, system dimension {system.dimension}")
    return np.array(system._evaluators[branch](x.tolist()))


@dataclass(frozen=True, eq=False)
class LabelingMap:
    """First-match labeling: the letter of the first region containing ``x``."""

    regions: tuple[tuple[Box, str], ...]
    default: str

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple((b, str(a)) for b, a in self.regions))
        dims = {b.dimension for b, _ in self.regions}
        if len(dims) > 1:
            raise DimensionError("labeling regions have differing dimensions")

    @property
    def letters(self) -> list[str]:
        seen: list[str] = []
        for _, a in self.regions:
            if a not in seen:
                seen.append(a)
        if self.default not in seen:
            seen.append(self.default)
        return seen

    def label(self, point) -> str:
        for box, letter in self.regions:
            if box.contains(point):
                return letter
        return self.default

    __call__ = label

    def label_many(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(pts.shape[0], self.default, dtype=object)
        unset = np.ones(pts.shape[0], dtype=bool)
        for box, letter in self.regions:
            hit = unset & box.contains_many(pts)
            out[hit] = letter
            unset &= ~hit
        return out


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Visited states and the branch used at each step.

    ``exited`` is set when a state left the state set; with the default
    truncating policy that state is the last one recorded.
    """

    states: np.ndarray
    branches: np.ndarray
    exited: bool = False
    exit_index: int | None = None

    def __len__(self) -> int:
        return self.states.shape[0]


BranchPolicy = Callable[[int, np.ndarray, np.random.Generator], int]


def simulate(
    system: System,
    initial,
    horizon: int,
    branch_policy: str | int | BranchPolicy = "uniform",
    seed: int | None = 0,
    on_exit: str = "truncate",
) -> Trajectory:
    """Iterate the system for ``horizon`` steps from ``initial``.

    ``branch_policy`` is ``"uniform"`` (seeded uniform choice), a fixed branch
    index, or a callable ``(t, state, rng) -> branch``. ``on_exit`` is
    ``"truncate"`` or ``"continue"``; either way the first exit is recorded.
    """
    x = np.asarray(initial, dtype=float).reshape(-1)
    if x.size != system.dimension:
        raise DimensionError(f"initial state has {x.size} entries, system dimension {system.dimension}")
    if not system.initial_set.contains(x):
        raise ValueError(f"initial state {x.tolist()} is outside the initial set {system.initial_set!r}")
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if on_exit not in ("truncate", "continue"):
        raise ValueError(f"on_exit must be 'truncate' or 'continue', got {on_exit!r}")
    rng = np.random.default_rng(seed)
    if branch_policy == "uniform":
        choose = lambda t, s: int(rng.integers(system.branches)) if system.branches > 1 else 0
    elif isinstance(branch_policy, (int, np.integer)):
        system._check_branch(int(branch_policy))
        choose = lambda t, s: int(branch_policy)
    elif callable(branch_policy):
        choose = lambda t, s: int(branch_policy(t, s, rng))
    else:
        raise ValueError(f"unknown branch policy {branch_policy!r}")

    lo = system.state_set.lower.tolist()
    up = system.state_set.upper.tolist()
    tol = 1e-12
    cur = x.tolist()
    states = [cur]
    branches: list[int] = []
    exit_index = None
    for t in range(horizon):
        b = choose(t, cur)
        cur = system._evaluators[b](cur)
        states.append(cur)
        branches.append(b)
        if exit_index is None and not all(l - tol <= v <= u + tol for v, l, u in zip(cur, lo, up)):
            exit_index = t + 1
            if on_exit == "truncate":
                break
    return Trajectory(
        np.array(states, dtype=float),
        np.array(branches, dtype=np.int64),
        exited=exit_index is not None,
        exit_index=exit_index,
    )


def label_trace(labeling: LabelingMap, trajectory: Trajectory | np.ndarray) -> list[str]:
    states = trajectory.states if isinstance(trajectory, Trajectory) else np.atleast_2d(trajectory)
    return [str(a) for a in labeling.label_many(states)]


def _states(trajectory) -> np.ndarray:
    return trajectory.states if isinstance(trajectory, Trajectory) else np.atleast_2d(np.asarray(trajectory, dtype=float))


def monitor_persistence(trajectory, region: Box) -> int | None:
    """Index of the last state inside ``region``, or ``None``.

    This is evidence over a finite horizon only: a later re-entry beyond the
    simulated horizon cannot be ruled out.
    """
    inside = np.flatnonzero(region.contains_many(_states(trajectory)))
    return int(inside[-1]) if inside.size else None


def monitor_safety(trajectory, unsafe: Box) -> int | None:
    """First index ``t >= 1`` with the state in ``unsafe``, or ``None``."""
    inside = np.flatnonzero(unsafe.contains_many(_states(trajectory)))
    inside = inside[inside >= 1]
    return int(inside[0]) if inside.size else None


def trajectory_csv(trajectory: Trajectory, labels: Sequence[str] | None = None) -> str:
    """CSV text with header ``t,x1,...,xn,label``."""
    states = trajectory.states
    n = states.shape[1]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + [f"x{j + 1}" for j in range(n)] + ["label"])
    for t, row in enumerate(states):
        label = labels[t] if labels is not None else ""
        writer.writerow([t] + [repr(float(v)) for v in row] + [label])
    return buf.getvalue()
