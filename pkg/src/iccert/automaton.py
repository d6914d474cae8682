"""Nondeterministic Büchi automata and their synchronous product with a system."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .system import LabelingMap, System, Trajectory, label_trace, step

__all__ = ["Nba", "ProductSystem", "BuchiMonitor", "successors", "product_step", "monitor_buchi"]

WILDCARD = "*"


@dataclass(frozen=True, eq=False)
class Nba:
    """Büchi automaton ``(alphabet, Q, Q0, delta, QF)`` with states ``0..states-1``."""

    alphabet: tuple[str, ...]
    states: int
    initial: frozenset[int]
    accepting: frozenset[int]
    transitions: frozenset[tuple[int, str, int]]

    def __post_init__(self):
        object.__setattr__(self, "alphabet", tuple(str(a) for a in self.alphabet))
        object.__setattr__(self, "initial", frozenset(int(q) for q in self.initial))
        object.__setattr__(self, "accepting", frozenset(int(q) for q in self.accepting))
        object.__setattr__(
            self, "transitions", frozenset((int(q), str(a), int(r)) for q, a, r in self.transitions)
        )
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ValueError("alphabet letters must be distinct")
        if self.states < 1:
            raise ValueError("an automaton needs at least one state")
        for q in self.initial | self.accepting:
            self._check_state(q)
        for q, a, r in self.transitions:
            self._check_state(q)
            self._check_state(r)
            self._check_letter(a)
        if not self.initial or not self.accepting:
            warnings.warn("automaton has an empty initial or accepting set", stacklevel=2)
        table: dict[tuple[int, str], frozenset[int]] = {}
        for q, a, r in sorted(self.transitions):
            table[(q, a)] = table.get((q, a), frozenset()) | {r}
        object.__setattr__(self, "_table", table)

    @classmethod
    def from_dict(cls, data: dict) -> "Nba":
        """Read ``{alphabet, states, initial, accepting, transitions}``.

        A transition letter ``"*"`` expands to every letter of the alphabet.
        """
        alphabet = tuple(data["alphabet"])
        edges = []
        for q, a, r in data["transitions"]:
            letters = alphabet if a == WILDCARD else (a,)
            edges.extend((q, x, r) for x in letters)
        return cls(alphabet, int(data["states"]), frozenset(data["initial"]), frozenset(data["accepting"]), frozenset(edges))

    @classmethod
    def load(cls, path) -> "Nba":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "alphabet": list(self.alphabet),
            "states": self.states,
            "initial": sorted(self.initial),
            "accepting": sorted(self.accepting),
            "transitions": [list(t) for t in self.edges()],
        }

    def edges(self) -> list[tuple[int, str, int]]:
        """Transitions in a fixed order: by source, then letter position, then target."""
        pos = {a: i for i, a in enumerate(self.alphabet)}
        return sorted(self.transitions, key=lambda t: (t[0], pos[t[1]], t[2]))

    def successors(self, q: int, letter: str) -> frozenset[int]:
        self._check_state(q)
        self._check_letter(letter)
        return self._table.get((q, letter), frozenset())

    def _check_state(self, q: int) -> None:
        if not 0 <= q < self.states:
            raise ValueError(f"state {q} is not declared (automaton has {self.states} states)")

    def _check_letter(self, a: str) -> None:
        if a not in self.alphabet:
            raise ValueError(f"letter {a!r} is not in the alphabet {list(self.alphabet)}")


def successors(nba: Nba, q: int, letter: str) -> frozenset[int]:
    return nba.successors(q, letter)


@dataclass(frozen=True, eq=False)
class ProductSystem:
    """A system driven through an automaton by its labels."""

    system: System
    nba: Nba
    labeling: LabelingMap

    def __post_init__(self):
        missing = [a for a in self.labeling.letters if a not in self.nba.alphabet]
        if missing:
            raise ValueError(f"labels {missing} are not in the automaton alphabet {list(self.nba.alphabet)}")
        for box, _ in self.labeling.regions:
            if box.dimension != self.system.dimension:
                raise ValueError("labeling regions and system differ in dimension")


def product_step(product: ProductSystem, state, branch: int = 0) -> list[tuple[np.ndarray, int]]:
    """Successors of ``(x, q)``; empty when the automaton has no move on ``L(x)``."""
    x, q = state
    x = np.asarray(x, dtype=float)
    nxt = step(product.system, x, branch)
    letter = product.labeling.label(x)
    return [(nxt.copy(), r) for r in sorted(product.nba.successors(q, letter))]


@dataclass(frozen=True)
class BuchiMonitor:
    """Outcome of running every automaton run along one labeled trace.

    ``state_sets[t]`` is the set of automaton states reachable after reading
    ``t`` letters (so ``state_sets[0]`` is the initial set). ``accepting_hits``
    counts, per accepting state, the steps ``t >= 1`` at which it was reachable.
    """

    state_sets: tuple[frozenset[int], ...]
    accepting_hits: dict[int, int]

    def first_visit(self, q: int) -> int | None:
        for t, s in enumerate(self.state_sets):
            if q in s:
                return t
        return None

    def ever_visits(self, q: int) -> bool:
        return self.first_visit(q) is not None


def run_subsets(nba: Nba, letters: Iterable[str]) -> BuchiMonitor:
    current = frozenset(nba.initial)
    sets = [current]
    hits = {q: 0 for q in sorted(nba.accepting)}
    for a in letters:
        current = frozenset(r for q in current for r in nba.successors(q, a))
        sets.append(current)
        for q in current & nba.accepting:
            hits[q] += 1
    return BuchiMonitor(tuple(sets), hits)


def monitor_buchi(product: ProductSystem, trajectory: Trajectory | Sequence[str]) -> BuchiMonitor:
    """Subset construction over the labels of a finite trajectory.

    The letter read at step ``t`` is ``L(x_t)``, so a trajectory with ``T+1``
    states yields ``T+1`` letters and ``T+2`` state sets. Passing a list of
    letters skips labeling. Finite-horizon evidence only.
    """
    if isinstance(trajectory, Trajectory):
        letters = label_trace(product.labeling, trajectory)
    else:
        letters = list(trajectory)
    return run_subsets(product.nba, letters)
