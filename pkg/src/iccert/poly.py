"""Sparse multivariate polynomials with real coefficients.

A :class:`Polynomial` is an immutable, canonical list of terms: no repeated
exponent vectors, no (near-)zero coefficients, terms sorted in graded
lexicographic order. All arithmetic is vectorised over the exponent array.
"""

from __future__ import annotations

import ast
import math
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Polynomial",
    "DimensionError",
    "monomial_basis",
    "parse_polynomial",
    "monomial_matrix",
]

DROP_TOL = 1e-15
_UNIT = 1.2e-16  # unit roundoff with a little headroom for second-order terms


class DimensionError(ValueError):
    """Raised when arities or vector lengths disagree."""


def _grlex_order(exps: np.ndarray) -> np.ndarray:
    # ascending total degree, then descending lexicographic exponent vector
    if exps.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    keys = [-exps[:, j] for j in range(exps.shape[1] - 1, -1, -1)]
    keys.append(exps.sum(axis=1))
    return np.lexsort(keys)


def _canonical(exps: np.ndarray, coefs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = exps.shape[1]
    if exps.shape[0] == 0:
        return np.zeros((0, n), dtype=np.int64), np.zeros(0)
    uniq, inverse = np.unique(exps, axis=0, return_inverse=True)
    summed = np.zeros(uniq.shape[0])
    np.add.at(summed, inverse.ravel(), coefs)
    keep = np.abs(summed) >= DROP_TOL
    uniq, summed = uniq[keep], summed[keep]
    order = _grlex_order(uniq)
    return np.ascontiguousarray(uniq[order]), summed[order]


def monomial_matrix(points: np.ndarray, exps: np.ndarray) -> np.ndarray:
    """Evaluate every monomial in ``exps`` (M x n) at every point (N x n)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    exps = np.asarray(exps, dtype=np.int64)
    N, n = points.shape
    M = exps.shape[0]
    out = np.ones((N, M))
    if M == 0 or n == 0:
        return out
    max_e = int(exps.max()) if exps.size else 0
    for j in range(n):
        col = exps[:, j]
        if not col.any():
            continue
        powers = np.ones((N, max_e + 1))
        for e in range(1, int(col.max()) + 1):
            powers[:, e] = powers[:, e - 1] * points[:, j]
        out *= powers[:, col]
    return out


class Polynomial:
    """Immutable sparse polynomial in ``arity`` variables.

    Construct with :meth:`from_terms`, :meth:`from_dict`, :meth:`constant`,
    :meth:`variable`, or arithmetic on existing polynomials.
    """

    __slots__ = ("_arity", "_exps", "_coefs", "_hash")

    def __init__(self, arity: int, exps=None, coefs=None, *, _canonical_input: bool = False):
        if arity < 0:
            raise DimensionError("arity must be nonnegative")
        self._arity = int(arity)
        if exps is None:
            e = np.zeros((0, arity), dtype=np.int64)
            c = np.zeros(0)
        else:
            e = np.asarray(exps, dtype=np.int64).reshape(-1, arity) if arity else np.zeros((len(coefs), 0), dtype=np.int64)
            c = np.asarray(coefs, dtype=float).reshape(-1)
            if e.shape[0] != c.shape[0]:
                raise DimensionError("exponent rows and coefficients differ in length")
            if (e < 0).any():
                raise ValueError("exponents must be nonnegative")
            if not _canonical_input:
                e, c = _canonical(e, c)
        e.setflags(write=False)
        c.setflags(write=False)
        self._exps = e
        self._coefs = c
        self._hash = None

    # construction ---------------------------------------------------------

    @classmethod
    def from_terms(cls, arity: int, terms: Iterable[tuple[float, Sequence[int]]]) -> "Polynomial":
        terms = list(terms)
        for _, e in terms:
            if len(e) != arity:
                raise DimensionError(f"monomial {tuple(e)} does not have arity {arity}")
        if not terms:
            return cls(arity)
        coefs = [float(c) for c, _ in terms]
        exps = [list(e) for _, e in terms]
        return cls(arity, np.array(exps, dtype=np.int64).reshape(len(terms), arity), coefs)

    @classmethod
    def from_dict(cls, arity: int, mapping: Mapping[tuple, float]) -> "Polynomial":
        return cls.from_terms(arity, ((c, e) for e, c in mapping.items()))

    @classmethod
    def zero(cls, arity: int) -> "Polynomial":
        return cls(arity)

    @classmethod
    def constant(cls, arity: int, value: float) -> "Polynomial":
        return cls.from_terms(arity, [(value, (0,) * arity)])

    @classmethod
    def variable(cls, arity: int, index: int) -> "Polynomial":
        if not 0 <= index < arity:
            raise DimensionError(f"variable index {index} out of range for arity {arity}")
        e = [0] * arity
        e[index] = 1
        return cls.from_terms(arity, [(1.0, e)])

    @classmethod
    def from_records(cls, arity: int, records: Iterable[Mapping]) -> "Polynomial":
        return cls.from_terms(arity, ((r["coefficient"], r["exponents"]) for r in records))

    def to_records(self) -> list[dict]:
        return [{"coefficient": float(c), "exponents": [int(v) for v in e]} for c, e in self.terms]

    # basic properties -----------------------------------------------------

    @property
    def arity(self) -> int:
        return self._arity

    @property
    def exponents(self) -> np.ndarray:
        return self._exps

    @property
    def coefficients(self) -> np.ndarray:
        return self._coefs

    @property
    def terms(self) -> list[tuple[float, tuple[int, ...]]]:
        return [(float(c), tuple(int(v) for v in e)) for c, e in zip(self._coefs, self._exps)]

    def __len__(self) -> int:
        return self._coefs.shape[0]

    def is_zero(self) -> bool:
        return len(self) == 0

    def degree(self) -> int:
        if self.is_zero():
            return 0
        return int(self._exps.sum(axis=1).max())

    def coefficient(self, exps: Sequence[int]) -> float:
        hit = np.all(self._exps == np.asarray(exps, dtype=np.int64), axis=1)
        idx = np.flatnonzero(hit)
        return float(self._coefs[idx[0]]) if idx.size else 0.0

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return (
            self._arity == other._arity
            and np.array_equal(self._exps, other._exps)
            and np.array_equal(self._coefs, other._coefs)
        )

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self._arity, self._exps.tobytes(), self._coefs.tobytes()))
        return self._hash

    def allclose(self, other: "Polynomial", atol: float = 1e-12) -> bool:
        return (self - other).max_abs_coefficient() <= atol

    def max_abs_coefficient(self) -> float:
        return float(np.abs(self._coefs).max()) if len(self) else 0.0

    # arithmetic -----------------------------------------------------------

    def _check(self, other: "Polynomial") -> None:
        if self._arity != other._arity:
            raise DimensionError(f"arity mismatch: {self._arity} vs {other._arity}")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self._arity, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Polynomial(
            self._arity,
            np.vstack([self._exps, other._exps]),
            np.concatenate([self._coefs, other._coefs]),
        )

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self._arity, self._exps, -self._coefs, _canonical_input=True)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, factor: float) -> "Polynomial":
        if factor == 0:
            return Polynomial(self._arity)
        return Polynomial(self._arity, self._exps, self._coefs * float(factor))

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self.scale(float(other))
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.is_zero() or other.is_zero():
            return Polynomial(self._arity)
        exps = (self._exps[:, None, :] + other._exps[None, :, :]).reshape(-1, self._arity)
        coefs = np.outer(self._coefs, other._coefs).ravel()
        return Polynomial(self._arity, exps, coefs)

    __rmul__ = __mul__

    def __pow__(self, power: int) -> "Polynomial":
        if power < 0 or int(power) != power:
            raise ValueError("only nonnegative integer powers are supported")
        result = Polynomial.constant(self._arity, 1.0)
        base = self
        power = int(power)
        while power:
            if power & 1:
                result = result * base
            power >>= 1
            if power:
                base = base * base
        return result

    def compose(self, substitutions: Sequence["Polynomial"]) -> "Polynomial":
        """Replace variable ``j`` by ``substitutions[j]``."""
        if len(substitutions) != self._arity:
            raise DimensionError(
                f"need {self._arity} substitutions, got {len(substitutions)}"
            )
        if not substitutions:
            return self
        target = substitutions[0].arity
        for s in substitutions:
            if s.arity != target:
                raise DimensionError("substitutions must share one arity")
        if self.is_zero():
            return Polynomial(target)

        powers: dict[tuple[int, int], Polynomial] = {}

        def power(j: int, e: int) -> Polynomial:
            key = (j, e)
            if key not in powers:
                powers[key] = substitutions[j] if e == 1 else power(j, e - 1) * substitutions[j]
            return powers[key]

        memo: dict[tuple, Polynomial] = {(): Polynomial.constant(target, 1.0)}

        def strip(e: tuple[int, ...]) -> tuple[int, ...]:
            while e and e[-1] == 0:
                e = e[:-1]
            return e

        def monomial(e: tuple[int, ...]) -> Polynomial:
            # keys carry no trailing zeros, so e[-1] is the last nonzero exponent
            if e not in memo:
                memo[e] = monomial(strip(e[:-1])) * power(len(e) - 1, e[-1])
            return memo[e]

        exps, coefs = [], []
        for c, e in zip(self._coefs, self._exps):
            m = monomial(strip(tuple(int(v) for v in e)))
            exps.append(m._exps)
            coefs.append(m._coefs * c)
        return Polynomial(target, np.vstack(exps), np.concatenate(coefs))

    def embed(self, arity: int, positions: Sequence[int]) -> "Polynomial":
        """Re-index variable ``j`` as variable ``positions[j]`` of a larger arity."""
        if len(positions) != self._arity:
            raise DimensionError("positions must list one slot per variable")
        exps = np.zeros((len(self), arity), dtype=np.int64)
        exps[:, list(positions)] = self._exps
        return Polynomial(arity, exps, self._coefs)

    def derivative(self, index: int) -> "Polynomial":
        if not 0 <= index < self._arity:
            raise DimensionError(f"variable index {index} out of range")
        col = self._exps[:, index]
        keep = col > 0
        exps = self._exps[keep].copy()
        exps[:, index] -= 1
        return Polynomial(self._arity, exps, self._coefs[keep] * col[keep])

    def gradient(self) -> list["Polynomial"]:
        return [self.derivative(j) for j in range(self._arity)]

    # evaluation -----------------------------------------------------------

    def evaluate(self, point: Sequence[float]) -> float:
        point = np.asarray(point, dtype=float).reshape(-1)
        if point.shape[0] != self._arity:
            raise DimensionError(f"point has length {point.shape[0]}, polynomial arity {self._arity}")
        if self.is_zero():
            return 0.0
        values = self._coefs * monomial_matrix(point[None, :], self._exps)[0]
        return math.fsum(values.tolist())

    __call__ = evaluate

    def evaluate_many(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self._arity:
            raise DimensionError(f"points have {points.shape[1]} columns, polynomial arity {self._arity}")
        if self.is_zero():
            return np.zeros(points.shape[0])
        return monomial_matrix(points, self._exps) @ self._coefs

    # bounding -------------------------------------------------------------

    def interval_bound(self, box) -> tuple[float, float]:
        """Sound enclosure ``(lo, hi)`` of the polynomial over an axis box.

        ``box`` is anything with ``lower``/``upper`` attributes, or a pair of
        sequences. Even powers of intervals straddling zero map to ``[0, max]``.
        """
        lower, upper = _box_arrays(box, self._arity)
        if self.is_zero():
            return 0.0, 0.0
        T = len(self)
        tlo = np.ones(T)
        thi = np.ones(T)
        ops = np.zeros(T)
        for j in range(self._arity):
            e = self._exps[:, j]
            if not e.any():
                continue
            a, b = lower[j], upper[j]
            pa, pb = a ** e.astype(float), b ** e.astype(float)
            plo = np.minimum(pa, pb)
            phi = np.maximum(pa, pb)
            straddle = (e % 2 == 0) & (e > 0) & (a < 0) & (b > 0)
            plo = np.where(straddle, 0.0, plo)
            cand = np.stack([tlo * plo, tlo * phi, thi * plo, thi * phi])
            tlo, thi = cand.min(axis=0), cand.max(axis=0)
            ops += np.maximum(e - 1, 0) + (e > 0)
        nvars = (self._exps > 0).sum(axis=1)
        ops -= np.minimum(nvars, 1)  # first factor needs no multiplication
        c = self._coefs
        ops += (np.abs(c) != 1.0) & (nvars > 0)
        lo = np.where(c >= 0, c * tlo, c * thi)
        hi = np.where(c >= 0, c * thi, c * tlo)
        mag = np.maximum(np.abs(lo), np.abs(hi))
        pad = _UNIT * (float(ops @ mag) + (T - 1) * float(mag.sum()))
        return math.fsum(lo.tolist()) - pad, math.fsum(hi.tolist()) + pad

    def lipschitz_bound(self, box) -> float:
        """Upper bound on the infinity-norm Lipschitz constant over ``box``.

        Bounds the l1 norm of the gradient component-wise by interval
        arithmetic.
        """
        lower, upper = _box_arrays(box, self._arity)
        total = 0.0
        for g in self.gradient():
            lo, hi = g.interval_bound((lower, upper))
            total += max(abs(lo), abs(hi))
        return total

    # presentation ---------------------------------------------------------

    def to_string(self, names: Sequence[str] | None = None) -> str:
        if names is None:
            names = [f"x{j + 1}" for j in range(self._arity)]
        if self.is_zero():
            return "0"
        parts = []
        for c, e in self.terms:
            factors = []
            for name, v in zip(names, e):
                if v == 1:
                    factors.append(name)
                elif v > 1:
                    factors.append(f"{name}**{v}")
            mono = "*".join(factors)
            if not mono:
                parts.append(repr(c))
            elif c == 1.0:
                parts.append(mono)
            elif c == -1.0:
                parts.append(f"-{mono}")
            else:
                parts.append(f"{c!r}*{mono}")
        return " + ".join(parts).replace("+ -", "- ")

    def __repr__(self) -> str:
        return f"Polynomial({self._arity}, {self.to_string()!r})"


def _box_arrays(box, arity: int) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(box, "lower"):
        lower, upper = box.lower, box.upper
    else:
        lower, upper = box
    lower = np.asarray(lower, dtype=float).reshape(-1)
    upper = np.asarray(upper, dtype=float).reshape(-1)
    if lower.shape[0] != arity or upper.shape[0] != arity:
        raise DimensionError(f"box dimension {lower.shape[0]} does not match arity {arity}")
    if (lower > upper).any():
        raise ValueError("empty box: lower bound exceeds upper bound")
    return lower, upper


def monomial_basis(arity: int, degree: int, min_degree: int = 0) -> np.ndarray:
    """All exponent vectors of total degree in ``[min_degree, degree]``, grlex order."""
    rows: list[tuple[int, ...]] = []

    def rec(prefix: list[int], remaining: int, slots: int):
        if slots == 1:
            rows.append(tuple(prefix + [remaining]))
            return
        for v in range(remaining, -1, -1):
            rec(prefix + [v], remaining - v, slots - 1)

    for d in range(min_degree, degree + 1):
        if arity == 0:
            if d == 0:
                rows.append(())
            continue
        rec([], d, arity)
    return np.array(rows, dtype=np.int64).reshape(len(rows), arity)


_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Pow, ast.Div)


def parse_polynomial(text: str, names: Sequence[str]) -> Polynomial:
    """Parse an arithmetic expression such as ``"x1 + 0.01*(1.6*x2 - 0.38*x1)"``.

    Only numbers, the given variable names, ``+ - * **`` and division by a
    constant are accepted.
    """
    arity = len(names)
    index = {name: j for j, name in enumerate(names)}
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse polynomial {text!r}: {exc.msg}") from None

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return Polynomial.constant(arity, float(node.value))
        if isinstance(node, ast.Name):
            if node.id not in index:
                raise ValueError(f"unknown variable {node.id!r} in {text!r}")
            return Polynomial.variable(arity, index[node.id])
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = walk(node.operand)
            return -inner if isinstance(node.op, ast.USub) else inner
        if isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
            left = walk(node.left)
            if isinstance(node.op, ast.Pow):
                if not (isinstance(node.right, ast.Constant) and isinstance(node.right.value, int)):
                    raise ValueError(f"exponent must be a nonnegative integer literal in {text!r}")
                return left ** node.right.value
            right = walk(node.right)
            if isinstance(node.op, ast.Add):
                return left + right
            if isinstance(node.op, ast.Sub):
                return left - right
            if isinstance(node.op, ast.Mult):
                return left * right
            if right.degree() != 0 or right.is_zero():
                raise ValueError(f"division only by nonzero constants in {text!r}")
            return left.scale(1.0 / right.coefficient((0,) * arity))
        raise ValueError(f"unsupported syntax in polynomial {text!r}")

    return walk(tree)
