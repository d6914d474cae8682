"""Linear programs ``min c^T z  s.t.  A z >= b,  lower <= z <= upper`` and their solvers.

Three backends share one contract, ``solve_lp(lp, backend) -> LpResult``:

``simplex``
    Built-in dense two-phase simplex applied to the dual problem. Scenario
    programs have a handful of variables and many rows, so the dual tableau
    has as many rows as there are primal variables.
``highs``
    ``scipy.optimize.linprog`` with the HiGHS solver.
``external``
    An executable named by ``$ICC_SOLVER`` (or passed explicitly) is run as
    ``<solver> problem.lp solution.txt``. The problem is written in CPLEX LP
    format by :func:`write_lp`; the solution file must start with a line
    ``status <optimal|infeasible|unbounded|error>`` followed by one
    ``<variable> <value>`` line per variable. ``python -m iccert.lp`` is a
    reference implementation of that contract.
"""

from __future__ import annotations

import math
import os
import re
import subprocess
import sys
import tempfile
from dataclasses import dataclass

import numpy as np
from scipy import sparse

__all__ = ["LinearProgram", "LpResult", "solve_lp", "simplex", "write_lp", "read_lp", "read_solution", "write_solution"]

STATUSES = ("optimal", "infeasible", "unbounded", "solver-error")


@dataclass(eq=False)
class LinearProgram:
    c: np.ndarray
    A: sparse.csr_matrix
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    names: list[str]
    row_names: list[str] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = sparse.csr_matrix(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        nv = self.c.size
        if self.A.shape[1] != nv or self.b.size != self.A.shape[0]:
            raise ValueError("constraint matrix shape does not match objective or right-hand side")
        if self.lower.size != nv or self.upper.size != nv or len(self.names) != nv:
            raise ValueError("bounds and names need one entry per variable")
        if np.any(self.lower > self.upper):
            raise ValueError("a variable has lower bound above upper bound")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def max_violation(self, z: np.ndarray) -> float:
        """Largest violation of rows and bounds at ``z`` (0 when feasible)."""
        z = np.asarray(z, dtype=float)
        rows = self.b - self.A @ z
        worst = float(rows.max()) if rows.size else 0.0
        worst = max(worst, float(np.max(self.lower - z, initial=0.0)), float(np.max(z - self.upper, initial=0.0)))
        return max(worst, 0.0)


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None
    objective: float | None
    message: str = ""
    iterations: int = 0


def solve_lp(lp: LinearProgram, backend: str = "simplex", solver_path: str | None = None, **options) -> LpResult:
    """Solve with the named backend; failures come back as ``solver-error``, never as exceptions."""
    try:
        if backend == "simplex":
            return simplex(lp, **options)
        if backend == "highs":
            return _highs(lp)
        if backend == "external":
            return _external(lp, solver_path or os.environ.get("ICC_SOLVER"))
    except Exception as exc:  # noqa: BLE001 - the contract is a status, not a crash
        return LpResult("solver-error", None, None, f"{type(exc).__name__}: {exc}")
    return LpResult("solver-error", None, None, f"unknown backend {backend!r}")


# built-in simplex ------------------------------------------------------------


def _as_inequalities(lp: LinearProgram) -> tuple[np.ndarray, np.ndarray]:
    """All constraints, bounds included, as dense rows ``G z >= h`` scaled to unit max-norm."""
    A = lp.A.toarray()
    rows, rhs = [A], [lp.b]
    nv = lp.c.size
    eye = np.eye(nv)
    lo = np.isfinite(lp.lower)
    up = np.isfinite(lp.upper)
    rows += [eye[lo], -eye[up]]
    rhs += [lp.lower[lo], -lp.upper[up]]
    G = np.vstack(rows)
    h = np.concatenate(rhs)
    scale = np.abs(G).max(axis=1)
    scale[scale == 0] = 1.0
    return G / scale[:, None], h / scale


class _Tableau:
    """Dense tableau for ``min d^T u  s.t.  E u = f, u >= 0`` (``f >= 0``)."""

    def __init__(self, E: np.ndarray, f: np.ndarray, tol: float):
        self.m, self.n = E.shape
        self.tol = tol
        # columns: structural u, artificials; last column is the rhs
        self.T = np.hstack([E, np.eye(self.m), f[:, None]])
        self.basis = list(range(self.n, self.n + self.m))
        self.iterations = 0

    def run(self, cost: np.ndarray, allowed: np.ndarray, max_iter: int) -> str:
        """Minimise ``cost`` (length n+m) over the current basis; returns optimal/unbounded/limit."""
        T, tol = self.T, self.tol
        stall, best = 0, math.inf
        while self.iterations < max_iter:
            cb = cost[self.basis]
            reduced = cost - cb @ T[:, :-1]
            reduced = np.where(allowed, reduced, 0.0)
            candidates = np.flatnonzero(reduced < -tol)
            if candidates.size == 0:
                return "optimal"
            # Dantzig pricing, falling back to Bland's rule while the objective stalls
            j = int(candidates[0]) if stall > 50 else int(candidates[np.argmin(reduced[candidates])])
            col = T[:, j]
            pos = np.flatnonzero(col > tol)
            if pos.size == 0:
                return "unbounded"
            ratios = T[pos, -1] / col[pos]
            rmin = ratios.min()
            ties = pos[ratios <= rmin + tol * max(1.0, abs(rmin))]
            r = int(min(ties, key=lambda i: self.basis[i]))
            self._pivot(r, j)
            value = float(cost[self.basis] @ T[:, -1])
            if value < best - tol:
                best, stall = value, 0
            else:
                stall += 1
        return "limit"

    def _pivot(self, r: int, j: int) -> None:
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = j
        self.iterations += 1

    def drive_out_artificials(self) -> list[int]:
        """Pivot zero-level artificials out of the basis; returns rows that are redundant."""
        redundant = []
        for r, bj in enumerate(self.basis):
            if bj < self.n:
                continue
            row = self.T[r, : self.n]
            cands = np.flatnonzero(np.abs(row) > 1e-7)
            if cands.size:
                self._pivot(r, int(cands[np.argmax(np.abs(row[cands]))]))
            else:
                redundant.append(r)
        return redundant


def simplex(lp: LinearProgram, tol: float = 1e-9, max_iter: int = 50000) -> LpResult:
    """Two-phase dense simplex on the dual ``max h^T u  s.t.  G^T u = c, u >= 0``.

    The primal point is read off the optimal basis multipliers. An unbounded
    dual means an infeasible primal; an infeasible dual is split into primal
    infeasible or unbounded by testing ``G^T u = 0`` for a ray with ``h^T u > 0``.
    """
    G, h = _as_inequalities(lp)
    c = lp.c
    E = G.T.copy()
    f = c.copy()
    neg = f < 0
    E[neg] *= -1
    f[neg] *= -1
    tab = _Tableau(E, f, tol)
    m, n = tab.m, tab.n
    allowed = np.ones(n + m, dtype=bool)
    phase1 = np.concatenate([np.zeros(n), np.ones(m)])
    state = tab.run(phase1, allowed, max_iter)
    if state == "limit":
        return LpResult("solver-error", None, None, "iteration limit in phase 1", tab.iterations)
    infeas = float(tab.T[:, -1] @ phase1[tab.basis])
    if infeas > 1e-7 * max(1.0, float(np.abs(f).max(initial=0.0))):
        return _classify_dual_infeasible(G, h, tol, max_iter, tab.iterations)
    tab.drive_out_artificials()
    allowed[n:] = False  # artificials left basic sit on redundant rows at zero
    cost = np.concatenate([-h, np.zeros(m)])
    state = tab.run(cost, allowed, max_iter)
    if state == "limit":
        return LpResult("solver-error", None, None, "iteration limit in phase 2", tab.iterations)
    if state == "unbounded":
        return LpResult("infeasible", None, None, "dual unbounded", tab.iterations)
    # multipliers y with B^T y = cost_B in the sign-flipped system; z = -y undoing the flips
    B = np.hstack([E, np.eye(m)])[:, tab.basis]
    y = np.linalg.lstsq(B.T, cost[tab.basis], rcond=None)[0]
    sign = np.where(neg, -1.0, 1.0)
    z = -(y * sign)
    z = np.clip(z, lp.lower, lp.upper)
    return LpResult("optimal", z, float(c @ z), "", tab.iterations)


def _classify_dual_infeasible(G, h, tol, max_iter, iters) -> LpResult:
    n_rows = G.shape[0]
    # ray search: max h^T u  s.t.  G^T u = 0, 0 <= u <= 1 (box keeps it bounded)
    E = np.hstack([G.T, np.zeros((G.shape[1], n_rows))])
    E = np.vstack([E, np.hstack([np.eye(n_rows), np.eye(n_rows)])])
    f = np.concatenate([np.zeros(G.shape[1]), np.ones(n_rows)])
    tab = _Tableau(E, f, tol)
    m, n = tab.m, tab.n
    allowed = np.ones(n + m, dtype=bool)
    phase1 = np.concatenate([np.zeros(n), np.ones(m)])
    tab.run(phase1, allowed, max_iter)
    tab.drive_out_artificials()
    allowed[n:] = False
    cost = np.concatenate([-h, np.zeros(n_rows), np.zeros(m)])
    tab.run(cost, allowed, max_iter)
    value = -float(cost[tab.basis] @ tab.T[:, -1])
    if value > 1e-7:
        return LpResult("infeasible", None, None, "Farkas ray found", iters + tab.iterations)
    return LpResult("unbounded", None, None, "dual infeasible and primal feasible", iters + tab.iterations)


# HiGHS ---------------------------------------------------------------------


def _highs(lp: LinearProgram) -> LpResult:
    from scipy.optimize import linprog

    bounds = [(None if not np.isfinite(l) else l, None if not np.isfinite(u) else u) for l, u in zip(lp.lower, lp.upper)]
    res = linprog(lp.c, A_ub=-lp.A, b_ub=-lp.b, bounds=bounds, method="highs")
    status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status, "solver-error")
    if status != "optimal":
        return LpResult(status, None, None, res.message, int(getattr(res, "nit", 0)))
    return LpResult("optimal", np.asarray(res.x), float(res.fun), res.message, int(getattr(res, "nit", 0)))


# CPLEX LP text format ----------------------------------------------------------


def _num(v: float) -> str:
    return repr(float(v))


def _linear(coefs, names) -> str:
    parts = []
    for j, v in coefs:
        parts.append(f"{'-' if v < 0 else '+'} {_num(abs(v))} {names[j]}")
    return " ".join(parts) if parts else "0 " + names[0]


def write_lp(lp: LinearProgram, path) -> None:
    """Write ``lp`` in CPLEX LP format, rows in assembly order, numbers as round-trip reprs."""
    names = lp.names
    for nm in names:
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_.\[\]]*", nm):
            raise ValueError(f"variable name {nm!r} is not valid in LP format")
    A = lp.A.tocsr()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\\ iccert scenario program\n")
        fh.write("Minimize\n")
        fh.write(f" obj: {_linear([(j, v) for j, v in enumerate(lp.c) if v != 0], names)}\n")
        fh.write("Subject To\n")
        for i in range(A.shape[0]):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            terms = list(zip(A.indices[lo:hi].tolist(), A.data[lo:hi].tolist()))
            label = lp.row_names[i] if lp.row_names else f"r{i}"
            fh.write(f" {label}: {_linear(terms, names)} >= {_num(lp.b[i])}\n")
        fh.write("Bounds\n")
        for nm, lo, up in zip(names, lp.lower, lp.upper):
            if not np.isfinite(lo) and not np.isfinite(up):
                fh.write(f" {nm} free\n")
            elif np.isfinite(lo) and np.isfinite(up):
                fh.write(f" {_num(lo)} <= {nm} <= {_num(up)}\n")
            elif np.isfinite(lo):
                fh.write(f" {nm} >= {_num(lo)}\n")
            else:
                fh.write(f" -inf <= {nm} <= {_num(up)}\n")
        fh.write("End\n")


_TERM = re.compile(r"([+-])\s*([0-9.eE+-]+|inf)\s+([A-Za-z_][A-Za-z0-9_.\[\]]*)")


def read_lp(path) -> LinearProgram:
    """Read the subset of CPLEX LP that :func:`write_lp` produces."""
    section = None
    obj: dict[str, float] = {}
    rows: list[tuple[str, dict[str, float], float]] = []
    bounds: dict[str, tuple[float, float]] = {}
    order: list[str] = []
    listed: list[str] = []  # Bounds-section order, which write_lp emits in column order

    def note(nm):
        if nm not in bounds:
            bounds[nm] = (0.0, math.inf)
            order.append(nm)

    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("\\"):
                continue
            low = line.lower()
            if low in ("minimize", "subject to", "bounds", "end"):
                section = low
                continue
            if section == "minimize":
                for s, v, nm in _TERM.findall(line.split(":", 1)[1]):
                    note(nm)
                    obj[nm] = float(v) * (-1 if s == "-" else 1)
            elif section == "subject to":
                label, body = line.split(":", 1)
                lhs, rhs = body.split(">=")
                coefs = {}
                for s, v, nm in _TERM.findall(lhs):
                    note(nm)
                    coefs[nm] = float(v) * (-1 if s == "-" else 1)
                rows.append((label.strip(), coefs, float(rhs)))
            elif section == "bounds":
                parts = line.split()
                nm = parts[0] if len(parts) != 5 else parts[2]
                note(nm)
                listed.append(nm)
                if len(parts) == 2 and parts[1] == "free":
                    bounds[parts[0]] = (-math.inf, math.inf)
                elif len(parts) == 5:
                    bounds[parts[2]] = (float(parts[0]), float(parts[4]))
                elif len(parts) == 3 and parts[1] == ">=":
                    bounds[parts[0]] = (float(parts[2]), math.inf)
                else:
                    raise ValueError(f"cannot parse bound line {line!r}")
    order = listed + [nm for nm in order if nm not in set(listed)]
    index = {nm: j for j, nm in enumerate(order)}
    data, ri, ci = [], [], []
    for i, (_, coefs, _) in enumerate(rows):
        for nm, v in coefs.items():
            data.append(v)
            ri.append(i)
            ci.append(index[nm])
    A = sparse.csr_matrix((data, (ri, ci)), shape=(len(rows), len(order)))
    return LinearProgram(
        np.array([obj.get(nm, 0.0) for nm in order]),
        A,
        np.array([r[2] for r in rows]),
        np.array([bounds[nm][0] for nm in order]),
        np.array([bounds[nm][1] for nm in order]),
        order,
        [r[0] for r in rows],
    )


def write_solution(path, status: str, names=None, x=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"status {status}\n")
        if x is not None:
            for nm, v in zip(names, x):
                fh.write(f"{nm} {_num(v)}\n")


def read_solution(path, names: list[str]) -> LpResult:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    if not lines or lines[0][0] != "status":
        raise ValueError("solution file must start with a status line")
    status = lines[0][1]
    if status == "error":
        status = "solver-error"
    if status not in STATUSES:
        raise ValueError(f"unknown solver status {status!r}")
    if status != "optimal":
        return LpResult(status, None, None, "external solver")
    values = {nm: float(v) for nm, v in lines[1:]}
    missing = [nm for nm in names if nm not in values]
    if missing:
        raise ValueError(f"solution misses variables {missing[:5]}")
    return LpResult("optimal", np.array([values[nm] for nm in names]), None, "external solver")


def _external(lp: LinearProgram, solver: str | None) -> LpResult:
    if not solver:
        return LpResult("solver-error", None, None, "no external solver configured (set ICC_SOLVER)")
    with tempfile.TemporaryDirectory() as tmp:
        prob = os.path.join(tmp, "problem.lp")
        sol = os.path.join(tmp, "solution.txt")
        write_lp(lp, prob)
        cmd = [sys.executable, "-m", "iccert.lp", prob, sol] if solver == "reference" else [solver, prob, sol]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0 or not os.path.exists(sol):
            return LpResult("solver-error", None, None, f"external solver failed: {proc.stderr.strip()[-500:]}")
        res = read_solution(sol, lp.names)
    if res.x is not None:
        res.objective = float(lp.c @ res.x)
    return res


def _main(argv: list[str]) -> int:
    """Reference external solver: read an LP file, solve with HiGHS, write a solution file."""
    if len(argv) != 2:
        print("usage: python -m iccert.lp problem.lp solution.txt", file=sys.stderr)
        return 64
    lp = read_lp(argv[0])
    res = _highs(lp)
    write_solution(argv[1], "error" if res.status == "solver-error" else res.status, lp.names, res.x)
    return 0


if __name__ == "__main__":
    sys.exit(_main(sys.argv[1:]))
