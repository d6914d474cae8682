"""Dense-grid reference minima for the appendix persistence certificate.

Written against raw JSON and numpy only, so it shares no code with the
package. Run as a script to regenerate ``tests/data/appendix_oracle.json``.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[2]
FIXTURE = ROOT / "src" / "iccert" / "data" / "appendix_persistence.json"
OUT = ROOT / "tests" / "data" / "appendix_oracle.json"

STATE = ([0.0, 0.0, 0.0], [7.0, 5.0, 2.0])
INIT = ([6.0, 4.0, 1.0], [7.0, 5.0, 2.0])
VISIT = ([6.0, 2.0, 1.0], [7.0, 3.0, 1.5])


def lv(x):
    x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
    return np.stack(
        [
            x1 + 0.01 * (1.6 * x2 - 0.38 * x1),
            x2 + 0.01 * (0.3 * x1 - 0.3 * x2**2 - 20.0 * x2 * x3 - 0.06 * x2),
            x3 + 0.01 * (0.3 * x2 - 0.5 * x3),
        ],
        axis=1,
    )


def centres(box, eps):
    axes = []
    for lo, up in zip(*box):
        n = int(round((up - lo) / (2 * eps)))
        axes.append(lo + eps * (2 * np.arange(n) + 1))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def powers(points, exps):
    out = np.ones((points.shape[0], len(exps)))
    for j, e in enumerate(exps):
        for d, p in enumerate(e):
            if p:
                out[:, j] *= points[:, d] ** p
    return out


class PairFunction:
    """``T(x, y)`` as ``A(x) @ W @ B(y).T`` from a flat 6-variable basis."""

    def __init__(self, basis, coeffs):
        xs = sorted({tuple(e[:3]) for e in basis})
        ys = sorted({tuple(e[3:]) for e in basis})
        self.xs, self.ys = xs, ys
        self.W = np.zeros((len(xs), len(ys)))
        for e, c in zip(basis, coeffs):
            self.W[xs.index(tuple(e[:3])), ys.index(tuple(e[3:]))] += c

    def left(self, x):
        return powers(x, self.xs) @ self.W

    def right(self, y):
        return powers(y, self.ys)


def pair_min(L, R, chunk=2000):
    best = np.inf
    for a in range(0, L.shape[0], chunk):
        best = min(best, float((L[a:a + chunk] @ R.T).min()))
    return best


def minima(eps: float) -> dict:
    data = json.loads(FIXTURE.read_text())
    eta = data["hyperparameters"]["eta"]
    T = {f["i"]: PairFunction(data["basis"], f["coefficients"]) for f in data["functions"]}
    X = centres(STATE, eps)
    FX = lv(X)
    X0 = centres(INIT, eps)
    VF = centres(VISIT, eps)
    ys = T[0].ys
    assert all(t.ys == ys for t in T.values())
    RY = powers(X, ys)
    out = {}
    out["transition"] = float(np.min(np.sum(T[0].left(X) * powers(FX, ys), axis=1)))
    out["chain[0]"] = pair_min(T[1].left(X) - T[0].left(FX), RY)
    out["chain[1]"] = pair_min(T[2].left(X) - T[1].left(FX), RY)
    out["closure"] = pair_min(T[2].left(X) - T[2].left(FX), RY)
    # rank with rho1 = rho2 = 1: -eta - T2(x0, y2) - T2(y, y2); split over y2
    R2 = powers(VF, ys)
    a = (T[2].left(X0) @ R2.T).max(axis=0)
    b = (T[2].left(VF) @ R2.T).max(axis=0)
    out["rank"] = float(np.min(-eta - a - b))
    return out


def main(argv=None) -> int:
    eps = float((argv or sys.argv[1:] or ["0.05"])[0])
    t = time.time()
    res = minima(eps)
    payload = {"epsilon": eps, "minima": res, "seconds": round(time.time() - t, 1)}
    if eps == 0.05:
        OUT.write_text(json.dumps(payload, indent=2) + "\n")
    print(json.dumps(payload, indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
