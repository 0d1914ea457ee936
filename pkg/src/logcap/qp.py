"""Energy minimisation over the probability simplex.

    minimise  w^T K w   subject to  w >= 0,  sum(w) = 1

for a dense symmetric positive definite K.  A spectral projected gradient
run (Barzilai-Borwein steps, nonmonotone Armijo safeguard) locates the
support; an active-set pass on the equivalent problem

    minimise  v^T K v - 2 sum(v)   subject to  v >= 0

then makes the KKT conditions hold to rounding.  The two problems share
their minimiser up to scale: v* = w* / W with W the minimal energy.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla


class QPConvergenceError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(f"{msg} (residual {residual:.3e})")
        self.residual = residual


@dataclass
class SimplexQPResult:
    w: np.ndarray
    energy: float
    iterations: int
    residual: float
    refine_steps: int


def project_simplex(y: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1} (sort-based)."""
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(y) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(y - tau, 0.0)


def pg_residual(K, w):
    g = 2.0 * (K @ w)
    scale = max(1.0, float(np.abs(g).max()))
    return float(np.abs(project_simplex(w - g / scale) - w).max())


def _spg(K, w, tol, max_iter, memory=10):
    g = 2.0 * (K @ w)
    f = float(w @ K @ w)
    hist = [f]
    alpha = 1.0 / max(float(np.abs(np.diag(K)).max()), 1e-300)
    it = 0
    res = np.inf
    for it in range(1, max_iter + 1):
        d = project_simplex(w - alpha * g) - w
        res = float(np.abs(d).max())
        if res < tol:
            break
        fref = max(hist[-memory:])
        gd = float(g @ d)
        lam = 1.0
        while True:
            wn = w + lam * d
            fn = float(wn @ K @ wn)
            if fn <= fref + 1e-4 * lam * gd or lam < 1e-12:
                break
            lam *= 0.5
        gn = 2.0 * (K @ wn)
        s, y = wn - w, gn - g
        sy = float(s @ y)
        alpha = float(s @ s) / sy if sy > 0 else 1e3 * alpha
        alpha = min(max(alpha, 1e-12), 1e12)
        w, g, f = wn, gn, fn
        hist.append(f)
    return w, it, res


def _solve_passive(K, p):
    # near-singular blocks (nodes sharing mesh cells) are fine here: the
    # outer loop only needs a descent direction, and the KKT residual is
    # checked on the full problem
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        try:
            return sla.solve(K[np.ix_(p, p)], np.ones(len(p)), assume_a="pos")
        except (np.linalg.LinAlgError, sla.LinAlgError):
            return sla.solve(K[np.ix_(p, p)], np.ones(len(p)), assume_a="sym")


def _inner(K, v, passive, budget):
    steps = 0
    while steps < budget and passive.any():
        steps += 1
        p = np.flatnonzero(passive)
        z = np.zeros(len(v))
        z[p] = _solve_passive(K, p)
        if np.all(z[p] > 0):
            return z, passive, steps
        neg = p[z[p] <= 0]
        alpha = float(np.min(v[neg] / (v[neg] - z[neg])))
        v = v + alpha * (z - v)
        passive = passive & (v > 0)
        v[~passive] = 0.0
    return v, passive, steps


def _active_set(K, v, tol, max_steps):
    """Lawson-Hanson active set for min v^T K v - 2 sum v, v >= 0."""
    passive = v > 0
    v, passive, steps = _inner(K, v.copy(), passive, max_steps)
    while steps < max_steps:
        grad = 1.0 - K @ v          # half the negative gradient
        grad[passive] = -np.inf
        j = int(np.argmax(grad))
        if grad[j] <= tol:
            break
        passive[j] = True
        v, passive, s = _inner(K, v, passive, max_steps - steps)
        steps += s
    return v, steps


def solve_simplex_qp(K: np.ndarray, tol: float = 1e-9, max_iter: int = 5000,
                     refine: bool = True, max_refine: int | None = None) -> SimplexQPResult:
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    if n == 0:
        raise ValueError("empty problem")
    if n == 1:
        return SimplexQPResult(np.ones(1), float(K[0, 0]), 0, 0.0, 0)
    scale = float(np.abs(np.diag(K)).max())
    w0 = np.full(n, 1.0 / n)
    w, iters, _ = _spg(K, w0, tol * 1e2, max_iter)
    steps = 0
    if refine:
        energy = float(w @ K @ w)
        v = w / energy
        v, steps = _active_set(K, v, tol * 1e-3, max_refine or 4 * n + 20)
        if v.sum() > 0:
            w = v / v.sum()
    res = pg_residual(K, w)
    if res > max(tol, 1e-9) * max(1.0, scale) * 1e3:
        w2, more, _ = _spg(K, w, tol, max_iter)
        iters += more
        if pg_residual(K, w2) < res:
            w, res = w2, pg_residual(K, w2)
        if res > 1e-5:
            raise QPConvergenceError("simplex QP did not converge", res)
    return SimplexQPResult(w, float(w @ K @ w), iters, res, steps)
