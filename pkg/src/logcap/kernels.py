"""Green function of the unit disk in log-polar coordinates.

With t = -log|x| the Laplacian Green function (normalized so that
G(x, y) ~ log 1/|x - y| at the diagonal) reads

    G = min(t1, t2) + 1/2 log A(t1 + t2, dth) - 1/2 log A(|t1 - t2|, dth),
    A(s, phi) = (1 - e^-s)^2 + 4 e^-s sin^2(phi / 2),

which never forms exp(-t) on its own and so stays finite for t up to the
float range.  Near the diagonal A(s, phi) ~ s^2 + phi^2, i.e. G behaves
like -log of the cylinder distance plus a smooth remainder.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import integrate

from .geometry import CompactSetSpec, LogPolarPoint, discretize, wrap_angle


class SingularityError(ValueError):
    """Kernel evaluated at coincident points."""


def log_a(s, phi):
    """log((1 - e^-s)^2 + 4 e^-s sin^2(phi/2)) for s >= 0, without cancellation."""
    s = np.asarray(s, dtype=float)
    phi = np.asarray(phi, dtype=float)
    s, phi = np.broadcast_arrays(s, phi)
    out = np.empty(s.shape)
    big = s > 1.0
    with np.errstate(divide="ignore"):
        e = np.exp(-s[big])
        out[big] = np.log1p(e * e - 2.0 * e * np.cos(phi[big]))
        sm = ~big
        em = np.expm1(-s[sm])
        sn = np.sin(0.5 * phi[sm])
        out[sm] = np.log(em * em + 4.0 * np.exp(-s[sm]) * sn * sn)
    return out


def green_lp(t1, th1, t2, th2):
    """Vectorised G in log-polar coordinates; +inf at coincident points."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    dth = np.asarray(th1, dtype=float) - np.asarray(th2, dtype=float)
    return (np.minimum(t1, t2) + 0.5 * log_a(t1 + t2, dth)
            - 0.5 * log_a(np.abs(t1 - t2), dth))


def green_disk(xi: LogPolarPoint, eta: LogPolarPoint) -> float:
    if xi.t == eta.t and xi.theta == eta.theta:
        raise SingularityError("green_disk at coincident points")
    return float(green_lp(xi.t, xi.theta, eta.t, eta.theta))


def green_cartesian(x, y):
    """log(|x' - y| |x| / |x - y|) straight from Cartesian input (reference form)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx = np.linalg.norm(x, axis=-1)
    xp = x / (nx ** 2)[..., None]
    return np.log(np.linalg.norm(xp - y, axis=-1) * nx / np.linalg.norm(x - y, axis=-1))


def regular_part(t1, th1, t2, th2):
    """G + log d with d the cylinder distance; finite at the diagonal."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    dt = np.abs(t1 - t2)
    dth = wrap_angle(np.asarray(th1, dtype=float) - np.asarray(th2, dtype=float))
    d2 = dt * dt + dth * dth
    base = np.minimum(t1, t2) + 0.5 * log_a(t1 + t2, dth)
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = -0.5 * (log_a(dt, dth) - np.log(d2))
    # A(s, phi) / (s^2 + phi^2) -> 1 at the diagonal; second order there
    small = d2 < 1e-12
    corr = np.where(small, 0.5 * np.where(small, dt, 0.0), corr)
    return base + corr


# ---------------------------------------------------------------------------
# panel integrals of the logarithmic singularity
# ---------------------------------------------------------------------------


def self_neglog_segment(length):
    """Mean of -log|s - s'| over a straight panel of the given length."""
    return -np.log(length) + 1.5


@functools.lru_cache(maxsize=256)
def _unit_rect_meanlog(ratio: float) -> float:
    # E log|x - y| for x, y uniform in [0, 1] x [0, ratio]
    def f(v, u):
        r2 = u * u + v * v
        return (1 - u) * (ratio - v) * 0.5 * math.log(r2) if r2 > 0 else 0.0

    val, _ = integrate.dblquad(f, 0.0, 1.0, 0.0, ratio, epsabs=1e-11, epsrel=1e-10)
    return 4.0 * val / ratio ** 2


def self_neglog_rect(a, b):
    """Mean of -log|x - y| over an a-by-b rectangle."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    ratios = np.round(lo / hi, 6)
    vals = np.array([_unit_rect_meanlog(float(r)) for r in np.atleast_1d(ratios)])
    return -(np.log(hi) + vals.reshape(np.shape(ratios)))


def point_neglog_segment(along, across, length):
    """Mean of -log|p - s| over a straight panel, p given in panel coordinates.

    ``along`` is the offset of p from the panel centre along the panel,
    ``across`` the perpendicular distance.
    """
    along = np.asarray(along, dtype=float)
    y = np.abs(np.asarray(across, dtype=float))
    length = np.asarray(length, dtype=float)

    def F(s):
        with np.errstate(divide="ignore", invalid="ignore"):
            r2 = s * s + y * y
            lg = np.where(r2 > 0, 0.5 * np.log(np.where(r2 > 0, r2, 1.0)), 0.0)
            at = np.where(y > 0, y * np.arctan(s / np.where(y > 0, y, 1.0)), 0.0)
            return s * lg - s + at

    return -(F(along + 0.5 * length) - F(along - 0.5 * length)) / length


# ---------------------------------------------------------------------------
# kernel kinds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LaplaceDisk:
    """Exact Laplacian Green function of the unit disk."""

    name: str = "laplace"

    def green(self, t1, th1, t2, th2):
        return green_lp(t1, th1, t2, th2)

    def h(self, t, theta=None):
        return np.asarray(t, dtype=float)


@dataclass(frozen=True)
class DiscreteOperator:
    """Green function of a general operator, read off a finite element table.

    ``table`` is an ``elliptic.DiscreteGreenTable``; it carries its mesh and
    the coefficient field.
    """

    table: Any
    name: str = "discrete"

    def green(self, t1, th1, t2, th2):
        return self.table.green(t1, th1, t2, th2)

    def h(self, t, theta=None):
        if theta is None:
            theta = np.zeros_like(np.asarray(t, dtype=float))
        return self.table.h(t, theta)


LAPLACE = LaplaceDisk()


def h_value(p: LogPolarPoint, kind=LAPLACE) -> float:
    return float(kind.h(p.t, p.theta))


def h_kernel(xi: LogPolarPoint, eta: LogPolarPoint, kind=LAPLACE) -> float:
    if xi.t == eta.t and xi.theta == eta.theta:
        raise SingularityError("h_kernel at coincident points")
    g = float(kind.green(xi.t, xi.theta, eta.t, eta.theta))
    return g / (h_value(xi, kind) * h_value(eta, kind))


@dataclass
class ComparabilityReport:
    c_lo: float
    c_hi: float
    n_pairs: int


def comparability_check(kind_a, kind_b, sample_set: CompactSetSpec,
                        resolution: float = 4.0, max_pairs: int = 4000,
                        seed: int = 0) -> ComparabilityReport:
    """min/max of G_A / G_B over distinct pairs of sampled nodes."""
    disc = discretize(sample_set, resolution, max_nodes=256)
    n = len(disc)
    if n < 2:
        raise ValueError("degenerate sample: fewer than two distinct points")
    i, j = np.triu_indices(n, k=1)
    d = np.hypot(disc.t[i] - disc.t[j], wrap_angle(disc.theta[i] - disc.theta[j]))
    keep = d > 1e-9
    i, j = i[keep], j[keep]
    if len(i) == 0:
        raise ValueError("degenerate sample: all pairs coincide")
    if len(i) > max_pairs:
        sel = np.random.default_rng(seed).choice(len(i), max_pairs, replace=False)
        i, j = i[sel], j[sel]
    ga = kind_a.green(disc.t[i], disc.theta[i], disc.t[j], disc.theta[j])
    gb = kind_b.green(disc.t[i], disc.theta[i], disc.t[j], disc.theta[j])
    r = np.asarray(ga) / np.asarray(gb)
    return ComparabilityReport(float(r.min()), float(r.max()), int(len(r)))
