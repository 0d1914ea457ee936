"""The h-Dirichlet problem on Omega = D minus a compact set.

For u = v / h the h-problem is the ordinary one for v: A v = 0 in Omega,
v = h f on the obstacle, v = 0 on the unit circle.  The puncture cannot be
meshed, so the domain stops at the circle t = T, where v = h f_bar.  The
mass the h-harmonic measure puts on the puncture is the T -> infinity limit
of the solution with f = 0 on the obstacle and f_bar = 1.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse.linalg as spla

from .elliptic import (CoefficientField, DiscreteGreenTable, Mesh, MeshError, assemble,
                       build_mesh, identity_field)
from .geometry import TWO_PI, CompactSetSpec, GeometryError, LogPolarPoint


class BoundaryDataError(ValueError):
    pass


@dataclass
class BoundaryData:
    """f on each obstacle primitive (a number or a callable f(t, theta)) and f_bar at the puncture."""

    values: Sequence = ()
    f_bar: float = 0.0
    default: float = 0.0

    def on_primitive(self, idx: int, t, theta):
        v = self.values[idx] if idx < len(self.values) else self.default
        out = v(t, theta) if callable(v) else np.full(np.shape(t), float(v))
        out = np.asarray(out, float)
        if not np.all(np.isfinite(out)):
            raise BoundaryDataError("boundary data must be bounded")
        return out

    @classmethod
    def constant(cls, c: float, n_primitives: int = 0) -> "BoundaryData":
        return cls([c] * n_primitives, c, c)

    @classmethod
    def from_json(cls, d: dict) -> "BoundaryData":
        try:
            vals = [float(v) for v in d.get("values", [])]
            return cls(vals, float(d.get("f_bar", 0.0)), float(d.get("default", 0.0)))
        except (TypeError, ValueError) as exc:
            raise BoundaryDataError(f"bad boundary data: {exc}") from None

    def to_json(self) -> dict:
        if any(callable(v) for v in self.values):
            raise BoundaryDataError("callable data cannot be serialised")
        return {"values": [float(v) for v in self.values], "f_bar": self.f_bar,
                "default": self.default}


@dataclass
class HdpSolution:
    mesh: Mesh
    u: np.ndarray
    v: np.ndarray
    h: np.ndarray
    t_ceiling: float
    residual: float
    obstacle_nodes: np.ndarray = field(repr=False, default=None)

    def at(self, t, theta):
        """P1 interpolation of u (interpolating v and dividing by h keeps u = const exact)."""
        t = np.atleast_1d(np.asarray(t, float))
        theta = np.broadcast_to(np.asarray(theta, float), t.shape)
        verts, w = self.mesh.locate(t, theta)
        v = np.einsum("ni,ni->n", self.v[verts], w)
        h = np.einsum("ni,ni->n", self.h[verts], w)
        return v / h

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "theta", "u", "v"])
        for row in zip(self.mesh.vertex_t, self.mesh.vertex_theta, self.u, self.v):
            wr.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


def _truncate(K: CompactSetSpec, T: float) -> CompactSetSpec:
    return K.clip(0.0, T)


def _h_nodes(fld: CoefficientField, mesh: Mesh) -> np.ndarray:
    if fld.is_identity:
        return mesh.vertex_t.copy()
    return DiscreteGreenTable(fld, mesh).h_nodes


def solve_hdp(K: CompactSetSpec, data: BoundaryData, fld: CoefficientField | None = None,
              t_ceiling: float = 32.0, n_theta: int = 64, mesh: Mesh | None = None,
              h: np.ndarray | None = None, form=None) -> HdpSolution:
    """Finite element solution of the h-problem on D minus K cut at t = t_ceiling.

    Parts of K beyond the ceiling are dropped; the ceiling row carries f_bar.
    """
    fld = fld or identity_field()
    Kc = _truncate(K, t_ceiling)
    if not Kc.is_empty and Kc.t_max > t_ceiling:
        raise GeometryError("obstacle beyond the truncation circle")
    if mesh is None:
        mesh = build_mesh(Kc if not Kc.is_empty else None, t_ceiling, n_theta=n_theta)
    if h is None:
        h = _h_nodes(fld, mesh)
    if form is None:
        form = assemble(fld, mesh)
    A = form.matrix.tocsr()
    n = mesh.n_nodes
    fixed = np.zeros(n, dtype=bool)
    vals = np.zeros(n)
    fixed[mesh.outer] = True
    tol = 1e-9 * max(1.0, t_ceiling)
    obst = np.zeros(n, dtype=bool)
    for idx, p in enumerate(Kc.primitives):
        on = p.contains(mesh.vertex_t, mesh.vertex_theta, tol=tol)
        if not on.any():
            raise MeshError(f"obstacle primitive {idx} carries no mesh vertex")
        on &= ~obst
        vals[on] = h[on] * data.on_primitive(idx, mesh.vertex_t[on], mesh.vertex_theta[on])
        obst |= on
    fixed |= obst
    inner = mesh.inner
    fixed[inner] = True
    vals[inner] = h[inner] * float(data.f_bar)
    vals[mesh.outer] = 0.0
    free = np.flatnonzero(~fixed)
    v = vals.copy()
    rhs = -(A[free][:, fixed] @ vals[fixed])
    v[free] = spla.spsolve(A[free][:, free].tocsc(), rhs)
    res = float(np.abs(A[free] @ v).max()) if len(free) else 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(h > 0, v / np.where(h > 0, h, 1.0), 0.0)
    # on the unit circle u is the limit v/h; use the neighbouring row
    u[mesh.outer] = u[mesh.outer + mesh.n_theta]
    return HdpSolution(mesh, u, v, h, float(t_ceiling), res, np.flatnonzero(obst))


# ---------------------------------------------------------------------------
# harmonic measure of the puncture
# ---------------------------------------------------------------------------


def _probe_arrays(probes):
    if isinstance(probes, LogPolarPoint):
        probes = [probes]
    t = np.array([p.t for p in probes], float)
    th = np.array([p.theta for p in probes], float)
    return t, th


def extrapolate_inverse(ts, values) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares fit values = alpha + beta / T per column; returns (alpha, beta)."""
    ts = np.asarray(ts, float)
    y = np.asarray(values, float)
    A = np.stack([np.ones_like(ts), 1.0 / ts], 1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coef[0], coef[1]


def _check_probes(K, t, th):
    if K.is_empty:
        return
    inside = K.contains(t, th, tol=1e-9)
    if np.any(inside):
        raise GeometryError("probe lies on the obstacle")


def harmonic_measure_of_zeta(K: CompactSetSpec, probes, fld: CoefficientField | None = None,
                             t_ceilings=(16.0, 32.0, 64.0), n_theta: int = 64) -> dict:
    """Solution with f = 0 on K and f_bar = 1, for several ceilings, plus the
    alpha + beta / T extrapolation.  Returns per-probe tables."""
    t, th = _probe_arrays(probes)
    _check_probes(K, t, th)
    if len(t_ceilings) < 3:
        raise ValueError("need at least three truncations to extrapolate")
    rows = []
    for T in t_ceilings:
        if np.any(t >= T):
            raise GeometryError("probe beyond the truncation circle")
        sol = solve_hdp(K, BoundaryData([], 1.0, 0.0), fld, T, n_theta)
        rows.append(sol.at(t, th))
    rows = np.array(rows)
    alpha, beta = extrapolate_inverse(t_ceilings, rows)
    return {"t_ceilings": [float(x) for x in t_ceilings], "probes": list(zip(t, th)),
            "values": rows, "limit": np.clip(alpha, 0.0, 1.0), "raw_limit": alpha,
            "beta": beta}


def uniqueness_gap(K: CompactSetSpec, probes, data: BoundaryData | None = None,
                   fld: CoefficientField | None = None, t_ceiling: float = 64.0,
                   n_theta: int = 64) -> dict:
    """|u(f_bar = 1) - u(f_bar = 0)| at the probes for the same obstacle data."""
    t, th = _probe_arrays(probes)
    _check_probes(K, t, th)
    data = data or BoundaryData()
    fld = fld or identity_field()
    Kc = _truncate(K, t_ceiling)
    mesh = build_mesh(Kc if not Kc.is_empty else None, t_ceiling, n_theta=n_theta)
    h = _h_nodes(fld, mesh)
    form = assemble(fld, mesh)
    one = BoundaryData(data.values, 1.0, data.default)
    zero = BoundaryData(data.values, 0.0, data.default)
    u1 = solve_hdp(K, one, fld, t_ceiling, mesh=mesh, h=h, form=form).at(t, th)
    u0 = solve_hdp(K, zero, fld, t_ceiling, mesh=mesh, h=h, form=form).at(t, th)
    gap = np.abs(u1 - u0)
    return {"gap": gap, "sup": float(gap.max()), "t_ceiling": t_ceiling}


def boundary_oscillation_check(K: CompactSetSpec, data: BoundaryData,
                               fld: CoefficientField | None = None, t_ceiling: float = 64.0,
                               n_theta: int = 64, angles=(math.pi / 2, math.pi, 1.5 * math.pi),
                               tol: float = 0.02) -> dict:
    """Finite surrogate of the chain liminf f <= liminf u <= limsup u <= limsup f.

    Probes sit at t = 2^j (j >= 1, below the ceiling) on a few angles; the
    deeper half of them stands in for the limit at the puncture.  The data
    band is taken over the obstacle vertices at least as deep as those probes.
    """
    sol = solve_hdp(K, data, fld, t_ceiling, n_theta)
    js = [j for j in range(1, 64) if 2.0 ** j < 0.75 * t_ceiling]
    if len(js) < 2:
        raise ValueError("t_ceiling too small for the probe sequence")
    deep = js[len(js) // 2:]
    pt = np.repeat([2.0 ** j for j in deep], len(angles))
    pth = np.tile(np.asarray(angles, float), len(deep))
    _check_probes(K, pt, pth)
    uvals = sol.at(pt, pth)
    t_from = 2.0 ** deep[0]
    ob = sol.obstacle_nodes
    deep_ob = ob[(sol.mesh.vertex_t[ob] >= t_from) & (sol.mesh.vertex_t[ob] < t_ceiling)]
    # with no obstacle near the puncture fall back to all obstacle data
    ob = deep_ob if len(deep_ob) else ob
    if len(ob):
        fvals = sol.u[ob]
        f_lo, f_hi = float(fvals.min()), float(fvals.max())
    else:
        f_lo = f_hi = float(data.f_bar)
    u_lo, u_hi = float(uvals.min()), float(uvals.max())
    checks = [f_lo <= u_lo + tol, u_lo <= u_hi + tol, u_hi <= f_hi + tol]
    return {"data_band": (f_lo, f_hi), "solution_band": (u_lo, u_hi),
            "inequalities": checks, "all_hold": all(checks),
            "probes": list(zip(pt.tolist(), pth.tolist()))}


def gap_table_csv(res: dict) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["t", "theta"] + [f"u_T{T:g}" for T in res["t_ceilings"]] + ["limit"])
    for k, (t, th) in enumerate(res["probes"]):
        wr.writerow([repr(float(t)), repr(float(th))]
                    + [repr(float(res["values"][i][k])) for i in range(len(res["t_ceilings"]))]
                    + [repr(float(res["limit"][k]))])
    return buf.getvalue()
