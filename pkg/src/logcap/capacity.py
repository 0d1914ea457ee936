"""h-capacity, equilibrium measures and reductions.

Two independent routes compute the same number:

* the energy route minimises sum_ij w_i w_j G(y_i, y_j) / (h_i h_j) over
  probability vectors on a panel layout of K; the capacity is the
  reciprocal of the minimum and the equilibrium measure is the minimiser
  scaled by the capacity;
* the obstacle route minimises the finite element Dirichlet energy of
  functions vanishing on the unit circle with phi >= h on the mesh vertices
  of K.  With loads scaled by 2 pi (see ``elliptic``) the capacity is that
  energy divided by 2 pi.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import elliptic
from .elliptic import CoefficientField, MeshError, build_mesh, identity_field
from .geometry import (CELL, CURVE, TWO_PI, CompactSetSpec, Discretization, GeometryError,
                       LogPolarPoint, discretize, wrap_angle)
from .kernels import (LAPLACE, LaplaceDisk, green_lp, point_neglog_segment, regular_part,
                      self_neglog_rect)
from .qp import QPConvergenceError, solve_simplex_qp

# minimal energies above this are reported as a polar set
POLAR_ENERGY = 1e6
# pairs closer than this many panel lengths get the panel-integrated log term;
# the half keeps equally spaced panels clear of the cutoff
NEAR_PANELS = 4.5


class CapacityError(RuntimeError):
    pass


@dataclass
class DiscreteMeasure:
    t: np.ndarray
    theta: np.ndarray
    masses: np.ndarray
    disc: Discretization | None = field(default=None, repr=False)

    def __post_init__(self):
        self.masses = np.asarray(self.masses, float)
        if np.any(self.masses < 0):
            raise ValueError("measure masses must be nonnegative")

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    @property
    def nodes(self) -> list[LogPolarPoint]:
        return [LogPolarPoint(a, b) for a, b in zip(self.t, self.theta)]

    @classmethod
    def point_mass(cls, p: LogPolarPoint, mass: float = 1.0) -> "DiscreteMeasure":
        return cls(np.array([p.t]), np.array([p.theta]), np.array([float(mass)]))

    @classmethod
    def empty(cls) -> "DiscreteMeasure":
        return cls(np.zeros(0), np.zeros(0), np.zeros(0))


@dataclass
class CapacityResult:
    capacity: float
    robin: float
    equilibrium: DiscreteMeasure
    route: str
    resolution: dict
    diagnostics: dict = field(default_factory=dict)
    potential: Any = field(default=None, repr=False)

    def to_json(self) -> dict:
        eq = self.equilibrium
        return {
            "capacity": self.capacity,
            "robin": self.robin if math.isfinite(self.robin) else "inf",
            "route": self.route,
            "resolution": self.resolution,
            "nodes": [[float(a), float(b)] for a, b in zip(eq.t, eq.theta)],
            "masses": [float(m) for m in eq.masses],
            "diagnostics": self.diagnostics,
        }


# ---------------------------------------------------------------------------
# kernel matrix
# ---------------------------------------------------------------------------


def _phi(x):
    x = np.abs(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, 0.5 * x * x * np.log(np.where(x > 0, x, 1.0)) - 0.75 * x * x, 0.0)


def colinear_neglog(k):
    """Mean of -log|s - s'| over two unit panels on one line, centres k apart."""
    k = np.abs(np.asarray(k, float))
    return -(_phi(k + 1) - 2 * _phi(k) + _phi(k - 1))


def _panel_length(disc: Discretization) -> np.ndarray:
    return np.where(disc.kind == CURVE, np.exp(disc.log_panel), np.sqrt(disc.weights))


def _laplace_corrections(disc: Discretization, G: np.ndarray):
    """Replace diagonal and near-diagonal entries by panel integrals."""
    n = len(disc)
    t, th = disc.t, disc.theta
    ell = _panel_length(disc)
    curve = disc.kind == CURVE
    diag_r = regular_part(t, th, t, th)
    selfv = np.where(curve, 1.5 - disc.log_panel, 0.0)
    cells = ~curve
    if cells.any():
        selfv[cells] = self_neglog_rect(disc.ext_t[cells], disc.ext_th[cells])
    G[np.arange(n), np.arange(n)] = selfv + diag_r

    # micro segments: nodes share their float coordinates, rebuild distances
    if disc.micro.any():
        for src in np.unique(disc.source[disc.micro]):
            idx = np.flatnonzero(disc.micro & (disc.source == src))
            lp = disc.log_panel[idx[0]]
            du = disc.local_u[idx][:, None] - disc.local_u[idx][None, :]
            r = regular_part(t[idx[0]], th[idx[0]], t[idx[0]], th[idx[0]])
            G[np.ix_(idx, idx)] = colinear_neglog(du) - lp + r

    # ordinary near pairs
    dt = t[:, None] - t[None, :]
    dth = wrap_angle(th[:, None] - th[None, :])
    d = np.hypot(dt, dth)
    reach = NEAR_PANELS * np.maximum(ell[:, None], ell[None, :])
    near = (d < reach) & ~np.eye(n, dtype=bool)
    near &= ~(disc.micro[:, None] & disc.micro[None, :]
              & (disc.source[:, None] == disc.source[None, :]))
    near &= curve[:, None] & curve[None, :]
    i, j = np.nonzero(near)
    if len(i) == 0:
        return
    dirt, dirth = disc.ext_t, disc.ext_th
    # panel j seen from node i, in panel j's frame
    along_j = dt[i, j] * dirt[j] + dth[i, j] * dirth[j]
    across_j = dt[i, j] * dirth[j] - dth[i, j] * dirt[j]
    along_i = -dt[i, j] * dirt[i] - dth[i, j] * dirth[i]
    across_i = -dt[i, j] * dirth[i] + dth[i, j] * dirt[i]
    nl = 0.5 * (point_neglog_segment(along_j, across_j, ell[j])
                + point_neglog_segment(along_i, across_i, ell[i]))
    # equal panels on one line: exact double integral
    same_line = ((np.abs(disc.log_panel[i] - disc.log_panel[j]) < 1e-9)
                 & (np.abs(dirt[i] * dirth[j] - dirth[i] * dirt[j]) < 1e-12)
                 & (np.abs(across_j) < 1e-9 * ell[j]))
    k = d[i, j] / ell[j]
    nl = np.where(same_line, colinear_neglog(k) - np.log(ell[j]), nl)
    G[i, j] = nl + regular_part(t[i], th[i], t[j], th[j])


def green_matrix(disc: Discretization, kind=LAPLACE, block: int = 512) -> np.ndarray:
    """Panel-averaged Green function between the nodes of ``disc``."""
    n = len(disc)
    t, th = disc.t, disc.theta
    if isinstance(kind, LaplaceDisk):
        G = np.empty((n, n))
        with np.errstate(divide="ignore"):
            for s in range(0, n, block):
                G[s:s + block] = green_lp(t[s:s + block, None], th[s:s + block, None],
                                          t[None, :], th[None, :])
        _laplace_corrections(disc, G)
    else:
        # finite element kernels are bounded at the pole already
        G = np.asarray(kind.green(t[:, None], th[:, None], t[None, :], th[None, :]))
    return 0.5 * (G + G.T)


def kernel_matrix(disc: Discretization, kind=LAPLACE, weight: str = "h") -> np.ndarray:
    G = green_matrix(disc, kind)
    if weight == "one":
        return G
    if weight != "h":
        raise ValueError(f"weight must be 'h' or 'one', got {weight!r}")
    h = np.asarray(kind.h(disc.t, disc.theta), float)
    return G / np.outer(h, h)


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------


def _as_arrays(x):
    if isinstance(x, LogPolarPoint):
        return np.array([x.t]), np.array([x.theta]), True
    if isinstance(x, (list, tuple)) and x and isinstance(x[0], LogPolarPoint):
        return (np.array([p.t for p in x]), np.array([p.theta for p in x]), False)
    t, th = x
    return np.atleast_1d(np.asarray(t, float)), np.atleast_1d(np.asarray(th, float)), False


def potential_eval(mu: DiscreteMeasure, x, kind=LAPLACE, weight: str = "h"):
    """sum_j G(x, y_j) / h(y_j) m_j, with panel integrals for close panels.

    ``x`` is a LogPolarPoint, a list of them, or a (t, theta) pair of arrays.
    """
    tx, thx, scalar = _as_arrays(x)
    if len(mu.masses) == 0:
        out = np.zeros(len(tx))
        return float(out[0]) if scalar else out
    ty, thy = mu.t, mu.theta
    hy = np.ones(len(ty)) if weight == "one" else np.asarray(kind.h(ty, thy), float)
    coef = mu.masses / hy
    out = np.empty(len(tx))
    block = max(1, 2_000_000 // max(len(ty), 1))
    for s in range(0, len(tx), block):
        a, b = tx[s:s + block, None], thx[s:s + block, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            G = np.asarray(kind.green(a, b, ty[None, :], thy[None, :]), float)
        if isinstance(kind, LaplaceDisk) and mu.disc is not None:
            _near_potential(mu.disc, a[:, 0], b[:, 0], G)
        out[s:s + block] = G @ coef
    return float(out[0]) if scalar else out


def _near_potential(disc: Discretization, tx, thx, G):
    ell = _panel_length(disc)
    dt = tx[:, None] - disc.t[None, :]
    dth = wrap_angle(thx[:, None] - disc.theta[None, :])
    d = np.hypot(dt, dth)
    near = (d < NEAR_PANELS * ell[None, :]) | ~np.isfinite(G)
    i, j = np.nonzero(near)
    if len(i) == 0:
        return
    curve = disc.kind[j] == CURVE
    along = dt[i, j] * disc.ext_t[j] + dth[i, j] * disc.ext_th[j]
    across = dt[i, j] * disc.ext_th[j] - dth[i, j] * disc.ext_t[j]
    nl = point_neglog_segment(along, across, ell[j])
    cell = np.flatnonzero(~curve)
    if len(cell):
        dc = d[i[cell], j[cell]]
        with np.errstate(divide="ignore"):
            nl[cell] = np.where(dc > 0, -np.log(np.where(dc > 0, dc, 1.0)),
                                self_neglog_rect(disc.ext_t[j[cell]], disc.ext_th[j[cell]]))
    G[i, j] = nl + regular_part(tx[i], thx[i], disc.t[j], disc.theta[j])


# ---------------------------------------------------------------------------
# energy route
# ---------------------------------------------------------------------------


def _probe_grid(K: CompactSetSpec, n: int = 200, seed: int = 0):
    rng = np.random.default_rng(seed)
    lo = max(K.t_min * 0.25, 1e-3)
    hi = K.t_max * 2.0 + 1.0
    t = np.exp(rng.uniform(math.log(lo), math.log(hi), n))
    th = rng.uniform(0.0, TWO_PI, n)
    return t, th


def equilibrium_capacity(K, kind=LAPLACE, resolution: float = 64.0, max_nodes: int = 4096,
                         weight: str = "h", tol: float = 1e-9, probes: int = 200,
                         spec: CompactSetSpec | None = None) -> CapacityResult:
    """Capacity by minimising the discrete energy over probability measures on K.

    ``K`` is a CompactSetSpec (discretised here, area primitives by their
    boundary) or a ready Discretization.  ``weight="one"`` gives the
    Greenian capacity (h replaced by 1).
    """
    t0 = time.perf_counter()
    if isinstance(K, CompactSetSpec):
        spec = K
        disc = discretize(K, resolution, max_nodes=max_nodes, boundary=True)
    else:
        disc = K
    res_meta = {"panels": len(disc), "resolution": resolution}
    if len(disc) == 0:
        return CapacityResult(0.0, math.inf, DiscreteMeasure.empty(), "EquilibriumQP",
                              res_meta, {"empty": True})
    M = kernel_matrix(disc, kind, weight)
    try:
        sol = solve_simplex_qp(M, tol=tol)
    except QPConvergenceError:
        raise
    W = sol.energy
    diag = {"qp_iterations": sol.iterations, "refine_steps": sol.refine_steps,
            "residual": sol.residual, "polar": False}
    if not W > 0 or W > POLAR_ENERGY:
        diag["polar"] = True
        return CapacityResult(0.0, math.inf, DiscreteMeasure.empty(), "EquilibriumQP",
                              res_meta, diag)
    cap = 1.0 / W
    mu = DiscreteMeasure(disc.t.copy(), disc.theta.copy(), cap * sol.w, disc)
    # potential on K: mass-weighted mean of U/h (equals 1 on the support)
    on_k = (M @ sol.w) * cap
    diag["support_fraction"] = float(np.mean(sol.w > 0))
    diag["potential_on_support_min"] = float(on_k[sol.w > 0].min())
    if spec is not None and probes:
        pt, pth = _probe_grid(spec, probes)
        keep = ~spec.contains(pt, pth, tol=1e-6)
        pt, pth = pt[keep], pth[keep]
        u = potential_eval(mu, (pt, pth), kind, weight)
        h = np.ones(len(pt)) if weight == "one" else np.asarray(kind.h(pt, pth), float)
        diag["max_potential_over_h"] = float(np.max(u / h)) if len(pt) else None
    diag["seconds"] = time.perf_counter() - t0
    return CapacityResult(cap, W, mu, "EquilibriumQP", res_meta, diag)


def greenian_capacity(K, kind=LAPLACE, resolution: float = 64.0, **kw) -> CapacityResult:
    """Capacity with h replaced by 1 (kernel G, obstacle 1)."""
    return equilibrium_capacity(K, kind, resolution, weight="one", **kw)


def smoothed_reduction(K, x, kind=LAPLACE, resolution: float = 64.0,
                       result: CapacityResult | None = None):
    """Equilibrium potential of K at x, clamped to [0, h(x)]."""
    if result is None:
        result = equilibrium_capacity(K, kind, resolution, probes=0)
    tx, thx, scalar = _as_arrays(x)
    u = potential_eval(result.equilibrium, (tx, thx), kind)
    h = np.asarray(kind.h(tx, thx), float)
    out = np.clip(u, 0.0, h)
    return float(out[0]) if scalar else out


def capacity_at_zeta(K, kind=LAPLACE, resolution: float = 64.0,
                     result: CapacityResult | None = None, n_angles: int = 3,
                     weight: str = "h") -> dict:
    """Reduction of h on K at the puncture, from probes deep toward it.

    Probes sit at t = 4, 8, 16 times the top of K (capped by the mesh for
    finite element kernels); G(x, y) tends to h(y) there with an error
    decaying like exp(-(t_x - t_y)), so the deepest value is reported and the
    spread across depths is kept as the extrapolation error.
    """
    if isinstance(K, CompactSetSpec):
        if K.is_empty:
            return {"value": 0.0, "capacity": 0.0, "gap": 0.0, "probes": []}
        if not K.is_bounded:
            raise GeometryError("set is not bounded away from the puncture")
        t_top = K.t_max
    else:
        t_top = float(np.max(K.t)) if len(K) else 0.0
    if result is None:
        result = equilibrium_capacity(K, kind, resolution, probes=0, weight=weight)
    if result.equilibrium.total == 0:
        return {"value": 0.0, "capacity": result.capacity, "gap": 0.0, "probes": []}
    depths = [4.0, 8.0, 16.0]
    ceiling = getattr(getattr(kind, "table", None), "mesh", None)
    rows = []
    for f in depths:
        tp = f * t_top
        if ceiling is not None:
            tp = min(tp, 0.98 * ceiling.t_ceiling)
        th = np.arange(n_angles) * TWO_PI / n_angles + 0.1
        u = potential_eval(result.equilibrium, (np.full(n_angles, tp), th), kind, weight)
        rows.append((tp, float(np.mean(u))))
    value = rows[-1][1]
    spread = max(abs(r[1] - value) for r in rows)
    # with h = 1 the target is not the capacity but sum m_j h(y_j)
    cap = result.capacity
    return {"value": value, "capacity": cap,
            "gap": abs(value - cap) / cap if weight == "h" and cap > 0 else None,
            "extrapolation_spread": spread, "probes": rows}


# ---------------------------------------------------------------------------
# obstacle route
# ---------------------------------------------------------------------------


def _pdas(A, b_free, fixed_vals, cons, obstacle, max_iter=50):
    """min x^T A x - 2 b.x subject to x[cons] >= obstacle (primal-dual active set).

    ``A`` is the reduced SPD matrix, ``cons`` the constrained unknowns.
    Returns (x, active mask over cons, iterations).
    """
    n = A.shape[0]
    active = np.ones(len(cons), dtype=bool)
    x = np.zeros(n)
    for it in range(1, max_iter + 1):
        fix = cons[active]
        free = np.setdiff1d(np.arange(n), fix)
        x = np.zeros(n)
        x[fix] = obstacle[active]
        rhs = b_free[free] - A[free][:, fix] @ x[fix]
        x[free] = spla.spsolve(A[free][:, free].tocsc(), rhs)
        lam = A @ x - b_free
        lam_c = lam[cons]
        new_active = (lam_c > 1e-12 * max(1.0, np.abs(lam_c).max())) & active
        new_active |= (x[cons] < obstacle - 1e-12 * np.abs(obstacle).max()) & ~active
        if np.array_equal(new_active, active):
            return x, active, it
        active = new_active
    raise CapacityError("active set iteration did not settle")


def obstacle_capacity(K: CompactSetSpec, fld: CoefficientField | None = None,
                      mesh: elliptic.Mesh | None = None, n_theta: int = 128,
                      t_ceiling: float | None = None, h_fine: float | None = None,
                      table: elliptic.DiscreteGreenTable | None = None) -> CapacityResult:
    """Minimal Dirichlet energy over phi >= h on K, divided by 2 pi."""
    t0 = time.perf_counter()
    fld = fld or identity_field()
    if K.is_empty:
        return CapacityResult(0.0, math.inf, DiscreteMeasure.empty(), "ObstacleFEM",
                              {}, {"empty": True}, potential=None)
    if not K.is_bounded:
        raise GeometryError("obstacle route needs a set bounded away from the puncture")
    if mesh is None:
        if t_ceiling is None:
            t_ceiling = max(2.0 * K.t_max, K.t_max + 6.0)
        mesh = build_mesh(K, t_ceiling, n_theta=n_theta, h_fine=h_fine)
    if table is None or table.mesh is not mesh:
        table = elliptic.DiscreteGreenTable(fld, mesh)
    on_k = mesh.nodes_in(K, tol=1e-9 * max(1.0, K.t_max))
    if len(on_k) == 0:
        raise MeshError("mesh has no vertices on the set")
    for idx, p in enumerate(K.primitives):
        if not np.any(p.contains(mesh.vertex_t[on_k], mesh.vertex_theta[on_k],
                                 tol=1e-9 * max(1.0, K.t_max))):
            raise MeshError(f"primitive {idx} carries no mesh vertex")
    P, _ = elliptic.merged_prolongation(mesh, mesh.outer, merge_inner=True)
    A = (P.T @ table.form.matrix @ P).tocsr()
    # reduced index of each vertex on K (none of them is on the outer or top row)
    col = np.asarray(P.tocsc().argmax(axis=1)).ravel()
    cons = np.unique(col[on_k])
    h_red = np.zeros(A.shape[0])
    h_red[col] = table.h_nodes
    x, active, iters = _pdas(A, np.zeros(A.shape[0]), None, cons, h_red[cons])
    energy = float(x @ (A @ x))
    cap = energy / TWO_PI
    u = P @ x
    # multipliers as the discrete equilibrium measure (flux of u into K)
    lam = (A @ x)[cons] / TWO_PI
    lam = np.clip(lam, 0.0, None)
    first = {}
    for k, c in enumerate(col[on_k]):
        first.setdefault(c, on_k[k])
    nodes = np.array([first[c] for c in cons])
    h_nodes = table.h_nodes[nodes]
    # the mass of the equilibrium measure at a node is flux times h there
    masses = lam * h_nodes
    mu = DiscreteMeasure(mesh.vertex_t[nodes], mesh.vertex_theta[nodes], masses)
    Au = table.form.matrix @ u
    interior = np.ones(mesh.n_nodes, dtype=bool)
    interior[mesh.outer] = False
    interior[mesh.inner] = False
    interior[on_k] = False
    diag = {"pdas_iterations": iters, "active_fraction": float(active.mean()),
            "min_residual": float(Au[~np.isin(np.arange(mesh.n_nodes), mesh.outer)].min()),
            "max_offset_residual": float(np.abs(Au[interior]).max()),
            "flux_capacity": float(lam @ h_red[cons]),
            "seconds": time.perf_counter() - t0}
    res_meta = {"n_theta": mesh.n_theta, "n_t": len(mesh.t_grid),
                "t_ceiling": mesh.t_ceiling}
    return CapacityResult(cap, 1.0 / cap if cap > 0 else math.inf, mu, "ObstacleFEM",
                          res_meta, diag, potential=u)
