"""Divergence-form operators on the log-polar cylinder.

The map x = e^-t (cos theta, sin theta) is conformal, so the Dirichlet
energy of a field a_ij transforms into the same energy on the cylinder with
the coefficient rotated into the local (e_t, e_theta) frame; no metric
factor survives.  Meshes are structured: a graded t-grid times a periodic
theta-grid, each quad cut into two right triangles, P1 elements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import TWO_PI, CompactSetSpec, LogPolarPoint, RadialSegment, wrap_angle


class EllipticityError(ValueError):
    pass


class MeshError(ValueError):
    pass


# ---------------------------------------------------------------------------
# coefficient fields
# ---------------------------------------------------------------------------


def _rot(alpha):
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[c, -s], [s, c]])


@dataclass
class CoefficientField:
    """Cartesian matrix field a_ij(x) given in log-polar arguments.

    ``eval(t, theta)`` returns an array of shape (..., 2, 2).
    """

    eval: Callable
    lam: float
    description: str
    params: dict = field(default_factory=dict)

    def cylinder_coeffs(self, t, theta):
        """Coefficients seen by the (t, theta) energy: Q^T a Q, Q = [e_t, e_theta]."""
        a = self.eval(np.asarray(t, float), np.asarray(theta, float))
        c, s = np.cos(theta), np.sin(theta)
        q = np.empty(np.shape(theta) + (2, 2))
        q[..., 0, 0], q[..., 1, 0] = -c, -s
        q[..., 0, 1], q[..., 1, 1] = -s, c
        return np.einsum("...ki,...kl,...lj->...ij", q, a, q)

    @property
    def is_identity(self) -> bool:
        return self.params.get("kind") == "identity"

    def to_json(self):
        return dict(self.params)


def identity_field() -> CoefficientField:
    def ev(t, theta):
        out = np.zeros(np.shape(t) + (2, 2))
        out[..., 0, 0] = out[..., 1, 1] = 1.0
        return out

    return CoefficientField(ev, 1.0, "identity", {"kind": "identity"})


def diag_field(d1: float, d2: float) -> CoefficientField:
    m = np.diag([float(d1), float(d2)])
    lam = max(d1, d2, 1 / d1, 1 / d2)
    return CoefficientField(lambda t, th: np.broadcast_to(m, np.shape(t) + (2, 2)).copy(),
                            lam, f"diag({d1}, {d2})", {"kind": "diag", "d1": d1, "d2": d2})


def rotated_diag_field(d: float, angle: float) -> CoefficientField:
    """R(angle) diag(d, 1/d) R(angle)^T; ellipticity constant max(d, 1/d)."""
    r = _rot(angle)
    m = r @ np.diag([d, 1.0 / d]) @ r.T
    return CoefficientField(lambda t, th: np.broadcast_to(m, np.shape(t) + (2, 2)).copy(),
                            max(d, 1 / d), f"rotated_diag({d}, {angle})",
                            {"kind": "rotated_diag", "d": d, "angle": angle})


def checkerboard_field(k1: float, k2: float, cell: float = 1.0) -> CoefficientField:
    """Isotropic k1/k2 alternating on cells of side ``cell`` in (t, theta)."""
    def ev(t, th):
        parity = (np.floor(t / cell) + np.floor(np.mod(th, TWO_PI) / cell)) % 2
        k = np.where(parity == 0, k1, k2)
        out = np.zeros(np.shape(t) + (2, 2))
        out[..., 0, 0] = out[..., 1, 1] = k
        return out

    lam = max(k1, k2, 1 / k1, 1 / k2)
    return CoefficientField(ev, lam, f"checkerboard({k1}, {k2}, {cell})",
                            {"kind": "checkerboard", "k1": k1, "k2": k2, "cell": cell})


FIELD_REGISTRY: dict[str, Callable[..., CoefficientField]] = {
    "identity": identity_field,
    "diag": diag_field,
    "rotated_diag": rotated_diag_field,
    "checkerboard": checkerboard_field,
}


def field_from_json(d: dict) -> CoefficientField:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in FIELD_REGISTRY:
        raise EllipticityError(f"unknown coefficient field kind {kind!r}")
    return FIELD_REGISTRY[kind](**d)


def validate_ellipticity(fld: CoefficientField, n_samples: int = 1000, seed: int = 0,
                         t_max: float = 20.0):
    """Sample points and directions; return (ok, measured lambda).

    The measured lambda is the smallest constant satisfying the two-sided
    bound at every sample.  Raises on an asymmetric sample.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    t = rng.uniform(1e-3, t_max, n_samples)
    th = rng.uniform(0, TWO_PI, n_samples)
    a = fld.eval(t, th)
    if not np.allclose(a, np.swapaxes(a, -1, -2), rtol=0, atol=1e-12):
        raise EllipticityError(f"{fld.description}: a_ij is not symmetric")
    ev = np.linalg.eigvalsh(a)
    if np.any(ev[..., 0] <= 0):
        raise EllipticityError(f"{fld.description}: not positive definite")
    lam = float(max(ev[..., 1].max(), (1.0 / ev[..., 0]).max()))
    # random directions as an independent look at the quadratic form
    xi = rng.normal(size=(n_samples, 2))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    q = np.einsum("ni,nij,nj->n", xi, a, xi)
    lam = max(lam, float(q.max()), float((1 / q).max()))
    return lam <= fld.lam + 1e-9, lam


# ---------------------------------------------------------------------------
# meshes
# ---------------------------------------------------------------------------


@dataclass
class Mesh:
    """Structured triangulation of [0, t_ceiling] x S^1.

    Vertex (i, j) sits at (t_grid[i], theta0 + j * 2 pi / n_theta) and has
    index i * n_theta + j.  Row 0 is the unit circle, the last row the
    truncation circle.
    """

    t_grid: np.ndarray
    n_theta: int
    theta0: float = 0.0
    triangles: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        if np.any(np.diff(self.t_grid) <= 0):
            raise MeshError("t_grid must be strictly increasing")
        nt, nth = len(self.t_grid), self.n_theta
        i, j = np.meshgrid(np.arange(nt - 1), np.arange(nth), indexing="ij")
        i, j = i.ravel(), j.ravel()
        jp = (j + 1) % nth
        v00, v10 = i * nth + j, (i + 1) * nth + j
        v01, v11 = i * nth + jp, (i + 1) * nth + jp
        self.triangles = np.concatenate([np.stack([v00, v10, v11], 1),
                                         np.stack([v00, v11, v01], 1)])

    @property
    def dtheta(self) -> float:
        return TWO_PI / self.n_theta

    @property
    def theta_grid(self) -> np.ndarray:
        return (self.theta0 + self.dtheta * np.arange(self.n_theta)) % TWO_PI

    @property
    def t_ceiling(self) -> float:
        return float(self.t_grid[-1])

    @property
    def t_floor(self) -> float:
        return float(self.t_grid[0])

    @property
    def n_nodes(self) -> int:
        return len(self.t_grid) * self.n_theta

    @property
    def vertex_t(self) -> np.ndarray:
        return np.repeat(self.t_grid, self.n_theta)

    @property
    def vertex_theta(self) -> np.ndarray:
        return np.tile(self.theta_grid, len(self.t_grid))

    @property
    def outer(self) -> np.ndarray:
        return np.arange(self.n_theta)

    @property
    def inner(self) -> np.ndarray:
        return np.arange(self.n_nodes - self.n_theta, self.n_nodes)

    def triangle_coords(self):
        """(n_tri, 3, 2) vertex coordinates with theta unwrapped per triangle."""
        tv = self.vertex_t[self.triangles]
        jv = self.triangles % self.n_theta
        th = jv * self.dtheta
        # a triangle touching the seam has j = n-1 and j = 0 together
        seam = (jv.max(axis=1) == self.n_theta - 1) & (jv.min(axis=1) == 0)
        th[seam] = np.where(jv[seam] == 0, TWO_PI, th[seam])
        return np.stack([tv, th + self.theta0], axis=-1)

    def min_angle(self) -> float:
        c = self.triangle_coords()
        ang = []
        for k in range(3):
            a, b, d = c[:, k], c[:, (k + 1) % 3], c[:, (k + 2) % 3]
            u, v = b - a, d - a
            cosv = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            ang.append(np.degrees(np.arccos(np.clip(cosv, -1, 1))))
        return float(np.min(ang))

    def nodes_in(self, spec: CompactSetSpec, tol: float | None = None) -> np.ndarray:
        """Indices of mesh vertices lying on the set (within ``tol``)."""
        if tol is None:
            tol = 1e-9
        mask = np.zeros(self.n_nodes, dtype=bool)
        vt, vth = self.vertex_t, self.vertex_theta
        for p in spec.primitives:
            mask |= p.contains(vt, vth, tol=tol)
        return np.flatnonzero(mask)

    def locate(self, t, theta):
        """Containing triangle vertices and barycentric weights for each point."""
        t = np.atleast_1d(np.asarray(t, float))
        theta = np.atleast_1d(np.asarray(theta, float))
        if np.any(t < self.t_floor) or np.any(t > self.t_ceiling):
            raise MeshError("point outside the mesh")
        i = np.clip(np.searchsorted(self.t_grid, t, side="right") - 1, 0, len(self.t_grid) - 2)
        s = (t - self.t_grid[i]) / (self.t_grid[i + 1] - self.t_grid[i])
        x = ((theta - self.theta0) % TWO_PI) / self.dtheta
        j = np.minimum(np.floor(x).astype(int), self.n_theta - 1)
        r = x - j
        jp = (j + 1) % self.n_theta
        nth = self.n_theta
        v00, v10, v01, v11 = i * nth + j, (i + 1) * nth + j, i * nth + jp, (i + 1) * nth + jp
        # lower-left triangle (v00, v10, v11) holds points with r <= s
        low = r <= s
        verts = np.where(low[:, None], np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1))
        w = np.where(low[:, None], np.stack([1 - s, s - r, r], 1), np.stack([1 - r, s, r - s], 1))
        return verts, w


def graded_grid(breaks, fine_zones, t_ceiling, h_fine, h_max, growth=1.25):
    """t-grid through every break point; spacing h_fine inside the zones,
    growing geometrically away from them up to h_max."""
    breaks = sorted(set([0.0, float(t_ceiling)] + [float(b) for b in breaks
                                                   if 0 < b < t_ceiling]))

    def spacing(t):
        d = np.full(np.shape(t), math.inf)
        for lo, hi in fine_zones:
            d = np.minimum(d, np.maximum(np.maximum(lo - t, t - hi), 0.0))
        # geometric growth away from the zones: h(d) = h_fine + (growth - 1) d
        return np.minimum(h_max, h_fine + (growth - 1.0) * d)

    # equidistribute: N = ceil(int dt / spacing) steps, none longer than the
    # local spacing and, for N >= 2, none shorter than half of it
    pts = [breaks[0]]
    for a, b in zip(breaks[:-1], breaks[1:]):
        m = int(min(200_000, max(200, 8 * (b - a) / h_fine)))
        xs = np.linspace(a, b, m)
        dens = 1.0 / spacing(xs)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(xs))])
        n = max(1, math.ceil(cum[-1] - 1e-9))
        if n > 1:
            pts.extend(np.interp(cum[-1] * np.arange(1, n) / n, cum, xs))
        pts.append(b)
    return np.array(pts)


def build_mesh(K: CompactSetSpec | None, t_ceiling: float, n_theta: int = 64,
               h_fine: float | None = None, growth: float = 1.25,
               extra_levels=(), theta0: float | None = None) -> Mesh:
    """Mesh resolving K's levels and, if there is one, a radial line of K."""
    dth = TWO_PI / n_theta
    if h_fine is None:
        h_fine = dth
    h_max = 3.0 * dth
    h_fine = min(max(h_fine, dth / 1.9), h_max)
    breaks = list(extra_levels)
    zones = []
    if K is not None:
        for p in K.primitives:
            lo, hi = p.t_range
            if hi > t_ceiling:
                raise MeshError("t_ceiling must lie beyond the set")
            breaks += [lo, hi]
            zones.append((lo, hi))
            if isinstance(p, RadialSegment) and p.is_micro:
                raise MeshError("mesh cannot resolve a micro segment; use the energy route")
        if theta0 is None:
            radial = [p.theta for p in K.primitives if isinstance(p, RadialSegment)]
            theta0 = radial[0] if radial else 0.0
    grid = graded_grid(breaks, zones, t_ceiling, h_fine, h_max, growth)
    gaps = np.diff(grid)
    if gaps.min() < dth / 3.8:
        raise MeshError(f"levels {gaps.min():.3g} apart need a finer theta grid")
    return Mesh(grid, n_theta, theta0 or 0.0)


# ---------------------------------------------------------------------------
# energy form
# ---------------------------------------------------------------------------


@dataclass
class DirichletForm:
    """Sparse matrix of L(phi) = int a_ij phi_i phi_j on all mesh vertices.

    Dirichlet conditions are imposed by the solvers, not baked in.
    """

    matrix: sp.csr_matrix
    mesh: Mesh
    field: CoefficientField

    def energy(self, u) -> float:
        u = np.asarray(u, float)
        return float(u @ (self.matrix @ u))


def assemble(fld: CoefficientField, mesh: Mesh) -> DirichletForm:
    if mesh.min_angle() < 15.0 - 1e-9:
        raise MeshError(f"degenerate mesh: min angle {mesh.min_angle():.2f} deg")
    c = mesh.triangle_coords()
    e1, e2 = c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    area = 0.5 * np.abs(det)
    # rows of inv([e1 e2]) are grad(lambda_1), grad(lambda_2)
    inv = np.empty((len(c), 2, 2))
    inv[:, 0, 0], inv[:, 0, 1] = e2[:, 1] / det, -e2[:, 0] / det
    inv[:, 1, 0], inv[:, 1, 1] = -e1[:, 1] / det, e1[:, 0] / det
    grads = np.empty((len(c), 3, 2))
    grads[:, 1:] = inv
    grads[:, 0] = -inv[:, 0] - inv[:, 1]
    mid = c.mean(axis=1)
    coef = fld.cylinder_coeffs(mid[:, 0], mid[:, 1])
    ke = np.einsum("nid,nde,nje->nij", grads, coef, grads) * area[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    mat = sp.csr_matrix((ke.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes))
    mat = 0.5 * (mat + mat.T)
    return DirichletForm(mat.tocsr(), mesh, fld)


def merged_prolongation(mesh: Mesh, dirichlet: np.ndarray, merge_inner: bool = True):
    """Map reduced unknowns to mesh vertices.

    Dirichlet vertices are dropped; with ``merge_inner`` the truncation row
    becomes one shared unknown (the last column), standing in for the
    puncture.  Returns (P, free_index) with P of shape (n_nodes, n_red).
    """
    n = mesh.n_nodes
    fixed = np.zeros(n, dtype=bool)
    fixed[dirichlet] = True
    inner = np.zeros(n, dtype=bool)
    if merge_inner:
        inner[mesh.inner] = True
        fixed &= ~inner
    free = np.flatnonzero(~fixed & ~inner)
    col = np.full(n, -1)
    col[free] = np.arange(len(free))
    n_red = len(free) + (1 if merge_inner else 0)
    if merge_inner:
        col[inner] = n_red - 1
    rows = np.flatnonzero(col >= 0)
    P = sp.csr_matrix((np.ones(len(rows)), (rows, col[rows])), shape=(n, n_red))
    return P, free


class DiscreteGreenTable:
    """Factorised finite element Green function for one field and mesh.

    The truncation row is one unknown carrying the pole at the puncture, so
    ``h`` is the discrete Green function with pole there and every
    ``green(., y)`` tends to a constant toward it, as on the full disk.
    Loads are scaled by 2 pi to match the log normalisation of the
    Laplacian kernel.
    """

    def __init__(self, fld: CoefficientField, mesh: Mesh):
        self.field = fld
        self.mesh = mesh
        self.form = assemble(fld, mesh)
        self.P, _ = merged_prolongation(mesh, mesh.outer, merge_inner=True)
        ared = (self.P.T @ self.form.matrix @ self.P).tocsc()
        self._lu = spla.splu(ared)
        load = np.zeros(ared.shape[0])
        load[-1] = TWO_PI
        self.h_nodes = self.P @ self._lu.solve(load)
        self._cache: dict = {}

    @property
    def resolution(self):
        return {"n_theta": self.mesh.n_theta, "n_t": len(self.mesh.t_grid), "order": 1}

    def _interp(self, values, t, theta):
        verts, w = self.mesh.locate(t, theta)
        return np.einsum("ni,ni->n", values[verts], w)

    def h(self, t, theta):
        t = np.asarray(t, float)
        theta = np.broadcast_to(np.asarray(theta, float), t.shape)
        return self._interp(self.h_nodes, t.ravel(), theta.ravel()).reshape(t.shape)

    def solve_pole(self, t, theta):
        key = (float(t), float(theta) % TWO_PI)
        if key not in self._cache:
            if not (self.mesh.t_floor < t < self.mesh.t_ceiling):
                raise MeshError("pole must be strictly inside the mesh")
            verts, w = self.mesh.locate(t, theta)
            f = np.zeros(self.mesh.n_nodes)
            np.add.at(f, verts[0], TWO_PI * w[0])
            self._cache[key] = self.P @ self._lu.solve(self.P.T @ f)
        return self._cache[key]

    def green(self, t1, th1, t2, th2):
        t1, th1, t2, th2 = np.broadcast_arrays(*(np.asarray(v, float) for v in (t1, th1, t2, th2)))
        out = np.empty(t1.shape)
        flat = [v.ravel() for v in (t1, th1, t2, th2)]
        res = out.reshape(-1)
        poles = {}
        for k, (a, b) in enumerate(zip(flat[2], flat[3])):
            poles.setdefault((float(a), float(b)), []).append(k)
        for (a, b), idx in poles.items():
            u = self.solve_pole(a, b)
            idx = np.array(idx)
            res[idx] = self._interp(u, flat[0][idx], flat[1][idx])
        return out


def discrete_green(fld: CoefficientField, mesh: Mesh, pole: LogPolarPoint) -> np.ndarray:
    """Vertex values of the discrete Green function with the given pole."""
    return DiscreteGreenTable(fld, mesh).solve_pole(pole.t, pole.theta)
