"""Log-polar geometry on the punctured unit disk.

A point x of D = {0 < |x| < 1} is stored as (t, theta) with t = -log|x|.
The map is conformal onto the half cylinder (0, inf) x S^1, the puncture
sits at t = +inf, and the unit circle at t = 0.  Every length and area
below is measured in the flat cylinder metric dt^2 + dtheta^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

TWO_PI = 2.0 * math.pi
# Cartesian output is refused beyond this depth: exp(-t) stops being useful.
CARTESIAN_T_LIMIT = 30.0
# A radial segment whose t-length is below this is kept in log form.
MICRO_LOG_LENGTH = -20.0


class GeometryError(ValueError):
    """Invalid point, primitive or parameter."""


@dataclass(frozen=True)
class LogPolarPoint:
    t: float
    theta: float

    def __post_init__(self):
        if not (self.t > 0.0) or math.isnan(self.t):
            raise GeometryError(f"t must be positive, got {self.t}")
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)

    def to_cartesian(self) -> tuple[float, float]:
        if self.t > CARTESIAN_T_LIMIT:
            raise GeometryError(f"t={self.t} too deep for Cartesian output")
        r = math.exp(-self.t)
        return r * math.cos(self.theta), r * math.sin(self.theta)


def to_logpolar(x: float, y: float) -> LogPolarPoint:
    r = math.hypot(x, y)
    if r == 0.0 or r >= 1.0:
        raise GeometryError(f"point ({x}, {y}) is not in the punctured disk")
    return LogPolarPoint(-math.log(r), math.atan2(y, x) % TWO_PI)


def wrap_angle(d):
    """Map angle differences to [-pi, pi)."""
    return (np.asarray(d) + math.pi) % TWO_PI - math.pi


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RadialSegment:
    """{theta} x [t_lo, t_hi].  ``t_hi`` may be inf (a ray toward the puncture).

    If ``log_length`` is given the segment is [t_hi - exp(log_length), t_hi];
    this keeps segments far shorter than the float spacing at t_hi exact.
    """

    t_lo: float
    t_hi: float
    theta: float
    log_length: float | None = None
    kind: str = field(default="radial_segment", init=False)

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)
        if self.log_length is not None:
            if not math.isfinite(self.t_hi):
                raise GeometryError("log-length segments need a finite t_hi")
            if self.log_length > math.log(self.t_hi):
                raise GeometryError("segment would cross the unit circle")
            object.__setattr__(
                self, "t_lo", self.t_hi - math.exp(self.log_length))
        if not (0.0 < self.t_lo <= self.t_hi):
            raise GeometryError(f"bad radial segment [{self.t_lo}, {self.t_hi}]")

    @property
    def is_micro(self) -> bool:
        return self.log_length is not None and self.log_length < MICRO_LOG_LENGTH

    @property
    def length(self) -> float:
        if self.log_length is not None:
            return math.exp(self.log_length)
        return self.t_hi - self.t_lo

    @property
    def t_range(self) -> tuple[float, float]:
        return self.t_lo, self.t_hi

    def contains(self, t, theta, tol=1e-12):
        t = np.asarray(t, dtype=float)
        dth = np.abs(wrap_angle(np.asarray(theta) - self.theta))
        return (dth <= tol) & (t >= self.t_lo - tol) & (t <= self.t_hi + tol)

    def clip(self, lo: float, hi: float):
        if self.is_micro:
            # a micro segment lies just below its top; a top sitting on the
            # lower level leaves only a point in [lo, hi]
            return self if lo < self.t_hi <= hi else None
        if self.log_length is not None:
            if lo <= self.t_lo and self.t_hi <= hi:
                return self
            if self.t_hi < lo or self.t_lo > hi:
                return None
        a, b = max(self.t_lo, lo), min(self.t_hi, hi)
        # touching a level in a single point leaves a null set
        if a > b or (a == b and self.t_lo < self.t_hi):
            return None
        return RadialSegment(a, b, self.theta)

    def to_json(self):
        d = {"kind": self.kind, "t_lo": self.t_lo, "t_hi": _inf_out(self.t_hi),
             "theta": self.theta}
        if self.log_length is not None:
            d["log_length"] = self.log_length
        return d


@dataclass(frozen=True)
class Arc:
    """{t} x [theta_lo, theta_hi]; a span of 2*pi or more is the full circle."""

    t: float
    theta_lo: float
    theta_hi: float
    kind: str = field(default="arc", init=False)

    def __post_init__(self):
        if not self.t > 0:
            raise GeometryError("arc must lie in t > 0")
        if self.theta_hi < self.theta_lo:
            raise GeometryError("theta_hi < theta_lo")
        if self.theta_hi - self.theta_lo >= TWO_PI:
            object.__setattr__(self, "theta_hi", self.theta_lo + TWO_PI)

    @property
    def is_circle(self) -> bool:
        return self.theta_hi - self.theta_lo >= TWO_PI - 1e-15

    @property
    def length(self) -> float:
        return self.theta_hi - self.theta_lo

    @property
    def t_range(self):
        return self.t, self.t

    def contains(self, t, theta, tol=1e-12):
        t = np.asarray(t, dtype=float)
        on_level = np.abs(t - self.t) <= tol
        if self.is_circle:
            return on_level
        rel = (np.asarray(theta) - self.theta_lo) % TWO_PI
        inside = (rel <= self.length + tol) | (rel >= TWO_PI - tol)
        return on_level & inside

    def clip(self, lo, hi):
        return self if lo <= self.t <= hi else None

    def to_json(self):
        return {"kind": self.kind, "t": self.t, "theta_lo": self.theta_lo,
                "theta_hi": self.theta_hi}


@dataclass(frozen=True)
class Disk:
    """Closed disk of the cylinder metric, optionally cut to t in [cut_lo, cut_hi]."""

    center: LogPolarPoint
    radius: float
    cut_lo: float = 0.0
    cut_hi: float = math.inf
    kind: str = field(default="disk", init=False)

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError("disk radius must be positive")
        if self.radius >= math.pi:
            raise GeometryError("disk radius must be below pi (it would wrap)")
        if self.center.t - self.radius <= 0:
            raise GeometryError("disk touches the unit circle")

    @property
    def t_range(self):
        return (max(self.center.t - self.radius, self.cut_lo),
                min(self.center.t + self.radius, self.cut_hi))

    @property
    def length(self) -> float:
        # cylinder area; exact when uncut
        lo, hi = self.t_range
        if lo <= self.center.t - self.radius and hi >= self.center.t + self.radius:
            return math.pi * self.radius ** 2
        return _cut_disk_area(self.radius, lo - self.center.t, hi - self.center.t)

    def contains(self, t, theta, tol=1e-12):
        t = np.asarray(t, dtype=float)
        dth = wrap_angle(np.asarray(theta) - self.center.theta)
        inside = (t - self.center.t) ** 2 + dth ** 2 <= (self.radius + tol) ** 2
        return inside & (t >= self.cut_lo - tol) & (t <= self.cut_hi + tol)

    def clip(self, lo, hi):
        a, b = self.t_range
        a2, b2 = max(a, lo), min(b, hi)
        if a2 > b2:
            return None
        return Disk(self.center, self.radius, max(self.cut_lo, lo), min(self.cut_hi, hi))

    def to_json(self):
        d = {"kind": self.kind, "center": [self.center.t, self.center.theta],
             "radius": self.radius}
        if self.cut_lo > 0:
            d["cut_lo"] = self.cut_lo
        if math.isfinite(self.cut_hi):
            d["cut_hi"] = self.cut_hi
        return d


@dataclass(frozen=True)
class AnnulusBand:
    """[t_lo, t_hi] x [theta_lo, theta_hi]; full band when the span is 2*pi."""

    t_lo: float
    t_hi: float
    theta_lo: float = 0.0
    theta_hi: float = TWO_PI
    kind: str = field(default="annulus_band", init=False)

    def __post_init__(self):
        if not (0 < self.t_lo <= self.t_hi):
            raise GeometryError(f"bad band t-range [{self.t_lo}, {self.t_hi}]")
        if self.theta_hi < self.theta_lo:
            raise GeometryError("theta_hi < theta_lo")
        if self.theta_hi - self.theta_lo >= TWO_PI:
            object.__setattr__(self, "theta_hi", self.theta_lo + TWO_PI)

    @property
    def is_full(self) -> bool:
        return self.theta_hi - self.theta_lo >= TWO_PI - 1e-15

    @property
    def t_range(self):
        return self.t_lo, self.t_hi

    @property
    def length(self) -> float:
        return (self.t_hi - self.t_lo) * (self.theta_hi - self.theta_lo)

    def contains(self, t, theta, tol=1e-12):
        t = np.asarray(t, dtype=float)
        in_t = (t >= self.t_lo - tol) & (t <= self.t_hi + tol)
        if self.is_full:
            return in_t
        rel = (np.asarray(theta) - self.theta_lo) % TWO_PI
        return in_t & ((rel <= self.theta_hi - self.theta_lo + tol) | (rel >= TWO_PI - tol))

    def clip(self, lo, hi):
        a, b = max(self.t_lo, lo), min(self.t_hi, hi)
        if a > b:
            return None
        return AnnulusBand(a, b, self.theta_lo, self.theta_hi)

    def to_json(self):
        return {"kind": self.kind, "t_lo": self.t_lo, "t_hi": _inf_out(self.t_hi),
                "theta_lo": self.theta_lo, "theta_hi": self.theta_hi}


Primitive = Union[RadialSegment, Arc, Disk, AnnulusBand]


def _inf_out(x):
    return "inf" if math.isinf(x) else x


def _inf_in(x):
    return math.inf if x in ("inf", "Infinity", None) else float(x)


def _cut_disk_area(r, lo, hi):
    """Area of {s^2 + u^2 <= r^2, lo <= s <= hi}."""
    lo, hi = max(lo, -r), min(hi, r)
    if lo >= hi:
        return 0.0

    def F(s):
        return s * math.sqrt(max(r * r - s * s, 0.0)) + r * r * math.asin(s / r)

    return F(hi) - F(lo)


@dataclass(frozen=True)
class CompactSetSpec:
    """Finite union of primitives.  The empty union is allowed."""

    primitives: tuple = ()
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))

    @property
    def is_empty(self) -> bool:
        return len(self.primitives) == 0

    @property
    def t_min(self) -> float:
        return min((p.t_range[0] for p in self.primitives), default=math.inf)

    @property
    def t_max(self) -> float:
        return max((p.t_range[1] for p in self.primitives), default=0.0)

    @property
    def is_bounded(self) -> bool:
        return math.isfinite(self.t_max)

    @property
    def size(self) -> float:
        """Total t-metric length/area of the primitives (overlaps counted twice)."""
        return sum(p.length for p in self.primitives)

    def contains(self, t, theta, tol=1e-12):
        t = np.asarray(t, dtype=float)
        out = np.zeros(np.broadcast(t, np.asarray(theta)).shape, dtype=bool)
        for p in self.primitives:
            out |= p.contains(t, theta, tol)
        return out

    def clip(self, lo: float, hi: float, label: str | None = None) -> "CompactSetSpec":
        kept = [q for q in (p.clip(lo, hi) for p in self.primitives) if q is not None]
        return CompactSetSpec(tuple(kept), self.label if label is None else label)

    def union(self, other: "CompactSetSpec", label: str = "") -> "CompactSetSpec":
        return CompactSetSpec(self.primitives + other.primitives,
                              label or f"{self.label}+{other.label}")

    def to_json(self, a: float | None = None) -> dict:
        d = {"label": self.label, "primitives": [p.to_json() for p in self.primitives]}
        if a is not None:
            d["a"] = a
        return d


def primitive_from_json(d: dict) -> Primitive:
    kind = d.get("kind")
    try:
        if kind == "radial_segment":
            return RadialSegment(float(d.get("t_lo", 0.0) or 0.0) if "log_length" not in d
                                 else 1.0,
                                 _inf_in(d["t_hi"]), float(d["theta"]),
                                 d.get("log_length"))
        if kind == "arc":
            return Arc(float(d["t"]), float(d.get("theta_lo", 0.0)),
                       float(d.get("theta_hi", TWO_PI)))
        if kind == "disk":
            c = d["center"]
            if isinstance(c, dict):
                c = [c["t"], c["theta"]]
            return Disk(LogPolarPoint(float(c[0]), float(c[1])), float(d["radius"]),
                        float(d.get("cut_lo", 0.0)), _inf_in(d.get("cut_hi", "inf")))
        if kind == "annulus_band":
            return AnnulusBand(float(d["t_lo"]), _inf_in(d["t_hi"]),
                               float(d.get("theta_lo", 0.0)),
                               float(d.get("theta_hi", TWO_PI)))
    except KeyError as exc:
        raise GeometryError(f"{kind}: missing field {exc}") from None
    raise GeometryError(f"unknown primitive kind {kind!r}")


def spec_from_json(d: dict) -> tuple[CompactSetSpec, float | None]:
    """Parse the geometry schema; returns the set and the optional shell ratio."""
    if not isinstance(d, dict) or "primitives" not in d:
        raise GeometryError("geometry JSON needs a 'primitives' list")
    prims = tuple(primitive_from_json(p) for p in d["primitives"])
    a = d.get("a")
    return CompactSetSpec(prims, str(d.get("label", ""))), (None if a is None else float(a))


# ---------------------------------------------------------------------------
# shells
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShellDecomposition:
    a: float
    shells: dict
    n_range: tuple

    def shell(self, n: int) -> CompactSetSpec:
        return self.shells[n]

    def bounds(self, n: int) -> tuple[float, float]:
        return self.a ** n, self.a ** (n + 1)

    def __iter__(self):
        return iter(sorted(self.shells.items()))


def shell_decompose(omega_complement: CompactSetSpec, a: float,
                    n_min: int, n_max: int) -> ShellDecomposition:
    """Clip the set to t in [a^n, a^(n+1)] for n = n_min..n_max."""
    if not a > 1:
        raise GeometryError(f"shell ratio must exceed 1, got {a}")
    if n_min > n_max:
        raise GeometryError("n_min > n_max")
    shells = {}
    for n in range(n_min, n_max + 1):
        shells[n] = omega_complement.clip(a ** n, a ** (n + 1),
                                          label=f"{omega_complement.label}[E_{n}]")
    return ShellDecomposition(float(a), shells, (n_min, n_max))


# ---------------------------------------------------------------------------
# discretization
# ---------------------------------------------------------------------------

# panel kinds
CURVE = 0   # straight panel; (ext_t, ext_th) is its unit direction
CELL = 1    # rectangular area cell; (ext_t, ext_th) are its side lengths


@dataclass
class Discretization:
    """Midpoint panel layout of a compact set.

    Curve panels are straight in (t, theta); ``ext_t``/``ext_th`` hold their
    unit direction, or the side lengths for area cells.  For micro segments all
    nodes share the float t of the top end; ``log_panel`` holds the log of
    the true panel length and ``local_u`` the position along the segment in
    panel units, so near-diagonal distances can be rebuilt exactly.
    """

    t: np.ndarray
    theta: np.ndarray
    weights: np.ndarray
    source: np.ndarray
    kind: np.ndarray
    ext_t: np.ndarray
    ext_th: np.ndarray
    log_panel: np.ndarray
    local_u: np.ndarray
    micro: np.ndarray

    def __len__(self):
        return len(self.t)

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def nodes(self) -> list[LogPolarPoint]:
        return [LogPolarPoint(a, b) for a, b in zip(self.t, self.theta)]

    @classmethod
    def empty(cls) -> "Discretization":
        z = np.zeros(0)
        zi = np.zeros(0, dtype=int)
        return cls(z, z, z, zi, zi, z, z, z, z, np.zeros(0, dtype=bool))

    @classmethod
    def concat(cls, parts: Sequence["Discretization"]) -> "Discretization":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        names = ["t", "theta", "weights", "source", "kind", "ext_t", "ext_th",
                 "log_panel", "local_u", "micro"]
        return cls(**{k: np.concatenate([getattr(p, k) for p in parts]) for k in names})


def _layout(n, lo, hi):
    edges = np.linspace(lo, hi, n + 1)
    return 0.5 * (edges[:-1] + edges[1:]), np.diff(edges)


def _disc_segment(p: RadialSegment, res, idx, max_nodes):
    if not math.isfinite(p.t_hi):
        raise GeometryError("cannot discretize an unbounded radial segment; clip it first")
    if p.is_micro:
        n = int(max(4, min(max_nodes, 64)))
        u = (np.arange(n) + 0.5)  # panel units from the top end
        lp = p.log_length - math.log(n)
        t = np.full(n, p.t_hi)
        return Discretization(t, np.full(n, p.theta), np.full(n, math.exp(lp)),
                              np.full(n, idx), np.full(n, CURVE), np.full(n, 1.0),
                              np.zeros(n), np.full(n, lp), u, np.ones(n, dtype=bool))
    L = p.length
    n = int(min(max_nodes, max(2, math.ceil(L * res - 1e-9))))
    t, w = _layout(n, p.t_lo, p.t_hi)
    return Discretization(t, np.full(n, p.theta), w, np.full(n, idx), np.full(n, CURVE),
                          np.ones(n), np.zeros(n), np.log(w), np.arange(n) + 0.5,
                          np.zeros(n, dtype=bool))


def _disc_arc(p: Arc, res, idx, max_nodes):
    n = int(min(max_nodes, max(2, math.ceil(p.length * res - 1e-9))))
    th, w = _layout(n, p.theta_lo, p.theta_hi)
    return Discretization(np.full(n, p.t), th % TWO_PI, w, np.full(n, idx), np.full(n, CURVE),
                          np.zeros(n), np.ones(n), np.log(w), np.arange(n) + 0.5,
                          np.zeros(n, dtype=bool))


def _disc_band(p: AnnulusBand, res, idx, max_nodes):
    nt = max(1, math.ceil((p.t_hi - p.t_lo) * res - 1e-9))
    nth = max(2, math.ceil((p.theta_hi - p.theta_lo) * res - 1e-9))
    if nt * nth > max_nodes:
        f = math.sqrt(max_nodes / (nt * nth))
        nt, nth = max(1, int(nt * f)), max(2, int(nth * f))
    tc, dt = _layout(nt, p.t_lo, p.t_hi)
    thc, dth = _layout(nth, p.theta_lo, p.theta_hi)
    T, TH = np.meshgrid(tc, thc, indexing="ij")
    DT, DTH = np.meshgrid(dt, dth, indexing="ij")
    n = T.size
    w = (DT * DTH).ravel()
    return Discretization(T.ravel(), TH.ravel() % TWO_PI, w, np.full(n, idx), np.full(n, CELL),
                          DT.ravel(), DTH.ravel(), 0.5 * np.log(w), np.zeros(n),
                          np.zeros(n, dtype=bool))


def _disc_disk(p: Disk, res, idx, max_nodes):
    # polar rings around the centre; the ring-sector areas add up to pi r^2
    r = p.radius
    nr = max(1, math.ceil(r * res - 1e-9))
    while nr * nr * 4 > max_nodes and nr > 1:
        nr -= 1
    edges = np.linspace(0.0, r, nr + 1)
    ts, ths, ws, et, eth = [], [], [], [], []
    for i in range(nr):
        r0, r1 = edges[i], edges[i + 1]
        rm = 0.5 * (r0 + r1)
        m = max(1 if i == 0 else 3, math.ceil(TWO_PI * rm * res - 1e-9))
        if i == 0:
            m = 1
        ang = (np.arange(m) + 0.5) * TWO_PI / m
        area = math.pi * (r1 * r1 - r0 * r0) / m
        rc = 0.0 if i == 0 else rm
        ts.append(p.center.t + rc * np.cos(ang))
        ths.append(p.center.theta + rc * np.sin(ang))
        ws.append(np.full(m, area))
        side = math.sqrt(area)
        et.append(np.full(m, side))
        eth.append(np.full(m, side))
    t = np.concatenate(ts)
    th = np.concatenate(ths)
    w = np.concatenate(ws)
    keep = (t >= p.cut_lo) & (t <= p.cut_hi)
    n = int(keep.sum())
    return Discretization(t[keep], th[keep] % TWO_PI, w[keep], np.full(n, idx),
                          np.full(n, CELL), np.concatenate(et)[keep],
                          np.concatenate(eth)[keep], 0.5 * np.log(w[keep]), np.zeros(n),
                          np.zeros(n, dtype=bool))


def discretize(spec: CompactSetSpec, resolution: float, max_nodes: int = 4096,
               boundary: bool = False) -> Discretization:
    """Midpoint layout, ``resolution`` panels per unit of t-metric length.

    ``max_nodes`` caps each primitive.  With ``boundary=True`` area
    primitives are replaced by their boundary curves; the equilibrium
    measure of a compact set lives there, and the panel count stays small.
    """
    if not resolution > 0:
        raise GeometryError("resolution must be positive")
    parts = []
    for idx, p in enumerate(spec.primitives):
        if isinstance(p, RadialSegment):
            parts.append(_disc_segment(p, resolution, idx, max_nodes))
        elif isinstance(p, Arc):
            parts.append(_disc_arc(p, resolution, idx, max_nodes))
        elif boundary:
            parts.append(_disc_boundary(p, resolution, idx, max_nodes))
        elif isinstance(p, AnnulusBand):
            parts.append(_disc_band(p, resolution, idx, max_nodes))
        else:
            parts.append(_disc_disk(p, resolution, idx, max_nodes))
    disc = Discretization.concat(parts)
    if boundary and len(spec.primitives) > 1:
        disc = _drop_covered(spec, disc)
    return disc


def strictly_inside(p: Primitive, t, theta, margin: float = 1e-9):
    """Interior test for area primitives (curves have no interior)."""
    t = np.asarray(t, dtype=float)
    if isinstance(p, AnnulusBand):
        in_t = (t > p.t_lo + margin) & (t < p.t_hi - margin)
        if p.is_full:
            return in_t
        rel = (np.asarray(theta) - p.theta_lo) % TWO_PI
        return in_t & (rel > margin) & (rel < p.theta_hi - p.theta_lo - margin)
    if isinstance(p, Disk):
        dth = wrap_angle(np.asarray(theta) - p.center.theta)
        inside = np.hypot(t - p.center.t, dth) < p.radius - margin
        return inside & (t > p.cut_lo + margin) & (t < p.cut_hi - margin)
    return np.zeros(np.shape(t), dtype=bool)


def _drop_covered(spec: CompactSetSpec, disc: Discretization, tol: float = 1e-9):
    """Remove boundary nodes hidden inside another piece or repeating an
    earlier piece; both make the energy matrix singular."""
    keep = np.ones(len(disc), dtype=bool)
    for q_idx, q in enumerate(spec.primitives):
        other = disc.source != q_idx
        hidden = strictly_inside(q, disc.t, disc.theta, tol)
        repeat = (disc.source > q_idx) & np.asarray(q.contains(disc.t, disc.theta, tol=tol))
        keep &= ~(other & (hidden | repeat))
    if keep.all():
        return disc
    names = ["t", "theta", "weights", "source", "kind", "ext_t", "ext_th", "log_panel",
             "local_u", "micro"]
    return Discretization(*(getattr(disc, k)[keep] for k in names))


def boundary_curves(p: Primitive) -> list:
    """Curve primitives making up the boundary of an area primitive."""
    if isinstance(p, AnnulusBand):
        out = [Arc(p.t_lo, p.theta_lo, p.theta_hi)]
        if p.t_hi > p.t_lo:
            out.append(Arc(p.t_hi, p.theta_lo, p.theta_hi))
            if not p.is_full:
                out.append(RadialSegment(p.t_lo, p.t_hi, p.theta_lo))
                out.append(RadialSegment(p.t_lo, p.t_hi, p.theta_hi))
        return out
    return [p]


def _disc_boundary(p, res, idx, max_nodes):
    if isinstance(p, AnnulusBand):
        parts = []
        for q in boundary_curves(p):
            d = (_disc_arc(q, res, idx, max_nodes) if isinstance(q, Arc)
                 else _disc_segment(q, res, idx, max_nodes))
            parts.append(d)
        return Discretization.concat(parts)
    # disk: chord panels on its boundary circle, clipped to the cut window
    n = int(min(max_nodes, max(8, math.ceil(TWO_PI * p.radius * res - 1e-9))))
    ang = (np.arange(n) + 0.5) * TWO_PI / n
    t = p.center.t + p.radius * np.cos(ang)
    th = p.center.theta + p.radius * np.sin(ang)
    chord = 2 * p.radius * math.sin(math.pi / n)
    # tangent direction of each chord, stored through ext_t/ext_th
    dt, dth = -np.sin(ang), np.cos(ang)
    parts = [Discretization(t, th % TWO_PI, np.full(n, chord), np.full(n, idx),
                            np.full(n, CURVE), dt, dth, np.full(n, math.log(chord)),
                            np.arange(n) + 0.5, np.zeros(n, dtype=bool))]
    keep = (t >= p.cut_lo) & (t <= p.cut_hi)
    if p.cut_lo > p.center.t - p.radius:
        half = math.sqrt(max(p.radius ** 2 - (p.cut_lo - p.center.t) ** 2, 0.0))
        parts.append(_disc_arc(Arc(p.cut_lo, p.center.theta - half, p.center.theta + half),
                               res, idx, max_nodes))
    if p.cut_hi < p.center.t + p.radius:
        half = math.sqrt(max(p.radius ** 2 - (p.cut_hi - p.center.t) ** 2, 0.0))
        parts.append(_disc_arc(Arc(p.cut_hi, p.center.theta - half, p.center.theta + half),
                               res, idx, max_nodes))
    first = parts[0]
    parts[0] = Discretization(*(getattr(first, k)[keep] for k in
                                ["t", "theta", "weights", "source", "kind", "ext_t",
                                 "ext_th", "log_panel", "local_u", "micro"]))
    return Discretization.concat(parts)


def iter_levels(spec: CompactSetSpec) -> Iterable[float]:
    """t-levels where the set has a horizontal edge (used by meshers)."""
    for p in spec.primitives:
        lo, hi = p.t_range
        yield lo
        if math.isfinite(hi):
            yield hi
