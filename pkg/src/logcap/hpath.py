"""Monte Carlo for Brownian motion conditioned to die at the puncture.

In (t, theta) with h = t the h-transform of Brownian motion has drift
(1/t, 0) and unit diffusion: a three-dimensional Bessel process in t and a
free Brownian motion in theta.  Paths are advanced by Euler-Maruyama.

Hits are detected three ways:

* curves (radial segments, arcs): the Brownian-bridge crossing test
  between consecutive positions, which removes the bias of monitoring a
  thin set at discrete times;
* area primitives: the endpoint lies within ``tube`` of the set;
* segments far shorter than a step: exact local capture.  When a path
  comes within r of such a piece it is hit with the planar probability
  log(2r/rho) / log(8r/l) of reaching a segment of length l before the
  circle of radius 2r; otherwise it is moved to that circle.

Every path owns a Philox stream keyed by (seed, path index), so results do
not depend on batching.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (TWO_PI, AnnulusBand, Arc, CompactSetSpec, Disk, GeometryError,
                       LogPolarPoint, RadialSegment, wrap_angle)

BLOCK = 256          # steps of noise drawn per path at a time
MAX_STEP = 0.5


# ---------------------------------------------------------------------------
# geometry helpers
# ---------------------------------------------------------------------------


def _interval_gap(x, lo, hi):
    return np.maximum(np.maximum(lo - x, x - hi), 0.0)


def _arc_gap(theta, lo, hi):
    """Angular distance from theta to the arc [lo, hi] (0 inside)."""
    if hi - lo >= TWO_PI - 1e-12:
        return np.zeros_like(theta)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return np.maximum(np.abs(wrap_angle(theta - mid)) - half, 0.0)


def primitive_distance(p, t, theta):
    if isinstance(p, RadialSegment):
        return np.hypot(_interval_gap(t, p.t_lo, p.t_hi), np.abs(wrap_angle(theta - p.theta)))
    if isinstance(p, Arc):
        return np.hypot(t - p.t, _arc_gap(theta, p.theta_lo, p.theta_hi))
    if isinstance(p, AnnulusBand):
        return np.hypot(_interval_gap(t, p.t_lo, p.t_hi), _arc_gap(theta, p.theta_lo, p.theta_hi))
    if isinstance(p, Disk):
        d = np.hypot(t - p.center.t, wrap_angle(theta - p.center.theta)) - p.radius
        return np.maximum(d, _interval_gap(t, p.cut_lo, p.cut_hi))
    raise GeometryError(f"unsupported primitive {p!r}")


def _refine_distance(p, t, theta):
    """Distance driving step refinement.  Crossings of curves are caught by
    the bridge test, so only their endpoints need small steps."""
    if isinstance(p, RadialSegment):
        d_lo = np.hypot(t - p.t_lo, wrap_angle(theta - p.theta))
        if not math.isfinite(p.t_hi):
            return d_lo
        return np.minimum(d_lo, np.hypot(t - p.t_hi, wrap_angle(theta - p.theta)))
    if isinstance(p, Arc):
        if p.is_circle:
            return np.full(np.shape(t), np.inf)
        return np.minimum(np.hypot(t - p.t, wrap_angle(theta - p.theta_lo)),
                          np.hypot(t - p.t, wrap_angle(theta - p.theta_hi)))
    return primitive_distance(p, t, theta)


def _curve_crossing(p, t0, th0, t1, th1, dt, u):
    """Bridge test for a curve primitive; returns the hit mask."""
    if isinstance(p, RadialSegment):
        a0 = wrap_angle(th0 - p.theta)
        a1 = wrap_angle(th1 - p.theta)
        tx_lo, tx_hi = p.t_lo, p.t_hi
        along0, along1 = t0, t1
        crossed = (np.sign(a0) != np.sign(a1)) & (np.abs(a0) < 1.0) & (np.abs(a1) < 1.0)
        d0, d1 = np.abs(a0), np.abs(a1)
    else:
        a0, a1 = t0 - p.t, t1 - p.t
        along0, along1 = th0, th1
        crossed = np.sign(a0) != np.sign(a1)
        d0, d1 = np.abs(a0), np.abs(a1)
    # crossing position along the curve by linear interpolation
    w = np.where(d0 + d1 > 0, d0 / np.where(d0 + d1 > 0, d0 + d1, 1.0), 0.5)
    if isinstance(p, RadialSegment):
        pos = along0 + w * (along1 - along0)
        inside = (pos >= tx_lo) & (pos <= tx_hi)
    else:
        dth = wrap_angle(along1 - along0)
        pos = along0 + w * dth
        inside = _arc_gap(pos, p.theta_lo, p.theta_hi) == 0
    bridge = np.exp(-2.0 * d0 * d1 / np.maximum(dt, 1e-300))
    return inside & (crossed | (u < bridge))


@dataclass
class _Obstacle:
    prims: list
    shell_of: list
    micro: list
    capture_r: float


def _shell_index(t, a):
    if a is None:
        return -1
    return int(math.floor(math.log(t) / math.log(a) + 1e-12))


# ---------------------------------------------------------------------------
# core simulation
# ---------------------------------------------------------------------------


@dataclass
class _Batch:
    first_hit_step: np.ndarray
    first_hit_t: np.ndarray
    first_hit_shell: np.ndarray
    shell_hits: dict
    died: np.ndarray
    reached: np.ndarray
    steps: np.ndarray
    reentries: np.ndarray
    trajectories: list = field(default_factory=list)


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, index], dtype=np.uint64)))


def _simulate(t_start, th_start, K: CompactSetSpec, step, t_max, seed, path_ids, a=None,
              stop_on_hit=False, tube=0.0, reentry=True, record_every=0, max_steps=10**7,
              capture_r=None):
    n = len(t_start)
    t = np.array(t_start, float)
    th = np.array(th_start, float) % TWO_PI
    prims = list(K.primitives)
    micro = [isinstance(p, RadialSegment) and p.is_micro for p in prims]
    if capture_r is None:
        capture_r = 0.5 * math.sqrt(step)
    step_min = step / 100.0
    top = K.t_max if not K.is_empty else 0.0
    use_reentry = reentry and not K.is_empty and math.isfinite(top) and top < t_max
    if use_reentry:
        # the return law is exact from any level above the set, so stop early
        t_max = min(t_max, max(2.0 * top, top + 1.0))

    streams = [_stream(seed, int(i)) for i in path_ids]
    noise = np.zeros((n, BLOCK, 2))
    unif = np.zeros((n, BLOCK, len(prims) + 2))
    cursor = BLOCK

    first_step = np.full(n, -1)
    first_t = np.full(n, np.nan)
    first_shell = np.full(n, -1)
    shell_hits: dict = {}
    died = np.zeros(n, dtype=bool)
    reached = np.zeros(n, dtype=bool)
    steps = np.zeros(n, dtype=int)
    reentries = np.zeros(n, dtype=int)
    active = np.ones(n, dtype=bool)
    traj = [[(float(t[i]), float(th[i]))] for i in range(n)] if record_every else []

    it = 0
    while active.any() and it < max_steps:
        if cursor == BLOCK:
            for i in np.flatnonzero(active):
                noise[i] = streams[i].standard_normal((BLOCK, 2))
                unif[i] = streams[i].random((BLOCK, len(prims) + 2))
            cursor = 0
        idx = np.flatnonzero(active)
        tt, tth = t[idx], th[idx]
        # step size: shrink near the obstacle and near the unit circle
        if prims:
            dist = np.min([_refine_distance(p, tt, tth) for p in prims], axis=0)
        else:
            dist = np.full(len(idx), np.inf)
        dt = np.clip(np.minimum((dist / 5.0) ** 2, (tt / 4.0) ** 2), step_min, step)
        dt = np.minimum(dt, step)
        z = noise[idx, cursor]
        u = unif[idx, cursor]
        sq = np.sqrt(dt)
        tn = tt + dt / tt + sq * z[:, 0]
        thn = tth + sq * z[:, 1]
        it += 1
        cursor += 1
        steps[idx] += 1

        hit_here = np.zeros(len(idx), dtype=bool)
        hit_t = np.full(len(idx), np.nan)
        for k, p in enumerate(prims):
            if micro[k]:
                rho = np.hypot(tn - p.t_hi, wrap_angle(thn - p.theta))
                near = rho < capture_r
                if near.any():
                    lp = p.log_length
                    pr = np.log(2 * capture_r / np.maximum(rho[near], 1e-300)) / (
                        math.log(8 * capture_r) - lp)
                    got = u[near, k] < np.clip(pr, 0.0, 1.0)
                    sel = np.flatnonzero(near)
                    hit_here[sel[got]] = True
                    hit_t[sel[got]] = p.t_hi
                    # survivors leave to the circle of radius 2r around the piece
                    miss = sel[~got]
                    ang = TWO_PI * u[miss, -1]
                    tn[miss] = p.t_hi + 2 * capture_r * np.cos(ang)
                    thn[miss] = p.theta + 2 * capture_r * np.sin(ang)
                continue
            if isinstance(p, (RadialSegment, Arc)):
                got = _curve_crossing(p, tt, tth, tn, thn, dt, u[:, k])
            else:
                got = p.contains(tn, thn, tol=1e-12)
            if tube > 0:
                got |= primitive_distance(p, tn, thn) <= tube
            new = got & ~hit_here
            hit_here |= got
            hit_t[new] = np.clip(tn[new], *p.t_range) if math.isfinite(p.t_range[1]) else tn[new]

        for j in np.flatnonzero(hit_here):
            i = idx[j]
            s = _shell_index(hit_t[j], a)
            if first_step[i] < 0:
                first_step[i] = steps[i]
                first_t[i] = hit_t[j]
                first_shell[i] = s
            shell_hits.setdefault(s, set()).add(int(i))

        t[idx], th[idx] = tn, thn % TWO_PI
        dead = tn <= 0
        died[idx[dead]] = True
        done = dead.copy()
        if stop_on_hit:
            done |= hit_here
        over = (tn >= t_max) & ~done
        if use_reentry and over.any():
            # a Bessel(3) path at t returns to the level s with probability s / t
            sel = np.flatnonzero(over)
            back = u[sel, -2] < top / tn[sel]
            ret = sel[back]
            t[idx[ret]] = top
            th[idx[ret]] = TWO_PI * u[ret, -1]
            reentries[idx[ret]] += 1
            over[ret] = False
        reached[idx[over]] = True
        done |= over
        active[idx[done]] = False
        if record_every:
            for j, i in enumerate(idx):
                if steps[i] % record_every == 0 or done[j]:
                    traj[i].append((float(t[i]), float(th[i])))
    return _Batch(first_step, first_t, first_shell, shell_hits, died, reached, steps,
                  reentries, traj)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


@dataclass
class PathSample:
    start: LogPolarPoint
    trajectory: list
    hit_events: list
    died_at_boundary: bool
    reached_t_max: bool
    m_exit: int | None
    steps: int


def _check_params(start_t, step):
    if not (0 < step <= MAX_STEP):
        raise GeometryError(f"step must lie in (0, {MAX_STEP}]")
    if start_t < step:
        raise GeometryError("start must satisfy t >= step")


def sample_hpath(start: LogPolarPoint, omega_complement: CompactSetSpec, step: float = 0.01,
                 t_max: float = 50.0, seed: int = 0, a: float | None = 2.0,
                 record_every: int = 10, path_index: int = 0) -> PathSample:
    """One path, stored every ``record_every`` steps, with its first hit of each shell."""
    _check_params(start.t, step)
    b = _simulate([start.t], [start.theta], omega_complement, step, t_max, seed,
                  [path_index], a=a, record_every=record_every, reentry=False)
    events = []
    for s, who in sorted(b.shell_hits.items()):
        if 0 in who:
            events.append(s)
    hits = [(s, None, None) for s in events]
    if b.first_hit_step[0] >= 0:
        # the first hit carries its step and depth
        hits = [(s, float(b.first_hit_t[0]) if s == b.first_hit_shell[0] else None,
                 int(b.first_hit_step[0]) if s == b.first_hit_shell[0] else None)
                for s in events]
    return PathSample(start, b.trajectories[0], hits, bool(b.died[0]), bool(b.reached[0]),
                      int(b.first_hit_step[0]) if b.first_hit_step[0] >= 0 else None,
                      int(b.steps[0]))


@dataclass
class HitEstimate:
    p_hat: float
    standard_error: float
    n_paths: int
    per_shell: dict
    first_hit_shell: dict
    deaths: int
    reentries: int
    params: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["shell", "hit_frequency", "standard_error", "first_hit_frequency"])
        n = self.n_paths
        for s in sorted(set(self.per_shell) | set(self.first_hit_shell)):
            f = self.per_shell.get(s, 0.0)
            wr.writerow([s, repr(f), repr(math.sqrt(f * (1 - f) / n)),
                         repr(self.first_hit_shell.get(s, 0.0))])
        wr.writerow(["all", repr(self.p_hat), repr(self.standard_error), ""])
        return buf.getvalue()


def estimate_hit_probability(start, omega_complement: CompactSetSpec, n_paths: int = 1000,
                             step: float = 0.01, t_max: float = 64.0, seed: int = 0,
                             a: float | None = 2.0, stop_on_hit: bool = True,
                             reentry: bool = True, tube: float = 0.0,
                             batch: int = 4096) -> HitEstimate:
    """Fraction of paths meeting the set before t_max.

    ``start`` is a LogPolarPoint or a level t (a float), in which case the
    starting angle is uniform on that circle.  With ``reentry`` (bounded
    sets only) a path reaching t_max comes back to the top of the set with
    the exact return probability, so the estimate has no truncation bias.
    """
    if n_paths < 100:
        raise GeometryError("n_paths must be at least 100")
    if isinstance(start, LogPolarPoint):
        t0 = start.t
        th0 = np.full(n_paths, start.theta)
    else:
        t0 = float(start)
        # uniform start angles from a stream of their own
        th0 = _stream(seed, 2**63).random(n_paths) * TWO_PI
    _check_params(t0, step)
    hits = np.zeros(n_paths, dtype=bool)
    first_shell = np.full(n_paths, -1)
    per_shell: dict = {}
    deaths = reent = 0
    for s in range(0, n_paths, batch):
        ids = np.arange(s, min(n_paths, s + batch))
        b = _simulate(np.full(len(ids), t0), th0[ids], omega_complement, step, t_max, seed,
                      ids, a=a, stop_on_hit=stop_on_hit, reentry=reentry, tube=tube)
        hits[ids] = b.first_hit_step >= 0
        first_shell[ids] = b.first_hit_shell
        for sh, who in b.shell_hits.items():
            per_shell[sh] = per_shell.get(sh, 0) + len(who)
        deaths += int(b.died.sum())
        reent += int(b.reentries.sum())
    p = float(hits.mean())
    fh = {int(sh): float(np.mean(first_shell == sh)) for sh in np.unique(first_shell[hits])}
    return HitEstimate(p, math.sqrt(max(p * (1 - p), 0.0) / n_paths), n_paths,
                       {int(k): v / n_paths for k, v in sorted(per_shell.items())}, fh,
                       deaths, reent,
                       {"step": step, "t_max": t_max, "seed": seed, "tube": tube,
                        "stop_on_hit": stop_on_hit, "reentry": reentry})


def asymptotic_law_experiment(omega_complement: CompactSetSpec, a: float, n1: int, n2: int,
                              n_paths: int = 1000, seed: int = 0, step: float = 0.05,
                              t_max_factor: float = 2.0) -> list:
    """P(hit the union of shells m >= n) from the circle t = a^n, n = n1..n2.

    Regular sets push the sequence to 1; thin ones keep it below 1.
    """
    rows = []
    t_top = a ** (n2 + 1)
    for n in range(n1, n2 + 1):
        tail = omega_complement.clip(a ** n, t_top)
        # the clipped tail is bounded, so the exact return law applies
        est = estimate_hit_probability(a ** n, tail, n_paths, step, t_top * t_max_factor,
                                       seed + n, a=a, reentry=True)
        rows.append({"n": n, "p_hat": est.p_hat, "standard_error": est.standard_error})
    return rows


def drift_experiment(t0: float = 2.0, n_steps: int = 100_000, step: float = 0.01,
                     seed: int = 0) -> dict:
    """Mean t-increment per unit time over independent single steps from t0."""
    g = _stream(seed, 0)
    z = g.standard_normal(n_steps)
    inc = step / t0 + math.sqrt(step) * z
    rate = inc / step
    return {"mean_rate": float(rate.mean()), "standard_error": float(rate.std(ddof=1) / math.sqrt(n_steps)),
            "expected": 1.0 / t0}


def transience_experiment(n_paths: int = 10_000, t0: float = 1.0, step: float = 0.01,
                          t_max: float = 10.0, low: float = 0.1, seed: int = 0) -> dict:
    """Boundary deaths and the fraction of paths dipping below ``low``.

    For the Bessel(3) radial part the exact dip probability is low / t0.
    """
    band = CompactSetSpec((AnnulusBand(1e-9, low, 0.0, TWO_PI),), "dip")
    est = estimate_hit_probability(LogPolarPoint(t0, 0.0), band, n_paths, step, t_max, seed,
                                   a=None, stop_on_hit=False, reentry=False)
    return {"death_rate": est.deaths / n_paths, "dip_fraction": est.p_hat,
            "dip_standard_error": est.standard_error, "dip_exact": low / t0}
