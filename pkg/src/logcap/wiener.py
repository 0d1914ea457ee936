"""Wiener series of the shells E_n = K n {a^n <= h <= a^(n+1)} and its verdict.

Built-in geometries:

* ``deleted_radius``: the slit {theta = 0, t >= t_min};
* ``sparse_intervals``: for n >= N the slit piece whose Cartesian trace is
  [e^-a^(n+1), e^-a^(n+1) + delta_n], with
  delta_n = exp(-a^n n log n log_2 n ... log_k(n)^(1+eps)).

Endpoints of the second family are handled in the exponent only:
q_n = a^(n+1) + log delta_n is a float of moderate size even when delta_n
underflows, and the t-length of piece n is log(1 + e^q_n).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .capacity import (CapacityError, capacity_at_zeta, equilibrium_capacity,
                       greenian_capacity, obstacle_capacity)
from .elliptic import CoefficientField, MeshError
from .geometry import (CompactSetSpec, GeometryError, RadialSegment, ShellDecomposition,
                       shell_decompose)
from .kernels import LAPLACE
from .qp import QPConvergenceError

LOG_REGULAR = "LogRegular"
LOG_IRREGULAR = "LogIrregular"
INCONCLUSIVE = "Inconclusive"

# fitted decay exponent p of terms ~ c n^-p
DIVERGENCE_P = 1.0
CONVERGENCE_P = 1.2
MIN_SHELLS = 4


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("LOGCAP_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# built-in families
# ---------------------------------------------------------------------------


def iterated_log(n: float, j: int) -> float:
    """log applied j times; nan once the argument leaves (0, inf)."""
    x = float(n)
    for _ in range(j):
        if x <= 0:
            return math.nan
        x = math.log(x)
    return x


def sparse_weight(n: int, k: int, eps: float) -> float:
    """n log n log_2 n ... log_(k-1) n (log_k n)^(1+eps), the exponent of delta_n over a^n."""
    w = float(n)
    for j in range(1, k):
        w *= iterated_log(n, j)
    lk = iterated_log(n, k)
    if not lk > 0:
        return math.nan
    return w * lk ** (1.0 + eps)


def sparse_interval(n: int, a: float, k: int, eps: float):
    """(t_hi, q, log_length) of the n-th piece, q = a^(n+1) + log delta_n."""
    w = sparse_weight(n, k, eps)
    if not math.isfinite(w) or w <= 0:
        raise GeometryError(f"n={n} too small for k={k}: iterated log not positive")
    t_hi = a ** (n + 1)
    q = t_hi - a ** n * w
    if q > 30.0:
        log_len = math.log(q + math.log1p(math.exp(-q)))
    elif q > -30.0:
        log_len = math.log(math.log1p(math.exp(q)))
    else:
        # log(log1p(e^q)) = q - e^q / 2 + ..., the correction is below 1e-13
        log_len = q
    return t_hi, q, log_len


def first_valid_n(k: int) -> int:
    n = 2
    while not sparse_weight(n, k, 0.0) > 0:
        n += 1
    return n


def builtin_family(name: str, a: float = 2.0, N: int | None = None, k: int = 1,
                   eps: float = 0.0, n_max: int | None = 8, t_min: float = 1.0,
                   theta: float = 0.0) -> CompactSetSpec:
    """The complement of Omega for one of the built-in geometries.

    ``n_max`` bounds the construction (the slit is cut at a^(n_max+1), the
    sparse family stops at piece n_max); ``None`` keeps the slit unbounded.
    """
    if not a > 1:
        raise GeometryError("a must exceed 1")
    if name == "deleted_radius":
        top = math.inf if n_max is None else a ** (n_max + 1)
        if not 0 < t_min < top:
            raise GeometryError("t_min must be positive and below the cut")
        return CompactSetSpec((RadialSegment(t_min, top, theta),), "deleted_radius")
    if name == "sparse_intervals":
        if int(k) != k or k < 1:
            raise GeometryError("k must be a positive integer")
        if n_max is None:
            raise GeometryError("sparse_intervals needs a finite n_max")
        n0 = first_valid_n(k)
        N = n0 if N is None else int(N)
        if N < max(2, n0):
            raise GeometryError(f"N must be >= {max(2, n0)} for k={k}")
        prims = []
        for n in range(N, n_max + 1):
            t_hi, _, log_len = sparse_interval(n, a, k, eps)
            prims.append(RadialSegment(1.0, t_hi, theta, log_length=log_len))
        return CompactSetSpec(tuple(prims), f"sparse_intervals(k={k},eps={eps})")
    raise GeometryError(f"unknown family {name!r}")


def family_asymptotics(name: str, a: float = 2.0, k: int = 1, eps: float = 0.0) -> dict:
    """Analytic term behaviour of a built-in family.

    For a slit piece of t-length l at depth T the h-capacity is about
    T^2 / (T + log(4 / l)); for the sparse family T + log(1/l) = a^n w_n,
    so a^-n C_h(E_n) ~ a^2 / w_n and the series behaves like
    sum 1 / (n log n ... log_k(n)^(1+eps)).
    """
    if name == "deleted_radius":
        return {"law": "terms bounded below", "divergent": True}
    if name == "sparse_intervals":
        return {"law": f"a^2 / (n log n ... log_{k}(n)^(1+eps))", "divergent": eps <= 0,
                "model": lambda n: a * a / sparse_weight(n, k, eps)}
    raise GeometryError(f"unknown family {name!r}")


# ---------------------------------------------------------------------------
# series
# ---------------------------------------------------------------------------


@dataclass
class ShellTerm:
    n: int
    capacity: float
    term_h: float
    term_reduction: float | None
    status: str = "ok"
    error: str | None = None
    capacity_g: float | None = None
    term_classical: float | None = None
    reduction_1: float | None = None
    route: str = "EquilibriumQP"


@dataclass
class WienerReport:
    a: float
    shells: list = field(default_factory=list)
    integral: list = field(default_factory=list)
    verdict: str = INCONCLUSIVE
    confidence: str = ""
    fit: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def terms_h(self) -> dict:
        return {s.n: s.term_h for s in self.shells if s.status == "ok"}

    @property
    def terms_reduction(self) -> dict:
        return {s.n: s.term_reduction for s in self.shells if s.status == "ok"}

    @property
    def terms_classical(self) -> dict:
        return {s.n: (s.term_classical, s.reduction_1) for s in self.shells
                if s.term_classical is not None}

    @property
    def integral_samples(self) -> dict:
        return {r["rho"]: r["integrand"] for r in self.integral}

    def partial_sums(self) -> list:
        return list(np.cumsum([s.term_h for s in self.shells if s.status == "ok"]))

    def to_json(self) -> dict:
        shells = []
        for s in self.shells:
            d = asdict(s)
            shells.append(d)
        return {"a": self.a, "shells": shells, "integral": self.integral,
                "verdict": self.verdict, "confidence": self.confidence,
                "fit": self.fit, "diagnostics": self.diagnostics}


def _shell_resolution(E: CompactSetSpec, panels: int) -> float:
    """Resolution giving about ``panels`` panels over the whole shell."""
    size = E.size
    return panels / size if size > 0 else float(panels)


def _one_shell(n, E, a, kind, panels, route, fld, classical, n_theta):
    if E.is_empty:
        return ShellTerm(n, 0.0, 0.0, 0.0, "empty", capacity_g=0.0 if classical else None,
                         term_classical=0.0 if classical else None,
                         reduction_1=0.0 if classical else None)
    try:
        res = _shell_resolution(E, panels)
        if route == "obstacle":
            r = obstacle_capacity(E, fld, n_theta=n_theta)
            term_red = None
        else:
            r = equilibrium_capacity(E, kind, res, probes=0)
            z = capacity_at_zeta(E, kind, result=r)
            term_red = z["value"] / a ** n
        st = ShellTerm(n, r.capacity, r.capacity / a ** n, term_red, route=r.route)
        if classical:
            g = greenian_capacity(E, kind, res, probes=0)
            z1 = capacity_at_zeta(E, kind, result=g, weight="one")
            st.capacity_g = g.capacity
            st.term_classical = a ** n * g.capacity
            st.reduction_1 = z1["value"]
        return st
    except (CapacityError, QPConvergenceError, MeshError, GeometryError) as exc:
        return ShellTerm(n, math.nan, math.nan, None, "failed", str(exc))


def series_terms(shells: ShellDecomposition, kind=LAPLACE, panels: int = 256,
                 route: str = "equilibrium", fld: CoefficientField | None = None,
                 classical: bool = False, n_theta: int = 64) -> WienerReport:
    """Per-shell capacities and the terms a^-n C_h(E_n).

    A failing shell is marked and kept; the others still run.  Shells are
    independent and run on LOGCAP_THREADS worker threads.
    """
    a = shells.a
    jobs = list(shells)

    def work(item):
        n, E = item
        return _one_shell(n, E, a, kind, panels, route, fld, classical, n_theta)

    nthreads = _threads()
    if nthreads > 1:
        with ThreadPoolExecutor(nthreads) as ex:
            terms = list(ex.map(work, jobs))
    else:
        terms = [work(j) for j in jobs]
    return WienerReport(a=a, shells=terms)


def classical_terms(shells: ShellDecomposition, kind=LAPLACE, panels: int = 256) -> list:
    """(n, a^n C_g(E_n), reduction of 1 on E_n at the puncture) per shell."""
    rep = series_terms(shells, kind, panels, classical=True)
    return [(s.n, s.term_classical, s.reduction_1, s.term_reduction) for s in rep.shells]


def integral_test(omega_complement: CompactSetSpec, rho_grid, kind=LAPLACE,
                  panels: int = 256) -> list:
    """c(rho) = C_h(K n {1 <= h <= rho}) with the integrand c / rho^2 and
    trapezoid partial integrals."""
    rho = np.asarray(rho_grid, float)
    if np.any(rho <= 1) or np.any(np.diff(rho) <= 0):
        raise GeometryError("rho grid must be increasing and > 1")
    rows = []
    for r in rho:
        E = omega_complement.clip(1.0, float(r))
        if E.is_empty:
            c = 0.0
        else:
            c = equilibrium_capacity(E, kind, _shell_resolution(E, panels),
                                     probes=0).capacity
        rows.append({"rho": float(r), "c": c, "integrand": c / r ** 2})
    acc = 0.0
    for i, row in enumerate(rows):
        if i:
            acc += 0.5 * (row["integrand"] + rows[i - 1]["integrand"]) * (
                row["rho"] - rows[i - 1]["rho"])
        row["partial_integral"] = acc
    return rows


# ---------------------------------------------------------------------------
# verdict
# ---------------------------------------------------------------------------


def fit_decay(ns, terms, scale=None) -> dict:
    """Least-squares fit of log(term / scale_n) = log c - p log(x_n).

    Without ``scale`` x_n = n (terms ~ c n^-p).  With a family scale the
    borderline factors n log n ... are divided out and x_n = log_k n.
    """
    ns = np.asarray(ns, float)
    y = np.asarray(terms, float)
    if scale is not None:
        y = y * np.array([scale["borderline"](n) for n in ns])
        x = np.array([scale["variable"](n) for n in ns])
    else:
        x = ns
    ok = (y > 0) & (x > 0)
    if ok.sum() < 2:
        return {"p": math.nan, "r2": math.nan, "points": int(ok.sum())}
    lx, ly = np.log(x[ok]), np.log(y[ok])
    A = np.stack([np.ones_like(lx), lx], 1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ coef
    ss = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - float(((ly - pred) ** 2).sum()) / ss if ss > 0 else 1.0
    return {"p": float(-coef[1]), "r2": r2, "points": int(ok.sum()),
            "variable": "n" if scale is None else scale["name"]}


def family_scale(k: int) -> dict:
    """Divide out n log n ... log_(k-1) n; fit against log_k n."""
    def borderline(n):
        w = float(n)
        for j in range(1, k):
            w *= iterated_log(n, j)
        return w

    return {"name": f"log_{k} n", "borderline": borderline,
            "variable": lambda n: iterated_log(n, k)}


def classify(report: WienerReport, family: dict | None = None) -> WienerReport:
    """Evidence-graded verdict.

    Divergence evidence: a tail that does not decay, or a
    fitted exponent p <= 1.  Convergence evidence: p > 1.2 (or every term
    zero).  ``family`` = {"name", "a", "k", "eps"} switches to the
    family-scaled fit and lets the known asymptotics decide.
    """
    ok = [s for s in report.shells if s.status in ("ok", "empty")]
    ns = [s.n for s in ok]
    terms = [s.term_h for s in ok]
    report.diagnostics["partial_sums"] = [float(v) for v in np.cumsum(terms)] if terms else []
    if len(ok) < MIN_SHELLS:
        report.verdict = INCONCLUSIVE
        report.confidence = f"only {len(ok)} shells computed, need {MIN_SHELLS}"
        return report
    if all(t == 0 for t in terms):
        report.verdict = LOG_IRREGULAR
        report.confidence = "every computed term vanishes"
        report.fit = {"p": math.inf, "r2": 1.0, "points": len(terms)}
        return report
    scale = None
    if family and family.get("name") == "sparse_intervals":
        scale = family_scale(int(family.get("k", 1)))
    # the head shells are pre-asymptotic; fit the tail (at least MIN_SHELLS points)
    m = max(MIN_SHELLS, (len(terms) + 1) // 2)
    fit = fit_decay(ns[-m:], terms[-m:], scale)
    fit["shells"] = [int(v) for v in ns[-m:]]
    report.fit = fit
    tail = terms[-m:]
    floor = min(tail)
    # a tail that does not decay at all is divergence evidence on its own
    bounded_below = floor > 0 and fit["p"] <= 0.0
    if bounded_below or fit["p"] <= DIVERGENCE_P:
        verdict, note = LOG_REGULAR, (f"divergence evidence: p = {fit['p']:.3f}"
                                      + (f", tail terms >= {floor:.4g}" if bounded_below else ""))
    elif fit["p"] > CONVERGENCE_P:
        verdict, note = LOG_IRREGULAR, f"convergence evidence: p = {fit['p']:.3f}"
    else:
        verdict, note = INCONCLUSIVE, f"p = {fit['p']:.3f} between thresholds"
    if family:
        asym = family_asymptotics(family["name"], family.get("a", report.a),
                                  int(family.get("k", 1)), float(family.get("eps", 0.0)))
        known = LOG_REGULAR if asym["divergent"] else LOG_IRREGULAR
        report.diagnostics["analytic_law"] = asym["law"]
        report.diagnostics["fit_verdict"] = verdict
        if known != verdict:
            note += f"; overridden by the known asymptotics ({asym['law']})"
        else:
            note += "; agrees with the known asymptotics"
        report.verdict, report.confidence = known, "definitive for built-in family: " + note
        return report
    report.verdict = verdict
    report.confidence = "finite-range evidence only: " + note
    return report


def wiener_report(omega_complement: CompactSetSpec, a: float = 2.0, n_min: int = 1,
                  n_max: int = 8, kind=LAPLACE, panels: int = 256,
                  family: dict | None = None, classical: bool = False,
                  rho_grid=None, route: str = "equilibrium",
                  fld: CoefficientField | None = None) -> WienerReport:
    shells = shell_decompose(omega_complement, a, n_min, n_max)
    rep = series_terms(shells, kind, panels, route=route, fld=fld, classical=classical)
    if rho_grid is not None:
        rep.integral = integral_test(omega_complement, rho_grid, kind, panels)
    return classify(rep, family)
