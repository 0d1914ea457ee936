"""Command line front end.

Every command resolves its arguments into a JSON config, stores it as
``config.json`` in the output directory and derives all outputs from that
config alone, so ``logcap replay OUT/config.json --out OTHER`` rebuilds the
same files byte for byte.  Wall-clock timings go to ``timing.json``, the one
file outside that contract.

Exit codes: 0 success, 1 numerical failure, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time

import numpy as np

from .capacity import CapacityError, capacity_at_zeta, equilibrium_capacity, obstacle_capacity
from .elliptic import (DiscreteGreenTable, EllipticityError, MeshError, build_mesh,
                       field_from_json, identity_field)
from .geometry import CompactSetSpec, GeometryError, LogPolarPoint, spec_from_json
from .hdp import (BoundaryData, BoundaryDataError, gap_table_csv, harmonic_measure_of_zeta,
                  solve_hdp, uniqueness_gap)
from .hpath import estimate_hit_probability
from .kernels import LAPLACE, DiscreteOperator
from .qp import QPConvergenceError
from .wiener import builtin_family, first_valid_n, wiener_report

EXIT_OK, EXIT_NUMERICAL, EXIT_INPUT = 0, 1, 2

INPUT_ERRORS = (GeometryError, BoundaryDataError, EllipticityError, ValueError, KeyError,
                TypeError)
NUMERICAL_ERRORS = (CapacityError, QPConvergenceError, MeshError, np.linalg.LinAlgError,
                    FloatingPointError, ArithmeticError)


class InputError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------


def jsonable(obj):
    """Plain JSON types; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if obj is None or isinstance(obj, str):
        return obj
    if callable(obj):
        return None
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> str:
    # json writes floats with repr, the shortest round-trip form
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_atomic(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError("parse", f"{path}: {exc}") from None
    except OSError as exc:
        raise InputError("io", f"{path}: {exc.strerror}") from None


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------


def parse_range(text: str) -> tuple[int, int]:
    """'1..6' -> (1, 6); a single integer is a one-shell range."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
        else:
            lo = hi = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N..M, got {text!r}") from None
    if lo > hi:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return lo, hi


def parse_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def parse_points(text: str) -> list[list[float]]:
    """'t:theta,t:theta' (theta defaults to 0)."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        try:
            out.append([float(parts[0]), float(parts[1]) if len(parts) > 1 else 0.0])
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad point {item!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("no points given")
    return out


def _geometry(cfg: dict) -> CompactSetSpec:
    g = cfg.get("geometry")
    if g is None:
        raise InputError("input", "no geometry given")
    try:
        spec, _ = spec_from_json(g)
    except (TypeError, ValueError, AttributeError) as exc:
        raise InputError("geometry", str(exc)) from None
    return spec


def _field(cfg: dict):
    f = cfg.get("field")
    if f is None:
        return identity_field()
    try:
        return field_from_json(f)
    except TypeError as exc:
        raise InputError("field", str(exc)) from None


def _read_geometry_arg(args) -> dict | None:
    if getattr(args, "geometry", None):
        return load_json(args.geometry)
    return None


# ---------------------------------------------------------------------------
# commands: config builders (argv -> config) and runners (config -> files)
# ---------------------------------------------------------------------------


def config_capacity(args) -> dict:
    return {"command": "capacity", "geometry": _read_geometry_arg(args),
            "field": load_json(args.field) if args.field else None,
            "route": args.route, "resolution": args.resolution, "n_theta": args.n_theta,
            "zeta": args.zeta}


def run_capacity(cfg: dict) -> tuple[dict, dict]:
    K = _geometry(cfg)
    fld = _field(cfg)
    route = cfg.get("route", "equilibrium")
    if route not in ("equilibrium", "obstacle", "both"):
        raise InputError("input", f"unknown route {route!r}")
    res = float(cfg.get("resolution", 64.0))
    n_theta = int(cfg.get("n_theta", 128))
    results, timing = {}, {}
    kind = LAPLACE
    if not fld.is_identity:
        t_top = K.t_max if not K.is_empty else 1.0
        mesh = build_mesh(K, max(2.0 * t_top, t_top + 6.0), n_theta=n_theta)
        kind = DiscreteOperator(DiscreteGreenTable(fld, mesh))
    if route in ("equilibrium", "both"):
        r = equilibrium_capacity(K, kind, resolution=res)
        timing["equilibrium"] = r.diagnostics.pop("seconds", None)
        d = r.to_json()
        if cfg.get("zeta") and not K.is_empty:
            z = capacity_at_zeta(K, kind, res, result=r)
            d["reduction_at_zeta"] = {k: z[k] for k in ("value", "gap", "extrapolation_spread")}
        results["equilibrium"] = d
    if route in ("obstacle", "both"):
        r = obstacle_capacity(K, fld, n_theta=n_theta)
        timing["obstacle"] = r.diagnostics.pop("seconds", None)
        results["obstacle"] = r.to_json()
    out = {"command": "capacity", "results": results}
    if route == "both":
        a, b = results["equilibrium"]["capacity"], results["obstacle"]["capacity"]
        out["agreement_gap"] = abs(a - b) / max(abs(a), abs(b)) if max(a, b) > 0 else 0.0
    return {"result.json": dumps(out)}, timing


def config_wiener(args) -> dict:
    n_lo, n_hi = args.n
    fam = None
    if args.family:
        fam = {"name": args.family, "a": args.a, "k": args.k, "eps": args.eps, "N": args.N}
    elif not args.geometry:
        raise InputError("input", "give --family or --geometry")
    return {"command": "wiener", "family": fam, "geometry": _read_geometry_arg(args),
            "a": args.a, "n": [n_lo, n_hi], "panels": args.panels, "route": args.route,
            "classical": args.classical, "n_theta": args.n_theta,
            "field": load_json(args.field) if args.field else None}


def _terms_csv(rep) -> str:
    lines = ["n,capacity,term_h,term_reduction,term_classical,status"]
    for s in rep.shells:
        vals = [s.n, s.capacity, s.term_h, s.term_reduction, s.term_classical, s.status]
        lines.append(",".join("" if v is None else (repr(float(v)) if isinstance(v, float)
                                                   else str(v)) for v in vals))
    return "\n".join(lines) + "\n"


def run_wiener(cfg: dict) -> tuple[dict, dict]:
    a = float(cfg.get("a", 2.0))
    n_lo, n_hi = (int(v) for v in cfg["n"])
    fam = cfg.get("family")
    route = cfg.get("route", "equilibrium")
    if route not in ("equilibrium", "obstacle"):
        raise InputError("input", f"unknown route {route!r}")
    if fam:
        name = fam["name"]
        if name == "deleted_radius":
            K = builtin_family(name, a, n_max=n_hi)
        else:
            K = builtin_family(name, a, N=fam.get("N"), k=int(fam.get("k", 1)),
                               eps=float(fam.get("eps", 0.0)), n_max=n_hi)
            # shells before the first piece are empty by construction
            n_lo = max(n_lo, fam.get("N") or first_valid_n(int(fam.get("k", 1))))
        family = {"name": name, "a": a, "k": int(fam.get("k", 1)),
                  "eps": float(fam.get("eps", 0.0))}
    else:
        K = _geometry(cfg)
        family = None
    t0 = time.perf_counter()
    rep = wiener_report(K, a, n_lo, n_hi, panels=int(cfg.get("panels", 256)), family=family,
                        classical=bool(cfg.get("classical", False)), route=route,
                        fld=_field(cfg))
    out = rep.to_json()
    out["command"] = "wiener"
    out["n_range"] = [n_lo, n_hi]
    return ({"report.json": dumps(out), "terms.csv": _terms_csv(rep)},
            {"wiener": time.perf_counter() - t0})


DEFAULT_PROBES = [[1.5, 1.0], [2.5, 2.0], [3.0, 3.0], [4.0, 4.0], [3.5, 5.0]]


def config_solve(args) -> dict:
    data = load_json(args.data) if args.data else {"values": [], "f_bar": args.f_bar,
                                                  "default": args.f_value}
    return {"command": "solve", "geometry": _read_geometry_arg(args)
            or {"label": "empty", "primitives": []},
            "data": data, "truncations": args.truncations,
            "probes": args.probes or DEFAULT_PROBES, "n_theta": args.n_theta,
            "field": load_json(args.field) if args.field else None}


def run_solve(cfg: dict) -> tuple[dict, dict]:
    K = _geometry(cfg)
    fld = _field(cfg)
    data = BoundaryData.from_json(cfg.get("data") or {})
    Ts = [float(x) for x in cfg.get("truncations", [16.0, 32.0, 64.0])]
    probes = [LogPolarPoint(float(t), float(th)) for t, th in cfg["probes"]]
    n_theta = int(cfg.get("n_theta", 64))
    t0 = time.perf_counter()
    gaps = []
    for T in Ts:
        g = uniqueness_gap(K, probes, data, fld, T, n_theta)
        gaps.append({"t_ceiling": T, "gap": g["gap"], "sup": g["sup"]})
    files = {}
    hm = None
    if len(Ts) >= 3:
        hm = harmonic_measure_of_zeta(K, probes, fld, Ts, n_theta)
        files["harmonic_measure.csv"] = gap_table_csv(hm)
    sol = solve_hdp(K, data, fld, max(Ts), n_theta)
    files["solution.csv"] = sol.to_csv()
    out = {"command": "solve", "gaps": gaps,
           "gap_decreasing": all(gaps[i + 1]["sup"] <= gaps[i]["sup"] + 1e-12
                                 for i in range(len(gaps) - 1)),
           "probes": cfg["probes"], "values": sol.at([p.t for p in probes],
                                                     [p.theta for p in probes]),
           "residual": sol.residual}
    if hm is not None:
        out["puncture_mass"] = {"limit": hm["limit"], "values": hm["values"]}
    files["result.json"] = dumps(out)
    return files, {"solve": time.perf_counter() - t0}


def config_simulate(args) -> dict:
    return {"command": "simulate", "geometry": _read_geometry_arg(args)
            or {"label": "empty", "primitives": []},
            "start": args.start, "n_paths": args.n_paths, "seed": args.seed,
            "step": args.step, "t_max": args.t_max, "a": args.a,
            "reentry": not args.no_reentry}


def run_simulate(cfg: dict) -> tuple[dict, dict]:
    K = _geometry(cfg)
    st = cfg["start"]
    start = LogPolarPoint(float(st[0]), float(st[1])) if isinstance(st, list) else float(st)
    t0 = time.perf_counter()
    est = estimate_hit_probability(start, K, int(cfg["n_paths"]), float(cfg["step"]),
                                   float(cfg["t_max"]), int(cfg["seed"]), float(cfg["a"]),
                                   reentry=bool(cfg.get("reentry", True)))
    out = {"command": "simulate", "p_hat": est.p_hat, "standard_error": est.standard_error,
           "n_paths": est.n_paths, "per_shell": est.per_shell,
           "first_hit_shell": est.first_hit_shell, "deaths": est.deaths,
           "reentries": est.reentries, "params": est.params}
    return ({"result.json": dumps(out), "statistics.csv": est.to_csv()},
            {"simulate": time.perf_counter() - t0})


def config_family(args) -> dict:
    return {"command": "family", "name": args.name, "a": args.a, "k": args.k, "eps": args.eps,
            "N": args.N, "n_max": args.n_max}


def run_family(cfg: dict) -> tuple[dict, dict]:
    name = cfg["name"]
    a = float(cfg.get("a", 2.0))
    if name == "deleted_radius":
        K = builtin_family(name, a, n_max=int(cfg["n_max"]))
    else:
        K = builtin_family(name, a, N=cfg.get("N"), k=int(cfg.get("k", 1)),
                           eps=float(cfg.get("eps", 0.0)), n_max=int(cfg["n_max"]))
    return {"geometry.json": dumps(K.to_json(a))}, {}


RUNNERS = {"capacity": run_capacity, "wiener": run_wiener, "solve": run_solve,
           "simulate": run_simulate, "family": run_family}
CONFIGS = {"capacity": config_capacity, "wiener": config_wiener, "solve": config_solve,
           "simulate": config_simulate, "family": config_family}


# ---------------------------------------------------------------------------
# parser and driver
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output directory (default: print only)")
    common.add_argument("--quiet", action="store_true", help="machine output only")
    common.add_argument("--seed", type=int, default=0)

    p = argparse.ArgumentParser(prog="logcap", description="h-capacity and Wiener-series tools")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("capacity", parents=[common], help="capacity of a compact set")
    c.add_argument("--geometry", required=True)
    c.add_argument("--field", default=None, help="coefficient field JSON")
    c.add_argument("--route", choices=["equilibrium", "obstacle", "both"],
                   default="equilibrium")
    c.add_argument("--resolution", type=float, default=64.0, help="panels per unit length")
    c.add_argument("--n-theta", type=int, default=128)
    c.add_argument("--zeta", action="store_true", help="also report the reduction at zeta")

    w = sub.add_parser("wiener", parents=[common], help="Wiener series and verdict")
    w.add_argument("--family", choices=["deleted_radius", "sparse_intervals"])
    w.add_argument("--geometry")
    w.add_argument("--a", type=float, default=2.0)
    w.add_argument("--n", type=parse_range, default=(1, 8))
    w.add_argument("--k", type=int, default=1)
    w.add_argument("--eps", type=float, default=0.0)
    w.add_argument("--N", type=int, default=None)
    w.add_argument("--panels", type=int, default=256)
    w.add_argument("--route", choices=["equilibrium", "obstacle"], default="equilibrium")
    w.add_argument("--classical", action="store_true")
    w.add_argument("--n-theta", type=int, default=64)
    w.add_argument("--field", default=None)

    s = sub.add_parser("solve", parents=[common], help="h-Dirichlet problem")
    s.add_argument("--geometry")
    s.add_argument("--data", help="boundary data JSON {values, f_bar, default}")
    s.add_argument("--f-bar", type=float, default=0.0)
    s.add_argument("--f-value", type=float, default=0.0)
    s.add_argument("--truncations", type=parse_floats, default=[16.0, 32.0, 64.0])
    s.add_argument("--probes", type=parse_points, default=None)
    s.add_argument("--n-theta", type=int, default=64)
    s.add_argument("--field", default=None)

    m = sub.add_parser("simulate", parents=[common], help="h-Brownian motion hit rates")
    m.add_argument("--geometry")
    m.add_argument("--start", type=float, default=2.0, help="start level t (uniform angle)")
    m.add_argument("--n-paths", type=int, default=10_000)
    m.add_argument("--step", type=float, default=0.01)
    m.add_argument("--t-max", type=float, default=64.0)
    m.add_argument("--a", type=float, default=2.0)
    m.add_argument("--no-reentry", action="store_true")

    f = sub.add_parser("family", parents=[common], help="emit a built-in geometry")
    f.add_argument("--name", choices=["deleted_radius", "sparse_intervals"], required=True)
    f.add_argument("--a", type=float, default=2.0)
    f.add_argument("--k", type=int, default=1)
    f.add_argument("--eps", type=float, default=0.0)
    f.add_argument("--N", type=int, default=None)
    f.add_argument("--n-max", type=int, default=8)

    r = sub.add_parser("replay", parents=[common], help="rerun a stored config.json")
    r.add_argument("config")
    return p


def execute(cfg: dict, out: str | None, quiet: bool) -> int:
    cmd = cfg.get("command")
    if cmd not in RUNNERS:
        raise InputError("input", f"unknown command {cmd!r}")
    files, timing = RUNNERS[cmd](cfg)
    if out:
        write_atomic(os.path.join(out, "config.json"), dumps(cfg))
        for name, text in files.items():
            write_atomic(os.path.join(out, name), text)
        if timing:
            write_atomic(os.path.join(out, "timing.json"), dumps(timing))
    main_file = next(f for f in files if f.endswith(".json"))
    if quiet or not out:
        sys.stdout.write(files[main_file])
    else:
        print(f"{cmd}: wrote {', '.join(sorted(files))} to {out}", file=sys.stderr)
    return EXIT_OK


def _fail(kind: str, message: str, code: int) -> int:
    sys.stdout.write(dumps({"error": kind, "message": message, "exit_code": code}))
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            cfg = load_json(args.config)
            if not isinstance(cfg, dict):
                raise InputError("parse", "config must be a JSON object")
        else:
            cfg = CONFIGS[args.command](args)
        with np.errstate(over="ignore", under="ignore"):
            return execute(cfg, args.out, args.quiet)
    except InputError as exc:
        return _fail(exc.kind, str(exc), EXIT_INPUT)
    except NUMERICAL_ERRORS as exc:
        return _fail("numerical", f"{type(exc).__name__}: {exc}", EXIT_NUMERICAL)
    except INPUT_ERRORS as exc:
        return _fail("input", f"{type(exc).__name__}: {exc}", EXIT_INPUT)


if __name__ == "__main__":
    sys.exit(main())
