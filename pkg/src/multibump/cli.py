"""Batch experiment driver.

    multibump <command> [--config PATH] [--dim N] [--k 8,16,32] [--n 8]
              [--tol 1e-7] [--seed 0] [--out DIR] [--no-timestamp]

Each command writes ``<command>.json`` (sorted keys, UTF-8) and, where a
series is produced, ``<command>.csv`` into the output directory.  Exit
status: 0 when every asserted tolerance holds, 1 on a failed tolerance or
numerical error, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import math
import sys
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

import jsonschema
import numpy as np

from . import __version__
from .bubble import Bubble, Kernel, Tower, closed_moments, critical_exponent, radial_moment
from .energy import (
    ExpansionConstants,
    energy,
    expansion_energy,
    find_critical_point,
    fit_expansion_constants,
    fit_power,
    lambda_star,
    reduced_window,
    solve_balance,
    true_energy_samples,
    window_scale,
)
from .errors import MultibumpError
from .pohozaev import pohozaev_dilation, pohozaev_translation
from .potential import FORMS, PotentialK
from .quadrature import QuadratureSpec, integrate_volume
from .reduction import kernel_projection, projection_oracle_U, residual_slope
from .symmetry import PolygonConfig

COMMANDS = ("constants", "energy", "expansion-fit", "balance", "pohozaev", "residual-slope",
            "critical-point", "kernel-project")

_pos = {"type": "number", "exclusiveMinimum": 0}
_int_list = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "dim": {"type": "integer", "minimum": 5},
        "seed": {"type": "integer", "minimum": 0},
        "budget": {"type": "integer", "minimum": 2},
        "potential": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "form": {"enum": list(FORMS)},
                "r0": _pos,
                "c0": _pos,
                "table": {"type": "string"},
            },
            "if": {"properties": {"form": {"const": "constant-one"}}, "required": ["form"]},
            "then": {},
            "else": {"required": ["r0"]},
        },
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k": _int_list,
                "n": _int_list,
                "radius": _pos,
                "scale": {"oneOf": [_pos, {"const": "auto"}]},
                "t": _pos,
                "lam": {"type": "array", "items": _pos, "minItems": 2},
                "center": {"type": "array", "items": {"type": "number"}},
                "delta": _pos,
                "xi": {"type": "string", "pattern": "^(U|psi[0-9]+|Z1|Z2)$"},
            },
        },
        "quadrature": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rel_tol": _pos,
                "abs_tol": _pos,
                "max_subdivisions": {"type": "integer", "minimum": 1},
                "workers": {"type": "integer", "minimum": 1},
            },
        },
        "expansion": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "source": {"enum": ["synthetic", "fitted"]},
                "A": {"type": "number"},
                "B1": _pos,
                "B2": _pos,
                "B3": _pos,
            },
        },
    },
}

DEFAULTS = {
    "dim": 7,
    "seed": 0,
    "budget": 64,
    "potential": {"form": "quadratic-bump", "r0": 1.0, "c0": 1.0},
    "geometry": {},
    "quadrature": {"rel_tol": 1e-7, "abs_tol": 1e-6},
    "expansion": {"source": "synthetic", "A": 1.0, "B1": 1.0, "B2": 1.0, "B3": 1.0},
}


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# configuration


def _validate(cfg: dict) -> None:
    v = jsonschema.Draft202012Validator(SCHEMA)
    errs = sorted(v.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errs:
        e = errs[0]
        path = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise UsageError(f"config key {path}: {e.message}")


def _int_csv(text: str) -> list[int]:
    try:
        out = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def load_config(args) -> dict:
    user: dict = {}
    if args.config:
        try:
            user = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}")
        if not isinstance(user, dict):
            raise UsageError("config key <root>: must be a JSON object")
    _validate(user)
    if user.get("command") not in (None, args.command):
        raise UsageError(f"config key command: {user['command']!r} does not match {args.command!r}")
    cfg = json.loads(json.dumps(DEFAULTS))
    for key, val in user.items():
        if isinstance(val, dict) and key in cfg and key != "potential":
            cfg[key].update(val)
        else:
            cfg[key] = val
    cfg["command"] = args.command
    if args.dim is not None:
        cfg["dim"] = args.dim
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.k is not None:
        cfg["geometry"]["k"] = args.k
    if args.n is not None:
        cfg["geometry"]["n"] = args.n
    if args.tol is not None:
        cfg["quadrature"]["rel_tol"] = args.tol
    _validate(cfg)
    return cfg


def config_hash(cfg: dict) -> str:
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _potential(cfg: dict) -> PotentialK:
    p = cfg["potential"]
    form = p.get("form", "quadratic-bump")
    if form == "constant-one":
        return PotentialK.constant_one()
    if form == "user-table":
        if "table" not in p:
            raise UsageError("config key potential/table: required for the user-table form")
        return PotentialK.from_csv(p["table"])
    return PotentialK(form="quadratic-bump", r0=p["r0"], c0=p.get("c0", 1.0))


def _spec(cfg: dict) -> QuadratureSpec:
    q = cfg["quadrature"]
    return QuadratureSpec(rel_tol=q["rel_tol"], abs_tol=q["abs_tol"],
                          max_subdivisions=q.get("max_subdivisions", 400_000), seed=cfg["seed"],
                          workers=q.get("workers", 1))


def _r0(cfg: dict) -> float:
    return float(cfg["potential"].get("r0", 1.0))


def _clean(x):
    """Recursively convert numpy scalars/arrays and tuples to JSON-ready values."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    return x


# --------------------------------------------------------------------------
# commands; each returns (report, csv header, csv rows, ok)


def golden_moments() -> dict:
    text = resources.files("multibump").joinpath("golden/moments.json").read_text(encoding="utf-8")
    return json.loads(text)


def run_constants(cfg):
    N = cfg["dim"]
    m = closed_moments(N)
    spec = _spec(cfg).with_(rel_tol=1e-10, abs_tol=1e-14, mode="radial-1d")
    gold = golden_moments().get(str(N))
    checks = {}
    if gold is not None:
        for key in ("A_mass", "S_mass", "M2", "B_flux", "psi0_moment", "omega", "c_N"):
            g = float(gold[key])
            checks[f"golden_{key}"] = abs(getattr(m, key) - g) / abs(g)
    ts = m.two_star
    checks["identity_A_mass"] = abs(m.A_mass - m.A_mass_identity) / m.A_mass
    checks["identity_B_flux"] = abs(m.B_flux + 0.5 * (N - 2) * m.A_mass) / m.A_mass
    checks["identity_psi0_moment"] = abs(m.psi0_moment + 2 / ts * m.M2) / m.M2
    U = Bubble(np.zeros(N), 1.0, N)
    quad = {
        "A_mass": lambda y: U.value(y) ** (ts - 1),
        "S_mass": lambda y: U.value(y) ** ts,
        "M2": lambda y: U.value(y) ** ts * np.sum(y * y, axis=1),
        "B_flux": lambda y: (ts - 1) * U.value(y) ** (ts - 2) * U.d_scale(y),
        "psi0_moment": lambda y: U.value(y) ** (ts - 1) * U.d_scale(y) * np.sum(y * y, axis=1),
    }
    decay = {"A_mass": N + 2, "S_mass": 2 * N, "M2": 2 * N - 2, "B_flux": N + 2, "psi0_moment": 2 * N - 2}
    qv = {}
    for key, f in quad.items():
        r = integrate_volume(f, spec, dim=N, decay=decay[key], features=[(np.zeros(N), 1.0)])
        qv[key] = r.value
        checks[f"quadrature_{key}"] = abs(r.value - getattr(m, key)) / abs(getattr(m, key))
    tol = {"golden": 1e-10, "identity": 1e-12, "quadrature": 1e-6}
    ok = all(v <= tol[k.split("_")[0]] for k, v in checks.items()) and gold is not None
    report = {"moments": json.loads(m.to_json()), "golden": gold, "quadrature": qv,
              "relative_deviations": checks, "asserted": tol}
    return report, None, None, ok


def _tower_from_geometry(cfg, K):
    N = cfg["dim"]
    g = cfg["geometry"]
    k = g.get("k", [8])[0]
    radius = g.get("radius", _r0(cfg))
    scale = g.get("scale", "auto")
    bal = None
    if scale == "auto":
        bal = solve_balance(k, K, dim=N)
        scale = bal.mu
    return Tower.from_polygon(PolygonConfig(k, radius, scale, (1, 2), N)), bal


def run_energy(cfg):
    K = _potential(cfg)
    tower, bal = _tower_from_geometry(cfg, K)
    spec = _spec(cfg).with_(mode="cylinder-3d")
    res = energy(tower, K, spec)
    N = cfg["dim"]
    sep = len(tower.bubbles) * closed_moments(N).S_mass / N
    report = {"energy": res.value, "error_estimate": res.error_estimate, "cells": res.cells_used,
              "separated_bubbles": sep, "deviation": res.value - sep,
              "count": len(tower.bubbles), "scale": tower.bubbles[0].scale,
              "balance": None if bal is None else bal.to_dict()}
    return report, None, None, True


def _samples(cfg, K):
    N = cfg["dim"]
    ns = cfg["geometry"].get("n", [8, 12, 16])
    return true_energy_samples(ns, K, _spec(cfg), dim=N)


def run_expansion_fit(cfg):
    K = _potential(cfg)
    N = cfg["dim"]
    samples = _samples(cfg, K)
    fit = fit_expansion_constants(samples, dim=N, r0=K.r0)
    report = {"fit": fit.to_dict(), "samples": len(samples), "A_reference": closed_moments(N).energy}
    rows = [(t, lam, n, val) for t, lam, n, val in samples]
    return report, ["t", "lambda", "n", "energy"], rows, fit.positive


def run_balance(cfg):
    K = _potential(cfg)
    N = cfg["dim"]
    ks = cfg["geometry"].get("k", [8, 16, 32])
    sols = [solve_balance(k, K, dim=N) for k in ks]
    rows = [(s.k, s.mu_bar, s.mu, s.residual) for s in sols]
    target = 2.0 / (N - 4)
    report = {"solutions": [s.to_dict() for s in sols], "target_exponent": target, "asserted": {"relative": 0.05}}
    ok = True
    if len(ks) >= 2:
        slope, icpt, r2 = fit_power(ks, [s.mu_bar for s in sols])
        slope_mu, _, _ = fit_power(ks, [s.mu for s in sols])
        rel = abs(slope - target) / target
        report.update({"exponent": slope, "intercept": icpt, "r_squared": r2, "relative_deviation": rel,
                       "exponent_mu": slope_mu, "target_exponent_mu": (N - 2) / (N - 4)})
        ok = rel <= 0.05
    return report, ["k", "mu_bar", "mu", "residual"], rows, ok


def _field(tag: str, b: Bubble):
    return b if tag == "U" else Kernel(b, tag)


def run_pohozaev(cfg):
    K = _potential(cfg)
    N = cfg["dim"]
    g = cfg["geometry"]
    center = np.asarray(g.get("center", [1.0] + [0.0] * (N - 1)), dtype=float)
    if center.size != N:
        raise UsageError(f"config key geometry/center: needs {N} entries")
    delta = g.get("delta", 0.5)
    tag = g.get("xi", "psi0")
    U = Bubble(np.zeros(N), 1.0, N)
    xi = _field(tag, U)
    spec = _spec(cfg).with_(rel_tol=min(1e-9, cfg["quadrature"]["rel_tol"]), abs_tol=1e-12)
    tr = pohozaev_translation(U, xi, K, center, delta, 1, spec)
    di = pohozaev_dilation(U, xi, K, center, delta, spec)
    exact = K.form == "constant-one" and tag != "U"
    tol = 1e-4
    ok = (not exact) or (tr.relative_residual <= tol and di.relative_residual <= tol)
    report = {"translation": tr.to_dict(), "dilation": di.to_dict(), "xi": tag, "delta": delta,
              "center": center, "exact_pair": exact, "asserted": {"relative_residual": tol} if exact else {}}
    return report, None, None, ok


def run_residual_slope(cfg):
    K = _potential(cfg)
    N = cfg["dim"]
    g = cfg["geometry"]
    n = g.get("n", [8])[0]
    k = g.get("k", [8])[0]
    s = window_scale(n, N)
    lams = g.get("lam", list(np.geomspace(0.375 * s, 3.75 * s, 5)))
    res = residual_slope(n, K, lams, k=k, dim=N, t=g.get("t"), budget=cfg["budget"], seed=cfg["seed"])
    ok = res.slope <= -1.0 and res.r_squared >= 0.95
    report = {"sweep": res.to_dict(), "n": n, "k": k, "window": reduced_window(n, N, K.r0),
              "asserted": {"slope_max": -1.0, "r_squared_min": 0.95}}
    return report, ["lambda", "norm_lower_bound", "converged"], res.rows(), ok


def run_critical_point(cfg):
    K = _potential(cfg)
    N = cfg["dim"]
    r0 = K.r0
    ns = cfg["geometry"].get("n", [8, 12, 16])
    ex = cfg["expansion"]
    fit = None
    if ex.get("source", "synthetic") == "fitted":
        fit = fit_expansion_constants(_samples(cfg, K), dim=N, r0=r0)
        if fit.constants is None:
            return {"fit": fit.to_dict(), "error": "fitted constants are not all positive"}, None, None, False
        c = fit.constants
    else:
        c = ExpansionConstants(ex["A"], ex["B1"], ex["B2"], ex["B3"], 0.0, r0, N)
    points, rows, ok = [], [], True
    for n in ns:
        win = reduced_window(n, N, r0)
        cp = find_critical_point(lambda t, lam: expansion_energy(t, lam, n, c), win)
        ls = lambda_star(c, n)
        dt, dl = abs(cp.t - r0), abs(cp.lam - ls) / ls
        points.append({"n": n, "point": cp.to_dict(), "lambda_closed_form": ls, "t_deviation": dt,
                       "lambda_relative_deviation": dl})
        rows.append((n, cp.t, cp.lam, ls, cp.classification))
        ok = ok and dt <= 1e-8 and dl <= 1e-8
    devs = [p["t_deviation"] for p in points]
    report = {"constants": c.to_dict(), "source": ex.get("source", "synthetic"), "points": points,
              "t_monotone": bool(all(a >= b for a, b in zip(devs, devs[1:]))),
              "fit": None if fit is None else fit.to_dict(),
              "asserted": {"t": 1e-8, "lambda_relative": 1e-8}}
    return report, ["n", "t", "lambda", "lambda_closed_form", "classification"], rows, ok


def run_kernel_project(cfg):
    N = cfg["dim"]
    g = cfg["geometry"]
    k = g.get("k", [4])[0]
    scale = g.get("scale", 10.0)
    if scale == "auto":
        raise UsageError("config key geometry/scale: kernel-project needs a numeric scale")
    tag = g.get("xi", "psi0")
    b = Tower.from_polygon(PolygonConfig(k, g.get("radius", _r0(cfg)), scale, (1, 2), N)).bubbles[0]
    spec = _spec(cfg).with_(rel_tol=min(1e-9, cfg["quadrature"]["rel_tol"]), abs_tol=1e-12)
    kc = kernel_projection(_field(tag, b), b, spec)
    expected = {"psi0": (1.0 / scale, 0.0), "Z2": (1.0 / scale, 0.0), "Z1": (0.0, -scale),
                "U": (projection_oracle_U(N), 0.0)}.get(tag)
    ok, dev = True, None
    if expected is not None:
        # b1 is compared relative to its own size when it is O(mu)
        dev = [abs(kc.b0 - expected[0]) / max(1.0, abs(expected[0])),
               abs(kc.b1 - expected[1]) / max(1.0, abs(expected[1]))]
        if tag == "U":
            dev[0] = abs(kc.b0 - expected[0]) / abs(expected[0])
        ok = max(dev) <= 1e-6
    report = {"coefficients": kc.to_dict(), "xi": tag, "scale": scale, "expected": expected, "deviation": dev,
              "asserted": {"deviation": 1e-6}}
    return report, None, None, ok


RUNNERS: dict[str, Callable] = {
    "constants": run_constants,
    "energy": run_energy,
    "expansion-fit": run_expansion_fit,
    "balance": run_balance,
    "pohozaev": run_pohozaev,
    "residual-slope": run_residual_slope,
    "critical-point": run_critical_point,
    "kernel-project": run_kernel_project,
}


# --------------------------------------------------------------------------
# output


def write_json(path: Path, obj: dict) -> None:
    text = json.dumps(_clean(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    path.write_bytes(text.encode("utf-8"))


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="multibump", description="Multi-bump reduction experiments.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", metavar="PATH", help="JSON experiment config")
    ap.add_argument("--dim", type=int, help="space dimension N")
    ap.add_argument("--k", type=_int_csv, help="outer polygon sizes, comma separated")
    ap.add_argument("--n", type=_int_csv, help="inner ring sizes, comma separated")
    ap.add_argument("--tol", type=float, help="quadrature relative tolerance")
    ap.add_argument("--seed", type=int, help="seed for random starts and probes")
    ap.add_argument("--out", metavar="DIR", default=".", help="output directory")
    ap.add_argument("--no-timestamp", action="store_true", help="omit the timestamp from reports")
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"{ap.prog}: error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"{ap.prog}: error: cannot create {out}: {exc}", file=sys.stderr)
        return 2
    report = {"command": args.command, "config": cfg, "config_hash": config_hash(cfg),
              "tolerances": {"rel_tol": cfg["quadrature"]["rel_tol"], "abs_tol": cfg["quadrature"]["abs_tol"]},
              "version": __version__}
    if not args.no_timestamp:
        report["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    status = 0
    try:
        body, header, rows, ok = RUNNERS[args.command](cfg)
        report["result"] = body
        report["status"] = "pass" if ok else "fail"
        status = 0 if ok else 1
        if header is not None:
            write_csv(out / f"{args.command}.csv", header, rows)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"{ap.prog}: error: {exc}", file=sys.stderr)
        return 2
    except (MultibumpError, ArithmeticError) as exc:
        report["status"] = "error"
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        status = 1
    write_json(out / f"{args.command}.json", report)
    print(f"{args.command}: {report['status']} -> {out / (args.command + '.json')}")
    return status


if __name__ == "__main__":
    sys.exit(main())
