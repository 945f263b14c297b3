"""``gphit`` batch runner.

Exit codes: 0 success, 1 invalid configuration, 2 numerical failure,
3 assertion failure under ``--assert``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path as FsPath

import jsonschema
import numpy as np

from . import estimators as E
from . import hitting, oracles
from . import kernels as K
from . import simulate as S
from .errors import GphitError, InvalidArgument, NumericalFailure

COMMANDS = ("paths", "laplace", "theorem34", "ibp", "moments", "tail", "check-kernel")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ASSERT = 0, 1, 2, 3


def load_schema() -> dict:
    text = resources.files("gphit").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InvalidArgument(f"config schema violation at {where}: {exc.message}") from exc


def resolve(cfg: dict, out_dir: str | None = None, environ=os.environ) -> dict:
    """Validated config with defaults filled in; the resolved form is embedded in every summary."""
    validate_config(cfg)
    res = copy.deepcopy(cfg)
    res.setdefault("params", {})
    mc = res["mc"]
    mc.setdefault("workers", 1)
    if environ.get("GPHIT_WORKERS"):
        try:
            mc["workers"] = int(environ["GPHIT_WORKERS"])
        except ValueError as exc:
            raise InvalidArgument(f"GPHIT_WORKERS must be an integer, got {environ['GPHIT_WORKERS']!r}") from exc
        if mc["workers"] < 1:
            raise InvalidArgument("GPHIT_WORKERS must be at least 1")
    out = res.setdefault("output", {})
    out.setdefault("formats", ["json"])
    if out_dir is not None:
        out["dir"] = out_dir
    out.setdefault("dir", ".")
    return res


def _mc(res: dict) -> E.McConfig:
    mc = res["mc"]
    grid = S.Grid(res["grid"]["t_max"], res["grid"]["n"])
    return E.McConfig(mc["replicates"], mc["master_seed"], grid, mc["workers"], mc.get("method"))


def _need(params: dict, *names):
    missing = [n for n in names if n not in params]
    if missing:
        raise InvalidArgument(f"missing params: {', '.join(missing)}")


def _as_list(x):
    return list(x) if isinstance(x, list) else [x]


def default_laplace_oracle(kernel: K.Kernel) -> tuple[str, str]:
    """Formula id and comparison mode used when the config does not name one."""
    if kernel.family == K.BM or (kernel.family == K.FBM and kernel.hurst == 0.5):
        return "eq1.2", "two-sided"
    if kernel.family == K.LINEAR or (kernel.family == K.FBM and kernel.hurst == 1.0):
        return "eq3.14", "two-sided"
    if kernel.family == K.INDEP:
        return "remark3.6", "two-sided"
    return "eq1.2", "upper"


def oracle_value(formula_id: str, kernel: K.Kernel, p: dict) -> float:
    if formula_id == "eq1.2":
        return oracles.bm_laplace(p["a"], p["alpha"]).value
    if formula_id == "eq3.14":
        return oracles.h1_laplace(p["a"], p["alpha"]).value
    if formula_id == "remark3.6":
        return oracles.indep_incr_laplace(p["a"], math.sqrt(2.0 * p["alpha"])).value
    if formula_id == "eq3.12-bound":
        return oracles.neg_moment_bound(p["r"], p["a"]).value
    if formula_id == "eq3.13-lower":
        return oracles.pos_moment_lower(p["r"], p["a"]).value
    if formula_id == "prop2.1-mgf":
        return oracles.gaussian_mgf_ibp(kernel, p["t"], p["t1"], p["lambda"], p["lambda1"]).value
    raise InvalidArgument(f"unknown oracle {formula_id!r}")


def _paths(kernel, res):
    cfg = _mc(res)
    p = res["params"]
    count = p.get("count", 1)
    plan = S.make_plan(kernel, cfg.grid, cfg.method)
    paths, tables = [], {}
    for r in range(count):
        path = S.sample_path(plan, cfg.master_seed, r)
        prof = hitting.build_profile(path)
        item = {"replicate": r, "s_max": prof.s_max, "segments": len(prof.y_lo), "atoms": len(prof.atom_level)}
        if "a" in p:
            hit = hitting.first_hit(path, _as_list(p["a"])[0])
            item["hit"] = hit.hit
            item["tau"] = hit.tau
        paths.append(item)
        tables[f"path_{r}"] = (["t", "x"], [[t, x] for t, x in zip(path.times, path.values)])
    return {"sampler": plan.describe(), "paths": paths}, tables


def _laplace(kernel, res):
    cfg = _mc(res)
    p = res["params"]
    _need(p, "a", "alpha")
    cells = E.laplace_cells(kernel, _as_list(p["a"]), _as_list(p["alpha"]), cfg)
    fid, mode = default_laplace_oracle(kernel)
    fid = res.get("assert", {}).get("oracle", fid)
    out, rows = [], []
    for (a, alpha), est in cells.items():
        ref = oracle_value(fid, kernel, {"a": a, "alpha": alpha})
        out.append({"a": a, "alpha": alpha, **est.to_dict(), "oracle": ref, "formula_id": fid})
        rows.append([a, alpha, est.mean, est.stderr, est.censored_count, est.truncation_bound, ref])
    header = ["a", "alpha", "mean", "stderr", "censored", "truncation_bound", "oracle"]
    return {"cells": out, "default_mode": mode}, {"laplace_cells": (header, rows)}


def _theorem34(kernel, res):
    cfg = _mc(res)
    p = res["params"]
    _need(p, "a", "lambda")
    a = _as_list(p["a"])[0]
    factors = p.get("factors", [1])
    levels = E.theorem34_refinement(kernel, a, p["lambda"], cfg, tuple(factors), p.get("max_censored"))
    out = [r.to_dict() for r in levels]
    rows = [[r.grid_n, r.lhs, r.rhs, r.residual, r.stderr, r.censored_count] for r in levels]
    header = ["n", "lhs", "rhs", "residual", "stderr", "censored"]
    return {"levels": out}, {"theorem34_levels": (header, rows)}


def _ibp(kernel, res):
    cfg = _mc(res)
    p = res["params"]
    _need(p, "t", "t1", "lambda", "lambda1")
    r = E.ibp_residual(kernel, p["t"], p["t1"], p["lambda"], p["lambda1"], cfg)
    return {"result": r.to_dict()}, {}


def _moments(kernel, res):
    cfg = _mc(res)
    p = res["params"]
    _need(p, "kind", "r", "a")
    a = _as_list(p["a"])[0]
    if p["kind"] == "negative":
        est = E.negative_moment(kernel, a, p["r"], cfg)
        return {"kind": "negative", "result": est.to_dict()}, {}
    _need(p, "schedule")
    study = E.positive_moment_divergence(kernel, a, p["r"], p["schedule"], cfg)
    rows = [[h, e.mean, e.stderr, e.censored_count] for h, e in zip(study.horizons, study.estimates)]
    return {"kind": "positive", "result": study.to_dict()}, {
        "moment_horizons": (["horizon", "mean", "stderr", "censored"], rows)
    }


def _tail(kernel, res):
    cfg = _mc(res)
    p = res["params"]
    _need(p, "a", "probes")
    fit = E.tail_exponent(kernel, _as_list(p["a"])[0], p["probes"], cfg)
    rows = [[q["t"], q["survival"], q["stderr"], q["survivors"]] for q in fit.points]
    return {"result": fit.to_dict()}, {"tail_points": (["t", "survival", "stderr", "survivors"], rows)}


def _check_kernel(kernel, res):
    p = res["params"]
    grid = p.get("probe_grid") or list(np.round(np.linspace(0.1, 5.0, 50), 12))
    rep = K.check_hypotheses(kernel, grid)
    return {"result": rep.to_dict()}, {}


_RUNNERS = {
    "paths": _paths,
    "laplace": _laplace,
    "theorem34": _theorem34,
    "ibp": _ibp,
    "moments": _moments,
    "tail": _tail,
    "check-kernel": _check_kernel,
}


def execute(command: str, res: dict) -> tuple[dict, dict]:
    """Run one subcommand on a resolved config; returns the summary and CSV tables."""
    if command not in _RUNNERS:
        raise InvalidArgument(f"unknown subcommand {command!r}")
    kernel = K.from_dict(res["kernel"])
    body, tables = _RUNNERS[command](kernel, res)
    summary = {
        "estimator": command,
        "kernel": kernel.to_dict(),
        "params": res["params"],
        "seed": res["mc"]["master_seed"],
        "grid": res["grid"],
        "config": res,
        **body,
    }
    return summary, tables


def _within(value, ref, se, k, bias, mode) -> bool:
    if mode == "upper":
        return value - k * se <= ref + bias
    if mode == "lower":
        return value + k * se >= ref - bias
    return abs(value - ref) <= k * se + bias


def check_assertions(command: str, summary: dict, tol: dict) -> list[tuple[str, bool, str]]:
    """Evaluate the config's tolerances against a summary; one tuple per check."""
    k = tol.get("k_sigma", 3.0)
    bias = tol.get("bias", 0.0)
    checks = []
    kernel = K.from_dict(summary["kernel"])
    params = summary["params"]
    if command == "laplace":
        mode = tol.get("mode", summary["default_mode"])
        for c in summary["cells"]:
            ok = _within(c["mean"], c["oracle"], c["stderr"], k, bias, mode)
            checks.append((f"a={c['a']:g} alpha={c['alpha']:g} {mode}", ok,
                           f"mean={c['mean']:.6g} se={c['stderr']:.3g} oracle={c['oracle']:.6g}"))
            if "max_truncation" in tol:
                ok = c["truncation_bound"] < tol["max_truncation"]
                checks.append((f"a={c['a']:g} alpha={c['alpha']:g} truncation", ok,
                               f"bound={c['truncation_bound']:.3g}"))
    elif command == "theorem34":
        levels = summary["levels"]
        for lv in levels:
            ok = abs(lv["residual"]) <= k * lv["stderr"] + bias
            checks.append((f"n={lv['grid_n']} residual", ok, f"residual={lv['residual']:.3g} se={lv['stderr']:.3g}"))
        if tol.get("monotone"):
            mags = [abs(lv["residual"]) for lv in sorted(levels, key=lambda d: d["grid_n"])]
            ok = all(y <= x for x, y in zip(mags, mags[1:]))
            checks.append(("|residual| nonincreasing in n", ok, " ".join(f"{m:.3g}" for m in mags)))
    elif command == "ibp":
        r = summary["result"]
        for side in ("lhs", "rhs"):
            ok = abs(r[side] - r["oracle"]) <= k * r[f"{side}_stderr"] + bias
            checks.append((f"{side} vs oracle", ok, f"{side}={r[side]:.6g} oracle={r['oracle']:.6g}"))
        ok = abs(r["residual"]) <= k * r["stderr"] + bias
        checks.append(("lhs - rhs", ok, f"residual={r['residual']:.3g} se={r['stderr']:.3g}"))
    elif command == "moments":
        r = summary["result"]
        if summary["kind"] == "negative":
            fid = tol.get("oracle", "eq3.12-bound")
            ref = oracle_value(fid, kernel, {"a": _as_list(params["a"])[0], "r": params["r"]})
            mode = tol.get("mode", "upper")
            ok = _within(r["mean"], ref, r["stderr"], k, bias, mode)
            checks.append((f"negative moment {mode}", ok, f"mean={r['mean']:.6g} ref={ref:.6g}"))
        else:
            if tol.get("increasing", True):
                checks.append(("strictly increasing in horizon", r["increasing"],
                               " ".join(f"{e['mean']:.4g}" for e in r["estimates"])))
            if tol.get("oracle") == "eq3.13-lower":
                last = r["estimates"][-1]
                ref = r["lower_bound"]
                if ref is None:
                    checks.append(("lower bound", False, "bound is infinite for r >= 1/2"))
                else:
                    ok = last["mean"] >= ref - k * last["stderr"] - bias
                    checks.append(("final horizon above lower bound", ok, f"mean={last['mean']:.4g} bound={ref:.4g}"))
    elif command == "tail":
        lo, hi = tol.get("slope_range", [-math.inf, math.inf])
        s = summary["result"]["slope"]
        checks.append(("slope in range", lo <= s <= hi, f"slope={s:.4g} range=[{lo}, {hi}]"))
    elif command == "check-kernel":
        want = tol.get("all_pass", True)
        got = summary["result"]["all_pass"]
        checks.append(("hypothesis checks", got == want, f"all_pass={got}"))
    return checks


def write_outputs(command: str, summary: dict, tables: dict, res: dict) -> list[str]:
    out = FsPath(res["output"]["dir"])
    fmts = res["output"]["formats"]
    written = []
    if not fmts:
        return written
    out.mkdir(parents=True, exist_ok=True)
    if "json" in fmts:
        target = out / f"{command}.json"
        target.write_text(json.dumps(summary, indent=2) + "\n")
        written.append(str(target))
    if "csv" in fmts:
        for name, (header, rows) in tables.items():
            target = out / f"{name}.csv"
            with open(target, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                for row in rows:
                    w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])
            written.append(str(target))
    return written


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gphit", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="experiment configuration (JSON)")
    ap.add_argument("--assert", dest="check", action="store_true", help="turn the config's assert block into the exit code")
    ap.add_argument("--out", help="output directory, overrides output.dir")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
        res = resolve(raw, args.out)
        summary, tables = execute(args.command, res)
    except NumericalFailure as exc:
        print(f"gphit: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GphitError, OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        print(f"gphit: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    checks = []
    if args.check:
        checks = check_assertions(args.command, summary, res.get("assert", {}))
        summary["assertions"] = [{"check": n, "pass": ok, "detail": d} for n, ok, d in checks]
    write_outputs(args.command, summary, tables, res)
    print(json.dumps(summary, indent=2))
    if args.check:
        for name, ok, detail in checks:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", file=sys.stderr)
        if not all(ok for _, ok, _ in checks):
            return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
