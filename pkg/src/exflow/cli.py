"""Command-line front end: ``exflow {check-speed,check-psi,verify-lemma,flow,report}``.

Exit codes: 0 pass, 1 runtime or verdict failure, 2 usage or config error.
"""

import argparse
import csv
import datetime
import glob
import json
import os
import sys
import time

import numpy as np

from . import __version__
from ._accel import backend_name, set_threads
from .config import config_digest, load_config
from .flow import ConfigError, DiagnosticsRecord, run_flow
from .modulators import (
    DEFAULT_GRID,
    CONVEX_REGIME,
    INVERSE_CONCAVE_REGIME,
    DomainError,
    check_conditions,
    log_grid,
    make_modulator,
)
from .names import UnknownNameError
from .rng import log_uniform, make_rng
from .speed import ConeViolation, DualSpeed, euler_residual, make_speed
from .structure import (
    LEMMAS,
    check_convexity,
    check_dual_concavity,
    check_inverse_concave_general,
    check_inverse_concave_homog,
    run_lemma,
    sample_cone,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _emit(obj, out_dir, filename):
    text = json.dumps(obj, indent=2)
    print(text)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, filename), "w") as fh:
            fh.write(text + "\n")


# ---------------------------------------------------------------------------
# check-speed


def admissibility_report(f, trials, seed):
    """Sampled symmetry, monotonicity, homogeneity, positivity and Euler relation."""
    rng = make_rng(seed, 10)
    lam = sample_cone(f, rng, trials)
    val = f.value(lam)
    perm = np.argsort(rng.random(lam.shape), axis=1)
    sym = np.max(np.abs(f.value(np.take_along_axis(lam, perm, axis=1)) - val) / np.abs(val))
    scale = log_uniform(rng, 1e-2, 1e2, trials)
    hom = np.max(np.abs(f.value(lam * scale[:, None]) - scale * val) / np.abs(scale * val))
    grad = f.grad(lam)
    euler = np.max(euler_residual(f, lam) / np.abs(val))
    return {
        "symmetry": {"max_rel_err": float(sym), "pass": bool(sym <= 1e-12)},
        "monotonicity": {"min_gradient": float(grad.min()), "pass": bool(grad.min() > 0)},
        "homogeneity": {"max_rel_err": float(hom), "pass": bool(hom <= 1e-12)},
        "positivity": {"min_value": float(val.min()), "pass": bool(val.min() > 0)},
        "euler_relation": {"max_rel_err": float(euler), "pass": bool(euler <= 1e-10)},
    }


def cmd_check_speed(args):
    f = make_speed(args.name, args.dim)
    conv = check_convexity(f, args.trials, args.seed)
    gen = check_inverse_concave_general(f, args.trials, args.seed)
    hom = check_inverse_concave_homog(f, args.trials, args.seed)
    dual_ok = check_dual_concavity(f, min(args.trials, 2000), args.seed)
    rng = make_rng(args.seed, 11)
    mu = log_uniform(rng, 0.1, 10.0, (256, f.n))
    involution = float(np.max(np.abs(DualSpeed(DualSpeed(f)).value(mu) - f.value(mu)) / f.value(mu)))
    cond = admissibility_report(f, args.trials, args.seed)
    dual = {
        "involution_max_rel_err": involution,
        "dual_hessian_concave": dual_ok.passed,
        "agrees_with_inverse_concavity": dual_ok.passed == gen.passed,
    }
    dual["pass"] = bool(involution <= 1e-12 and dual["agrees_with_inverse_concavity"])
    report = {
        "speed": f.name,
        "dim": f.n,
        "cone": str(f.cone),
        "trials": args.trials,
        "seed": args.seed,
        "admissibility": cond,
        "convex": "pass" if conv.passed else "fail",
        "inverse_concave": "pass" if gen.passed and hom.passed else "fail",
        "criteria_agree": gen.passed == hom.passed and hom.extra["verdict_disagreement"] == 0,
        "convexity_report": conv.to_dict(),
        "inverse_concave_general": gen.to_dict(),
        "inverse_concave_homog": hom.to_dict(),
        "dual_self_test": dual,
    }
    _emit(report, args.out, "check_speed.json")
    ok = all(v["pass"] for v in cond.values()) and dual["pass"] and report["criteria_agree"]
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# check-psi


def cmd_check_psi(args):
    m = make_modulator(args.name)
    grid = log_grid(args.grid_min, args.grid_max, args.grid_points)
    rep = check_conditions(m, grid)
    out = rep.to_dict()
    values = m.psi(grid)
    out["sign_changing"] = bool(values.min() < 0 < values.max())
    out["satisfies_convex_set"] = rep.holds("i", "iia", "iiia")
    out["satisfies_inverse_concave_set"] = rep.holds("i", "iib", "iiib", "iv")
    out["regimes_available"] = [
        name
        for name, ok in (
            (CONVEX_REGIME, out["satisfies_convex_set"]),
            (INVERSE_CONCAVE_REGIME, out["satisfies_inverse_concave_set"]),
        )
        if ok
    ]
    _emit(out, args.out, "check_psi.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify-lemma


def cmd_verify_lemma(args):
    f = None
    if args.lemma not in ("scalar-iv", "scalar-convex"):
        f = make_speed(args.speed, args.dim)
    m = make_modulator(args.psi)
    rep = run_lemma(args.lemma, f, m, args.trials, args.seed, args.tol)
    out = {"lemma": args.lemma, "seed": args.seed, **rep.to_dict()}
    _emit(out, args.out, f"verify_{args.lemma}.json")
    return EXIT_OK if rep.passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# flow


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def cmd_flow(args):
    cfg = load_config(args.config)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    diag_path = os.path.join(out_dir, "diagnostics.csv")
    outputs = [diag_path]
    start, t0 = _now(), time.perf_counter()

    fh = open(diag_path, "w", newline="")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(DiagnosticsRecord.columns())
    count = [0]

    def observer(rec, state):
        writer.writerow(rec.row())
        if cfg.snapshot_every and count[0] % cfg.snapshot_every == 0:
            path = os.path.join(out_dir, f"state_{rec.step:08d}.csv")
            state.to_csv(path)
            outputs.append(path)
        count[0] += 1

    try:
        result = run_flow(cfg, observer)
    finally:
        fh.close()
    if result.state is not None:
        path = os.path.join(out_dir, f"state_{result.steps:08d}.csv")
        if path not in outputs:
            result.state.to_csv(path)
            outputs.append(path)

    verdicts = result.verdicts()
    status = "pass" if result.passed() else ("error" if result.error else "fail")
    manifest = {
        "tool": "exflow",
        "version": __version__,
        "command": "flow",
        "config_path": os.path.abspath(args.config),
        "config_digest": config_digest(cfg),
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "backend": backend_name(),
        "regime": result.regime,
        "beta": result.beta,
        "start_time": start,
        "end_time": _now(),
        "wall_seconds": round(time.perf_counter() - t0, 3),
        "steps": result.steps,
        "remeshes": result.remeshes,
        "records": len(result.records),
        "outputs": [os.path.relpath(p, out_dir) for p in outputs],
        "verdicts": verdicts,
        "u_drift_rate": result.u_drift_rate(),
        "status": status,
        "error_type": result.error_type,
        "error": result.error,
    }
    _emit(manifest, out_dir, "manifest.json")
    return EXIT_OK if status == "pass" else EXIT_FAIL


# ---------------------------------------------------------------------------
# report

REPORT_COLUMNS = ("run", "geometry", "psi", "regime", "status", "Z_nonnegative", "u_monotone", "ordering", "wall_seconds")


def cmd_report(args):
    paths = []
    for root in args.dirs:
        if os.path.isfile(root):
            paths.append(root)
        else:
            paths.extend(sorted(glob.glob(os.path.join(root, "**", "manifest.json"), recursive=True)))
    if not paths:
        raise UsageError("no manifest.json found")
    rows = []
    for p in paths:
        with open(p) as fh:
            man = json.load(fh)
        v = man.get("verdicts", {})
        rows.append(
            {
                "run": os.path.dirname(os.path.relpath(p)) or ".",
                "geometry": man["config"]["geometry"],
                "psi": man["config"]["psi"],
                "regime": man.get("regime"),
                "status": man.get("status"),
                "Z_nonnegative": v.get("Z_nonnegative"),
                "u_monotone": v.get("u_monotone"),
                "ordering": v.get("ordering"),
                "wall_seconds": man.get("wall_seconds"),
            }
        )
    widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) for c in REPORT_COLUMNS}
    print("  ".join(c.ljust(widths[c]) for c in REPORT_COLUMNS))
    for r in rows:
        print("  ".join(str(r[c]).ljust(widths[c]) for c in REPORT_COLUMNS))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "summary.csv"), "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    return EXIT_OK if all(r["status"] == "pass" for r in rows) else EXIT_FAIL


# ---------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", metavar="DIR", help="directory for all outputs")
    common.add_argument("--threads", type=int, default=None, help="bound on worker threads")

    p = argparse.ArgumentParser(prog="exflow", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"exflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("check-speed", parents=[common], help="classify a speed function")
    s.add_argument("name")
    s.add_argument("--dim", type=int, default=3)
    s.add_argument("--trials", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_check_speed)

    s = sub.add_parser("check-psi", parents=[common], help="grid check of a modulating function")
    s.add_argument("name")
    s.add_argument("--grid-min", type=float, default=DEFAULT_GRID[0])
    s.add_argument("--grid-max", type=float, default=DEFAULT_GRID[1])
    s.add_argument("--grid-points", type=int, default=DEFAULT_GRID[2])
    s.set_defaults(func=cmd_check_psi)

    s = sub.add_parser("verify-lemma", parents=[common], help="randomized lemma verification")
    s.add_argument("--lemma", choices=LEMMAS, required=True)
    s.add_argument("--speed", default="power_mean:r=1")
    s.add_argument("--psi", default="identity")
    s.add_argument("--dim", type=int, default=2)
    s.add_argument("--trials", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=None)
    s.set_defaults(func=cmd_verify_lemma)

    s = sub.add_parser("flow", parents=[common], help="run a flow from a config file")
    s.add_argument("config")
    s.set_defaults(func=cmd_flow)

    s = sub.add_parser("report", parents=[common], help="summarize flow manifests")
    s.add_argument("dirs", nargs="+")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = args.threads if args.threads else os.environ.get("EXFLOW_THREADS")
    try:
        if threads:
            set_threads(int(threads))
        if getattr(args, "trials", 1) < 1:
            raise UsageError("--trials must be positive")
        return args.func(args)
    except (UsageError, UnknownNameError, ConfigError, ValueError) as exc:
        if isinstance(exc, (ConeViolation, DomainError)):
            print(f"exflow: error: {exc}", file=sys.stderr)
            return EXIT_FAIL
        print(f"exflow: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # runtime failure
        print(f"exflow: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
