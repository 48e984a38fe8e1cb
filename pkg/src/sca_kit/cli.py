"""``sca-kit generate|run|race``: instances, solver runs and side-by-side races.

A spec file is a JSON object::

    {"app": "lasso",
     "instance": {"n": 200, "k": 400, "density": 0.1, "seed": 0},
     "solvers": [{"solver": "stela"}, {"solver": "flexa", "d": 0.01}],
     "repetitions": 20, "tol": 1e-6, "max_iter": 2000}

``instance`` may instead reference files written by ``generate``, and a
bare instance header is accepted as a spec on its own. Repetition ``r``
uses seed ``seed + r``.
"""

import argparse
import json
import logging
import os
from pathlib import Path
import statistics
import sys

import numpy as np

from . import io as sio
from .ee import ee_kkt_residual, ee_solve
from .exceptions import ScaError
from .lasso import basis_pursuit_solve, bp_random_instance, flexa_baseline, stela_solve
from .mimo import bc_solve

log = logging.getLogger("sca_kit")

EXIT_OK, EXIT_TOL, EXIT_INPUT = 0, 1, 2

APPS = ("lasso", "bp", "mimo-bc", "ee")

DEFAULT_INSTANCE = {
    "lasso": {"n": 200, "k": 400, "density": 0.1, "noise_var": 1e-4, "mu_ratio": 0.1},
    "bp": {"n": 2, "k": 4, "nnz": 1},
    "mimo-bc": {"K": 5, "nT": 2, "nR": 2, "P_dB": 10.0},
    "ee": {"K": 4, "M": 8, "epsilon": 0.01},
}

DEFAULT_TOL = {"lasso": 1e-6, "bp": 1e-6, "mimo-bc": 1e-4, "ee": 1e-14}
DEFAULT_MAX_ITER = {"lasso": 2000, "bp": 50, "mimo-bc": 500, "ee": 200}

DEFAULT_SOLVERS = {
    "lasso": [{"solver": "stela"}],
    "bp": [{"solver": "augmented_lagrangian"}],
    "mimo-bc": [{"solver": "exact"}],
    "ee": [{"solver": "dinkelbach"}],
}

RACE_SOLVERS = {
    "lasso": [{"solver": "stela"}, {"solver": "flexa", "d": 1e-2}],
    "mimo-bc": [{"solver": "exact"}, {"solver": "fixed"}],
    "ee": [{"solver": "dinkelbach", "formula": "literal"},
           {"solver": "dinkelbach", "formula": "rederived"}],
}

# keyword options each solver accepts in a spec's "solvers" list
SOLVER_OPTIONS = {
    ("lasso", "stela"): {"resync_every"},
    ("lasso", "flexa"): {"gamma0", "d", "tau"},
    ("bp", "augmented_lagrangian"): {"c_max", "inner_tol", "inner_max_iter"},
    ("mimo-bc", "exact"): {"tau", "d", "gamma0"},
    ("mimo-bc", "fixed"): {"tau", "d", "gamma0"},
    ("mimo-bc", "decreasing"): {"tau", "d", "gamma0"},
    ("ee", "dinkelbach"): {"formula", "alpha", "beta", "dinkelbach_tol"},
}


class InputError(ValueError):
    pass


# instances

def build_instance(app, header, base, seed):
    if app == "lasso":
        return sio.lasso_from_header(header, base, seed)
    if app == "bp":
        if "matrix_file" in header:
            return sio.load_matrix_pair(header, base)
        A, b, _ = bp_random_instance(int(header.get("n", 2)), int(header.get("k", 4)),
                                     int(header.get("nnz", 1)),
                                     seed=int(header.get("seed", 0) if seed is None else seed))
        return A, b
    if app == "mimo-bc":
        return sio.mimo_from_header(header, base, seed)
    return sio.ee_from_header(header, base, seed)


def save_instance(app, inst, path):
    if app == "lasso":
        return sio.save_lasso(inst, path)
    if app == "bp":
        A, b = inst
        stem = path.with_suffix("")
        sio.write_array(f"{stem}_A.bin", A)
        sio.write_array(f"{stem}_b.bin", b)
        path.write_text(json.dumps({"n": A.shape[0], "k": A.shape[1],
                                    "matrix_file": f"{stem.name}_A.bin",
                                    "vector_file": f"{stem.name}_b.bin"}, indent=2,
                                   sort_keys=True) + "\n")
        return path
    if app == "mimo-bc":
        return sio.save_mimo(inst, path)
    return sio.save_ee(inst, path)


# solvers

def _label(cfg):
    extra = ",".join(f"{k}={v}" for k, v in sorted(cfg.items()) if k != "solver")
    return f"{cfg['solver']}({extra})" if extra else cfg["solver"]


def run_solver(app, inst, cfg, tol, max_iter, workers):
    """Returns ``(trace, extras)`` for one solver configuration."""
    name = cfg.get("solver")
    opts = {k: v for k, v in cfg.items() if k != "solver"}
    if app == "lasso":
        if name == "stela":
            _, trace = stela_solve(inst, tol=tol, max_iter=max_iter, workers=workers, **opts)
        elif name == "flexa":
            _, trace = flexa_baseline(inst, tol=tol, max_iter=max_iter, **opts)
        else:
            raise InputError(f"unknown lasso solver {name!r}")
        return trace, {}
    if app == "bp":
        if name != "augmented_lagrangian":
            raise InputError(f"unknown bp solver {name!r}")
        A, b = inst
        x, _, info = basis_pursuit_solve(A, b, max_outer=max_iter, lam_tol=tol,
                                         raise_on_failure=False, **opts)
        return info["trace"], {"residual": info["residual"], "l1": float(np.abs(x).sum())}
    if app == "mimo-bc":
        if name not in ("exact", "fixed", "decreasing"):
            raise InputError(f"unknown mimo-bc solver {name!r}")
        Q, trace = bc_solve(inst, step=name, tol=tol, max_iter=max_iter, workers=workers, **opts)
        return trace, {"sum_rate": trace.columns["sum_rate"][-1]}
    if name != "dinkelbach":
        raise InputError(f"unknown ee solver {name!r}")
    p, trace = ee_solve(inst, tol=tol, max_iter=max_iter, workers=workers, **opts)
    ee = trace.columns["ee"]
    return trace, {"ee": ee[-1], "kkt_residual": ee_kkt_residual(p, inst),
                   "monotone": bool(np.all(np.diff(ee) >= -1e-12)),
                   "closed_form_fallbacks": trace.inner_fallbacks}


def summarize(trace, tol):
    hit = trace.first_below(tol)
    at = next((r for r in trace.records if r.t == hit), None)
    return {
        "iterations": trace.iterations,
        "reason": trace.reason,
        "converged": trace.converged,
        "seconds": trace.final.seconds,
        "seconds_to_tol": None if at is None else at.seconds,
        "iterations_to_tol": hit,
        "final_objective": trace.final.objective,
        "final_error": trace.final.error,
        "flags": [m for _, m in trace.flags],
    }


def _median(values):
    values = [v for v in values if v is not None]
    return statistics.median(values) if values else None


def aggregate(reps):
    out = {}
    for label in reps[0]["runs"]:
        runs = [r["runs"][label] for r in reps]
        out[label] = {
            "median_iterations": _median([r["iterations"] for r in runs]),
            "median_seconds_to_tol": _median([r["seconds_to_tol"] for r in runs]),
            "median_final_objective": _median([r["final_objective"] for r in runs]),
            "median_final_error": _median([r["final_error"] for r in runs]),
            "converged": sum(r["converged"] for r in runs),
            "repetitions": len(runs),
        }
    return out


def race_table(traces_by_label):
    """Median error across repetitions at each iteration; stopped runs hold
    their final value."""
    labels = list(traces_by_label)
    length = max(len(t.records) for ts in traces_by_label.values() for t in ts)
    width = max(14, *(len(lbl) + 2 for lbl in labels))
    lines = ["iter".rjust(6) + "".join(lbl.rjust(width) for lbl in labels)]
    for i in range(length):
        row = str(i).rjust(6)
        for lbl in labels:
            errs = [t.errors[min(i, len(t.records) - 1)] for t in traces_by_label[lbl]]
            row += f"{statistics.median(errs):.6e}".rjust(width)
        lines.append(row)
    return "\n".join(lines)


# spec handling

def load_spec(args):
    spec, base = {}, Path(".")
    if args.spec:
        path = Path(args.spec)
        spec = sio.load_json(path)
        base = path.parent
    app = args.app or spec.get("app")
    if app not in APPS:
        raise InputError(f"--app must be one of {', '.join(APPS)} (got {app!r})")
    if "instance" in spec:
        header = dict(spec["instance"])
    elif args.spec and "solvers" not in spec and "repetitions" not in spec:
        header = {k: v for k, v in spec.items() if k != "app"}
    else:
        header = dict(DEFAULT_INSTANCE[app])
    if not isinstance(header, dict):
        raise InputError("instance must be a JSON object")
    seed = args.seed if args.seed is not None else int(spec.get("seed", header.get("seed", 0)))
    reps = int(spec.get("repetitions", 1))
    if reps < 1:
        raise InputError("repetitions must be at least 1")
    tol = args.tol if args.tol is not None else float(spec.get("tol", DEFAULT_TOL[app]))
    max_iter = args.max_iter if args.max_iter is not None else int(
        spec.get("max_iter", DEFAULT_MAX_ITER[app]))
    solvers = spec.get("solvers")
    if args.command == "race" and not solvers:
        if app not in RACE_SOLVERS:
            raise InputError(f"no default race for {app}; list solvers in the spec")
        solvers = RACE_SOLVERS[app]
    solvers = solvers or DEFAULT_SOLVERS[app]
    if any(not isinstance(s, dict) or "solver" not in s for s in solvers):
        raise InputError("each solver entry needs a 'solver' field")
    for s in solvers:
        allowed = SOLVER_OPTIONS.get((app, s["solver"]))
        if allowed is None:
            raise InputError(f"unknown {app} solver {s['solver']!r}")
        unknown = set(s) - allowed - {"solver"}
        if unknown:
            raise InputError(f"{s['solver']} does not accept {', '.join(sorted(unknown))}")
    files_given = any(k in header for k in ("matrix_file", "channel_file", "w"))
    return {"app": app, "header": header, "base": base, "seed": seed, "reps": reps,
            "tol": tol, "max_iter": max_iter, "solvers": solvers, "files": files_given}


def _workers(args):
    if args.workers is not None:
        w = args.workers
    else:
        try:
            w = int(os.environ.get("SCA_KIT_WORKERS", "1"))
        except ValueError as exc:
            raise InputError("SCA_KIT_WORKERS must be an integer") from exc
    if w < 1:
        raise InputError("worker count must be positive")
    return w


def _instances(cfg):
    out = []
    for r in range(cfg["reps"]):
        seed = None if cfg["files"] else cfg["seed"] + r
        out.append((cfg["seed"] + r, build_instance(cfg["app"], cfg["header"], cfg["base"], seed)))
    return out


def cmd_generate(cfg, out_dir):
    written = []
    for seed, inst in _instances(cfg):
        path = out_dir / f"{cfg['app']}_seed{seed}.json"
        save_instance(cfg["app"], inst, path)
        written.append(str(path))
        print(f"{path}  sha256={sio.instance_hash(inst)}")
    return EXIT_OK, {"written": written}


def cmd_run(cfg, out_dir, workers, race=False):
    reps = []
    traces = {}
    for seed, inst in cfg["instances"]:
        h = sio.instance_hash(inst)
        rep = {"seed": seed, "instance_hash": h, "runs": {}}
        for solver in cfg["solvers"]:
            label = _label(solver)
            trace, extras = run_solver(cfg["app"], inst, solver, cfg["tol"], cfg["max_iter"], workers)
            fname = f"{cfg['app']}_seed{seed}_{label.replace('=', '').replace(',', '_')}.csv"
            fname = "".join(c if c.isalnum() or c in "._-" else "_" for c in fname)
            trace.to_csv(out_dir / fname)
            summary = summarize(trace, cfg["tol"])
            summary.update(extras, trace_file=fname, instance_hash=h)
            rep["runs"][label] = summary
            traces.setdefault(label, []).append(trace)
            print(f"seed {seed:>4}  {label:<32} {trace.reason:<22} iters {trace.iterations:>5}  "
                  f"error {trace.final.error:.3e}")
        reps.append(rep)
    report = {"app": cfg["app"], "tol": cfg["tol"], "max_iter": cfg["max_iter"],
              "workers": workers, "repetitions": reps, "aggregate": aggregate(reps)}
    report["all_converged"] = all(r["converged"] for rep in reps for r in rep["runs"].values())
    if race:
        table = race_table(traces)
        (out_dir / "race_table.txt").write_text(table + "\n")
        print(table)
    name = "race_report.json" if race else "report.json"
    (out_dir / name).write_text(json.dumps(report, indent=2, default=_jsonable) + "\n")
    return (EXIT_OK if report["all_converged"] else EXIT_TOL), report


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    raise TypeError(f"not serializable: {type(v).__name__}")


def build_parser():
    parser = argparse.ArgumentParser(prog="sca-kit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("generate", "write instance files"),
                        ("run", "solve instances and write traces plus a JSON report"),
                        ("race", "run several solvers on identical instances")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--app", choices=APPS)
        p.add_argument("--spec", help="experiment or instance JSON")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", default=".")
        p.add_argument("--workers", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--max-iter", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_spec(args)
        workers = _workers(args)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "generate":
            return cmd_generate(cfg, out_dir)[0]
        # build and validate every instance before solving anything
        cfg["instances"] = _instances(cfg)
    except (InputError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        return cmd_run(cfg, out_dir, workers, race=args.command == "race")[0]
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ScaError, ArithmeticError) as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_TOL
    except (ValueError, TypeError) as exc:
        # solver errors are ScaError; what is left is a rejected option value
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
