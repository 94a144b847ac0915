"""Command-line front end.

Exit codes: 0 success, 1 data or compute error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import io as rio
from .baselines import (BaselineConfig, mean_abs_offset, solve_closed_form,
                        solve_sequential)
from .model import (DimensionError, check_target, evaluate_linear,
                    evaluate_quadratic)
from .solver import ConfigError, SolverConfig, cardinality, solve
from .spectral import assemble, compute_spectra
from .synth import SpecError, SynthSpec, generate_model, generate_target

THREADS_ENV = "QUADRIG_THREADS"
DEFAULT_THRESHOLD = 1e-3

# every library error subclasses ValueError
_DATA_ERRORS = (ValueError, OSError)


def _fid(res):
    return float(res @ res)


def _metrics(model, target, w, threshold):
    rq = evaluate_quadratic(model, w) - target
    rl = evaluate_linear(model, w) - target
    return {
        "data_fidelity_quadratic": _fid(rq),
        "data_fidelity_linear": _fid(rl),
        "cardinality": cardinality(w, threshold),
        "cardinality_threshold": threshold,
        "target_sqnorm": float(target @ target),
    }


def _emit(doc, pretty):
    if pretty:
        for key, val in doc.items():
            if isinstance(val, float):
                val = f"{val:.6g}"
            print(f"{key:>24}: {val}")
    else:
        print(json.dumps(doc))


# --- subcommands -------------------------------------------------------------

def cmd_generate(args):
    if args.spec:
        try:
            fields = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise rio.FormatError(f"{args.spec}: line {exc.lineno}: {exc.msg}") from None
        try:
            spec = SynthSpec(**fields)
        except TypeError as exc:
            raise SpecError(f"{args.spec}: {exc}") from None
    else:
        spec = SynthSpec(n_vertices=args.n, n_blendshapes=args.m, n_pairs=args.pairs,
                         locality=args.locality, delta_scale=args.delta_scale,
                         corrective_scale=args.corrective_scale, sparsity=args.sparsity,
                         noise_std=args.noise, seed=args.seed)
    model = generate_model(spec)
    target, truth = generate_target(model, spec)
    rio.write_rig(model, args.out_model, sidecar=args.sidecar)
    rio.write_target(target, args.out_target)
    rio.write_weights(truth, args.out_truth)
    _emit({"n_vertices": model.n_vertices, "n_blendshapes": model.n_blendshapes,
           "n_pairs": model.n_pairs, "seed": spec.seed}, args.pretty)
    return 0


def _load_cache(model, path, quiet=False):
    """Spectra for ``model``, reusing ``path`` when it matches; returns (cache, seconds, reused)."""
    t0 = time.perf_counter()
    if path and Path(path).exists():
        try:
            cache = rio.read_cache(path, model)
            return cache, time.perf_counter() - t0, True
        except rio.StaleCacheError as exc:
            if not quiet:
                print(f"warning: {exc}; recomputing", file=sys.stderr)
    cache = compute_spectra(assemble(model))
    if path:
        rio.write_cache(cache, model, path)
    return cache, time.perf_counter() - t0, False


def _solver_config(args):
    if args.init == "zeros":
        init = "zeros"
    elif args.init == "constant":
        if args.init_value is None:
            raise ConfigError("--init constant requires --init-value")
        init = args.init_value
    else:
        if not args.weights:
            raise ConfigError("--init given requires --weights")
        init = rio.read_weights(args.weights)
    return SolverConfig(alpha=args.alpha, max_iterations=args.max_iters,
                        tolerance=args.eps, init=init)


def _fit_document(model, target, cache_info, config, report, threshold):
    doc = {
        "kind": "fit",
        "model_sha256": rio.model_hash(model).hex(),
        "config": config.describe(),
        "weights": report.weights,
        "objective_trace": report.objective_trace,
        "surrogate_gaps": report.surrogate_gaps,
        "iterations_run": report.iterations_run,
        "converged": report.converged,
        "notes": report.notes,
        "metrics": dict(_metrics(model, target, report.weights, threshold),
                        objective=report.final_objective,
                        data_fidelity=report.final_data_fidelity,
                        regularizer=report.final_regularizer),
        "timing": {"precompute_seconds": cache_info[0], "cache_reused": cache_info[1],
                   "solve_seconds": report.solve_seconds},
    }
    return doc


def cmd_fit(args):
    model = rio.read_rig(args.model)
    target = check_target(rio.read_target(args.target), model)
    config = _solver_config(args)
    cache, pre_s, reused = _load_cache(model, args.cache)
    report = solve(model, cache, target, config)
    doc = _fit_document(model, target, (pre_s, reused), config, report, args.threshold)
    if args.out_report:
        rio.write_report(doc, args.out_report)
    if args.out_weights:
        rio.write_weights(report.weights, args.out_weights)
    summary = {"objective": report.final_objective,
               "data_fidelity": report.final_data_fidelity,
               "iterations": report.iterations_run,
               "converged": report.converged,
               "cardinality": doc["metrics"]["cardinality"]}
    if not report.converged:
        summary["note"] = "iteration limit reached"
    _emit(summary, args.pretty)
    return 0


def cmd_precompute(args):
    model = rio.read_rig(args.model)
    t0 = time.perf_counter()
    cache = compute_spectra(assemble(model))
    elapsed = time.perf_counter() - t0
    rio.write_cache(cache, model, args.out_cache)
    _emit({"n_coords": cache.n_coords, "active_coords": int(np.count_nonzero(cache.active)),
           "seconds": elapsed}, args.pretty)
    return 0


def _baseline(model, target, method, alpha, clamp):
    t0 = time.perf_counter()
    if method == "closed-form":
        res = solve_closed_form(model, target, BaselineConfig(alpha=alpha, clamp=clamp))
        extra = {"raw_weights": res.raw, "alpha": alpha, "clamp": clamp}
    else:
        res = solve_sequential(model, target)
        metric = mean_abs_offset(model)
        extra = {"visit_order": [{"controller": i, "mean_abs_offset": float(metric[i])}
                                 for i in res.order],
                 "residual_norms": res.residual_norms}
    return res.weights, extra, time.perf_counter() - t0


def cmd_baseline(args):
    model = rio.read_rig(args.model)
    target = check_target(rio.read_target(args.target), model)
    w, extra, seconds = _baseline(model, target, args.method, args.alpha, args.clamp)
    doc = {"kind": "baseline", "method": args.method, "weights": w, **extra,
           "metrics": _metrics(model, target, w, args.threshold),
           "timing": {"solve_seconds": seconds}}
    if args.out_report:
        rio.write_report(doc, args.out_report)
    if args.out_weights:
        rio.write_weights(w, args.out_weights)
    _emit({"method": args.method, **{k: doc["metrics"][k] for k in
           ("data_fidelity_quadratic", "data_fidelity_linear", "cardinality")}},
          args.pretty)
    return 0


def _parse_alphas(text):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--alphas must be a comma-separated list of numbers, got {text!r}")
    if not vals:
        raise ConfigError("--alphas is empty")
    return vals


def compare_rows(model, target, truth, alphas, *, baseline_alpha=0.0, max_iterations=200,
                 tolerance=1e-8, threshold=DEFAULT_THRESHOLD):
    """Run the MM solver per alpha plus both baselines; one dict per row."""
    cache = compute_spectra(assemble(model))

    def row(method, alpha, w, iters, seconds):
        r = {"method": method, "alpha": alpha}
        r.update({k: v for k, v in _metrics(model, target, w, threshold).items()
                  if k in ("data_fidelity_quadratic", "data_fidelity_linear", "cardinality")})
        if truth is not None:
            r["weight_error_l2"] = float(np.linalg.norm(w - truth))
        r["iterations"] = iters
        r["seconds"] = seconds
        return r

    rows = []
    for a in alphas:
        rep = solve(model, cache, target,
                    SolverConfig(alpha=a, max_iterations=max_iterations, tolerance=tolerance))
        rows.append(row("mm", a, rep.weights, rep.iterations_run, rep.solve_seconds))
    w, _, sec = _baseline(model, target, "closed-form", baseline_alpha, True)
    rows.append(row("closed-form", baseline_alpha, w, None, sec))
    w, _, sec = _baseline(model, target, "sequential", None, None)
    rows.append(row("sequential", None, w, None, sec))
    return rows


def _table(rows):
    cols = list(rows[0].keys())
    def fmt(v):
        if v is None:
            return "-"
        return f"{v:.4g}" if isinstance(v, float) else str(v)
    cells = [[fmt(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(x[i]) for x in cells)) for i, c in enumerate(cols)]
    out = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    out += ["  ".join(x.rjust(w) for x, w in zip(line, widths)) for line in cells]
    return "\n".join(out)


def cmd_compare(args):
    model = rio.read_rig(args.model)
    target = check_target(rio.read_target(args.target), model)
    truth = None
    if args.truth:
        truth = rio.read_weights(args.truth)
        if truth.shape[0] != model.n_blendshapes:
            raise DimensionError(f"truth has {truth.shape[0]} weights, "
                                 f"expected {model.n_blendshapes}")
    alphas = _parse_alphas(args.alphas)
    rows = compare_rows(model, target, truth, alphas, baseline_alpha=args.baseline_alpha,
                        max_iterations=args.max_iters, tolerance=args.eps,
                        threshold=args.threshold)
    if args.out:
        rio.write_report({"kind": "compare", "model_sha256": rio.model_hash(model).hex(),
                          "cardinality_threshold": args.threshold, "rows": rows}, args.out)
    if args.pretty:
        print(_table(rows))
    else:
        for r in rows:
            print(json.dumps(r))
    return 0


def cmd_validate(args):
    problems = []
    try:
        model = rio.read_rig(args.model)
    except rio.FormatError as exc:
        model = None
        problems.append(str(exc))
    if model is not None and args.target:
        try:
            check_target(rio.read_target(args.target), model)
        except (DimensionError, rio.FormatError) as exc:
            problems.append(f"target: {exc}")
    for p in problems:
        print(p)
    if not problems:
        print("ok")
    return 1 if problems else 0


# --- parser ------------------------------------------------------------------

def _threads_default():
    val = os.environ.get(THREADS_ENV)
    if val is None:
        return None
    try:
        n = int(val)
    except ValueError:
        return None
    return n if n > 0 else None


def build_parser():
    p = argparse.ArgumentParser(prog="quadrig",
                                description="Inverse rig fitting for quadratic blendshape models.")
    p.add_argument("--threads", type=int, default=_threads_default(),
                   help=f"cap on BLAS/OpenMP threads (default: ${THREADS_ENV} or all cores)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--pretty", action="store_true", help="human-readable output")

    g = sub.add_parser("generate", help="write a seeded synthetic rig, target and truth")
    g.add_argument("--spec", help="JSON file with SynthSpec fields (overrides inline flags)")
    d = SynthSpec()
    g.add_argument("--n", type=int, default=d.n_vertices)
    g.add_argument("--m", type=int, default=d.n_blendshapes)
    g.add_argument("--pairs", type=int, default=d.n_pairs)
    g.add_argument("--locality", type=float, default=d.locality)
    g.add_argument("--delta-scale", type=float, default=d.delta_scale)
    g.add_argument("--corrective-scale", type=float, default=d.corrective_scale)
    g.add_argument("--sparsity", type=float, default=d.sparsity)
    g.add_argument("--noise", type=float, default=d.noise_std)
    g.add_argument("--seed", type=int, default=d.seed)
    g.add_argument("--out-model", required=True)
    g.add_argument("--out-target", required=True)
    g.add_argument("--out-truth", required=True)
    g.add_argument("--sidecar", action="store_true", help="store rig arrays in a binary sidecar")
    common(g)
    g.set_defaults(func=cmd_generate)

    pc = sub.add_parser("precompute", help="compute and store the spectral cache")
    pc.add_argument("--model", required=True)
    pc.add_argument("--out-cache", required=True)
    common(pc)
    pc.set_defaults(func=cmd_precompute)

    f = sub.add_parser("fit", help="run the MM solver")
    f.add_argument("--model", required=True)
    f.add_argument("--target", required=True)
    f.add_argument("--alpha", type=float, default=0.0)
    f.add_argument("--max-iters", type=int, default=200)
    f.add_argument("--eps", type=float, default=1e-8)
    f.add_argument("--init", choices=("zeros", "constant", "given"), default="zeros")
    f.add_argument("--init-value", type=float, help="constant for --init constant")
    f.add_argument("--weights", help="weights file for --init given")
    f.add_argument("--cache", help="spectral cache path; reused when it matches the model")
    f.add_argument("--out-report")
    f.add_argument("--out-weights")
    f.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD,
                   help="activation threshold for cardinality")
    common(f)
    f.set_defaults(func=cmd_fit)

    b = sub.add_parser("baseline", help="run a linear-rig baseline")
    b.add_argument("--method", choices=("closed-form", "sequential"), required=True)
    b.add_argument("--model", required=True)
    b.add_argument("--target", required=True)
    b.add_argument("--alpha", type=float, default=0.0)
    b.add_argument("--clamp", action=argparse.BooleanOptionalAction, default=True)
    b.add_argument("--out-report")
    b.add_argument("--out-weights")
    b.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    common(b)
    b.set_defaults(func=cmd_baseline)

    c = sub.add_parser("compare", help="MM solver against both baselines")
    c.add_argument("--model", required=True)
    c.add_argument("--target", required=True)
    c.add_argument("--truth")
    c.add_argument("--alphas", default="0")
    c.add_argument("--baseline-alpha", type=float, default=0.0)
    c.add_argument("--max-iters", type=int, default=200)
    c.add_argument("--eps", type=float, default=1e-8)
    c.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    c.add_argument("--out")
    common(c)
    c.set_defaults(func=cmd_compare)

    v = sub.add_parser("validate", help="check a rig (and optionally a target) file")
    v.add_argument("--model", required=True)
    v.add_argument("--target")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
