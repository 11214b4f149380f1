"""Command-line surface: calibrate | solve | fit | build-lut | softmax | simulate | bench | mse-report.

JSON results go to standard output; delimited data goes to named CSV paths, and
each report command renders a PNG figure next to its CSV (suppress with
--no-plot). EXAQ_SEED provides a global seed fallback for every command that
samples. Commands exit 0 only if their postconditions held.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .clip_optimizer import (
    DEFAULT_CLIP_MODELS,
    BoundarySolutionError,
    LinearClipModel,
    fit_linear_model,
    predict_clip,
    simulate_empirical_clip,
    solve_optimal_clip,
)
from .gaussian_mse import GaussianParams, mse_total
from .lut_engine import DEFAULT_PACK_WIDTH, build_bundle, build_sum_lut, build_exp_lut, load_lut, save_lut
from .quantizer import CalibStats, QuantSpec, calibrate, make_spec_exaq, make_spec_naive, shift_by_max
from .softmax_kernels import (
    output_mse,
    softmax_exaq,
    softmax_quantized_scalar,
    softmax_reference,
)
from .tensor_io import TensorF32, load_tensor, save_tensor

PUBLISHED_SOFTMAX_SPEEDUP = "36.9% (accelerator-specific figure, for context only)"


def _env_seed(value):
    if value is not None:
        return int(value)
    return int(os.environ.get("EXAQ_SEED", "0"))


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _model_from_json(d) -> LinearClipModel:
    residual = d.get("residual_max")
    return LinearClipModel(
        bits=int(d["bits"]),
        slope=float(d["slope"]),
        intercept=float(d["intercept"]),
        sigma_lo=float(d["sigma_lo"]),
        sigma_hi=float(d["sigma_hi"]),
        residual_max=float("nan") if residual is None else float(residual),
    )


def _model_to_json(m: LinearClipModel) -> dict:
    return {
        "bits": m.bits,
        "slope": m.slope,
        "intercept": m.intercept,
        "sigma_lo": m.sigma_lo,
        "sigma_hi": m.sigma_hi,
        "residual_max": None if math.isnan(m.residual_max) else m.residual_max,
    }


def cmd_calibrate(args) -> int:
    in_dir = Path(args.input_dir)
    files = sorted(p for p in in_dir.iterdir() if p.is_file()) if in_dir.is_dir() else []
    if not files:
        raise ValueError(f"no tensor files in {args.input_dir}")
    tensors = [load_tensor(p) for p in files]
    stats = calibrate(tensors)

    # per-tensor sigma rows feed the histogram figure
    per_tensor = []
    for p, t in zip(files, tensors):
        shifted = np.vstack([shift_by_max(r) for r in t.rows()])
        per_tensor.append((p.name, float(shifted.std()), float(shifted.mean()), float(shifted.min())))

    payload = {
        "sigma": stats.sigma,
        "mu": stats.mu,
        "min_avg": stats.min_avg,
        "n_tensors": stats.n_tensors,
    }
    Path(args.out_stats).write_text(json.dumps(payload, indent=2) + "\n")

    csv_path = args.csv or (str(Path(args.out_stats).with_suffix("")) + "_sigmas.csv")
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["tensor", "sigma", "mu", "min"])
        w.writerows(per_tensor)
    if not args.no_plot:
        from .plots import plot_sigma_histogram

        plot_sigma_histogram([r[1] for r in per_tensor], str(Path(csv_path).with_suffix(".png")))
    _emit(payload)
    return 0


def cmd_solve(args) -> int:
    sol = solve_optimal_clip(GaussianParams(args.mu, args.sigma), args.bits,
                             grid_hi=args.grid_hi)
    _emit(
        {
            "mu": args.mu,
            "sigma": args.sigma,
            "bits": args.bits,
            "c_star": sol.c_star,
            "mse_at_min": sol.mse_at_min,
            "method": sol.method,
            "grid_lo": sol.grid_lo,
            "grid_hi": sol.grid_hi,
            "unimodal": sol.unimodal,
        }
    )
    return 0


def cmd_fit(args) -> int:
    if args.points < 8:
        raise ValueError("--points must be >= 8")
    model = fit_linear_model(args.bits, args.lo, args.hi, args.points, mu=args.mu,
                             threads=args.threads)
    payload = _model_to_json(model)
    payload.update({"n_points": args.points, "mu": args.mu})
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    if args.csv:
        sigmas = np.linspace(args.lo, args.hi, args.points)
        cs = [solve_optimal_clip(GaussianParams(args.mu, s), args.bits).c_star for s in sigmas]
        with open(args.csv, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["sigma", "c_star", "fit"])
            for s, c in zip(sigmas, cs):
                w.writerow([f"{s:.6g}", f"{c:.8g}", f"{model.slope * s + model.intercept:.8g}"])
        if not args.no_plot:
            from .plots import plot_fit

            plot_fit(sigmas, cs, model, str(Path(args.csv).with_suffix(".png")))
    _emit(payload)
    return 0


def cmd_build_lut(args) -> int:
    stats_d = json.loads(Path(args.stats).read_text())
    stats = CalibStats(
        sigma=stats_d["sigma"],
        mu=stats_d["mu"],
        min_avg=stats_d["min_avg"],
        n_tensors=stats_d["n_tensors"],
    )
    P = args.pack or DEFAULT_PACK_WIDTH[args.bits]
    if args.bits * P > 12:
        raise ValueError(f"pack width {P} at {args.bits} bits exceeds the 12-bit key limit")

    if args.mode == "naive":
        spec = make_spec_naive(stats, args.bits)
    elif args.clip is not None:
        spec = QuantSpec.from_clip(args.bits, args.clip, mode="exaq")
    else:
        if args.model:
            model = _model_from_json(json.loads(Path(args.model).read_text()))
        elif args.bits in DEFAULT_CLIP_MODELS:
            model = DEFAULT_CLIP_MODELS[args.bits]
        else:
            raise ValueError(
                f"no built-in clip model for {args.bits}-bit; pass --model or --clip"
            )
        spec = make_spec_exaq(stats, args.bits, model)

    exp_lut = build_exp_lut(spec)
    sum_lut = build_sum_lut(spec, P)
    save_lut(spec, exp_lut, sum_lut, args.out)
    _emit(
        {
            "out": args.out,
            "bits": spec.bits,
            "clip": spec.clip,
            "delta": spec.delta,
            "mode": spec.mode,
            "sigma": stats.sigma,
            "pack_width": P,
            "exp_entries": int(exp_lut.entries.size),
            "sum_entries": int(sum_lut.entries.size),
        }
    )
    return 0


def _run_kernel(kernel, row, bundle):
    if kernel == "reference":
        return softmax_reference(row)
    if kernel in ("exaq", "naive"):
        return softmax_exaq(row, bundle.spec, bundle.exp_lut, bundle.sum_lut)
    if kernel == "scalar-oracle":
        return softmax_quantized_scalar(row, bundle.spec)
    raise ValueError(f"unknown kernel {kernel!r}")


def cmd_softmax(args) -> int:
    tensor = load_tensor(args.tensor)
    bundle = None
    if args.kernel != "reference":
        bundle = load_lut(args.lut)
        if args.kernel in ("exaq", "naive") and bundle.spec.mode != args.kernel:
            raise ValueError(
                f"kernel {args.kernel!r} needs a LUT bundle in that mode, "
                f"got {bundle.spec.mode!r}"
            )
    rows = list(tensor.rows())
    if args.threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.threads) as ex:
            results = list(ex.map(lambda r: _run_kernel(args.kernel, r, bundle), rows))
    else:
        results = [_run_kernel(args.kernel, r, bundle) for r in rows]

    probs = np.vstack([r.probs for r in results]).astype(np.float32)
    out_dims = tensor.dims if len(tensor.dims) == 2 else (tensor.dims[0],)
    save_tensor(TensorF32(out_dims, probs.reshape(-1)), args.out)

    sums = [float(np.sum(r.probs)) for r in results]
    ok = all(abs(s - 1.0) <= 1e-6 for s in sums)
    _emit(
        {
            "kernel": args.kernel,
            "rows": len(results),
            "cols": len(rows[0]),
            "out": args.out,
            "exp_calls": sum(r.exp_calls for r in results),
            "accum_iters": sum(r.accum_iters for r in results),
            "lut_lookups": sum(r.lut_lookups for r in results),
            "prob_sum_max_err": max(abs(s - 1.0) for s in sums),
            "denom_first_row": results[0].denom,
        }
    )
    return 0 if ok else 1


def cmd_simulate(args) -> int:
    if args.samples <= 0:
        raise ValueError("--samples must be positive")
    seed = _env_seed(args.seed)
    n = 1000 if args.paper_parity else args.samples
    g = GaussianParams(args.mu, args.sigma)
    sol = solve_optimal_clip(g, args.bits)
    grid = -np.exp(
        np.linspace(math.log(1e-3), math.log(-(g.mu - 10 * g.sigma)), args.grid_points)
    )[::-1]
    c_emp, curve = simulate_empirical_clip(g, args.bits, n, seed, grid)
    analytic = [(float(c), mse_total(g, float(c), args.bits).total) for c in grid]

    with open(args.csv, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["clip", "analytic_mse", "empirical_mse"])
        for (c, emp), (_, ana) in zip(curve, analytic):
            w.writerow([f"{c:.8g}", f"{ana:.10g}", f"{emp:.10g}"])
    if not args.no_plot:
        from .plots import plot_clip_curves

        plot_clip_curves(
            curve,
            sol.c_star,
            c_emp,
            analytic,
            str(Path(args.csv).with_suffix(".png")),
            title=f"sigma={args.sigma} bits={args.bits} n={n}",
        )
    _emit(
        {
            "mu": args.mu,
            "sigma": args.sigma,
            "bits": args.bits,
            "samples": n,
            "seed": seed,
            "c_star_analytic": sol.c_star,
            "c_empirical": c_emp,
            "gap": abs(sol.c_star - c_emp),
            "csv": args.csv,
        }
    )
    return 0


def cmd_bench(args) -> int:
    if args.reps < 3:
        raise ValueError("--reps must be >= 3 (after warmup)")
    if args.rows < 1 or args.cols < 2:
        raise ValueError("need at least 1 row and 2 columns")
    from .bench_kernels import exaq_softmax_rows, reference_softmax_rows, warm_up

    seed = _env_seed(args.seed)
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, args.sigma, size=(args.rows, args.cols))
    x -= x.max(axis=1, keepdims=True)

    model = DEFAULT_CLIP_MODELS.get(args.bits)
    clip = predict_clip(model, args.sigma).clip if model else -8.0 * args.sigma
    spec = QuantSpec.from_clip(args.bits, clip)
    P = DEFAULT_PACK_WIDTH[args.bits]
    bundle = build_bundle(spec, P)
    exp64 = bundle.exp_lut.entries.astype(np.float64)
    sum64 = bundle.sum_lut.entries.astype(np.float64)

    warm_up()
    out = np.empty_like(x)
    codes = np.empty(args.cols, np.uint8)
    for _ in range(args.warmup):
        reference_softmax_rows(x, out)
        exaq_softmax_rows(x, exp64, sum64, spec.clip, 1.0 / spec.delta,
                          spec.n_levels, spec.bits, P, codes, out)

    def _time(fn):
        per_rep = []
        for _ in range(args.reps):
            t0 = time.perf_counter_ns()
            fn()
            per_rep.append((time.perf_counter_ns() - t0) / args.rows)
        return statistics.median(per_rep)

    ns_ref = _time(lambda: reference_softmax_rows(x, out))
    ns_exaq = _time(
        lambda: exaq_softmax_rows(x, exp64, sum64, spec.clip, 1.0 / spec.delta,
                                  spec.n_levels, spec.bits, P, codes, out)
    )

    n = args.cols
    accum_exaq = n // P + (1 if n % P else 0)
    report = {
        "rows": args.rows,
        "cols": args.cols,
        "bits": args.bits,
        "pack_width": P,
        "repetitions": args.reps,
        "warmup": args.warmup,
        "reference": {
            "kernel": "reference",
            "ns_per_row": ns_ref,
            "exp_calls": n,
            "accum_iters": n,
            "lut_lookups": 0,
        },
        "exaq": {
            "kernel": "exaq",
            "ns_per_row": ns_exaq,
            "exp_calls": 0,
            "accum_iters": accum_exaq,
            "lut_lookups": n + accum_exaq,
        },
        "speedup_vs_reference": ns_ref / ns_exaq,
        "accum_iters_ratio": n / accum_exaq,
        "published_softmax_speedup": PUBLISHED_SOFTMAX_SPEEDUP,
    }
    _emit(report)
    return 0 if ns_exaq > 0 and ns_ref > 0 else 1


def cmd_mse_report(args) -> int:
    in_dir = Path(args.tensor_dir)
    files = sorted(p for p in in_dir.iterdir() if p.is_file()) if in_dir.is_dir() else []
    if not files:
        raise ValueError(f"no tensor files in {args.tensor_dir}")
    bundles = {"exaq": load_lut(args.lut_exaq), "naive": load_lut(args.lut_naive)}

    rows = []
    for p in files:
        tensor = load_tensor(p)
        acc = {name: {"exp": [], "out": []} for name in bundles}
        for row in tensor.rows():
            ref = softmax_reference(row)
            e_true = np.exp((row - row.max()).astype(np.float64))
            for name, b in bundles.items():
                res = softmax_exaq(row, b.spec, b.exp_lut, b.sum_lut)
                acc[name]["exp"].append(float(np.mean((res.probs * res.denom - e_true) ** 2)))
                acc[name]["out"].append(output_mse(res.probs, ref.probs))
        for name in bundles:
            rows.append(
                {
                    "tensor": p.name,
                    "kernel": name,
                    "exp_mse": float(np.mean(acc[name]["exp"])),
                    "output_mse": float(np.mean(acc[name]["out"])),
                }
            )

    with open(args.csv, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["tensor", "kernel", "exp_mse", "output_mse"])
        w.writeheader()
        w.writerows(rows)
    if not args.no_plot:
        from .plots import plot_mse_report

        plot_mse_report(rows, str(Path(args.csv).with_suffix(".png")))

    mean_exp = {
        k: float(np.mean([r["exp_mse"] for r in rows if r["kernel"] == k])) for k in bundles
    }
    mean_out = {
        k: float(np.mean([r["output_mse"] for r in rows if r["kernel"] == k])) for k in bundles
    }
    _emit(
        {
            "tensors": len(files),
            "csv": args.csv,
            "mean_exp_mse": mean_exp,
            "mean_output_mse": mean_out,
        }
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="exaq", description=__doc__)
    ap.add_argument("--version", action="version", version=f"exaq {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="statistics over a directory of tensor files")
    p.add_argument("input_dir")
    p.add_argument("out_stats", help="path for the stats JSON")
    p.add_argument("--csv", help="per-tensor sigma CSV (default <out>_sigmas.csv)")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("solve", help="optimal clipping value for a Gaussian model")
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--bits", type=int, choices=(2, 3, 4), required=True)
    p.add_argument("--grid-hi", type=float, default=-1e-3,
                   help="upper end of the clip search window")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("fit", help="fit the linear sigma->clip model")
    p.add_argument("--bits", type=int, choices=(2, 3, 4), required=True)
    p.add_argument("--lo", type=float, default=0.9)
    p.add_argument("--hi", type=float, default=3.4)
    p.add_argument("--points", type=int, default=26)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--out", help="write the model JSON here as well as stdout")
    p.add_argument("--csv", help="write (sigma, c_star, fit) rows here")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(fn=cmd_fit)

    p = sub.add_parser("build-lut", help="build and save a LUT bundle from stats")
    p.add_argument("stats", help="stats JSON from calibrate")
    p.add_argument("--bits", type=int, choices=(2, 3, 4), required=True)
    p.add_argument("--mode", choices=("exaq", "naive"), default="exaq")
    p.add_argument("--pack", type=int, help="codes per sum-table key (default per bits)")
    p.add_argument("--model", help="clip model JSON (default: built-in for 2/3-bit)")
    p.add_argument("--clip", type=float, help="explicit clipping value override")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_build_lut)

    p = sub.add_parser("softmax", help="run a softmax kernel over a tensor")
    p.add_argument("tensor")
    p.add_argument("lut", nargs="?", help="LUT bundle (unused for --kernel reference)")
    p.add_argument("--kernel", choices=("reference", "exaq", "naive", "scalar-oracle"),
                   default="exaq")
    p.add_argument("--out", required=True, help="output tensor path")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=cmd_softmax)

    p = sub.add_parser("simulate", help="analytic vs empirical MSE curves over clips")
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--bits", type=int, choices=(2, 3, 4), required=True)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--paper-parity", action="store_true",
                   help="use 1000 samples regardless of --samples")
    p.add_argument("--seed", type=int)
    p.add_argument("--grid-points", type=int, default=200)
    p.add_argument("--csv", required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("bench", help="wall-clock reference vs exaq kernels")
    p.add_argument("--rows", type=int, default=1024)
    p.add_argument("--cols", type=int, default=4096)
    p.add_argument("--bits", type=int, choices=(2, 3, 4), default=2)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("mse-report", help="exp-domain and output MSE, exaq vs naive")
    p.add_argument("tensor_dir")
    p.add_argument("lut_exaq")
    p.add_argument("lut_naive")
    p.add_argument("--csv", required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(fn=cmd_mse_report)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, BoundarySolutionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
