"""Command-line pipeline.

Subcommands:

    simulate     build a dataset of limited-angle acquisitions
    reconstruct  complete each record's sinogram with the guided sampler
    eval         score reconstructions against the stored ground truth
    sweep        grid over beta and noise-estimate error, with heatmaps

Every subcommand takes ``--config FILE`` (JSON whose keys mirror the long
flags; explicit flags override the file) and is byte-reproducible from
(config, seed): outputs carry no timestamps, and per-record seeds are
derived from the base seed and the record index, so worker count and
execution order do not change results.

Exit codes: 0 success, 2 configuration error, 3 I/O or file-format
error, 4 numeric failure (non-finite values in a pipeline product).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import os
import sys

import numpy as np

from . import arrayio, metrics, mrsde, phantoms, rectify, score_models, tomo
from .arrayio import ArrayFormatError, write_png
from .tomo import AngleMask, Sinogram

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

SWEEP_BETAS = (0.0, 0.25, 0.5, 0.75, 1.0)
SWEEP_ERRORS = (0.0, 0.25, 0.5, 1.0)


class ConfigError(Exception):
    """Bad flag/config combination, caught into exit code 2."""


class NumericError(Exception):
    """Non-finite values in a pipeline product, caught into exit code 4."""


def _record_seed(base, idx, stream=0):
    """Stable per-record seed material, independent of worker scheduling."""
    return np.random.SeedSequence([int(base), int(idx), int(stream)])


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {name}")


def _ensure_outdir(path):
    os.makedirs(path, exist_ok=True)
    return path


# per-process cache so worker pools load a fitted model once each
_MODEL_CACHE = {}


def _load_linear(path):
    if path not in _MODEL_CACHE:
        _MODEL_CACHE[path] = score_models.load_linear_denoiser(path)
    return _MODEL_CACHE[path]


def _build_model(kind, model_path, x0_norm):
    if kind == "oracle":
        return score_models.OracleDenoiser(x0_norm)
    return _load_linear(model_path)


def _reconstruct_record(job):
    """Run one record end to end; returns arrays in original units.

    Shaped for worker pools: everything needed arrives in one picklable
    dict, and the per-record seed comes from the record index, so the
    result does not depend on which worker runs it.
    """
    rec = job["record"]
    args = job["args"]
    sched = mrsde.make_schedule(
        T=args["steps"], lam=args["lam"], kind=args["schedule"], zeta_total=args["zeta_total"]
    )
    mask = AngleMask(rec["angles"], rec["measured"])
    scale = rectify.normalization_scale(rec["y"], mask)
    y_n = rec["y"] / scale
    x0_n = rec["x0_full"] / scale
    sigma_n = job["sigma_hat"] / scale
    model = _build_model(args["model"], args["model_path"], x0_n)
    cfg = rectify.GuidanceConfig(
        beta=job["beta"],
        sigma_y=sigma_n,
        rectify_every=args["rectify_every"],
        time_travel=args["time_travel"],
        hop=args["hop"],
        repeats=args["repeats"],
    )
    mu = None
    if args["mu_from_fbp"]:
        # re-projected coarse reconstruction as the anchor
        raw = tomo.fbp(Sinogram(rec["angles"], y_n), out_size=rec["y"].shape[1])
        mu = tomo.radon(raw, rec["angles"]).data
    trace = [] if args["save_trace"] else None
    out_n = rectify.reconstruct(
        y_n,
        mask,
        model,
        sched,
        cfg=cfg,
        seed=_record_seed(args["seed"], job["index"], stream=2),
        mu=mu,
        trace=trace,
    )
    result = {"index": job["index"], "sino": out_n * scale}
    if trace is not None:
        step = max(1, sched.T // args["trace_every"]) if args["trace_every"] else 1
        result["trace"] = [(t, x * scale) for t, x in trace if t % step == 0 or t == 1]
    return result


def _run_jobs(jobs, worker, n_workers):
    if n_workers <= 1:
        return [worker(j) for j in jobs]
    with concurrent.futures.ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(worker, jobs, chunksize=1))


def cmd_simulate(args):
    out = _ensure_outdir(args.out)
    proto = phantoms.AcquisitionProtocol(
        full_view_count=args.views,
        limited_range=tuple(args.angle_range),
        limited_count=args.n_angles,
        snr_db_range=tuple(args.snr),
    )
    spec = phantoms.Phantom(kind=args.phantom, size=args.size)
    records = []
    for idx in range(args.count):
        img = phantoms.generate_phantom(spec, seed=_record_seed(args.seed, idx, stream=0))
        y, mask, sigma_y, x0_full = phantoms.simulate_acquisition(
            img, proto, seed=_record_seed(args.seed, idx, stream=1)
        )
        _check_finite(f"record {idx} sinogram", y.data)
        rec_seed = int(_record_seed(args.seed, idx, stream=3).generate_state(1, np.uint64)[0])
        records.append(
            phantoms.AcquisitionRecord(
                seed=rec_seed, sigma_y=sigma_y, y=y, mask=mask, x0_full=x0_full
            )
        )
        print(f"record {idx:3d}: sigma_y {sigma_y:.6g}, {mask.n_measured} measured rows")
    path = os.path.join(out, "dataset.bin")
    phantoms.dataset_write(path, records)
    sigmas = [r.sigma_y for r in records]
    if records:
        print(
            f"wrote {len(records)} records to {path} "
            f"(sigma_y range {min(sigmas):.6g} .. {max(sigmas):.6g})"
        )
    else:
        print(f"wrote empty dataset to {path}")
    return EXIT_OK


def _load_dataset(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"dataset not found: {path}")
    return phantoms.dataset_read(path)


def _require_model(args):
    if args.model == "linear":
        if not args.model_path:
            raise ConfigError("--model linear requires --model-path")
        if not os.path.exists(args.model_path):
            raise FileNotFoundError(f"score-model file missing: {args.model_path}")


def cmd_reconstruct(args):
    records = _load_dataset(args.dataset)
    _require_model(args)
    out = _ensure_outdir(args.out)
    arg_dict = {
        "steps": args.steps,
        "lam": args.lam,
        "schedule": args.schedule,
        "zeta_total": args.zeta_total,
        "model": args.model,
        "model_path": args.model_path,
        "rectify_every": args.rectify_every,
        "time_travel": args.time_travel,
        "hop": args.hop,
        "repeats": args.repeats,
        "mu_from_fbp": args.mu_from_fbp,
        "save_trace": args.save_trace,
        "trace_every": 10,
        "seed": args.seed,
    }
    jobs = []
    for idx, rec in enumerate(records):
        sigma_hat = args.sigma_y if args.sigma_y is not None else rec.sigma_y * args.sigma_scale
        jobs.append(
            {
                "index": idx,
                "sigma_hat": sigma_hat,
                "beta": 0.0 if args.no_rectify else args.beta,
                "args": arg_dict,
                "record": {
                    "angles": rec.y.angles,
                    "measured": rec.mask.measured,
                    "y": rec.y.data,
                    "x0_full": rec.x0_full.data,
                },
            }
        )
    results = _run_jobs(jobs, _reconstruct_record, args.workers)
    results.sort(key=lambda r: r["index"])
    for rec, res in zip(records, results):
        idx = res["index"]
        _check_finite(f"record {idx} reconstruction", res["sino"])
        sino = Sinogram(rec.y.angles, res["sino"])
        # float64 frames keep the pinned measured rows bitwise equal to y
        tomo.write_sinogram(os.path.join(out, f"rec_{idx:03d}_sino.arr"), sino, float64=True)
        img = tomo.fbp(sino)
        _check_finite(f"record {idx} image", img.data)
        tomo.write_image(os.path.join(out, f"rec_{idx:03d}_fbp.arr"), img)
        if args.png:
            write_png(os.path.join(out, f"rec_{idx:03d}_sino.png"), sino.data)
            write_png(os.path.join(out, f"rec_{idx:03d}_fbp.png"), img.data)
        if "trace" in res:
            with open(os.path.join(out, f"rec_{idx:03d}_trace.arr"), "wb") as fh:
                # snapshot blocks reuse the angles slot to store the step
                for t, snap in res["trace"]:
                    arrayio.write_block(fh, snap, angles=np.full(snap.shape[0], float(t)))
        resid = metrics.measured_residual(sino.data, rec.y.data, rec.mask)
        print(f"record {idx:3d}: measured-row residual {resid:.6g}")
    print(f"wrote {len(results)} reconstructions to {out}")
    return EXIT_OK


def cmd_eval(args):
    records = _load_dataset(args.dataset)
    out = _ensure_outdir(args.out)
    report = metrics.EvalReport()
    for idx, rec in enumerate(records):
        path = os.path.join(args.recon, f"rec_{idx:03d}_sino.arr")
        if not os.path.exists(path):
            raise ConfigError(
                f"reconstruction set does not match dataset: missing {path}"
            )
        sino = tomo.read_sinogram(path)
        if sino.data.shape != rec.x0_full.data.shape:
            raise ConfigError(
                f"record {idx}: reconstruction shape {sino.data.shape} "
                f"does not match truth {rec.x0_full.data.shape}"
            )
        scale = float(np.max(np.abs(rec.x0_full.data))) or 1.0
        a, b = sino.data / scale, rec.x0_full.data / scale
        report.add(
            metrics.RecordScores(
                index=idx,
                domain="sinogram",
                psnr=metrics.psnr(a, b),
                ssim=metrics.ssim(a, b),
                residual=metrics.measured_residual(sino.data, rec.y.data, rec.mask),
            )
        )
        img = tomo.fbp(sino)
        ref = tomo.fbp(rec.x0_full)
        iscale = float(np.max(np.abs(ref.data))) or 1.0
        report.add(
            metrics.RecordScores(
                index=idx,
                domain="image",
                psnr=metrics.psnr(img.data / iscale, ref.data / iscale),
                ssim=metrics.ssim(img.data / iscale, ref.data / iscale),
            )
        )
    report.write_csv(os.path.join(out, "eval.csv"))
    summary = report.format_summary()
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write(summary + "\n")
    print(summary)
    return EXIT_OK


def _sweep_job(job):
    res = _reconstruct_record(job)
    rec = job["record"]
    scale = float(np.max(np.abs(rec["x0_full"]))) or 1.0
    a, b = res["sino"] / scale, rec["x0_full"] / scale
    return {
        "index": job["index"],
        "cell": job["cell"],
        "psnr": metrics.psnr(a, b),
        "ssim": metrics.ssim(a, b),
    }


def _heatmap(path_base, grid, upscale=48):
    # identical-input cells carry an infinite PSNR; pin them to the
    # finite maximum so the normalization stays well defined
    grid = np.array(grid, dtype=np.float64)
    finite = np.isfinite(grid)
    if not finite.all():
        top = grid[finite].max() if finite.any() else 0.0
        grid[~finite] = top
    cell = np.kron(grid, np.ones((upscale, upscale)))
    write_png(path_base + ".png", cell)
    arrayio.write_pgm(path_base + ".pgm", cell)


def cmd_sweep(args):
    records = _load_dataset(args.dataset)
    if not records:
        raise ConfigError("sweep needs a non-empty dataset")
    _require_model(args)
    out = _ensure_outdir(args.out)
    betas = list(SWEEP_BETAS)
    errors = list(SWEEP_ERRORS)
    arg_dict = {
        "steps": args.steps,
        "lam": args.lam,
        "schedule": args.schedule,
        "zeta_total": args.zeta_total,
        "model": args.model,
        "model_path": args.model_path,
        "rectify_every": args.rectify_every,
        "time_travel": args.time_travel,
        "hop": args.hop,
        "repeats": args.repeats,
        "mu_from_fbp": args.mu_from_fbp,
        "save_trace": False,
        "trace_every": 0,
        "seed": args.seed,
    }
    jobs = []
    for bi, beta in enumerate(betas):
        for ei, err in enumerate(errors):
            for run in range(args.runs):
                rec = records[run % len(records)]
                jobs.append(
                    {
                        # run index keys the seed so every cell sees the
                        # same noise realizations (paired comparisons)
                        "index": run,
                        "cell": (bi, ei),
                        "beta": beta,
                        "sigma_hat": rec.sigma_y * (1.0 + err),
                        "args": arg_dict,
                        "record": {
                            "angles": rec.y.angles,
                            "measured": rec.mask.measured,
                            "y": rec.y.data,
                            "x0_full": rec.x0_full.data,
                        },
                    }
                )
    results = _run_jobs(jobs, _sweep_job, args.workers)
    psnr_grid = np.zeros((len(betas), len(errors)))
    ssim_grid = np.zeros((len(betas), len(errors)))
    counts = np.zeros((len(betas), len(errors)))
    for res in results:
        bi, ei = res["cell"]
        psnr_grid[bi, ei] += res["psnr"]
        ssim_grid[bi, ei] += res["ssim"]
        counts[bi, ei] += 1
    psnr_grid /= counts
    ssim_grid /= counts
    csv_path = os.path.join(out, "sweep.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["beta", "sigma_error", "mean_psnr_db", "mean_ssim", "runs"])
        for bi, beta in enumerate(betas):
            for ei, err in enumerate(errors):
                writer.writerow(
                    [beta, err, f"{psnr_grid[bi, ei]:.6f}", f"{ssim_grid[bi, ei]:.6f}", args.runs]
                )
    _heatmap(os.path.join(out, "sweep_psnr"), psnr_grid)
    _heatmap(os.path.join(out, "sweep_ssim"), ssim_grid)
    print(f"beta x sigma-error grid ({args.runs}-run averages), SSIM:")
    header = "  beta \\ err " + "".join(f"{e:>8.0%}" for e in errors)
    print(header)
    for bi, beta in enumerate(betas):
        cells = "".join(f"{ssim_grid[bi, ei]:8.4f}" for ei in range(len(errors)))
        print(f"  {beta:10.2f} {cells}")
    print(f"wrote {csv_path}")
    return EXIT_OK


def _add_common(p):
    p.add_argument("--config", help="JSON file whose keys mirror the long flags")
    p.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    p.add_argument("--out", required=True, help="output directory")


def _add_schedule(p):
    p.add_argument("--steps", type=int, default=100, help="diffusion steps (default 100)")
    # 0.5 puts typical 10 dB measured-noise levels (after normalization_scale)
    # below the first reverse step's noise budget, so exact data consistency
    # holds when sigma_y is estimated honestly
    p.add_argument("--lam", type=float, default=0.5, help="stationary std (default 0.5)")
    p.add_argument("--schedule", choices=("constant", "cosine"), default="constant")
    p.add_argument("--zeta-total", type=float, default=mrsde.DEFAULT_ZETA_TOTAL)


def _add_guidance(p):
    p.add_argument("--beta", type=float, default=1.0, help="rectifier gain damping in [0, 1]")
    p.add_argument(
        "--sigma-y",
        type=float,
        default=None,
        help="assumed noise std in sinogram units (default: per-record stored value)",
    )
    p.add_argument(
        "--sigma-scale",
        type=float,
        default=1.0,
        help="multiply each record's stored sigma_y (models noise misestimation)",
    )
    p.add_argument("--rectify-every", type=int, default=1)
    p.add_argument(
        "--time-travel",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="re-noise and re-run each block of steps",
    )
    p.add_argument("--hop", type=int, default=10)
    p.add_argument("--repeats", type=int, default=2)
    p.add_argument("--no-rectify", action="store_true", help="unguided baseline (beta = 0)")
    p.add_argument("--mu-from-fbp", action="store_true", help="anchor on radon(fbp(y))")
    p.add_argument("--model", choices=("oracle", "linear"), default="oracle")
    p.add_argument("--model-path", help="fitted denoiser file for --model linear")
    p.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sinopaint",
        description="Limited-angle sinogram completion by guided diffusion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate an acquisition dataset")
    _add_common(p_sim)
    p_sim.add_argument("--count", type=int, default=32, help="number of records (default 32)")
    p_sim.add_argument("--phantom", choices=phantoms.KINDS, default="blob-field")
    p_sim.add_argument("--size", type=int, default=64, help="phantom side length (default 64)")
    p_sim.add_argument("--views", type=int, default=180, help="full-grid angle count")
    p_sim.add_argument(
        "--angle-range",
        type=float,
        nargs=2,
        default=[45.0, 135.0],
        metavar=("LO", "HI"),
        help="measured-angle window in degrees",
    )
    p_sim.add_argument("--n-angles", type=int, default=61, help="measured angles per record")
    p_sim.add_argument(
        "--snr",
        type=float,
        nargs=2,
        default=[5.0, 15.0],
        metavar=("LO", "HI"),
        help="per-record SNR range in dB",
    )
    p_sim.set_defaults(func=cmd_simulate)

    p_rec = sub.add_parser("reconstruct", help="complete each record's sinogram")
    _add_common(p_rec)
    p_rec.add_argument("--dataset", required=True, help="dataset file from simulate")
    _add_schedule(p_rec)
    _add_guidance(p_rec)
    p_rec.add_argument("--png", action="store_true", help="also write PNG previews")
    p_rec.add_argument("--save-trace", action="store_true", help="store clean-state snapshots")
    p_rec.set_defaults(func=cmd_reconstruct)

    p_eval = sub.add_parser("eval", help="score reconstructions against ground truth")
    _add_common(p_eval)
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--recon", required=True, help="directory produced by reconstruct")
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="beta x noise-error robustness grid")
    _add_common(p_sweep)
    p_sweep.add_argument("--dataset", required=True)
    _add_schedule(p_sweep)
    _add_guidance(p_sweep)
    p_sweep.add_argument("--runs", type=int, default=10, help="runs averaged per cell")
    p_sweep.set_defaults(func=cmd_sweep)

    return parser, {
        "simulate": p_sim,
        "reconstruct": p_rec,
        "eval": p_eval,
        "sweep": p_sweep,
    }


def parse_args(argv=None):
    parser, subparsers = build_parser()
    args, _ = parser.parse_known_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                overrides = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(overrides, dict):
            raise ConfigError("config file must hold a JSON object")
        sub = subparsers[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        sub.set_defaults(**overrides)
        args = parser.parse_args(argv)
    return args


def main(argv=None):
    try:
        args = parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArrayFormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
