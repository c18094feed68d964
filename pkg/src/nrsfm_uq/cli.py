"""Command-line interface: synth | solve | rank-search | uq | mc | fuse | report.

One binary, subcommand style.  A JSON config file can preload any flag value;
explicit flags win.  All randomness comes from explicit seeds, so re-running
a command overwrites its outputs with identical bytes.  The environment
variable ``NRSFM_UQ_LOG`` (error|warn|info|debug) sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import io as mio
from .errors import IoError, NrsfmUqError, SpecError, exit_code_for
from .fusion import fuse, fuse_average, plan_segments, run_segmented, solve_segments
from .model import (
    NoiseModel,
    RearrangedShape,
    center_shape,
    center_tracks,
    inverse_rearrange,
    mean_3d_error,
    rearrange,
)
from .rank_search import numerical_rank, search_rank, truncate_rank
from .solver import SolverConfig, noise_scaled_mu, solve
from .stats import McConfig, McReport, run_monte_carlo
from .synth import SceneSpec, SyntheticScene, add_noise, generate
from .uncertainty import error_ellipse, factorize, leverage_field

log = logging.getLogger("nrsfm_uq")

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    level = os.environ.get("NRSFM_UQ_LOG", "warn").lower()
    logging.basicConfig(level=_LOG_LEVELS.get(level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _load_config(path):
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SpecError(f"config {path} is not valid JSON: {exc}") from exc


def _opt(args, config, name, default=None):
    """Flag value if given, else config value, else default."""
    value = getattr(args, name.replace("-", "_"), None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return default


def _out_dir(args, config) -> Path:
    out = _opt(args, config, "out")
    if out is None:
        raise SpecError("an output directory is required (--out)")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, payload):
    try:
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _load_scene(scene_dir) -> SyntheticScene:
    d = Path(scene_dir)
    tracks = mio.load_tracks(d / "tracks_clean.csv")
    rotations = mio.load_rotations(d / "rotations.json")
    shape_gt = mio.load_shape(d / "shape_gt.csv")
    return SyntheticScene(shape_gt=shape_gt, rotations=rotations, tracks_clean=tracks)


# ---------------------------------------------------------------- subcommands


def _cmd_synth(args, config):
    out = _out_dir(args, config)
    spec = SceneSpec(
        frames=int(_opt(args, config, "frames", 60)),
        points=int(_opt(args, config, "points", 12)),
        true_rank=int(_opt(args, config, "rank", 3)),
        orbit_revolutions=float(_opt(args, config, "revolutions", 2.5)),
        seed=int(_opt(args, config, "seed", 0)),
        normalize=not bool(_opt(args, config, "no_normalize", False)),
    )
    scene = generate(spec)
    f, n = spec.frames, spec.points
    mio.store_matrix(scene.tracks_clean, out / "tracks_clean.csv")
    mio.store_matrix(scene.shape_gt, out / "shape_gt.csv")
    mio.store_rotations(scene.rotations, out / "rotations.json")
    _write_json(
        out / "manifest.json",
        {
            "frames": f,
            "points": n,
            "true_rank": spec.true_rank,
            "orbit_revolutions": spec.orbit_revolutions,
            "seed": spec.seed,
            "normalize": spec.normalize,
        },
    )
    sigma0 = _opt(args, config, "sigma0")
    if sigma0 is not None:
        noisy = add_noise(scene.tracks_clean, NoiseModel(float(sigma0), seed=spec.seed + 1))
        mio.store_matrix(noisy, out / "tracks_noisy.csv")
    print(f"scene written to {out}")
    return 0


def _solver_config(args, config, frames, points):
    mu = _opt(args, config, "mu")
    sigma0 = _opt(args, config, "sigma0")
    if mu is None and sigma0 is not None:
        mu = noise_scaled_mu(frames, points, float(sigma0))
    # The CLI always runs the momentum variant: the noise-scaled weight is
    # deliberately small and plain iterations would need far more steps.
    return SolverConfig(
        mu=None if mu is None else float(mu),
        max_iters=int(_opt(args, config, "max_iters", 2000)),
        rel_tol=float(_opt(args, config, "tol", 1e-8)),
        accelerate=True,
    )


def _cmd_solve(args, config):
    out = _out_dir(args, config)
    tracks = mio.load_tracks(_opt(args, config, "tracks"))
    rotations = mio.load_rotations(_opt(args, config, "rotations"))
    cfg = _solver_config(args, config, tracks.frames, tracks.points)
    report = solve(tracks, rotations, cfg)
    mio.store_matrix(report.shape, out / "shape_est.csv")
    _write_json(
        out / "solve_report.json",
        {
            "iterations": report.iterations,
            "converged": report.converged,
            "mu": report.mu,
            "objective_first": float(report.objective_trace[0]),
            "objective_last": float(report.objective_trace[-1]),
        },
    )
    print(f"solved in {report.iterations} iterations (converged={report.converged})")
    return 0


def _require_sigma0(args, config) -> float:
    sigma0 = _opt(args, config, "sigma0")
    if sigma0 is None:
        raise SpecError("--sigma0 is required for this command")
    return float(sigma0)


def _cmd_rank_search(args, config):
    out = _out_dir(args, config)
    sigma0 = _require_sigma0(args, config)
    shape = mio.load_rearranged(_opt(args, config, "shape"))
    tracks = mio.load_tracks(_opt(args, config, "tracks"))
    rotations = mio.load_rotations(_opt(args, config, "rotations"))
    result = search_rank(shape, tracks, rotations, sigma0)
    mio.store_matrix(result.shape, out / "shape_rank.csv")
    _write_json(
        out / "rank_search.json",
        {
            "rank": result.rank,
            "residual_fraction": result.residual_fraction,
            "converged": result.converged,
            "sigma0": sigma0,
        },
    )
    print(f"selected rank {result.rank} (residual fraction {result.residual_fraction:.4f})")
    return 0


def _cmd_uq(args, config):
    out = _out_dir(args, config)
    sigma0 = _require_sigma0(args, config)
    shape = mio.load_rearranged(_opt(args, config, "shape"))
    rank = _opt(args, config, "rank")
    rank = numerical_rank(shape) if rank is None else int(rank)
    factors = factorize(shape, rank)
    fld = leverage_field(factors, sigma0)

    np.savetxt(out / "v_field.csv", fld.v, delimiter=",", fmt="%.17g")

    n, f = shape.points, shape.frames
    covariances = []
    axes_rows = []
    for frame in range(f):
        per_frame = []
        for point in range(n):
            cov = error_ellipse(factors, sigma0, point, frame)
            per_frame.append([[float(x) for x in row] for row in cov])
            w, q = np.linalg.eigh(cov)
            axes_rows.append(
                [frame, point]
                + [float(v) for v in w[::-1]]
                + [float(x) for x in q[:, ::-1].T.reshape(9)]
            )
        covariances.append(per_frame)
    _write_json(out / "point_covariances.json", {"rank": rank, "sigma0": sigma0, "covariances": covariances})
    header = "frame,point,eig1,eig2,eig3," + ",".join(
        f"axis{a}_{c}" for a in (1, 2, 3) for c in "xyz"
    )
    np.savetxt(out / "ellipse_axes.csv", np.asarray(axes_rows), delimiter=",", fmt="%.17g", header=header, comments="")
    print(f"uncertainty written for rank {rank} at sigma0={sigma0}")
    return 0


def _cmd_mc(args, config):
    out = _out_dir(args, config)
    scene = _load_scene(_opt(args, config, "scene_dir"))
    sigma0 = _require_sigma0(args, config)
    cfg = McConfig(
        trials=int(_opt(args, config, "trials", 100)),
        sigma0=sigma0,
        base_seed=int(_opt(args, config, "seed", 0)),
        rank_override=_opt(args, config, "rank_override"),
        use_rank_search=not bool(_opt(args, config, "no_rank_search", False)),
    )
    solver_cfg = _solver_config(args, config, scene.tracks_clean.frames, scene.tracks_clean.points)
    parallel = _opt(args, config, "parallel")
    mc_report = run_monte_carlo(scene, cfg, solver_cfg, parallel=None if parallel is None else int(parallel))
    write_mc_outputs(mc_report, cfg, out)
    print(
        f"coverage mean {mc_report.coverage_mean:.4f} std {mc_report.coverage_std:.4f}; "
        f"accuracy original {mc_report.accuracy_original:.4f} vs noise-aware {mc_report.accuracy_noise_aware:.4f}"
    )
    return 0


def write_mc_outputs(mc_report: McReport, cfg: McConfig, out_dir: Path):
    """Persist one Monte Carlo run: scalar JSON, coverage CSV, Q-Q series, markdown."""
    out_dir = Path(out_dir)
    payload = {
        "sigma0": mc_report.sigma0,
        "trials": mc_report.trials,
        "base_seed": cfg.base_seed,
        "rank_override": cfg.rank_override,
        "use_rank_search": cfg.use_rank_search,
        "coverage_mean": mc_report.coverage_mean,
        "coverage_std": mc_report.coverage_std,
        "accuracy_original": mc_report.accuracy_original,
        "accuracy_noise_aware": mc_report.accuracy_noise_aware,
        "ranks": list(mc_report.ranks),
        "normality": [
            {"row": int(i), "col": int(j), "p": None if np.isnan(p) else float(p)}
            for (i, j), p in sorted(mc_report.normality_pvalues.items())
        ],
    }
    _write_json(out_dir / "mc_report.json", payload)
    report(mc_report, out_dir)


def report(mc_report: McReport, out_dir):
    """Coverage CSV, per-element Q-Q series, and a markdown summary table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    np.savetxt(out_dir / "coverage.csv", mc_report.per_element_coverage, delimiter=",", fmt="%.17g")
    for (i, j), series in sorted(mc_report.qq_data.items()):
        np.savetxt(out_dir / f"qq_{i}_{j}.csv", series, delimiter=",", fmt="%.17g",
                   header="theoretical,observed", comments="")
    (out_dir / "summary.md").write_text(render_markdown([_report_row(mc_report)]))


def _report_row(report: McReport) -> dict:
    return {
        "sigma0": report.sigma0,
        "coverage_mean": report.coverage_mean,
        "coverage_std": report.coverage_std,
        "accuracy_original": report.accuracy_original,
        "accuracy_noise_aware": report.accuracy_noise_aware,
        "rank_override": None,
        "normality": [
            {"row": i, "col": j, "p": None if np.isnan(p) else p}
            for (i, j), p in sorted(report.normality_pvalues.items())
        ],
    }


def render_markdown(rows) -> str:
    """Markdown tables over a sweep of runs: accuracy, coverage, normality, robustness."""
    plain = [r for r in rows if r.get("rank_override") in (None, 0)]
    overridden = [r for r in rows if r.get("rank_override") not in (None, 0)]
    lines = []

    lines.append("## Accuracy vs Monte Carlo mean (original | noise-aware)")
    lines.append("")
    lines.append("| sigma0 | original | noise-aware |")
    lines.append("|---|---|---|")
    for r in sorted(plain, key=lambda r: r["sigma0"]):
        lines.append(
            f"| {r['sigma0']:.2f} | {r['accuracy_original']:.4f} | {r['accuracy_noise_aware']:.4f} |"
        )
    lines.append("")

    lines.append("## Coverage of the 1.96-sigma closed-form bound")
    lines.append("")
    lines.append("| sigma0 | mean | std |")
    lines.append("|---|---|---|")
    for r in sorted(plain, key=lambda r: r["sigma0"]):
        lines.append(f"| {r['sigma0']:.2f} | {r['coverage_mean']:.4f} | {r['coverage_std']:.4f} |")
    lines.append("")

    lines.append("## Shapiro-Wilk p-values of sampled elements")
    lines.append("")
    lines.append("| sigma0 | p-values |")
    lines.append("|---|---|")
    for r in sorted(plain, key=lambda r: r["sigma0"]):
        entries = r.get("normality") or []
        if entries:
            cells = ", ".join(
                "-" if e["p"] is None else f"{e['p']:.3f}" for e in entries
            )
        else:
            cells = "-"
        lines.append(f"| {r['sigma0']:.2f} | {cells} |")
    lines.append("")

    if overridden:
        lines.append("## Coverage under rank perturbation")
        lines.append("")
        overrides = sorted({r["rank_override"] for r in overridden})
        header = "| sigma0 | " + " | ".join(f"{o:+.0f}% mean | {o:+.0f}% std" for o in overrides) + " |"
        lines.append(header)
        lines.append("|" + "---|" * (1 + 2 * len(overrides)))
        for s in sorted({r["sigma0"] for r in overridden}):
            cells = [f"| {s:.2f} "]
            for o in overrides:
                match = [r for r in overridden if r["sigma0"] == s and r["rank_override"] == o]
                if match:
                    cells.append(f"| {match[0]['coverage_mean']:.4f} | {match[0]['coverage_std']:.4f} ")
                else:
                    cells.append("| - | - ")
            lines.append("".join(cells) + "|")
        lines.append("")

    return "\n".join(lines)


def _cmd_report(args, config):
    out = _out_dir(args, config)
    rows = []
    for path in args.reports:
        try:
            payload = json.loads(Path(path).read_text())
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path} is not valid JSON: {exc}") from exc
        rows.append(payload)
    (out / "summary.md").write_text(render_markdown(rows))
    print(f"summary written to {out / 'summary.md'}")
    return 0


def _cmd_fuse(args, config):
    out = _out_dir(args, config)
    scene = _load_scene(_opt(args, config, "scene_dir"))
    sigma0 = _require_sigma0(args, config)
    segments = int(_opt(args, config, "segments", 6))
    overlap = float(_opt(args, config, "overlap", 0.20))
    parallel = _opt(args, config, "parallel")
    parallel = (os.cpu_count() or 1) if parallel is None else int(parallel)
    seed = int(_opt(args, config, "seed", 0))

    f, n = scene.tracks_clean.frames, scene.tracks_clean.points
    noisy = center_tracks(add_noise(scene.tracks_clean, NoiseModel(sigma0, seed=seed + 1)))
    plan = plan_segments(f, segments, overlap)

    batch_cfg = SolverConfig(mu=noise_scaled_mu(f, n, sigma0), accelerate=True)
    t0 = time.perf_counter()
    batch_report = solve(noisy, scene.rotations, batch_cfg)
    batch_result = search_rank(batch_report.shape, noisy, scene.rotations, sigma0)
    batch_seconds = time.perf_counter() - t0

    t0 = time.perf_counter()
    solved = solve_segments(noisy, scene.rotations, sigma0, plan, parallel=1)
    sequential_seconds = time.perf_counter() - t0

    t0 = time.perf_counter()
    fused = run_segmented(noisy, scene.rotations, sigma0, plan, parallel=parallel)
    parallel_seconds = time.perf_counter() - t0

    triples = [(rng, shape, fld) for rng, shape, fld, _ in solved]
    averaged = fuse_average(triples)

    gt = center_shape(scene.shape_gt)
    batch_error = mean_3d_error(inverse_rearrange(batch_result.shape), gt)
    fused_error = mean_3d_error(fused.shape, gt)
    average_error = mean_3d_error(averaged.shape, gt)

    mio.store_matrix(fused.shape, out / "fused_shape.csv")
    np.savetxt(out / "fused_variance.csv", fused.per_element_variance, delimiter=",", fmt="%.17g")
    _write_json(
        out / "timing.json",
        {
            "batch_seconds": batch_seconds,
            "segmented_sequential_seconds": sequential_seconds,
            "segmented_parallel_seconds": parallel_seconds,
            "parallel_workers": parallel,
        },
    )
    _write_json(
        out / "fusion_report.json",
        {
            "segments": [list(rng) for rng in plan.segments],
            "batch_error": batch_error,
            "fused_error": fused_error,
            "average_fusion_error": average_error,
        },
    )
    print(
        f"batch {batch_seconds:.2f}s vs segmented parallel {parallel_seconds:.2f}s; "
        f"errors: batch {batch_error:.4f}, fused {fused_error:.4f}"
    )
    return 0


# ------------------------------------------------------------------- parsing


def _add_common(parser):
    parser.add_argument("--config", help="JSON file preloading any flag value")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="base RNG seed (default 0)")
    parser.add_argument("--sigma0", type=float, help="track noise standard deviation")
    parser.add_argument("--mu", type=float, help="nuclear norm weight (default: auto)")
    parser.add_argument("--parallel", type=int, help="worker count (default: all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nrsfm-uq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    _add_common(p)
    p.add_argument("--frames", type=int)
    p.add_argument("--points", type=int)
    p.add_argument("--rank", type=int)
    p.add_argument("--revolutions", type=float)
    p.add_argument("--no-normalize", action="store_const", const=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("solve", help="recover a shape from tracks")
    _add_common(p)
    p.add_argument("--tracks", required=True)
    p.add_argument("--rotations", required=True)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--tol", type=float)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("rank-search", help="project an estimate to its noise-consistent rank")
    _add_common(p)
    p.add_argument("--shape", required=True)
    p.add_argument("--tracks", required=True)
    p.add_argument("--rotations", required=True)
    p.set_defaults(func=_cmd_rank_search)

    p = sub.add_parser("uq", help="closed-form uncertainty of an estimate")
    _add_common(p)
    p.add_argument("--shape", required=True)
    p.add_argument("--rank", type=int)
    p.set_defaults(func=_cmd_uq)

    p = sub.add_parser("mc", help="Monte Carlo calibration run")
    _add_common(p)
    p.add_argument("--scene-dir", required=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--rank-override", type=float, help="signed percent perturbation of the rank")
    p.add_argument("--no-rank-search", action="store_const", const=True)
    p.set_defaults(func=_cmd_mc)

    p = sub.add_parser("fuse", help="segmented solve and uncertainty-weighted fusion")
    _add_common(p)
    p.add_argument("--scene-dir", required=True)
    p.add_argument("--segments", type=int)
    p.add_argument("--overlap", type=float)
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("report", help="markdown tables from saved mc_report.json files")
    _add_common(p)
    p.add_argument("reports", nargs="+", help="mc_report.json paths")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(getattr(args, "config", None))
        return args.func(args, config)
    except NrsfmUqError as exc:
        log.debug("failure detail", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
