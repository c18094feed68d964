"""Overlapping sub-trajectory solving and uncertainty-weighted fusion.

A long sequence is split into evenly sized overlapping frame ranges, each
range is solved independently (optionally in parallel), and overlapping
frames are combined by inverse-variance weighting, the minimum-variance
combination of independent Gaussian estimates.  All segments share the
global per-frame cameras, so no cross-segment alignment is needed.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError, SpecError
from .model import (
    RotationStack,
    ShapeMatrix,
    TrackMatrix,
    RearrangedShape,
    inverse_rearrange_array,
)
from .rank_search import search_rank
from .solver import SolveReport, SolverConfig, noise_scaled_mu, solve
from .uncertainty import UncertaintyField, factorize, leverage_field

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SegmentPlan:
    """Frame ranges [start, end) covering the sequence with fixed overlap."""

    segments: tuple
    overlap_fraction: float
    count: int


@dataclass(frozen=True)
class FusedResult:
    shape: ShapeMatrix
    per_element_variance: np.ndarray
    per_segment_reports: tuple = field(default_factory=tuple)


def plan_segments(frames: int, count: int, overlap: float = 0.20) -> SegmentPlan:
    """Evenly sized ranges with overlap ceil(overlap * length) between neighbors.

    The final range is pinned to end at ``frames``, which can only enlarge
    its overlap with the previous one.  Infeasible combinations (segments
    shorter than 2 frames, or more segments than distinct start positions)
    raise SpecError.
    """
    if count < 1:
        raise SpecError(f"segment count must be >= 1, got {count}")
    if not 0.0 <= overlap < 1.0:
        raise SpecError(f"overlap must lie in [0, 1), got {overlap}")
    if frames < 2:
        raise SpecError(f"need at least 2 frames, got {frames}")
    if count == 1:
        return SegmentPlan(segments=((0, frames),), overlap_fraction=overlap, count=1)
    if frames < count + 1:
        raise SpecError(f"{count} overlapping segments do not fit in {frames} frames")

    length = max(2, int(np.ceil(frames / (count - (count - 1) * overlap))))
    while True:
        gap = int(np.ceil(overlap * length))
        stride = length - gap
        if stride >= 1 and (count - 1) * stride + length >= frames and length <= frames:
            break
        length += 1
        if length > frames:
            raise SpecError("no feasible evenly sized segmentation")

    starts = [i * stride for i in range(count - 1)] + [frames - length]
    if starts[-1] < starts[-2]:
        raise SpecError("no feasible evenly sized segmentation")
    segments = tuple((s, s + length) for s in starts)
    return SegmentPlan(segments=segments, overlap_fraction=overlap, count=count)


def fuse(segment_results) -> FusedResult:
    """Inverse-variance fusion of per-segment estimates over their frame ranges.

    ``segment_results`` is a sequence of ``((start, end), RearrangedShape,
    UncertaintyField)`` triples in one global frame numbering.  Elements
    covered by a single segment pass through; elements with several
    contributors get the inverse-variance weighted mean, and zero-variance
    contributions are treated as exact.
    """
    return _fuse(segment_results, uniform=False)


def fuse_average(segment_results) -> FusedResult:
    """Plain (unweighted) average fusion, the baseline to compare against."""
    return _fuse(segment_results, uniform=True)


def _fuse(segment_results, uniform: bool) -> FusedResult:
    if not segment_results:
        raise SpecError("nothing to fuse")
    rows = segment_results[0][1].data.shape[0]
    frames = max(end for (start, end), _, _ in segment_results)

    weight_sum = np.zeros((rows, frames))
    value_sum = np.zeros((rows, frames))
    var_sum = np.zeros((rows, frames))
    exact_count = np.zeros((rows, frames))
    exact_sum = np.zeros((rows, frames))
    touched = np.zeros(frames, dtype=bool)

    for (start, end), shape, fld in segment_results:
        if not 0 <= start < end <= frames:
            raise SpecError(f"bad segment range [{start}, {end})")
        if shape.data.shape != (rows, end - start):
            raise SpecError("segment shape does not match its frame range")
        var = fld.variance()
        if var.shape != shape.data.shape:
            raise SpecError("segment uncertainty does not match its shape")
        cols = slice(start, end)
        exact = var == 0.0
        if uniform:
            weight_sum[:, cols] += 1.0
            value_sum[:, cols] += shape.data
            var_sum[:, cols] += var
        else:
            w = np.zeros_like(var)
            np.divide(1.0, var, out=w, where=~exact)
            weight_sum[:, cols] += w
            value_sum[:, cols] += w * shape.data
            exact_count[:, cols] += exact
            exact_sum[:, cols] += np.where(exact, shape.data, 0.0)
        touched[cols] = True

    if not touched.all():
        missing = np.flatnonzero(~touched)
        raise CoverageError(f"frames without any segment contribution: {missing.tolist()}")

    _check_overlap_consistency(segment_results, frames)

    if uniform:
        fused = value_sum / weight_sum
        variance = var_sum / weight_sum**2
    else:
        has_exact = exact_count > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            fused = np.where(has_exact, exact_sum / np.maximum(exact_count, 1), value_sum / weight_sum)
            variance = np.where(has_exact, 0.0, 1.0 / weight_sum)
        if np.any(weight_sum[~has_exact] == 0.0):
            raise CoverageError("element with neither finite-variance nor exact contribution")

    return FusedResult(
        shape=ShapeMatrix(inverse_rearrange_array(fused)),
        per_element_variance=variance,
    )


def _check_overlap_consistency(segment_results, frames):
    """Warn when overlapping estimates disagree far beyond their pooled noise."""
    for a in range(len(segment_results)):
        for b in range(a + 1, len(segment_results)):
            (sa, ea), shape_a, fld_a = segment_results[a]
            (sb, eb), shape_b, fld_b = segment_results[b]
            lo, hi = max(sa, sb), min(ea, eb)
            if lo >= hi:
                continue
            da = shape_a.data[:, lo - sa : hi - sa]
            db = shape_b.data[:, lo - sb : hi - sb]
            pooled = fld_a.variance()[:, lo - sa : hi - sa] + fld_b.variance()[:, lo - sb : hi - sb]
            scale = np.sqrt(max(pooled.mean(), np.finfo(float).tiny))
            discrepancy = np.abs(da - db).mean()
            if discrepancy > 5.0 * scale:
                log.warning(
                    "segments [%d,%d) and [%d,%d) disagree on overlap: "
                    "mean |delta| %.3g vs pooled sigma %.3g",
                    sa, ea, sb, eb, discrepancy, scale,
                )


def _solve_segment(args):
    (start, end), tracks_data, blocks, sigma0, cfg_fields = args
    tracks = TrackMatrix(tracks_data[2 * start : 2 * end])
    rotations = RotationStack(blocks[start:end])
    cfg = SolverConfig(**cfg_fields)
    report = solve(tracks, rotations, cfg)
    result = search_rank(report.shape, tracks, rotations, sigma0)
    factors = factorize(report.shape, result.rank)
    fld = leverage_field(factors, sigma0)
    return (start, end), result.shape, fld, report


def solve_segments(
    w: TrackMatrix,
    rotations: RotationStack,
    sigma0: float,
    plan: SegmentPlan,
    solver_cfg: SolverConfig | None = None,
    parallel: int | None = None,
):
    """Run solve + rank search + uncertainty on every segment of the plan.

    Returns a list of ``(range, shape, field, report)`` tuples in plan order.
    Segments are independent, so they run on a process pool when
    ``parallel`` allows.
    """
    if plan.segments[-1][1] > w.frames:
        raise SpecError("plan extends past the available frames")
    tasks = []
    for start, end in plan.segments:
        if solver_cfg is None:
            cfg = SolverConfig(mu=noise_scaled_mu(end - start, w.points, sigma0), accelerate=True)
        else:
            cfg = solver_cfg
        cfg_fields = {
            "mu": cfg.mu,
            "max_iters": cfg.max_iters,
            "rel_tol": cfg.rel_tol,
            "accelerate": cfg.accelerate,
        }
        tasks.append(((start, end), w.data, rotations.blocks, sigma0, cfg_fields))

    workers = parallel if parallel is not None else (os.cpu_count() or 1)
    workers = max(1, min(workers, len(tasks)))
    if workers == 1:
        return [_solve_segment(t) for t in tasks]
    from .stats import _limit_worker_threads

    with ProcessPoolExecutor(max_workers=workers, initializer=_limit_worker_threads) as pool:
        return list(pool.map(_solve_segment, tasks))


def run_segmented(
    w: TrackMatrix,
    rotations: RotationStack,
    sigma0: float,
    plan: SegmentPlan,
    solver_cfg: SolverConfig | None = None,
    parallel: int | None = None,
) -> FusedResult:
    """Segment, solve, and fuse in one call."""
    solved = solve_segments(w, rotations, sigma0, plan, solver_cfg, parallel)
    fused = fuse([(rng, shape, fld) for rng, shape, fld, _ in solved])
    return FusedResult(
        shape=fused.shape,
        per_element_variance=fused.per_element_variance,
        per_segment_reports=tuple(report for _, _, _, report in solved),
    )
