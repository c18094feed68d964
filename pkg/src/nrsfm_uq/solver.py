"""Nuclear-norm-regularized least-squares recovery of the deforming shape.

Minimizes  mu * ||S_sharp||_* + 1/2 * ||W - R S||_F^2  over the shape with the
cameras fixed, by proximal gradient with singular-value soft-thresholding.
A unit step size is valid because the stacked camera blocks satisfy
R R^T = I, which makes the data term's gradient 1-Lipschitz.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericalError, SpecError
from .model import (
    RearrangedShape,
    RotationStack,
    TrackMatrix,
    backproject_array,
    inverse_rearrange_array,
    project_array,
    rearrange_array,
)


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the proximal-gradient solver.

    ``mu=None`` selects a signal-scaled default (see :func:`default_mu`);
    pass :func:`noise_scaled_mu` when the track noise level is known.
    """

    mu: float | None = None
    max_iters: int = 2000
    rel_tol: float = 1e-8
    accelerate: bool = False

    def __post_init__(self):
        if self.mu is not None and not self.mu > 0:
            raise SpecError(f"mu must be > 0, got {self.mu}")
        if self.max_iters < 1:
            raise SpecError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.rel_tol > 0:
            raise SpecError(f"rel_tol must be > 0, got {self.rel_tol}")


@dataclass(frozen=True)
class SolveReport:
    """Converged estimate plus the per-iteration objective trace."""

    shape: RearrangedShape
    iterations: int
    objective_trace: np.ndarray
    converged: bool
    mu: float


def default_mu(w: TrackMatrix, r: RotationStack) -> float:
    """Signal-scaled weight: 5% of the top singular value of the back-projection."""
    back = backproject_array(r.blocks, w.data)
    top = np.linalg.svd(rearrange_array(back), compute_uv=False)[0]
    return 0.05 * float(top)


def noise_scaled_mu(frames: int, points: int, sigma0: float) -> float:
    """Weight proportional to the expected top singular value of pure noise.

    A small fraction of the Gaussian bulk-edge value sqrt(3N) + sqrt(F):
    enough to regularize the unobserved directions, while keeping the
    soft-threshold's damping of the retained components (which would
    deflate the estimate's noise response and bias the closed-form
    variance) negligible.
    """
    return 0.04 * sigma0 * (np.sqrt(3.0 * points) + np.sqrt(frames))


def svt(m: np.ndarray, lam: float) -> np.ndarray:
    """Proximal operator of lam * nuclear norm: soft-threshold singular values."""
    if lam < 0:
        raise SpecError(f"threshold must be >= 0, got {lam}")
    u, s, vt = _svd(m)
    return (u * np.maximum(s - lam, 0.0)) @ vt


def _svd(m: np.ndarray):
    try:
        return np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc


def objective(s_sharp: RearrangedShape, w: TrackMatrix, r: RotationStack, mu: float) -> float:
    """mu * (sum of singular values) + 1/2 * squared Frobenius reprojection residual."""
    _check_dims(w, r, s_sharp)
    nuclear = float(np.linalg.svd(s_sharp.data, compute_uv=False).sum())
    resid = w.data - project_array(r.blocks, inverse_rearrange_array(s_sharp.data))
    return mu * nuclear + 0.5 * float((resid**2).sum())


def _check_dims(w: TrackMatrix, r: RotationStack, s_sharp: RearrangedShape | None = None):
    if w.frames != r.frames:
        raise DimensionError(f"tracks have {w.frames} frames, rotations {r.frames}")
    if s_sharp is not None:
        if s_sharp.frames != w.frames or s_sharp.points != w.points:
            raise DimensionError(
                f"rearranged shape is {s_sharp.points} points x {s_sharp.frames} frames, "
                f"tracks are {w.points} x {w.frames}"
            )


def solve(w: TrackMatrix, r: RotationStack, cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Run proximal gradient with unit step until the iterate stalls.

    Returns the axis-major estimate, the objective value before iterating and
    after every proximal step, and whether the relative-change stopping rule
    fired before ``max_iters``.
    """
    _check_dims(w, r)
    blocks = r.blocks
    w_data = w.data

    s = backproject_array(blocks, w_data)
    s_sharp = rearrange_array(s)
    mu = cfg.mu if cfg.mu is not None else 0.05 * float(np.linalg.svd(s_sharp, compute_uv=False)[0])

    def prox_step(point):
        s_point = inverse_rearrange_array(point)
        grad = backproject_array(blocks, project_array(blocks, s_point) - w_data)
        u, sv, vt = _svd(point - rearrange_array(grad))
        sv_thr = np.maximum(sv - mu, 0.0)
        nxt = (u * sv_thr) @ vt
        resid = project_array(blocks, inverse_rearrange_array(nxt)) - w_data
        return nxt, mu * float(sv_thr.sum()) + 0.5 * float((resid**2).sum())

    trace = [_objective_arrays(s_sharp, s, w_data, blocks, mu)]
    converged = False
    iterations = 0
    momentum = s_sharp
    t_prev = 1.0

    for iterations in range(1, cfg.max_iters + 1):
        if cfg.accelerate:
            s_sharp_next, obj = prox_step(momentum)
            if obj > trace[-1]:
                # Momentum overshot: restart it and fall back to a plain
                # step, which cannot increase the objective.
                t_prev = 1.0
                s_sharp_next, obj = prox_step(s_sharp)
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_prev**2))
            momentum = s_sharp_next + ((t_prev - 1.0) / t_next) * (s_sharp_next - s_sharp)
            t_prev = t_next
        else:
            s_sharp_next, obj = prox_step(s_sharp)
        if not np.isfinite(obj):
            raise NumericalError(f"objective became non-finite at iteration {iterations}")

        trace.append(obj)
        denom = max(float(np.linalg.norm(s_sharp)), np.finfo(float).tiny)
        rel_change = float(np.linalg.norm(s_sharp_next - s_sharp)) / denom
        s_sharp = s_sharp_next
        if rel_change < cfg.rel_tol:
            converged = True
            break

    return SolveReport(
        shape=RearrangedShape(s_sharp),
        iterations=iterations,
        objective_trace=np.asarray(trace),
        converged=converged,
        mu=mu,
    )


def _objective_arrays(s_sharp, s, w_data, blocks, mu) -> float:
    nuclear = float(np.linalg.svd(s_sharp, compute_uv=False).sum())
    resid = w_data - project_array(blocks, s)
    return mu * nuclear + 0.5 * float((resid**2).sum())
