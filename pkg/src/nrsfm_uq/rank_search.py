"""Noise-aware exact-rank projection of an approximately low-rank estimate.

The solver's soft-thresholded estimate is full of weak noise directions.
When the observation noise level is known, the smallest exact rank whose
reprojection residual looks like that noise is found by testing ranks in
ascending order: a rank is accepted once at least 95% of the element-wise
residuals fall inside the two-sided Gaussian band 1.96 * sigma0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, SpecError
from .model import (
    RearrangedShape,
    RotationStack,
    TrackMatrix,
    inverse_rearrange_array,
    project_array,
)
from .solver import _svd

RESIDUAL_BAND = 1.96
ACCEPT_FRACTION = 0.95


@dataclass(frozen=True)
class RankSearchResult:
    rank: int
    shape: RearrangedShape
    residual_fraction: float
    converged: bool


def truncate_rank(s_sharp: RearrangedShape, r: int) -> RearrangedShape:
    """Best (Frobenius-optimal) exact rank-r approximation via truncated SVD."""
    max_rank = min(s_sharp.data.shape)
    if not 1 <= r <= max_rank:
        raise SpecError(f"rank must lie in [1, {max_rank}], got {r}")
    u, s, vt = _svd(s_sharp.data)
    return RearrangedShape((u[:, :r] * s[:r]) @ vt[:r])


def numerical_rank(s_sharp: RearrangedShape, rel_tol: float = 1e-9) -> int:
    """Count of singular values above rel_tol times the largest one."""
    s = np.linalg.svd(s_sharp.data, compute_uv=False)
    if s[0] == 0.0:
        return 1
    return max(1, int(np.sum(s > rel_tol * s[0])))


def residual_fraction(
    shape: RearrangedShape, w: TrackMatrix, r: RotationStack, sigma0: float
) -> float:
    """Fraction of reprojection residual entries inside the 1.96*sigma0 band."""
    resid = w.data - project_array(r.blocks, inverse_rearrange_array(shape.data))
    return float(np.mean(np.abs(resid) <= RESIDUAL_BAND * sigma0))


def search_rank(
    s_sharp: RearrangedShape, w: TrackMatrix, r: RotationStack, sigma0: float
) -> RankSearchResult:
    """Ascending rank search; first rank whose residuals are noise-consistent wins.

    If no rank passes, the full-rank projection is returned with
    ``converged=False`` so downstream uncertainty propagation still works.
    """
    if not sigma0 > 0:
        raise SpecError(f"sigma0 must be > 0, got {sigma0}")
    if w.frames != r.frames or w.frames != s_sharp.frames or w.points != s_sharp.points:
        raise DimensionError("tracks, rotations, and shape disagree on F or N")

    u, s, vt = _svd(s_sharp.data)
    max_rank = min(s_sharp.data.shape)
    band = RESIDUAL_BAND * sigma0

    recon = np.zeros_like(s_sharp.data)
    fraction = 0.0
    for rank in range(1, max_rank + 1):
        recon = recon + s[rank - 1] * np.outer(u[:, rank - 1], vt[rank - 1])
        resid = w.data - project_array(r.blocks, inverse_rearrange_array(recon))
        fraction = float(np.mean(np.abs(resid) <= band))
        if fraction >= ACCEPT_FRACTION:
            return RankSearchResult(
                rank=rank,
                shape=RearrangedShape(recon),
                residual_fraction=fraction,
                converged=True,
            )
    return RankSearchResult(
        rank=max_rank,
        shape=RearrangedShape(recon),
        residual_fraction=fraction,
        converged=False,
    )
