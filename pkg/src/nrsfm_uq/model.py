"""Matrix-shaped domain types and the shared geometry they obey.

Layout conventions used across the package:

- tracks ``W``: 2F x N, frame ``i`` occupies rows ``(2i, 2i+1)`` (image x, y).
- shape ``S``: 3F x N, frame ``i`` occupies rows ``(3i, 3i+1, 3i+2)`` (world
  x, y, z of all N points).
- rearranged shape: 3N x F, rows ``[0, N)`` hold the X coordinates of points
  1..N, rows ``[N, 2N)`` the Y, rows ``[2N, 3N)`` the Z; column ``f`` is
  frame ``f``.

The rearrangement is a pure permutation of entries, so both directions are
bit-exact inverses of each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, SpecError

ROTATION_BLOCK_TOL = 1e-10


def _as_readonly(data, name: str) -> np.ndarray:
    arr = np.array(data, dtype=float)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a 2-d matrix, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise SpecError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TrackMatrix:
    """Stack of 2D feature tracks, one (x, y) row pair per frame."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_readonly(self.data, "tracks")
        if arr.shape[0] % 2 != 0 or arr.shape[0] == 0:
            raise DimensionError(f"track matrix needs 2F rows, got {arr.shape[0]}")
        object.__setattr__(self, "data", arr)

    @property
    def frames(self) -> int:
        return self.data.shape[0] // 2

    @property
    def points(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ShapeMatrix:
    """Time-varying 3D shape, frame-major: three (x, y, z) rows per frame."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_readonly(self.data, "shape")
        if arr.shape[0] % 3 != 0 or arr.shape[0] == 0:
            raise DimensionError(f"shape matrix needs 3F rows, got {arr.shape[0]}")
        object.__setattr__(self, "data", arr)

    @property
    def frames(self) -> int:
        return self.data.shape[0] // 3

    @property
    def points(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class RearrangedShape:
    """Axis-major view of a shape: [all X | all Y | all Z] row blocks, one column per frame."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_readonly(self.data, "rearranged shape")
        if arr.shape[0] % 3 != 0 or arr.shape[0] == 0:
            raise DimensionError(f"rearranged shape needs 3N rows, got {arr.shape[0]}")
        object.__setattr__(self, "data", arr)

    @property
    def points(self) -> int:
        return self.data.shape[0] // 3

    @property
    def frames(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class RotationStack:
    """Per-frame 2x3 orthographic camera blocks (top two rows of a rotation)."""

    blocks: np.ndarray

    def __post_init__(self):
        arr = np.array(self.blocks, dtype=float)
        if arr.ndim != 3 or arr.shape[1:] != (2, 3) or arr.shape[0] == 0:
            raise DimensionError(f"rotation stack needs shape (F, 2, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise SpecError("rotation stack contains non-finite entries")
        gram = np.einsum("fij,fkj->fik", arr, arr)
        err = np.abs(gram - np.eye(2)).max()
        if err > ROTATION_BLOCK_TOL:
            raise SpecError(f"camera blocks are not row-orthonormal (max deviation {err:.3e})")
        arr.setflags(write=False)
        object.__setattr__(self, "blocks", arr)

    @property
    def frames(self) -> int:
        return self.blocks.shape[0]


@dataclass(frozen=True)
class NoiseModel:
    """I.i.d. Gaussian track noise with a fixed RNG seed."""

    sigma0: float
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.sigma0) or self.sigma0 < 0:
            raise SpecError(f"sigma0 must be >= 0, got {self.sigma0}")


def rearrange_array(shape_data: np.ndarray) -> np.ndarray:
    """Permute a 3F x N shape array into its 3N x F axis-major form."""
    rows, n = shape_data.shape
    f = rows // 3
    return np.ascontiguousarray(
        shape_data.reshape(f, 3, n).transpose(1, 2, 0).reshape(3 * n, f)
    )


def inverse_rearrange_array(rearranged_data: np.ndarray) -> np.ndarray:
    """Permute a 3N x F axis-major array back into the 3F x N frame-major form."""
    rows, f = rearranged_data.shape
    n = rows // 3
    return np.ascontiguousarray(
        rearranged_data.reshape(3, n, f).transpose(2, 0, 1).reshape(3 * f, n)
    )


def rearrange(s: ShapeMatrix) -> RearrangedShape:
    """Map a frame-major shape to its axis-major form (entry permutation)."""
    return RearrangedShape(rearrange_array(s.data))


def inverse_rearrange(s_sharp: RearrangedShape) -> ShapeMatrix:
    """Exact inverse of :func:`rearrange`."""
    return ShapeMatrix(inverse_rearrange_array(s_sharp.data))


def project_array(blocks: np.ndarray, shape_data: np.ndarray) -> np.ndarray:
    """Apply the per-frame 2x3 camera blocks to a 3F x N shape array."""
    f = blocks.shape[0]
    n = shape_data.shape[1]
    per_frame = np.einsum("fij,fjn->fin", blocks, shape_data.reshape(f, 3, n))
    return per_frame.reshape(2 * f, n)


def backproject_array(blocks: np.ndarray, track_data: np.ndarray) -> np.ndarray:
    """Apply the transposed camera blocks to a 2F x N track array (gives 3F x N)."""
    f = blocks.shape[0]
    n = track_data.shape[1]
    per_frame = np.einsum("fji,fjn->fin", blocks, track_data.reshape(f, 2, n))
    return per_frame.reshape(3 * f, n)


def project(r: RotationStack, s: ShapeMatrix) -> TrackMatrix:
    """Orthographic projection of every frame of the shape through its camera block."""
    if r.frames != s.frames:
        raise DimensionError(
            f"rotation stack has {r.frames} frames but shape has {s.frames}"
        )
    return TrackMatrix(project_array(r.blocks, s.data))


def center_tracks(w: TrackMatrix) -> TrackMatrix:
    """Subtract each frame's 2D centroid from its tracks.

    Orthographic projection makes a per-frame translation unobservable up to
    this centroid, so estimation pipelines work on centered tracks and
    recover the zero-centroid shape representative.
    """
    f, n = w.frames, w.points
    rows = w.data.reshape(2 * f, n)
    return TrackMatrix(rows - rows.mean(axis=1, keepdims=True))


def center_shape(s: ShapeMatrix) -> ShapeMatrix:
    """Move each frame's 3D centroid to the origin."""
    f, n = s.frames, s.points
    per_frame = s.data.reshape(f, 3, n)
    return ShapeMatrix((per_frame - per_frame.mean(axis=2, keepdims=True)).reshape(3 * f, n))


def mean_3d_error(estimate: ShapeMatrix, reference: ShapeMatrix) -> float:
    """Mean Euclidean distance between corresponding 3D points of two shapes."""
    if estimate.data.shape != reference.data.shape:
        raise DimensionError(
            f"shape mismatch: {estimate.data.shape} vs {reference.data.shape}"
        )
    f, n = estimate.frames, estimate.points
    diff = (estimate.data - reference.data).reshape(f, 3, n)
    return float(np.sqrt((diff**2).sum(axis=1)).mean())
