"""Closed-form per-element uncertainty of a rank-r shape estimate.

Given the top-r SVD factors of the recovered axis-major shape and the known
track noise level sigma0, the variance of element (i, j) is

    var(i, j) = 3/2 * sigma0^2 * (||U_i||^2 + ||V_j||^2)

where U_i and V_j are rows of the singular-vector factors.  The 3/2 constant
is the reciprocal of the 2/3 fraction of shape coordinates each orthographic
camera observes.  The leverage sum v_ij = ||U_i||^2 + ||V_j||^2 is bounded by
2 and does not depend on the rotational ambiguity of the factors, since row
norms are invariant under right-multiplication by an orthogonal matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateAlignmentError, DimensionError, SpecError
from .model import RearrangedShape
from .solver import _svd

VARIANCE_FACTOR = 1.5


@dataclass(frozen=True)
class FactorPair:
    """Rank-r SVD factors of a shape estimate and their balanced square roots.

    ``x = u * sqrt(sigma)`` and ``y = v * sqrt(sigma)`` satisfy
    ``x^T x = y^T y = diag(sigma)`` and ``x y^T`` reconstructs the rank-r
    matrix the factors came from.
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    x: np.ndarray
    y: np.ndarray

    @property
    def rank(self) -> int:
        return self.sigma.size


@dataclass(frozen=True)
class UncertaintyField:
    """Per-element leverage sums and the variance they induce."""

    v: np.ndarray
    sigma0: float

    def variance(self) -> np.ndarray:
        """3/2 * sigma0^2 * v, element-wise over the 3N x F layout."""
        return VARIANCE_FACTOR * self.sigma0**2 * self.v

    def stddev(self) -> np.ndarray:
        return np.sqrt(self.variance())


def factorize(s_sharp: RearrangedShape, r: int) -> FactorPair:
    """Top-r SVD with a deterministic sign convention.

    Each column of ``u`` is flipped so its largest-magnitude entry is
    positive (ties broken by lowest index); ``v`` is flipped to match, which
    leaves the reconstruction unchanged.
    """
    max_rank = min(s_sharp.data.shape)
    if not 1 <= r <= max_rank:
        raise SpecError(f"rank must lie in [1, {max_rank}], got {r}")
    u, s, vt = _svd(s_sharp.data)
    u = u[:, :r].copy()
    sigma = s[:r].copy()
    v = vt[:r].T.copy()
    for k in range(r):
        lead = np.argmax(np.abs(u[:, k]))
        if u[lead, k] < 0:
            u[:, k] = -u[:, k]
            v[:, k] = -v[:, k]
    root = np.sqrt(sigma)
    return FactorPair(u=u, sigma=sigma, v=v, x=u * root, y=v * root)


def rectify(noisy: FactorPair, reference: FactorPair) -> np.ndarray:
    """Orthogonal matrix aligning the noisy factors to the reference factors.

    Solves the joint orthogonal Procrustes problem
    min_H ||x H - x_ref||_F^2 + ||y H - y_ref||_F^2 over orthogonal H, in
    closed form from the SVD of the summed cross matrix.
    """
    if noisy.rank != reference.rank:
        raise DimensionError(f"rank mismatch: {noisy.rank} vs {reference.rank}")
    cross = noisy.x.T @ reference.x + noisy.y.T @ reference.y
    scale = np.linalg.norm(noisy.x) * np.linalg.norm(reference.x) + np.linalg.norm(
        noisy.y
    ) * np.linalg.norm(reference.y)
    if np.linalg.norm(cross) <= 1e-12 * max(scale, 1.0):
        raise DegenerateAlignmentError("cross matrix of the alignment is numerically zero")
    a, _, bt = _svd(cross)
    return a @ bt


def leverage_field(f: FactorPair, sigma0: float) -> UncertaintyField:
    """Leverage sums ||U_i||^2 + ||V_j||^2 over the whole 3N x F grid."""
    if sigma0 < 0:
        raise SpecError(f"sigma0 must be >= 0, got {sigma0}")
    u_norms = (f.u**2).sum(axis=1)
    v_norms = (f.v**2).sum(axis=1)
    return UncertaintyField(v=u_norms[:, None] + v_norms[None, :], sigma0=sigma0)


def covariance(f: FactorPair, sigma0: float, i: int, j: int, m: int, n: int) -> float:
    """Covariance between elements (i, j) and (m, n) of the estimate.

    Row indices pair with row indices and column indices with column
    indices, so the diagonal case (m, n) == (i, j) reduces exactly to the
    element variance.
    """
    rows, cols = f.u.shape[0], f.v.shape[0]
    for name, idx, bound in (("i", i, rows), ("m", m, rows), ("j", j, cols), ("n", n, cols)):
        if not 0 <= idx < bound:
            raise SpecError(f"index {name}={idx} out of range [0, {bound})")
    return VARIANCE_FACTOR * sigma0**2 * float(f.u[i] @ f.u[m] + f.v[j] @ f.v[n])


def error_ellipse(f: FactorPair, sigma0: float, point: int, frame: int) -> np.ndarray:
    """3x3 covariance of one 3D point at one frame.

    Built from the variances of the point's X/Y/Z rows and the pairwise
    covariance formula, then symmetrized and eigenvalue-clipped at zero to
    wash out machine-scale asymmetry.
    """
    n = f.u.shape[0] // 3
    frames = f.v.shape[0]
    if not 0 <= point < n:
        raise SpecError(f"point {point} out of range [0, {n})")
    if not 0 <= frame < frames:
        raise SpecError(f"frame {frame} out of range [0, {frames})")
    rows = [point, n + point, 2 * n + point]
    cov = np.empty((3, 3))
    for a in range(3):
        for b in range(3):
            cov[a, b] = covariance(f, sigma0, rows[a], frame, rows[b], frame)
    cov = 0.5 * (cov + cov.T)
    w, q = np.linalg.eigh(cov)
    return (q * np.maximum(w, 0.0)) @ q.T
