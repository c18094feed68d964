"""Monte Carlo calibration harness and the statistical tests it reports.

For T independent noise realizations the full pipeline (solve, optional
rank search, factorize) is run and each trial's estimate is compared to the
across-trial mean.  An element is "covered" in a trial when its error falls
inside +-1.96 * sigma0 * sqrt(3/2 * v) with v the trial's own leverage sum.
A calibrated closed form puts the per-element coverage near 0.95.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.special
import scipy.stats

from .errors import DegenerateSampleError, SpecError, TrialError
from .model import NoiseModel, RearrangedShape, RotationStack, TrackMatrix, center_tracks
from .rank_search import numerical_rank, search_rank, truncate_rank
from .solver import SolverConfig, noise_scaled_mu, solve
from .synth import SyntheticScene, add_noise
from .uncertainty import VARIANCE_FACTOR, factorize, leverage_field

COVERAGE_BAND = 1.96


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo protocol parameters.

    ``rank_override`` perturbs the searched rank by a signed percentage
    (rounded, floored at 1) before the exact-rank projection, to probe how
    sensitive the coverage is to rank selection.
    """

    trials: int = 100
    sigma0: float = 0.05
    base_seed: int = 0
    rank_override: float | None = None
    use_rank_search: bool = True
    normality_samples: int = 16

    def __post_init__(self):
        if self.trials < 2:
            raise SpecError(f"need at least 2 trials, got {self.trials}")
        if not self.sigma0 > 0:
            raise SpecError(f"sigma0 must be > 0, got {self.sigma0}")
        if self.normality_samples < 0:
            raise SpecError("normality_samples must be >= 0")


@dataclass(frozen=True)
class McReport:
    """Aggregated Monte Carlo results.

    ``errors`` and ``bound_sigma`` keep the per-trial detail (T x 3N x F)
    so coverage can be re-evaluated at other band widths.
    """

    mean_shape: RearrangedShape
    coverage_mean: float
    coverage_std: float
    per_element_coverage: np.ndarray
    accuracy_original: float
    accuracy_noise_aware: float
    normality_pvalues: dict = field(default_factory=dict)
    qq_data: dict = field(default_factory=dict)
    errors: np.ndarray = None
    bound_sigma: np.ndarray = None
    ranks: tuple = ()
    sigma0: float = 0.0
    trials: int = 0


def apply_rank_override(rank: int, override_percent: float) -> int:
    """Perturb a rank by a signed percentage, never below 1."""
    return max(1, int(round(rank * (1.0 + override_percent / 100.0))))


def _limit_worker_threads():
    # Workers run one trial at a time; keep BLAS from oversubscribing cores.
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = "1"
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(1)
    except ImportError:
        pass


def _run_trial(args):
    (k, tracks_data, blocks, sigma0, seed, cfg_fields, use_rank_search, rank_override) = args
    try:
        tracks = TrackMatrix(tracks_data)
        rotations = RotationStack(blocks)
        # Per-frame translation is unobservable up to the track centroid, so
        # each trial solves the centered problem and all per-trial estimates
        # are zero-centroid shape representatives.
        noisy = center_tracks(add_noise(tracks, NoiseModel(sigma0=sigma0, seed=seed)))
        report = solve(noisy, rotations, SolverConfig(**cfg_fields))

        if use_rank_search:
            rank = search_rank(report.shape, noisy, rotations, sigma0).rank
        else:
            rank = numerical_rank(report.shape)
        if rank_override is not None:
            rank = apply_rank_override(rank, rank_override)

        noise_aware = truncate_rank(report.shape, rank)
        factors = factorize(report.shape, rank)
        v = leverage_field(factors, sigma0).v
        return k, report.shape.data, noise_aware.data, v, rank, None
    except Exception as exc:  # surfaced as TrialError by the caller
        return k, None, None, None, None, repr(exc)


def run_monte_carlo(
    scene: SyntheticScene,
    cfg: McConfig,
    solver_cfg: SolverConfig | None = None,
    parallel: int | None = None,
) -> McReport:
    """Run the full pipeline on T fresh noise realizations and aggregate.

    Trial k uses seed ``base_seed + k``; aggregation is keyed by trial index,
    so the report is bit-identical regardless of worker scheduling.  Tracks
    are mean-centered per frame before solving.  When ``solver_cfg`` is
    omitted, the nuclear-norm weight is scaled to the known noise level and
    momentum is enabled.
    """
    if solver_cfg is None:
        mu = noise_scaled_mu(scene.tracks_clean.frames, scene.tracks_clean.points, cfg.sigma0)
        solver_cfg = SolverConfig(mu=mu, accelerate=True)
    cfg_fields = {
        "mu": solver_cfg.mu,
        "max_iters": solver_cfg.max_iters,
        "rel_tol": solver_cfg.rel_tol,
        "accelerate": solver_cfg.accelerate,
    }
    tasks = [
        (
            k,
            scene.tracks_clean.data,
            scene.rotations.blocks,
            cfg.sigma0,
            cfg.base_seed + k,
            cfg_fields,
            cfg.use_rank_search,
            cfg.rank_override,
        )
        for k in range(1, cfg.trials + 1)
    ]

    workers = parallel if parallel is not None else (os.cpu_count() or 1)
    workers = max(1, min(workers, cfg.trials))
    if workers == 1:
        raw = [_run_trial(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_limit_worker_threads) as pool:
            raw = list(pool.map(_run_trial, tasks))

    by_index = {item[0]: item for item in raw}
    originals, noise_awares, v_fields, ranks = [], [], [], []
    for k in range(1, cfg.trials + 1):
        _, orig, na, v, rank, failure = by_index[k]
        if failure is not None:
            raise TrialError(k, failure)
        originals.append(orig)
        noise_awares.append(na)
        v_fields.append(v)
        ranks.append(rank)

    orig_stack = np.asarray(originals)
    na_stack = np.asarray(noise_awares)
    v_stack = np.asarray(v_fields)

    # Extended-precision accumulation: identical trials (degenerate noise)
    # must give exactly zero errors, and plain float64 means round.
    mean_na = na_stack.mean(axis=0, dtype=np.longdouble).astype(na_stack.dtype)
    errors = na_stack - mean_na
    bound_sigma = cfg.sigma0 * np.sqrt(VARIANCE_FACTOR * v_stack)
    covered = np.abs(errors) <= COVERAGE_BAND * bound_sigma
    per_element = covered.mean(axis=0)

    report = McReport(
        mean_shape=RearrangedShape(mean_na),
        coverage_mean=float(per_element.mean()),
        coverage_std=float(per_element.std()),
        per_element_coverage=per_element,
        accuracy_original=_mean_dispersion(orig_stack),
        accuracy_noise_aware=_mean_dispersion(na_stack),
        normality_pvalues={},
        qq_data={},
        errors=errors,
        bound_sigma=bound_sigma,
        ranks=tuple(ranks),
        sigma0=cfg.sigma0,
        trials=cfg.trials,
    )
    _attach_normality(report, cfg)
    return report


def _mean_dispersion(stack: np.ndarray) -> float:
    """Average over trials of the mean 3D point distance to the trial mean."""
    t, rows, f = stack.shape
    n = rows // 3
    diffs = (stack - stack.mean(axis=0)).reshape(t, 3, n, f)
    return float(np.sqrt((diffs**2).sum(axis=1)).mean())


def _attach_normality(report: McReport, cfg: McConfig):
    if cfg.normality_samples == 0 or cfg.trials < 3:
        return
    rows, cols = report.per_element_coverage.shape
    rng = np.random.default_rng(cfg.base_seed)
    count = min(cfg.normality_samples, rows * cols)
    flat = rng.choice(rows * cols, size=count, replace=False)
    for idx in flat:
        i, j = int(idx) // cols, int(idx) % cols
        bound = report.bound_sigma[:, i, j]
        z = np.divide(
            report.errors[:, i, j], bound, out=np.zeros(cfg.trials), where=bound > 0
        )
        try:
            p = shapiro_wilk(z)
        except DegenerateSampleError:
            p = float("nan")
        report.normality_pvalues[(i, j)] = p
        report.qq_data[(i, j)] = qq_series(z)


def shapiro_wilk(samples) -> float:
    """P-value of the Shapiro-Wilk normality test (Royston's approximation)."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or not 3 <= x.size <= 5000:
        raise SpecError(f"sample size must lie in [3, 5000], got {x.size}")
    if np.ptp(x) == 0.0:
        raise DegenerateSampleError("sample has zero variance")
    return float(scipy.stats.shapiro(x).pvalue)


def normal_quantile(p: float) -> float:
    """Inverse standard-normal CDF."""
    if not 0.0 < p < 1.0:
        raise SpecError(f"p must lie in (0, 1), got {p}")
    return float(scipy.special.ndtri(p))


def qq_series(samples) -> np.ndarray:
    """Pairs (normal quantile at (k-0.5)/n, k-th order statistic).

    Samples are assumed already standardized; they are only sorted here.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise SpecError("need at least one sample")
    theoretical = scipy.special.ndtri((np.arange(1, n + 1) - 0.5) / n)
    return np.column_stack([theoretical, x])


def coverage_at_band(report: McReport, band: float) -> np.ndarray:
    """Re-evaluate per-element coverage at a different band width."""
    covered = np.abs(report.errors) <= band * report.bound_sigma
    return covered.mean(axis=0)
