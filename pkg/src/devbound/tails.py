"""Empirical Orlicz norms and the tail bounds expressed through them.

The psi_q norm of a sample set is the smallest K with
mean(exp((|x|/K)^q) - 1) <= 1; it is found by bisection on K with the
expectation evaluated in log space, so brackets that momentarily explode
exp() cannot overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .ensembles import EnsembleSpec, sample_matrix, sqrt_covariance

MIN_SAMPLES = 100


@dataclass
class OrliczEstimate:
    """Empirical psi_q norm of a sample set.

    ``bisection_interval`` is the final bracket; ``degenerate`` marks the
    all-zero sample set, whose norm is reported as 0.
    """

    norm_value: float
    orlicz_index: int
    n_samples: int
    bisection_interval: tuple[float, float]
    degenerate: bool = False


def orlicz_norm_empirical(samples, index: int = 2, rel_tol: float = 1e-4) -> OrliczEstimate:
    """psi_index norm of the empirical distribution of the samples.

    Matches the convention E exp((|x|/K)^q) <= 2 at the norm value; the
    returned K satisfies it within the bisection's relative tolerance.
    """
    if index not in (1, 2):
        raise ValueError(f"orlicz index must be 1 or 2, got {index}")
    x = np.abs(np.asarray(samples, dtype=float).ravel())
    if x.size < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {x.size}")
    if not np.isfinite(x).all():
        raise ValueError("samples must be finite")
    top = float(x.max())
    if top == 0.0:
        return OrliczEstimate(0.0, index, x.size, (0.0, 0.0), degenerate=True)

    log_2n = math.log(2.0 * x.size)

    def exceeds(k: float) -> bool:
        # mean exp((x/k)^q) > 2  <=>  logsumexp((x/k)^q) > log(2 n)
        return bool(logsumexp((x / k) ** index) > log_2n)

    lo, hi = top / 50.0, 50.0 * top
    # The bracket always straddles: at lo the top sample alone contributes
    # exp(50^q) >> 2n, at hi every term is exp((1/50)^q) ~ 1.
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if exceeds(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo <= rel_tol * hi:
            break
    return OrliczEstimate(0.5 * (lo + hi), index, x.size, (lo, hi))


def bernstein_bound(m: int, t: float, L: float, c_bern: float = 0.25) -> float:
    """Mixed-regime tail bound min(1, 2 exp(-c m min(t^2/L^2, t/L)))."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if L <= 0:
        raise ValueError(f"scale L must be positive, got {L}")
    if t < 0:
        raise ValueError(f"threshold t must be >= 0, got {t}")
    if c_bern <= 0:
        raise ValueError(f"c_bern must be positive, got {c_bern}")
    exponent = c_bern * m * min((t / L) ** 2, t / L)
    return min(1.0, 2.0 * math.exp(-exponent))


def norm_concentration_check(
    family: str,
    m: int,
    n_trials: int = 10_000,
    seed: int = 0,
) -> OrliczEstimate:
    """psi2 norm of ||X|| - sqrt(m) over draws of an isotropic m-vector.

    The testable content is boundedness in m: the estimate should stay flat
    as m grows.
    """
    spec = EnsembleSpec(family=family, m=n_trials, n=m, seed=seed)
    rows = sample_matrix(spec, draw_index=0).entries
    samples = np.linalg.norm(rows, axis=1) - math.sqrt(m)
    return orlicz_norm_empirical(samples, index=2)


def scaled_norms(spec: EnsembleSpec, points: np.ndarray) -> np.ndarray:
    """sqrt(m)-scaled reference norms of the points under the spec's covariance."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    root = sqrt_covariance(spec)
    if root is None:
        return np.linalg.norm(points, axis=1)
    return np.linalg.norm(points @ root, axis=1)


def deviation_samples(
    spec: EnsembleSpec,
    points: np.ndarray,
    n_trials: int,
    draw_offset: int = 0,
) -> np.ndarray:
    """(n_trials, n_points) array of ||A x|| - sqrt(m) ||x|| per draw.

    Anisotropic specs center at sqrt(m) times the covariance-weighted norm,
    which is the mean-square level of ||A x|| in that case.  Draw indices
    start at ``draw_offset`` so calibration and certification batches can use
    disjoint draws of the same spec.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != spec.n:
        raise ValueError(f"points have dimension {points.shape[1]}, spec expects {spec.n}")
    ref = math.sqrt(spec.m) * scaled_norms(spec, points)
    out = np.empty((n_trials, points.shape[0]))
    for t in range(n_trials):
        A = sample_matrix(spec, draw_offset + t).entries
        out[t] = np.linalg.norm(A @ points.T, axis=0) - ref
    return out


def increment_ratio(
    spec: EnsembleSpec,
    x,
    y,
    n_trials: int = 1000,
    draw_offset: int = 0,
) -> tuple[float, OrliczEstimate]:
    """psi2 norm of Z_x - Z_y divided by ||x - y||, over matrix draws.

    The matrices depend only on (spec, draw index), so swapping x and y
    reuses the same draws and returns the identical ratio.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dist = float(np.linalg.norm(x - y))
    if dist == 0.0:
        raise ValueError("x and y must differ")
    Z = deviation_samples(spec, np.vstack([x, y]), n_trials, draw_offset)
    estimate = orlicz_norm_empirical(Z[:, 0] - Z[:, 1], index=2)
    return estimate.norm_value / dist, estimate
