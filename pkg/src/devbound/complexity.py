"""Monte Carlo Gaussian width and complexity with closed-form cross-checks.

Estimates share one Gaussian stream keyed only by (seed, dimension, sample
count), never by the set, so estimates for different sets or rescalings of
the same set are computed on common random numbers.  That makes scale
equivariance an exact identity rather than a statistical one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .geometry import Ball2, FiniteCloud, GenericBallIntersect, GeoSet, Scaled, Sphere, Subspace
from .rng import substream

DEFAULT_SAMPLES = 10_000


@dataclass
class EstimateCI:
    """Monte Carlo mean with a normal-theory 95% interval.

    ``exact`` records whether every oracle call behind the estimate was a
    closed form; heuristic lower-bound oracles propagate exact=False.
    """

    mean: float
    std_error: float
    ci95: tuple[float, float]
    n_samples: int
    exact: bool

    @classmethod
    def from_samples(cls, values: np.ndarray, exact: bool) -> "EstimateCI":
        values = np.asarray(values, dtype=float)
        n = values.size
        mean = float(values.mean())
        se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean, se, (mean - 1.96 * se, mean + 1.96 * se), n, exact)


def gaussian_draws(dim: int, n_samples: int, seed: int) -> np.ndarray:
    """The shared standard normal draws behind all width estimates."""
    rng = substream(seed, "complexity-gaussians", dim, n_samples)
    return rng.standard_normal((n_samples, dim))


def _oracle_exact(T: GeoSet) -> bool:
    while isinstance(T, Scaled):
        T = T.inner
    return not isinstance(T, GenericBallIntersect)


def gaussian_width_mc(T: GeoSet, n_samples: int = DEFAULT_SAMPLES, seed: int = 0) -> EstimateCI:
    """Mean over Gaussian draws of sup_{x in T} <g, x>."""
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples, got {n_samples}")
    G = gaussian_draws(T.dim, n_samples, seed)
    return EstimateCI.from_samples(T.support_batch(G), _oracle_exact(T))


def gaussian_complexity_mc(T: GeoSet, n_samples: int = DEFAULT_SAMPLES, seed: int = 0) -> EstimateCI:
    """Mean over Gaussian draws of sup_{x in T} |<g, x>|."""
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples, got {n_samples}")
    G = gaussian_draws(T.dim, n_samples, seed)
    return EstimateCI.from_samples(T.abs_support_batch(G), _oracle_exact(T))


@dataclass
class SandwichReport:
    """Two-sided comparison of complexity against width plus a shift."""

    width: EstimateCI
    complexity: EstimateCI
    y_norm: float
    lower: float
    upper: float
    passed: bool


def sandwich_check(
    T: GeoSet,
    y,
    n_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    tol: float = 1e-9,
) -> SandwichReport:
    """Check (width + ||y||)/3 <= complexity <= 2 (width + ||y||) for y in T.

    Both sides are widened by the 95% interval half-widths of the two
    estimates, which share the same Gaussian draws.
    """
    y = np.asarray(y, dtype=float)
    if not T.contains(y, tol):
        raise ValueError("reference point y must lie in T")
    width = gaussian_width_mc(T, n_samples, seed)
    complexity = gaussian_complexity_mc(T, n_samples, seed)
    y_norm = float(np.linalg.norm(y))
    w_half = 1.96 * width.std_error
    c_half = 1.96 * complexity.std_error
    lower = (width.mean - w_half + y_norm) / 3.0
    upper = 2.0 * (width.mean + w_half + y_norm)
    passed = (complexity.mean + c_half >= lower) and (complexity.mean - c_half <= upper)
    return SandwichReport(width, complexity, y_norm, lower, upper, passed)


def chi_mean(dim: int) -> float:
    """Expected Euclidean norm of a standard Gaussian vector in R^dim."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    return math.sqrt(2.0) * math.exp(gammaln((dim + 1) / 2.0) - gammaln(dim / 2.0))


def width_closed_form(T: GeoSet) -> float | None:
    """Exact Gaussian width for the kinds that admit one, else None."""
    if isinstance(T, (Ball2, Sphere)):
        return T.r * chi_mean(T.dim)
    if isinstance(T, Subspace):
        return T.r * chi_mean(T.subspace_dim)
    if isinstance(T, FiniteCloud) and T.points.shape[0] == 1:
        return 0.0
    if isinstance(T, Scaled):
        inner = width_closed_form(T.inner)
        return None if inner is None else T.scale * inner
    return None


def complexity_closed_form(T: GeoSet) -> float | None:
    """Exact Gaussian complexity where available, else None.

    Symmetric sets inherit the width value; a singleton {y} integrates to
    ||y|| sqrt(2/pi).
    """
    if isinstance(T, FiniteCloud) and T.points.shape[0] == 1:
        return float(np.linalg.norm(T.points[0])) * math.sqrt(2.0 / math.pi)
    if isinstance(T, Scaled):
        inner = complexity_closed_form(T.inner)
        return None if inner is None else T.scale * inner
    if T.is_symmetric:
        return width_closed_form(T)
    return None
