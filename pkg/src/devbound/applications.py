"""Downstream consequences of the uniform deviation bound.

Each check here is the empirical face of one derived guarantee: extreme
singular values of tall matrices, pairwise-distance preservation of random
projections, kernels escaping a set, the kernel-section radius, and the
radius of a random image.  Bounds on the right-hand sides carry an explicit
constant argument; the conservative default 2.0 reflects that these are
consequences with slack, not statistics to calibrate against themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.linalg import null_space

from .complexity import DEFAULT_SAMPLES, complexity_closed_form, gaussian_complexity_mc
from .deviation import wilson_interval
from .ensembles import EnsembleSpec, row_psi2_bound, sample_matrix
from .geometry import (
    Ball2,
    FiniteCloud,
    GeoSet,
    Scaled,
    SparseVectors,
    Sphere,
    StarHull,
    UnsupportedOperation,
    ball_intersect,
    diff_cloud,
)
from .rng import map_trials, substream

DEFAULT_C = 2.0
ESCAPE_MARGIN = 1e-8


@dataclass
class SingularIntervalReport:
    """Per-draw extreme singular values against the two-sided interval."""

    sigma_min: np.ndarray
    sigma_max: np.ndarray
    lower: float
    upper: float
    violations: int
    n_trials: int
    c_cal: float
    k_value: float


def singular_interval_check(
    spec: EnsembleSpec,
    n_trials: int = 100,
    c_cal: float = DEFAULT_C,
    draw_offset: int = 0,
    threads: int | None = None,
) -> SingularIntervalReport:
    """Count draws whose spectrum leaves [sqrt(m) - cK^2 sqrt(n), sqrt(m) + cK^2 sqrt(n)].

    Requires a tall isotropic spec (m > n); with n = 1 the check reduces to
    concentration of a single column norm.
    """
    if spec.m <= spec.n:
        raise ValueError(f"tall matrices only: need m > n, got m={spec.m}, n={spec.n}")
    if not spec.isotropic:
        raise ValueError("singular interval check expects isotropic rows; whiten first")
    k = row_psi2_bound(spec)
    half = c_cal * k * k * math.sqrt(spec.n)
    lower = math.sqrt(spec.m) - half
    upper = math.sqrt(spec.m) + half

    def one_trial(t: int) -> tuple[float, float]:
        s = np.linalg.svd(sample_matrix(spec, draw_offset + t).entries, compute_uv=False)
        return float(s.min()), float(s.max())

    pairs = map_trials(one_trial, n_trials, threads)
    smin = np.array([p[0] for p in pairs])
    smax = np.array([p[1] for p in pairs])
    violations = int(((smin < lower) | (smax > upper)).sum())
    return SingularIntervalReport(smin, smax, lower, upper, violations, n_trials, c_cal, k)


def _pairwise_distances(points: np.ndarray) -> np.ndarray:
    sq = (points**2).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * points @ points.T
    iu = np.triu_indices(points.shape[0], k=1)
    return np.sqrt(np.maximum(d2[iu], 0.0))


@dataclass
class JLReport:
    """Pairwise distortions of one random projection x -> Ax / sqrt(m)."""

    distortions: np.ndarray
    max_distortion: float
    bound: float
    n_points: int
    draw_index: int
    c_cal: float
    k_value: float


def jl_embed(
    cloud: FiniteCloud,
    spec: EnsembleSpec,
    draw_index: int = 0,
    c_cal: float = DEFAULT_C,
) -> JLReport:
    """Relative pairwise distortion of the scaled projection of a cloud.

    Distortion of a pair is | ||A(x-y)|| / (sqrt(m) ||x-y||) - 1 |; the
    reference bound is c K^2 sqrt(log N) / sqrt(m).
    """
    if not spec.isotropic:
        raise ValueError("distance preservation expects isotropic rows; whiten first")
    points = cloud.points
    if points.shape[0] < 2:
        raise ValueError("embedding needs at least two points")
    dists = _pairwise_distances(points)
    if (dists == 0.0).any():
        raise ValueError("cloud points must be pairwise distinct")
    A = sample_matrix(spec, draw_index).entries
    embedded = points @ A.T
    edists = _pairwise_distances(embedded)
    distortions = np.abs(edists / (math.sqrt(spec.m) * dists) - 1.0)
    k = row_psi2_bound(spec)
    bound = c_cal * k * k * math.sqrt(math.log(points.shape[0])) / math.sqrt(spec.m)
    return JLReport(
        distortions=distortions,
        max_distortion=float(distortions.max()),
        bound=bound,
        n_points=points.shape[0],
        draw_index=draw_index,
        c_cal=c_cal,
        k_value=k,
    )


def jl_local_bound(
    cloud: FiniteCloud,
    pair: tuple[int, int],
    m: int,
    n_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    c_cal: float = 1.0,
    k_value: float = 1.0,
) -> float:
    """Pair-local additive error bound c K^2 gamma(star(X-X) cap dist ball) / sqrt(m).

    With the default constants this is the bare complexity term; the global
    analogue is the same expression without the ball cap, so the two are
    directly comparable.
    """
    i, j = pair
    delta = float(np.linalg.norm(cloud.points[i] - cloud.points[j]))
    if delta == 0.0:
        raise ValueError("pair points coincide")
    hull = StarHull(diff_cloud(cloud.points))
    capped = ball_intersect(hull, delta)
    gamma = gaussian_complexity_mc(capped, n_samples, seed).mean
    return c_cal * k_value * k_value * gamma / math.sqrt(m)


def jl_global_bound(
    cloud: FiniteCloud,
    m: int,
    n_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    c_cal: float = 1.0,
    k_value: float = 1.0,
) -> float:
    """Uniform additive bound c K^2 gamma(star(X-X)) / sqrt(m), no ball cap.

    Shares the Gaussian sample pool with jl_local_bound under the same seed,
    so local <= global holds exactly per sample for the widest pair.
    """
    hull = StarHull(diff_cloud(cloud.points))
    gamma = gaussian_complexity_mc(hull, n_samples, seed).mean
    return c_cal * k_value * k_value * gamma / math.sqrt(m)


def min_image_norm(A: np.ndarray, T: GeoSet) -> float:
    """Exact min of ||Ax|| over T for kinds whose minimum is enumerable.

    Only exact paths are allowed: a heuristic would upper-bound the minimum,
    which sits on the wrong side of an escape claim.
    """
    if isinstance(T, Scaled):
        return T.scale * min_image_norm(A, T.inner)
    if isinstance(T, FiniteCloud):
        return float(np.linalg.norm(A @ T.points.T, axis=0).min())
    if isinstance(T, Sphere):
        m, n = A.shape
        s = np.linalg.svd(A, compute_uv=False)
        smallest = float(s.min()) if m >= n else 0.0
        return T.r * smallest
    if isinstance(T, SparseVectors) and T.surface:
        if T.n_supports() > 100_000:
            raise UnsupportedOperation("too many supports to enumerate the exact minimum")
        m = A.shape[0]
        best = np.inf
        for S in combinations(range(T.dim), T.s):
            sub = A[:, S]
            smallest = float(np.linalg.svd(sub, compute_uv=False).min()) if m >= T.s else 0.0
            best = min(best, smallest)
        return T.r * best
    raise UnsupportedOperation(f"no exact minimum path for {T.describe()}")


@dataclass
class EscapeReport:
    """Frequency of draws whose kernel misses the set."""

    escape_count: int
    n_trials: int
    frequency: float
    wilson: tuple[float, float]
    min_norms: np.ndarray
    m_threshold_theory: float
    gamma_hat: float
    c_cal: float
    k_value: float


def escape_check(
    spec: EnsembleSpec,
    T: GeoSet,
    n_trials: int = 500,
    c_cal: float = DEFAULT_C,
    n_gamma_samples: int = DEFAULT_SAMPLES,
    draw_offset: int = 0,
    threads: int | None = None,
) -> EscapeReport:
    """Empirical frequency of min_{x in T} ||Ax|| > margin sqrt(m).

    T must not contain the origin (otherwise the kernel trivially meets it)
    and must admit an exact minimum.  The theoretical sample-size threshold
    c K^4 gamma(T)^2 is reported alongside for context.
    """
    if not spec.isotropic:
        raise ValueError("escape check expects isotropic rows; whiten first")
    if T.contains(np.zeros(T.dim)):
        raise ValueError("escape is impossible for sets containing the origin")
    k = row_psi2_bound(spec)
    closed = complexity_closed_form(T)
    gamma = closed if closed is not None else gaussian_complexity_mc(T, n_gamma_samples, spec.seed).mean
    cut = ESCAPE_MARGIN * math.sqrt(spec.m)

    def one_trial(t: int) -> float:
        return min_image_norm(sample_matrix(spec, draw_offset + t).entries, T)

    mins = np.array(map_trials(one_trial, n_trials, threads))
    count = int((mins > cut).sum())
    return EscapeReport(
        escape_count=count,
        n_trials=n_trials,
        frequency=count / n_trials,
        wilson=wilson_interval(count, n_trials),
        min_norms=mins,
        m_threshold_theory=c_cal * k**4 * gamma * gamma,
        gamma_hat=gamma,
        c_cal=c_cal,
        k_value=k,
    )


def _max_feasible_scale(T: GeoSet, direction: np.ndarray, hi: float) -> float:
    """Largest alpha with alpha * direction in T, by bisection on membership."""
    if not T.contains(np.zeros(T.dim)):
        raise ValueError("scale search requires a set containing the origin")
    lo = 0.0
    if T.contains(hi * direction):
        return hi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if T.contains(mid * direction):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class KernelSectionReport:
    """Lower bounds on the kernel-section radius against the width bound."""

    radius_lbs: np.ndarray
    bounds: np.ndarray
    all_below: bool
    gamma_hat: float
    c_cal: float
    k_value: float


def mstar_radius(
    spec: EnsembleSpec,
    T: GeoSet,
    n_trials: int = 20,
    n_starts: int = 8,
    c_cal: float = DEFAULT_C,
    n_gamma_samples: int = DEFAULT_SAMPLES,
    draw_offset: int = 0,
    threads: int | None = None,
) -> KernelSectionReport:
    """Heuristic lower bound on rad(ker A cap T) per draw, with its bound.

    Alternating steps project onto the kernel, stretch to the set boundary
    along that direction, then push through the set's projection to rotate
    toward directions the set reaches farther.  The result is a certified
    lower bound (every candidate lies in both sets) but not a maximum.
    """
    if not spec.isotropic:
        raise ValueError("kernel-section radius expects isotropic rows; whiten first")
    k = row_psi2_bound(spec)
    closed = complexity_closed_form(T)
    gamma = closed if closed is not None else gaussian_complexity_mc(T, n_gamma_samples, spec.seed).mean
    bound_value = c_cal * k * k * gamma / math.sqrt(spec.m)
    rad = T.radius()

    def one_trial(t: int) -> float:
        A = sample_matrix(spec, draw_offset + t).entries
        kernel = null_space(A)
        if kernel.shape[1] == 0:
            return 0.0
        rng = substream(spec.seed, "kernel-section", draw_offset + t)
        best = 0.0
        for _ in range(n_starts):
            x = rng.standard_normal(spec.n)
            for _ in range(20):
                u = kernel @ (kernel.T @ x)
                norm = float(np.linalg.norm(u))
                if norm < 1e-12:
                    break
                u /= norm
                alpha = _max_feasible_scale(T, u, 2.0 * rad)
                best = max(best, alpha)
                try:
                    x = T.project(2.0 * alpha * u)
                except UnsupportedOperation:
                    break
        return best

    lbs = np.array(map_trials(one_trial, n_trials, threads))
    bounds = np.full(n_trials, bound_value)
    return KernelSectionReport(
        radius_lbs=lbs,
        bounds=bounds,
        all_below=bool((lbs <= bounds + 1e-9).all()),
        gamma_hat=gamma,
        c_cal=c_cal,
        k_value=k,
    )


def max_image_norm(A: np.ndarray, T: GeoSet) -> float:
    """Exact max of ||Ax|| over T for kinds with an enumerable maximum."""
    if isinstance(T, Scaled):
        return T.scale * max_image_norm(A, T.inner)
    if isinstance(T, StarHull):
        return max_image_norm(A, T.inner)
    if isinstance(T, FiniteCloud):
        return float(np.linalg.norm(A @ T.points.T, axis=0).max())
    if isinstance(T, (Sphere, Ball2)):
        return T.r * float(np.linalg.svd(A, compute_uv=False).max())
    if isinstance(T, SparseVectors) and T.r is not None:
        if T.n_supports() > 100_000:
            raise UnsupportedOperation("too many supports to enumerate the exact maximum")
        best = 0.0
        for S in combinations(range(T.dim), T.s):
            best = max(best, float(np.linalg.svd(A[:, S], compute_uv=False).max()))
        return T.r * best
    raise UnsupportedOperation(f"no exact maximum path for {T.describe()}")


@dataclass
class ImageRadiusReport:
    """Radius of the image of a set per draw, against its additive bound."""

    image_radii: np.ndarray
    bounds: np.ndarray
    all_below: bool
    set_radius: float
    gamma_hat: float
    c_cal: float
    k_value: float


def random_image_radius(
    spec: EnsembleSpec,
    T: GeoSet,
    n_trials: int = 100,
    c_cal: float = DEFAULT_C,
    n_gamma_samples: int = DEFAULT_SAMPLES,
    draw_offset: int = 0,
    threads: int | None = None,
) -> ImageRadiusReport:
    """Check rad(AT) <= sqrt(m) rad(T) + c K^2 gamma(T) per draw."""
    if not spec.isotropic:
        raise ValueError("image radius check expects isotropic rows; whiten first")
    k = row_psi2_bound(spec)
    closed = complexity_closed_form(T)
    gamma = closed if closed is not None else gaussian_complexity_mc(T, n_gamma_samples, spec.seed).mean
    rad = T.radius()
    bound_value = math.sqrt(spec.m) * rad + c_cal * k * k * gamma

    def one_trial(t: int) -> float:
        return max_image_norm(sample_matrix(spec, draw_offset + t).entries, T)

    radii = np.array(map_trials(one_trial, n_trials, threads))
    bounds = np.full(n_trials, bound_value)
    return ImageRadiusReport(
        image_radii=radii,
        bounds=bounds,
        all_below=bool((radii <= bounds + 1e-9).all()),
        set_radius=rad,
        gamma_hat=gamma,
        c_cal=c_cal,
        k_value=k,
    )
