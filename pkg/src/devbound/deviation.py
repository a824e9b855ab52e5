"""Uniform deviation statistics sup | ||Ax|| - sqrt(m)||x|| | over a set.

Exact maximization paths exist for finite clouds (scan), sparse vectors with
enumerable supports (per-support singular values), Euclidean balls, spheres
and capped subspaces (full SVD), and for rescalings and star hulls of these.
Everything else is handled by a flagged multi-start projected ascent that
reports a feasible lower bound and never pretends to be exact.

Certification is two-stage everywhere: a constant is calibrated as a median
empirical ratio on one batch of draws, then the functional form (linearity in
complexity, exp(-u^2) tails, locality in the probe norm) is verified on
fresh, seed-disjoint draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .complexity import (
    DEFAULT_SAMPLES,
    complexity_closed_form,
    gaussian_complexity_mc,
    gaussian_width_mc,
    width_closed_form,
)
from .ensembles import EnsembleSpec, MatrixSample, row_psi2_bound, sample_matrix, sqrt_covariance
from .geometry import (
    Ball2,
    FiniteCloud,
    GeoSet,
    Scaled,
    SparseVectors,
    Sphere,
    StarCloudSlice,
    StarHull,
    Subspace,
    ball_intersect,
)
from .rng import map_trials, substream

MAX_ENUMERATED_SUPPORTS = 100_000


@dataclass
class DeviationReport:
    """Supremum of the deviation over one matrix draw and one set.

    ``sup_pos`` is sup Z, ``sup_neg`` is sup(-Z); their maximum equals
    ``sup_abs``.  The witness attains sup_abs when the path is exact.
    """

    sup_abs: float
    sup_pos: float
    sup_neg: float
    witness: np.ndarray
    exact: bool
    method: str


def _scaled_norm(spec: EnsembleSpec, x: np.ndarray) -> float:
    root = sqrt_covariance(spec)
    if root is None:
        return float(np.linalg.norm(x))
    return float(np.linalg.norm(root @ x))


def _scan_report(A: np.ndarray, spec: EnsembleSpec, points: np.ndarray, with_origin: bool, method: str) -> DeviationReport:
    root = sqrt_covariance(spec)
    ref = np.linalg.norm(points if root is None else points @ root, axis=1)
    z = np.linalg.norm(A @ points.T, axis=0) - math.sqrt(spec.m) * ref
    i = int(np.argmax(np.abs(z)))
    sup_pos = float(z.max())
    sup_neg = float((-z).max())
    if with_origin:
        sup_pos = max(sup_pos, 0.0)
        sup_neg = max(sup_neg, 0.0)
    return DeviationReport(
        sup_abs=float(abs(z[i])),
        sup_pos=sup_pos,
        sup_neg=sup_neg,
        witness=points[i].copy(),
        exact=True,
        method=method,
    )


def _svd_interval_report(A_eff: np.ndarray, m: int, r: float, lift, with_origin: bool, method: str) -> DeviationReport:
    """Deviation extremes over {lift(c): ||c|| <= r} when ||A_eff c|| drives Z."""
    u, s, vt = np.linalg.svd(A_eff, full_matrices=False)
    sq = math.sqrt(m)
    hi = float(s.max())
    # A wide matrix has a nontrivial kernel, so the smallest value of
    # ||A_eff c|| over unit c is 0 even though svd() only lists min(m, d)
    # values.
    lo = float(s.min()) if A_eff.shape[0] >= A_eff.shape[1] else 0.0
    sup_pos = r * (hi - sq)
    sup_neg = r * (sq - lo)
    if sup_pos >= sup_neg:
        direction = vt[int(np.argmax(s))]
    else:
        direction = _kernel_vector(A_eff, vt) if lo == 0.0 and A_eff.shape[0] < A_eff.shape[1] else vt[int(np.argmin(s))]
    witness = lift(r * direction)
    if with_origin:
        sup_pos = max(sup_pos, 0.0)
        sup_neg = max(sup_neg, 0.0)
    return DeviationReport(
        sup_abs=max(sup_pos, sup_neg),
        sup_pos=sup_pos,
        sup_neg=sup_neg,
        witness=witness,
        exact=True,
        method=method,
    )


def _kernel_vector(A_eff: np.ndarray, vt: np.ndarray) -> np.ndarray:
    d = A_eff.shape[1]
    basis = vt  # rows span the row space
    x = np.zeros(d)
    x[0] = 1.0
    x -= basis.T @ (basis @ x)
    norm = np.linalg.norm(x)
    if norm < 1e-12:
        # e1 happened to lie in the row space; any other coordinate works.
        for j in range(1, d):
            x = np.zeros(d)
            x[j] = 1.0
            x -= basis.T @ (basis @ x)
            norm = np.linalg.norm(x)
            if norm >= 1e-12:
                break
    return x / norm


def _sparse_report(A: np.ndarray, spec: EnsembleSpec, T: SparseVectors) -> DeviationReport:
    m = spec.m
    sq = math.sqrt(m)
    r = T.radius()
    best_hi, best_lo = -np.inf, np.inf
    hi_support, lo_support = None, None
    hi_vec, lo_vec = None, None
    for S in combinations(range(T.dim), T.s):
        sub = A[:, S]
        u, s, vt = np.linalg.svd(sub, full_matrices=False)
        top = float(s.max())
        bot = float(s.min()) if m >= T.s else 0.0
        if top > best_hi:
            best_hi, hi_support, hi_vec = top, S, vt[int(np.argmax(s))]
        if bot < best_lo:
            best_lo, lo_support = bot, S
            lo_vec = _kernel_vector(sub, vt) if (m < T.s) else vt[int(np.argmin(s))]
    sup_pos = r * (best_hi - sq)
    sup_neg = r * (sq - best_lo)
    support, direction = (hi_support, hi_vec) if sup_pos >= sup_neg else (lo_support, lo_vec)
    witness = np.zeros(T.dim)
    witness[list(support)] = r * direction
    if not T.surface:
        sup_pos = max(sup_pos, 0.0)
        sup_neg = max(sup_neg, 0.0)
    return DeviationReport(
        sup_abs=max(sup_pos, sup_neg),
        sup_pos=sup_pos,
        sup_neg=sup_neg,
        witness=witness,
        exact=True,
        method="sparse-enumeration",
    )


def _operator_norm_sq(A: np.ndarray, n_iters: int = 60) -> float:
    """Largest eigenvalue of A^T A by power iteration from a fixed start."""
    n = A.shape[1]
    v = np.ones(n) / math.sqrt(n)
    lam = 1.0
    for _ in range(n_iters):
        w = A.T @ (A @ v)
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 1.0
        v = w / lam
    return lam


def _heuristic_sup(
    sample: MatrixSample,
    T: GeoSet,
    n_starts: int = 16,
    n_iters: int = 500,
) -> DeviationReport:
    A = sample.entries
    spec = sample.spec
    m = spec.m
    sq = math.sqrt(m)
    root = sqrt_covariance(spec)
    cov = spec.covariance
    step = 1.0 / max(_operator_norm_sq(A), 1e-12)
    rad = T.radius()
    rng = substream(spec.seed, "sup-ascent", sample.draw_index, T.dim)

    def z_of(x: np.ndarray) -> float:
        ref = np.linalg.norm(x) if root is None else np.linalg.norm(root @ x)
        return float(np.linalg.norm(A @ x) - sq * ref)

    def grad_z(x: np.ndarray) -> np.ndarray:
        ax = A @ x
        ax_norm = np.linalg.norm(ax)
        g = A.T @ ax / ax_norm if ax_norm > 0 else np.zeros(T.dim)
        if root is None:
            xn = np.linalg.norm(x)
            if xn > 0:
                g = g - sq * x / xn
        else:
            ref = np.linalg.norm(root @ x)
            if ref > 0:
                g = g - sq * (cov @ x) / ref
        return g

    starts = [rng.standard_normal(T.dim) * rad / math.sqrt(T.dim) for _ in range(n_starts)]
    sup_pos, sup_neg = -np.inf, -np.inf
    witness = np.zeros(T.dim)
    for sign in (1.0, -1.0):
        for x0 in starts:
            x = T.project(x0)
            val = sign * z_of(x)
            for _ in range(n_iters):
                x_new = T.project(x + step * sign * grad_z(x))
                val_new = sign * z_of(x_new)
                if val_new <= val + 1e-12:
                    break
                x, val = x_new, val_new
            z = z_of(x)
            # Every visited endpoint is feasible, so it tightens both sides.
            if z > sup_pos:
                sup_pos = z
            if -z > sup_neg:
                sup_neg = -z
            if abs(z) >= max(sup_pos, sup_neg) - 1e-15:
                witness = x
    if T.is_star:
        sup_pos = max(sup_pos, 0.0)
        sup_neg = max(sup_neg, 0.0)
    return DeviationReport(
        sup_abs=max(sup_pos, sup_neg),
        sup_pos=sup_pos,
        sup_neg=sup_neg,
        witness=witness,
        exact=False,
        method="projected-ascent",
    )


def sup_deviation(sample: MatrixSample, T: GeoSet) -> DeviationReport:
    """Supremum of | ||Ax|| - sqrt(m)||x|| | over T for one draw.

    Anisotropic specs replace the reference norm by the covariance-weighted
    one; their exact paths are restricted to point scans, since the singular
    value shortcuts assume an isotropic reference.
    """
    A = sample.entries
    spec = sample.spec
    if T.dim != spec.n:
        raise ValueError(f"set dimension {T.dim} does not match spec n={spec.n}")
    if isinstance(T, Scaled):
        inner = sup_deviation(sample, T.inner)
        return DeviationReport(
            sup_abs=T.scale * inner.sup_abs,
            sup_pos=T.scale * inner.sup_pos,
            sup_neg=T.scale * inner.sup_neg,
            witness=T.scale * inner.witness,
            exact=inner.exact,
            method=inner.method,
        )
    if isinstance(T, StarHull):
        inner = sup_deviation(sample, T.inner)
        # The hull adds exactly the segments toward 0; |Z| is homogeneous
        # along them, so the two-sided supremum is unchanged and the
        # one-sided ones are clamped at the value at the origin.
        return DeviationReport(
            sup_abs=inner.sup_abs,
            sup_pos=max(inner.sup_pos, 0.0),
            sup_neg=max(inner.sup_neg, 0.0),
            witness=inner.witness,
            exact=inner.exact,
            method=inner.method,
        )
    if isinstance(T, FiniteCloud):
        return _scan_report(A, spec, T.points, with_origin=False, method="cloud-scan")
    if isinstance(T, StarCloudSlice):
        clipped = T.points * T.caps[:, None]
        return _scan_report(A, spec, clipped, with_origin=True, method="clipped-segment-scan")
    if isinstance(T, SparseVectors) and spec.isotropic:
        if T.r is None:
            raise ValueError("deviation over the sparsity cone is unbounded; give the set a radius")
        if T.n_supports() <= MAX_ENUMERATED_SUPPORTS:
            return _sparse_report(A, spec, T)
        return _heuristic_sup(sample, T)
    if isinstance(T, (Ball2, Sphere)) and spec.isotropic:
        with_origin = isinstance(T, Ball2)
        return _svd_interval_report(A, spec.m, T.r, lambda c: c, with_origin, "full-svd")
    if isinstance(T, Subspace) and spec.isotropic:
        basis = T.basis
        return _svd_interval_report(
            A @ basis, spec.m, T.r, lambda c: basis @ c, with_origin=True, method="subspace-svd"
        )
    return _heuristic_sup(sample, T)


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError("need at least one trial")
    if not (0 <= successes <= n):
        raise ValueError(f"successes {successes} out of range for n={n}")
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _complexity_value(T: GeoSet, n_samples: int, seed: int) -> tuple[float, bool]:
    closed = complexity_closed_form(T)
    if closed is not None:
        return closed, True
    est = gaussian_complexity_mc(T, n_samples, seed)
    return est.mean, est.exact


def _width_value(T: GeoSet, n_samples: int, seed: int) -> tuple[float, bool]:
    closed = width_closed_form(T)
    if closed is not None:
        return closed, True
    est = gaussian_width_mc(T, n_samples, seed)
    return est.mean, est.exact


@dataclass
class SweepRow:
    """One set's aggregate in an expectation sweep."""

    label: str
    gamma_hat: float
    mean_sup: float
    ratio: float
    exact: bool


@dataclass
class SweepReport:
    rows: list[SweepRow]
    sup_values: np.ndarray  # (n_trials, n_sets)
    k_value: float
    n_trials: int


def expectation_sweep(
    spec: EnsembleSpec,
    sets: list[GeoSet],
    n_trials: int = 200,
    n_width_samples: int = DEFAULT_SAMPLES,
    draw_offset: int = 0,
    threads: int | None = None,
) -> SweepReport:
    """Mean deviation supremum against complexity, with common draws.

    Each trial applies the same realized matrix to every set, so per-draw
    comparisons across sets are exact.  The reported ratio is
    mean sup / (K^2 gamma_hat) with K the spec's row psi2 bound.
    """
    k = row_psi2_bound(spec)

    def one_trial(t: int) -> list[DeviationReport]:
        sample = sample_matrix(spec, draw_offset + t)
        return [sup_deviation(sample, T) for T in sets]

    reports = map_trials(one_trial, n_trials, threads)
    sup_values = np.array([[r.sup_abs for r in row] for row in reports])
    rows = []
    for j, T in enumerate(sets):
        gamma, gamma_exact = _complexity_value(T, n_width_samples, spec.seed)
        exact = gamma_exact and all(row[j].exact for row in reports)
        mean_sup = float(sup_values[:, j].mean())
        rows.append(SweepRow(T.describe(), gamma, mean_sup, mean_sup / (k * k * gamma), exact))
    return SweepReport(rows=rows, sup_values=sup_values, k_value=k, n_trials=n_trials)


@dataclass
class TailCurve:
    """Exceedance of calibrated thresholds against the theoretical decay."""

    u_grid: np.ndarray
    thresholds: np.ndarray
    exceed_counts: np.ndarray
    empirical: np.ndarray
    wilson_lo: np.ndarray
    wilson_hi: np.ndarray
    theoretical: np.ndarray
    n_trials: int
    c_cal: float
    k_value: float
    width_value: float
    radius: float
    exact: bool


def deviation_ratios(
    spec: EnsembleSpec,
    T: GeoSet,
    n_trials: int,
    n_width_samples: int = DEFAULT_SAMPLES,
    draw_offset: int = 0,
    threads: int | None = None,
) -> np.ndarray:
    """Per-draw ratios sup / (K^2 width) used for calibration."""
    k = row_psi2_bound(spec)
    width, _ = _width_value(T, n_width_samples, spec.seed)
    if width <= 0:
        raise ValueError("cannot calibrate on a set with zero width")

    def one_trial(t: int) -> float:
        return sup_deviation(sample_matrix(spec, draw_offset + t), T).sup_abs

    sups = np.array(map_trials(one_trial, n_trials, threads))
    return sups / (k * k * width)


def calibrate_tail_constant(
    spec: EnsembleSpec,
    T: GeoSet,
    n_trials: int = 200,
    n_width_samples: int = DEFAULT_SAMPLES,
    threads: int | None = None,
) -> float:
    """Median per-draw ratio; by construction the u=0 exceedance is ~1/2."""
    if n_trials < 30:
        raise ValueError(f"calibration needs at least 30 trials, got {n_trials}")
    return float(np.median(deviation_ratios(spec, T, n_trials, n_width_samples, threads=threads)))


def tail_curve(
    spec: EnsembleSpec,
    T: GeoSet,
    u_grid,
    n_trials: int = 2000,
    c_cal: float = 1.0,
    n_width_samples: int = DEFAULT_SAMPLES,
    draw_offset: int = 0,
    threads: int | None = None,
) -> TailCurve:
    """Empirical P[sup > c_cal K^2 (width + u radius)] on a grid of u.

    Meaningful certification uses u >= 1: at u = 0 the threshold reduces to
    the calibrated median and degenerate sets (singletons) sit exactly at
    probability 1/2.
    """
    u_grid = np.asarray(u_grid, dtype=float)
    if (u_grid < 0).any():
        raise ValueError("u grid must be nonnegative")
    k = row_psi2_bound(spec)
    width, width_exact = _width_value(T, n_width_samples, spec.seed)
    rad = T.radius()

    def one_trial(t: int) -> DeviationReport:
        return sup_deviation(sample_matrix(spec, draw_offset + t), T)

    reports = map_trials(one_trial, n_trials, threads)
    sups = np.array([r.sup_abs for r in reports])
    exact = width_exact and all(r.exact for r in reports) and T.radius_exact
    thresholds = c_cal * k * k * (width + u_grid * rad)
    counts = (sups[:, None] > thresholds[None, :]).sum(axis=0)
    lo = np.empty_like(u_grid)
    hi = np.empty_like(u_grid)
    for i, c in enumerate(counts):
        lo[i], hi[i] = wilson_interval(int(c), n_trials)
    return TailCurve(
        u_grid=u_grid,
        thresholds=thresholds,
        exceed_counts=counts,
        empirical=counts / n_trials,
        wilson_lo=lo,
        wilson_hi=hi,
        theoretical=np.exp(-(u_grid**2)),
        n_trials=n_trials,
        c_cal=c_cal,
        k_value=k,
        width_value=width,
        radius=rad,
        exact=exact,
    )


def sample_star_probes(T: GeoSet, n_probes: int, probe_seed: int = 0, n_shells: int = 10) -> np.ndarray:
    """Probe points of a star-shaped set, stratified across norm shells.

    Each probe is a support witness of a random direction scaled by a
    log-spaced factor in (0, 1]; star shape guarantees membership of every
    scaled witness.
    """
    if not T.is_star:
        raise ValueError(f"{T.describe()} is not star-shaped")
    rng = substream(probe_seed, "local-probes", T.dim, n_probes)
    shells = np.logspace(-2, 0, n_shells)
    probes = np.zeros((n_probes, T.dim))
    for i in range(n_probes):
        frac = shells[i % n_shells]
        witness = np.zeros(T.dim)
        for _ in range(50):
            g = rng.standard_normal(T.dim)
            res = T.support(g)
            if res.value > 0 and np.linalg.norm(res.witness) > 0:
                witness = res.witness
                break
        if np.linalg.norm(witness) == 0.0:
            raise ValueError("could not draw a nonzero probe; is the set {0}?")
        probes[i] = frac * witness
    return probes


@dataclass
class LocalReport:
    """Draw-level violations of the norm-local deviation envelope."""

    t: float
    c_cal: float
    k_value: float
    n_trials: int
    n_probes: int
    violating_draws: int
    fraction: float
    wilson: tuple[float, float]
    target: float
    probe_norms: np.ndarray
    gamma_locals: np.ndarray
    max_ratio_per_draw: np.ndarray
    exact: bool


def _local_gammas(T: GeoSet, probe_norms: np.ndarray, n_width_samples: int, seed: int) -> tuple[np.ndarray, bool]:
    gammas = np.empty(probe_norms.size)
    exact = True
    cache: dict[float, tuple[float, bool]] = {}
    for i, rho in enumerate(probe_norms):
        key = float(rho)
        if key not in cache:
            cache[key] = _complexity_value(ball_intersect(T, key), n_width_samples, seed)
        gammas[i], this_exact = cache[key]
        exact = exact and this_exact
    return gammas, exact


def local_ratio_samples(
    spec: EnsembleSpec,
    T: GeoSet,
    probes: np.ndarray,
    n_trials: int,
    n_width_samples: int = 2000,
    draw_offset: int = 0,
    threads: int | None = None,
) -> tuple[np.ndarray, np.ndarray, bool]:
    """Per-draw max over probes of |Z_x| / (K^2 gamma(T cap ||x|| ball)).

    Returns (ratios, local gammas, exactness).  Probes are fixed across
    draws; their local complexities are computed once on common random
    numbers.
    """
    k = row_psi2_bound(spec)
    norms = np.linalg.norm(probes, axis=1)
    if (norms <= 0).any():
        raise ValueError("probes must be nonzero")
    gammas, gamma_exact = _local_gammas(T, norms, n_width_samples, spec.seed)
    if spec.isotropic:
        ref = math.sqrt(spec.m) * norms
    else:
        root = sqrt_covariance(spec)
        ref = math.sqrt(spec.m) * np.linalg.norm(probes @ root, axis=1)

    def one_trial(t: int) -> float:
        A = sample_matrix(spec, draw_offset + t).entries
        z = np.linalg.norm(A @ probes.T, axis=0) - ref
        return float(np.max(np.abs(z) / (k * k * gammas)))

    ratios = np.array(map_trials(one_trial, n_trials, threads))
    return ratios, gammas, gamma_exact


def calibrate_local_constant(
    spec: EnsembleSpec,
    T: GeoSet,
    probes: np.ndarray,
    n_trials: int = 200,
    n_width_samples: int = 2000,
    threads: int | None = None,
) -> float:
    if n_trials < 30:
        raise ValueError(f"calibration needs at least 30 trials, got {n_trials}")
    ratios, _, _ = local_ratio_samples(spec, T, probes, n_trials, n_width_samples, threads=threads)
    return float(np.median(ratios))


def local_check(
    spec: EnsembleSpec,
    T: GeoSet,
    t: float,
    n_trials: int = 500,
    n_probes: int = 50,
    c_cal: float = 1.0,
    probe_seed: int = 0,
    n_width_samples: int = 2000,
    draw_offset: int = 0,
    threads: int | None = None,
) -> LocalReport:
    """Check |Z_x| <= t c_cal K^2 gamma(T cap ||x|| ball) at stratified probes.

    A draw violates when any probe exceeds its envelope; the fraction of
    violating draws is compared against the exp(-t^2) target.  Requires a
    star-shaped set and t >= 1.
    """
    if t < 1.0:
        raise ValueError(f"the local envelope is stated for t >= 1, got {t}")
    probes = sample_star_probes(T, n_probes, probe_seed)
    ratios, gammas, gamma_exact = local_ratio_samples(
        spec, T, probes, n_trials, n_width_samples, draw_offset, threads
    )
    violations = int((ratios > t * c_cal).sum())
    lo, hi = wilson_interval(violations, n_trials)
    return LocalReport(
        t=t,
        c_cal=c_cal,
        k_value=row_psi2_bound(spec),
        n_trials=n_trials,
        n_probes=n_probes,
        violating_draws=violations,
        fraction=violations / n_trials,
        wilson=(lo, hi),
        target=math.exp(-t * t),
        probe_norms=np.linalg.norm(probes, axis=1),
        gamma_locals=gammas,
        max_ratio_per_draw=ratios,
        exact=gamma_exact,
    )


@dataclass
class OneSidedRow:
    label: str
    width_hat: float
    mean_sup_pos: float
    mean_sup_neg: float
    ratio_pos: float
    ratio_neg: float
    exact: bool


def one_sided_sweep(
    spec: EnsembleSpec,
    sets: list[GeoSet],
    n_trials: int = 200,
    n_width_samples: int = DEFAULT_SAMPLES,
    draw_offset: int = 0,
    threads: int | None = None,
) -> list[OneSidedRow]:
    """Mean one-sided suprema normalized by K^2 times the width.

    Width (not complexity) is the correct normalizer for one-sided
    statements; sets with zero width (singletons at the origin scale) report
    NaN ratios and are descriptive only.
    """
    k = row_psi2_bound(spec)

    def one_trial(t: int) -> list[DeviationReport]:
        sample = sample_matrix(spec, draw_offset + t)
        return [sup_deviation(sample, T) for T in sets]

    reports = map_trials(one_trial, n_trials, threads)
    rows = []
    for j, T in enumerate(sets):
        width, width_exact = _width_value(T, n_width_samples, spec.seed)
        pos = float(np.mean([row[j].sup_pos for row in reports]))
        neg = float(np.mean([row[j].sup_neg for row in reports]))
        denom = k * k * width
        ratio_pos = pos / denom if width > 1e-12 else float("nan")
        ratio_neg = neg / denom if width > 1e-12 else float("nan")
        rows.append(
            OneSidedRow(
                label=T.describe(),
                width_hat=width,
                mean_sup_pos=pos,
                mean_sup_neg=neg,
                ratio_pos=ratio_pos,
                ratio_neg=ratio_neg,
                exact=width_exact and all(row[j].exact for row in reports),
            )
        )
    return rows
