"""Experiment driver with a reproducibility contract.

Every subcommand resolves a full parameter set (flags, then config-file
values, then defaults), derives all randomness from the single seed, and
writes a delimited table whose bytes depend only on those parameters; a
summary JSON carries the aggregates plus the one field allowed to vary
(wall time).  Exit codes: 0 success, 2 configuration error, 3 certification
failure when --assert is active.

Config files are plain ``key = value`` lines (``#`` comments allowed)
mirroring the long flag names without the leading dashes, e.g.::

    experiment = tail
    set = ball2:r=1,n=40
    family = gaussian
    m = 100
    trials = 2000
    u-grid = 1,1.5,2
    calibrate = 50
    calibrate-seed = 11

Command-line flags override config-file values.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats

from . import deviation, recovery
from .applications import (
    escape_check,
    jl_embed,
    mstar_radius,
    random_image_radius,
    singular_interval_check,
)
from .complexity import (
    complexity_closed_form,
    gaussian_complexity_mc,
    gaussian_width_mc,
    width_closed_form,
)
from .ensembles import FAMILIES, EnsembleSpec, row_psi2_bound, sample_matrix
from .geometry import GeoSet, L1Ball, Ball2, Scaled, SparseVectors, Sphere, Subspace, parse_set
from .rng import map_trials, substream
from .report import rows_to_csv, rows_to_json, summary_document, write_text
from .tails import increment_ratio

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CERTIFY = 3


class ConfigError(ValueError):
    """Invalid experiment configuration; maps to exit code 2."""


@dataclass
class HandlerResult:
    columns: list[str]
    rows: list[Sequence[Any]]
    aggregates: dict[str, Any]
    certified: bool | None
    params: dict[str, Any]


def _parse_list(text: str, cast: Callable[[str], Any]) -> list:
    try:
        return [cast(part) for part in str(text).split(",") if part != ""]
    except ValueError as err:
        raise ConfigError(f"bad list {text!r}: {err}") from err


def _parse_grid(text: str) -> list[int]:
    """Integer grid: 'a,b,c' or 'start:stop[:step]' (stop inclusive)."""
    text = str(text)
    if ":" in text:
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise ConfigError(f"bad grid {text!r}")
        try:
            start, stop = int(parts[0]), int(parts[1])
            step = int(parts[2]) if len(parts) == 3 else 1
        except ValueError as err:
            raise ConfigError(f"bad grid {text!r}: {err}") from err
        return list(range(start, stop + 1, step))
    return _parse_list(text, int)


def _load_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


_BOOL_KEYS = {"assert", "plot"}


def _expand_config(argv: list[str]) -> list[str]:
    """Splice config-file values in as flags before the explicit ones."""
    if not argv:
        return argv
    path = None
    rest: list[str] = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok == "--config":
            if i + 1 >= len(argv):
                raise ConfigError("--config needs a path")
            path = argv[i + 1]
            i += 2
            continue
        if tok.startswith("--config="):
            path = tok.split("=", 1)[1]
            i += 1
            continue
        rest.append(tok)
        i += 1
    if path is None:
        return rest
    values = _load_config_file(path)
    experiment = values.pop("experiment", None)
    if experiment is not None and rest and rest[0] != experiment:
        raise ConfigError(f"config names experiment {experiment!r} but the command is {rest[0]!r}")
    explicit = {tok.split("=", 1)[0][2:] for tok in rest if tok.startswith("--")}
    injected: list[str] = []
    for key, value in values.items():
        if key in explicit:
            continue
        if key in _BOOL_KEYS:
            if value.lower() in ("1", "true", "yes", "on"):
                injected.append(f"--{key}")
            elif value.lower() not in ("0", "false", "no", "off"):
                raise ConfigError(f"config key {key} wants a boolean, got {value!r}")
        elif key == "set":
            for descriptor in value.split(";"):
                injected.extend(["--set", descriptor.strip()])
        else:
            injected.extend([f"--{key}", value])
    head, tail = rest[:1], rest[1:]
    return head + injected + tail


def _ensemble(args, m: int | None = None, n: int | None = None) -> EnsembleSpec:
    m = args.m if m is None else m
    n = getattr(args, "n", None) if n is None else n
    if m is None or n is None:
        raise ConfigError("both --m and a set/--n fixing the dimension are required")
    covariance = None
    if getattr(args, "covariance", None):
        try:
            covariance = np.loadtxt(args.covariance, delimiter=",", ndmin=2)
        except (OSError, ValueError) as err:
            raise ConfigError(f"cannot read covariance {args.covariance}: {err}") from err
    try:
        return EnsembleSpec(family=args.family, m=int(m), n=int(n), covariance=covariance, seed=args.seed)
    except ValueError as err:
        raise ConfigError(str(err)) from err


def _parse_sets(args) -> list[GeoSet]:
    if not getattr(args, "set", None):
        raise ConfigError("at least one --set descriptor is required")
    try:
        return [parse_set(d) for d in args.set]
    except ValueError as err:
        raise ConfigError(str(err)) from err


def _one_set(args) -> GeoSet:
    sets = _parse_sets(args)
    if len(sets) != 1:
        raise ConfigError("this experiment takes exactly one --set")
    return sets[0]


def _calibration_plan(args, default_c: float) -> tuple[float | None, int | None, int]:
    """Returns (fixed c or None, calibration trials or None, calibration seed)."""
    fixed = getattr(args, "c_cal", None)
    cal_trials = getattr(args, "calibrate", None)
    if fixed is not None and cal_trials is not None:
        raise ConfigError("--c-cal and --calibrate are mutually exclusive")
    cal_seed = getattr(args, "calibrate_seed", None)
    if cal_seed is None:
        cal_seed = args.seed + 1
    if cal_trials is not None:
        if cal_trials < 30:
            raise ConfigError(f"calibration needs at least 30 trials, got {cal_trials}")
        if cal_seed == args.seed:
            raise ConfigError("calibration seed must differ from the certification seed")
        return None, cal_trials, cal_seed
    return (default_c if fixed is None else fixed), None, cal_seed


def _set_dim(sets: list[GeoSet]) -> int:
    dims = {T.dim for T in sets}
    if len(dims) != 1:
        raise ConfigError(f"sets live in different dimensions: {sorted(dims)}")
    return dims.pop()


def _base_params(args, experiment: str, **extra) -> dict[str, Any]:
    params = {"experiment": experiment, "seed": args.seed}
    if getattr(args, "covariance", None):
        params["covariance"] = args.covariance
    params.update(extra)
    return params


# --- subcommand handlers -------------------------------------------------


def _run_estimate(args, statistic: str) -> HandlerResult:
    sets = _parse_sets(args)
    columns = ["set", "n", "statistic", "mean", "std_error", "ci_lo", "ci_hi", "n_samples", "exactness"]
    rows = []
    closed: dict[str, Any] = {}
    estimator = gaussian_width_mc if statistic == "width" else gaussian_complexity_mc
    closed_form = width_closed_form if statistic == "width" else complexity_closed_form
    for T in sets:
        est = estimator(T, args.samples, args.seed)
        rows.append(
            [
                T.describe(),
                T.dim,
                statistic,
                est.mean,
                est.std_error,
                est.ci95[0],
                est.ci95[1],
                est.n_samples,
                "exact" if est.exact else "heuristic",
            ]
        )
        reference = closed_form(T)
        if reference is not None:
            closed[T.describe()] = reference
    params = _base_params(args, statistic, sets=list(args.set), samples=args.samples)
    return HandlerResult(columns, rows, {"closed_forms": closed}, None, params)


def _run_width(args) -> HandlerResult:
    return _run_estimate(args, "width")


def _run_gamma(args) -> HandlerResult:
    return _run_estimate(args, "gamma")


def _run_increments(args) -> HandlerResult:
    if args.n is None or args.m is None:
        raise ConfigError("--m and --n are required")
    spec = _ensemble(args)
    rng = substream(args.seed, "increment-pairs", args.n, args.pairs)
    columns = ["pair_id", "dist", "psi2_ratio", "n_trials"]
    rows = []
    dists = np.empty(args.pairs)
    ratios = np.empty(args.pairs)
    # Pairs sit at log-spaced separations: for independent uniform unit pairs
    # the normalized ratio is a deterministic decreasing function of the pair
    # angle, so a flat-ratio check needs the distance, not the angle, varied.
    # Disjoint draw batches keep the per-pair estimates independent.
    separations = np.logspace(np.log10(0.03), np.log10(0.3), args.pairs)
    for i in range(args.pairs):
        x = rng.standard_normal(args.n)
        x /= np.linalg.norm(x)
        u = rng.standard_normal(args.n)
        u /= np.linalg.norm(u)
        y = x + separations[i] * u
        y /= np.linalg.norm(y)
        ratio, _ = increment_ratio(spec, x, y, n_trials=args.trials, draw_offset=i * args.trials)
        dists[i] = np.linalg.norm(x - y)
        ratios[i] = ratio
        rows.append([i, dists[i], ratios[i], args.trials])
    median = float(np.median(ratios))
    max_to_median = float(ratios.max() / median)
    rho = float(stats.spearmanr(dists, ratios).statistic)
    aggregates = {
        "max_ratio": float(ratios.max()),
        "median_ratio": median,
        "max_to_median": max_to_median,
        "spearman_rho": rho,
        "k_value": row_psi2_bound(spec),
    }
    certified = max_to_median <= 5.0 and abs(rho) < 0.3
    params = _base_params(
        args, "increments", family=args.family, m=args.m, n=args.n, pairs=args.pairs, trials=args.trials
    )
    return HandlerResult(columns, rows, aggregates, certified, params)


def _run_deviate(args) -> HandlerResult:
    T = _one_set(args)
    spec = _ensemble(args, n=T.dim)

    def one_trial(t: int) -> deviation.DeviationReport:
        return deviation.sup_deviation(sample_matrix(spec, t), T)

    reports = map_trials(one_trial, args.trials, args.threads)
    closed = complexity_closed_form(T)
    if closed is not None:
        gamma, gamma_exact = closed, True
    else:
        est = gaussian_complexity_mc(T, args.samples, args.seed)
        gamma, gamma_exact = est.mean, est.exact
    k = row_psi2_bound(spec)
    mean_sup = float(np.mean([r.sup_abs for r in reports]))
    columns = ["seed", "draw_index", "sup_abs", "sup_pos", "sup_neg", "method", "exact"]
    rows = [
        [args.seed, t, rep.sup_abs, rep.sup_pos, rep.sup_neg, rep.method, rep.exact]
        for t, rep in enumerate(reports)
    ]
    aggregates = {
        "k_value": k,
        "gamma_hat": gamma,
        "mean_sup_abs": mean_sup,
        "ratio_to_k2_gamma": mean_sup / (k * k * gamma) if gamma > 0 else float("nan"),
        "exact": gamma_exact and all(r.exact for r in reports),
    }
    params = _base_params(
        args, "deviate", set=args.set[0], family=args.family, m=args.m, trials=args.trials, samples=args.samples
    )
    return HandlerResult(columns, rows, aggregates, None, params)


def _run_tail(args) -> HandlerResult:
    T = _one_set(args)
    spec = _ensemble(args, n=T.dim)
    c_fixed, cal_trials, cal_seed = _calibration_plan(args, default_c=1.0)
    if cal_trials is not None:
        cal_spec = EnsembleSpec(family=spec.family, m=spec.m, n=spec.n, covariance=spec.covariance, seed=cal_seed)
        try:
            c_value = deviation.calibrate_tail_constant(
                cal_spec, T, n_trials=cal_trials, n_width_samples=args.samples, threads=args.threads
            )
        except ValueError as err:
            raise ConfigError(str(err)) from err
    else:
        c_value = c_fixed
    u_grid = _parse_list(args.u_grid, float)
    try:
        curve = deviation.tail_curve(
            spec, T, u_grid, n_trials=args.trials, c_cal=c_value,
            n_width_samples=args.samples, threads=args.threads,
        )
    except ValueError as err:
        raise ConfigError(str(err)) from err
    columns = [
        "seed", "u", "threshold", "exceed_count", "n_trials",
        "empirical", "wilson_lo", "wilson_hi", "target", "ok",
    ]
    rows = []
    oks = []
    for i, u in enumerate(curve.u_grid):
        # A point certifies when the Wilson interval does not sit strictly
        # above the theoretical decay; only u >= 1 enters certification.
        ok = bool(curve.wilson_lo[i] <= curve.theoretical[i])
        if u >= 1.0:
            oks.append(ok)
        rows.append(
            [
                args.seed, float(u), curve.thresholds[i], int(curve.exceed_counts[i]), curve.n_trials,
                curve.empirical[i], curve.wilson_lo[i], curve.wilson_hi[i], curve.theoretical[i], ok,
            ]
        )
    aggregates = {
        "c_cal": c_value,
        "calibrated": cal_trials is not None,
        "calibrate_seed": cal_seed if cal_trials is not None else None,
        "k_value": curve.k_value,
        "width_hat": curve.width_value,
        "radius": curve.radius,
        "exact": curve.exact,
    }
    certified = all(oks) if oks else None
    params = _base_params(
        args, "tail", set=args.set[0], family=args.family, m=args.m, trials=args.trials,
        u_grid=list(u_grid), samples=args.samples,
        c_cal=c_fixed, calibrate=cal_trials, calibrate_seed=cal_seed if cal_trials is not None else None,
    )
    return HandlerResult(columns, rows, aggregates, certified, params)


def _run_local(args) -> HandlerResult:
    T = _one_set(args)
    spec = _ensemble(args, n=T.dim)
    c_fixed, cal_trials, cal_seed = _calibration_plan(args, default_c=1.0)
    try:
        probes = deviation.sample_star_probes(T, args.probes, args.probe_seed)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    if cal_trials is not None:
        cal_spec = EnsembleSpec(family=spec.family, m=spec.m, n=spec.n, covariance=spec.covariance, seed=cal_seed)
        c_value = deviation.calibrate_local_constant(
            cal_spec, T, probes, n_trials=cal_trials, n_width_samples=args.gamma_samples, threads=args.threads
        )
    else:
        c_value = c_fixed
    try:
        report = deviation.local_check(
            spec, T, args.t, n_trials=args.trials, n_probes=args.probes, c_cal=c_value,
            probe_seed=args.probe_seed, n_width_samples=args.gamma_samples, threads=args.threads,
        )
    except ValueError as err:
        raise ConfigError(str(err)) from err
    columns = ["seed", "draw_index", "max_ratio", "violated"]
    rows = [
        [args.seed, t, report.max_ratio_per_draw[t], bool(report.max_ratio_per_draw[t] > args.t * c_value)]
        for t in range(args.trials)
    ]
    aggregates = {
        "t": report.t,
        "c_cal": c_value,
        "calibrated": cal_trials is not None,
        "fraction": report.fraction,
        "wilson_lo": report.wilson[0],
        "wilson_hi": report.wilson[1],
        "target": report.target,
        "k_value": report.k_value,
        "exact": report.exact,
    }
    certified = bool(report.wilson[0] <= report.target)
    params = _base_params(
        args, "local", set=args.set[0], family=args.family, m=args.m, t=args.t,
        trials=args.trials, probes=args.probes, probe_seed=args.probe_seed,
        gamma_samples=args.gamma_samples,
        c_cal=c_fixed, calibrate=cal_trials, calibrate_seed=cal_seed if cal_trials is not None else None,
    )
    return HandlerResult(columns, rows, aggregates, certified, params)


def _run_singvals(args) -> HandlerResult:
    if args.m is None or args.n is None:
        raise ConfigError("--m and --n are required")
    spec = _ensemble(args)
    try:
        report = singular_interval_check(spec, n_trials=args.trials, c_cal=args.c_cal, threads=args.threads)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    columns = ["seed", "draw_index", "sigma_min", "sigma_max", "violated"]
    rows = [
        [
            args.seed, t, report.sigma_min[t], report.sigma_max[t],
            bool(report.sigma_min[t] < report.lower or report.sigma_max[t] > report.upper),
        ]
        for t in range(args.trials)
    ]
    aggregates = {
        "lower": report.lower,
        "upper": report.upper,
        "violations": report.violations,
        "k_value": report.k_value,
        "c_cal": args.c_cal,
    }
    params = _base_params(
        args, "singvals", family=args.family, m=args.m, n=args.n, trials=args.trials, c_cal=args.c_cal
    )
    return HandlerResult(columns, rows, aggregates, report.violations == 0, params)


def _load_cloud(path: str):
    from .geometry import FiniteCloud

    try:
        points = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as err:
        raise ConfigError(f"cannot read cloud {path}: {err}") from err
    return FiniteCloud(points)


def _run_jl(args) -> HandlerResult:
    if not args.cloud:
        raise ConfigError("--cloud <csv> is required")
    cloud = _load_cloud(args.cloud)
    spec = _ensemble(args, n=cloud.dim)
    columns = ["seed", "draw_index", "max_distortion", "bound", "ok"]
    rows = []
    ok_count = 0
    cap = args.max_distortion
    bound = None
    for t in range(args.trials):
        try:
            rep = jl_embed(cloud, spec, draw_index=t, c_cal=args.c_cal)
        except ValueError as err:
            raise ConfigError(str(err)) from err
        bound = rep.bound
        limit = cap if cap is not None else rep.bound
        ok = bool(rep.max_distortion <= limit)
        ok_count += ok
        rows.append([args.seed, t, rep.max_distortion, rep.bound, ok])
    lo, hi = deviation.wilson_interval(ok_count, args.trials)
    aggregates = {
        "bound": bound,
        "ok_count": ok_count,
        "frequency": ok_count / args.trials,
        "wilson_lo": lo,
        "wilson_hi": hi,
        "c_cal": args.c_cal,
        "max_distortion_cap": cap,
    }
    certified = (ok_count / args.trials) >= 0.95
    params = _base_params(
        args, "jl", cloud=args.cloud, family=args.family, m=args.m, trials=args.trials,
        c_cal=args.c_cal, max_distortion=cap,
    )
    return HandlerResult(columns, rows, aggregates, certified, params)


def _run_escape(args) -> HandlerResult:
    m_grid = _parse_grid(args.m_grid)
    if not m_grid:
        raise ConfigError("empty m grid")
    T = SparseVectors(args.s, args.n, radius=1.0, surface=True)
    columns = ["seed", "m", "escape_count", "n_trials", "frequency", "wilson_lo", "wilson_hi"]
    rows = []
    freqs, lows, highs = [], [], []
    threshold = None
    for m in m_grid:
        spec = EnsembleSpec(family=args.family, m=m, n=args.n, seed=args.seed)
        try:
            rep = escape_check(
                spec, T, n_trials=args.trials, c_cal=args.c_cal,
                n_gamma_samples=args.samples, threads=args.threads,
            )
        except ValueError as err:
            raise ConfigError(str(err)) from err
        threshold = rep.m_threshold_theory
        freqs.append(rep.frequency)
        lows.append(rep.wilson[0])
        highs.append(rep.wilson[1])
        rows.append([args.seed, m, rep.escape_count, args.trials, rep.frequency, rep.wilson[0], rep.wilson[1]])
    smooth = recovery.pava_nondecreasing(np.array(freqs))
    monotone_ok = bool(((smooth >= np.array(lows) - 1e-12) & (smooth <= np.array(highs) + 1e-12)).all())
    aggregates = {
        "monotone_ok": monotone_ok,
        "final_frequency": freqs[-1],
        "m_threshold_theory": threshold,
        "c_cal": args.c_cal,
    }
    certified = monotone_ok and freqs[-1] >= 0.99
    params = _base_params(
        args, "escape", family=args.family, s=args.s, n=args.n, m_grid=m_grid,
        trials=args.trials, c_cal=args.c_cal, samples=args.samples,
    )
    return HandlerResult(columns, rows, aggregates, certified, params)


def _run_mstar(args) -> HandlerResult:
    T = _one_set(args)
    spec = _ensemble(args, n=T.dim)
    try:
        rep = mstar_radius(
            spec, T, n_trials=args.trials, n_starts=args.starts, c_cal=args.c_cal,
            n_gamma_samples=args.samples, threads=args.threads,
        )
    except ValueError as err:
        raise ConfigError(str(err)) from err
    columns = ["seed", "draw_index", "radius_lb", "bound", "ok"]
    rows = [
        [args.seed, t, rep.radius_lbs[t], rep.bounds[t], bool(rep.radius_lbs[t] <= rep.bounds[t] + 1e-9)]
        for t in range(args.trials)
    ]
    aggregates = {
        "gamma_hat": rep.gamma_hat,
        "k_value": rep.k_value,
        "c_cal": args.c_cal,
        "max_radius_lb": float(rep.radius_lbs.max()),
        "bound": float(rep.bounds[0]),
    }
    params = _base_params(
        args, "mstar", set=args.set[0], family=args.family, m=args.m, trials=args.trials,
        starts=args.starts, c_cal=args.c_cal, samples=args.samples,
    )
    return HandlerResult(columns, rows, aggregates, rep.all_below, params)


def _run_image(args) -> HandlerResult:
    T = _one_set(args)
    spec = _ensemble(args, n=T.dim)
    try:
        rep = random_image_radius(
            spec, T, n_trials=args.trials, c_cal=args.c_cal,
            n_gamma_samples=args.samples, threads=args.threads,
        )
    except ValueError as err:
        raise ConfigError(str(err)) from err
    columns = ["seed", "draw_index", "image_radius", "bound", "ok"]
    rows = [
        [args.seed, t, rep.image_radii[t], rep.bounds[t], bool(rep.image_radii[t] <= rep.bounds[t] + 1e-9)]
        for t in range(args.trials)
    ]
    aggregates = {
        "set_radius": rep.set_radius,
        "gamma_hat": rep.gamma_hat,
        "k_value": rep.k_value,
        "c_cal": args.c_cal,
    }
    params = _base_params(
        args, "image", set=args.set[0], family=args.family, m=args.m, trials=args.trials,
        c_cal=args.c_cal, samples=args.samples,
    )
    return HandlerResult(columns, rows, aggregates, rep.all_below, params)


def _sparse_unit_target(n: int, s: int, seed: int, tag: str, index: int) -> np.ndarray:
    rng = substream(seed, tag, index)
    x = np.zeros(n)
    support = rng.choice(n, size=s, replace=False)
    x[support] = rng.standard_normal(s)
    return x / float(np.linalg.norm(x))


def _run_recover(args) -> HandlerResult:
    if args.m is None or args.n is None:
        raise ConfigError("--m and --n are required")
    if not 0 < args.s <= args.n:
        raise ConfigError("sparsity must lie in [1, n]")
    spec = _ensemble(args)
    opts = recovery.SolverOptions(max_iter=args.max_iter, tol=args.tol)
    columns = ["seed", "draw_index", "rel_error", "iterations", "converged", "surrogate_gap", "success"]
    rows = []
    successes = 0
    for t in range(args.trials):
        x_star = _sparse_unit_target(args.n, args.s, args.seed, "recover-truth", t)
        A = sample_matrix(spec, t).entries
        z = args.sigma * substream(args.seed, "recover-noise", t).standard_normal(args.m)
        y = A @ x_star + z
        T = L1Ball(float(np.abs(x_star).sum()), args.n)
        solved = recovery.constrained_least_squares(A, y, T, lam=args.lam, options=opts)
        diag = recovery.error_diagnostics(solved.x_hat, x_star, args.lam, T, A, z)
        rel = float(np.linalg.norm(solved.x_hat - x_star))
        success = bool(rel <= args.success_rtol)
        successes += success
        rows.append([args.seed, t, rel, solved.iterations, solved.converged, diag.surrogate_gap, success])
    lo, hi = deviation.wilson_interval(successes, args.trials)
    aggregates = {
        "success_count": successes,
        "success_frequency": successes / args.trials,
        "wilson_lo": lo,
        "wilson_hi": hi,
        "success_rtol": args.success_rtol,
    }
    certified = (successes / args.trials) >= 0.9
    params = _base_params(
        args, "recover", family=args.family, m=args.m, n=args.n, s=args.s, sigma=args.sigma,
        lam=args.lam, trials=args.trials, success_rtol=args.success_rtol,
        max_iter=args.max_iter, tol=args.tol,
    )
    return HandlerResult(columns, rows, aggregates, certified, params)


def _default_target(T: GeoSet) -> np.ndarray:
    """A canonical member of the model set to recover."""
    if isinstance(T, Scaled):
        return T.scale * _default_target(T.inner)
    if isinstance(T, (L1Ball, Ball2, Sphere)):
        x = np.zeros(T.dim)
        x[0] = T.r
        return x
    if isinstance(T, SparseVectors) and T.r is not None:
        x = np.zeros(T.dim)
        x[0] = T.r
        return x
    if isinstance(T, Subspace):
        return 0.5 * T.r * T.basis[:, 0]
    raise ConfigError(f"no default target for {T.describe()}; pass --truth-file")


def _run_select(args) -> HandlerResult:
    T = _one_set(args)
    spec = _ensemble(args, n=T.dim)
    if args.truth_file:
        try:
            x_true = np.loadtxt(args.truth_file, delimiter=",").reshape(-1)
        except (OSError, ValueError) as err:
            raise ConfigError(f"cannot read truth {args.truth_file}: {err}") from err
    else:
        x_true = _default_target(T)
    lam_grid = _parse_list(args.lam_grid, float)
    c_fixed, cal_trials, cal_seed = _calibration_plan(args, default_c=1.0)
    opts = recovery.SolverOptions(max_iter=args.max_iter, tol=args.tol)
    if cal_trials is not None:
        cal_spec = EnsembleSpec(family=spec.family, m=spec.m, n=spec.n, covariance=spec.covariance, seed=cal_seed)
        try:
            c_value = recovery.calibrate_selection_constant(
                cal_spec, T, x_true, lam_grid, args.sigma, n_trials=cal_trials,
                quantile=args.quantile, n_gamma_samples=args.gamma_samples,
                threads=args.threads, options=opts,
            )
        except (ValueError, RuntimeError) as err:
            raise ConfigError(str(err)) from err
    else:
        c_value = c_fixed
    try:
        rep = recovery.model_selection_sweep(
            spec, T, x_true, lam_grid, args.sigma, n_trials=args.trials, c_cal=c_value,
            n_gamma_samples=args.gamma_samples, threads=args.threads, options=opts,
        )
    except (ValueError, RuntimeError) as err:
        raise ConfigError(str(err)) from err
    columns = [
        "seed", "draw_index", "lam", "delta", "gamma_hat", "term_complexity", "term_noise",
        "ratio", "satisfied", "converged", "surrogate_gap",
    ]
    rows = [
        [
            args.seed, r.trial, r.lam, r.delta, r.gamma_hat, r.term_complexity, r.term_noise,
            r.ratio, r.satisfied, r.converged, r.surrogate_gap,
        ]
        for r in rep.rows
    ]
    aggregates = {
        "uniform_frequency": rep.uniform_frequency,
        "wilson_lo": rep.wilson[0],
        "wilson_hi": rep.wilson[1],
        "n_excluded": rep.n_excluded,
        "c_cal": c_value,
        "calibrated": cal_trials is not None,
        "k_value": rep.k_value,
    }
    certified = rep.uniform_frequency >= 0.95
    params = _base_params(
        args, "select", set=args.set[0], family=args.family, m=args.m, sigma=args.sigma,
        lam_grid=list(lam_grid), trials=args.trials, gamma_samples=args.gamma_samples,
        quantile=args.quantile, truth_file=args.truth_file,
        c_cal=c_fixed, calibrate=cal_trials, calibrate_seed=cal_seed if cal_trials is not None else None,
        max_iter=args.max_iter, tol=args.tol,
    )
    return HandlerResult(columns, rows, aggregates, certified, params)


def _run_phase(args) -> HandlerResult:
    m_grid = _parse_grid(args.m_grid)
    opts = recovery.SolverOptions(max_iter=args.max_iter, tol=args.tol)
    try:
        rep = recovery.phase_transition(
            args.family, args.n, args.s, m_grid, n_trials=args.trials, seed=args.seed,
            success_rtol=args.success_rtol, threads=args.threads, options=opts,
        )
    except ValueError as err:
        raise ConfigError(str(err)) from err
    smooth = rep.smoothed()
    columns = ["seed", "m", "successes", "n_trials", "frequency", "wilson_lo", "wilson_hi", "smoothed"]
    rows = [
        [
            args.seed, int(rep.m_grid[i]), int(rep.successes[i]), rep.n_trials,
            rep.frequency[i], rep.wilson_low[i], rep.wilson_high[i], smooth[i],
        ]
        for i in range(rep.m_grid.size)
    ]
    m50 = rep.crossover_m()
    certified = rep.monotone_within_ci()
    aggregates = {
        "monotone_ok": certified,
        "m50": m50,
        "success_rtol": args.success_rtol,
    }
    params = _base_params(
        args, "phase", family=args.family, n=args.n, s=args.s, m_grid=m_grid,
        trials=args.trials, success_rtol=args.success_rtol, max_iter=args.max_iter, tol=args.tol,
    )
    return HandlerResult(columns, rows, aggregates, certified, params)


_HANDLERS: dict[str, Callable] = {
    "width": _run_width,
    "gamma": _run_gamma,
    "increments": _run_increments,
    "deviate": _run_deviate,
    "tail": _run_tail,
    "local": _run_local,
    "singvals": _run_singvals,
    "jl": _run_jl,
    "escape": _run_escape,
    "mstar": _run_mstar,
    "image": _run_image,
    "recover": _run_recover,
    "select": _run_select,
    "phase": _run_phase,
}


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed; all streams derive from it")
    common.add_argument("--out", default=None, help="output path or prefix; stdout when omitted")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="data artifact format")
    common.add_argument("--assert", dest="do_assert", action="store_true",
                        help="exit 3 when the experiment's certification fails")
    common.add_argument("--threads", type=int, default=None,
                        help="trial parallelism (DEVBOUND_THREADS as fallback); output is thread-count invariant")
    common.add_argument("--plot", action="store_true", help="render a PNG figure next to the data file")

    ensemble = argparse.ArgumentParser(add_help=False)
    ensemble.add_argument("--family", choices=sorted(FAMILIES), default="gaussian")
    ensemble.add_argument("--m", type=int, default=None, help="rows of each draw")
    ensemble.add_argument("--covariance", default=None, help="row covariance CSV (defaults to identity)")

    calib = argparse.ArgumentParser(add_help=False)
    calib.add_argument("--c-cal", dest="c_cal", type=float, default=None, help="fixed constant")
    calib.add_argument("--calibrate", type=int, default=None, help="calibrate the constant on this many trials")
    calib.add_argument("--calibrate-seed", dest="calibrate_seed", type=int, default=None,
                       help="seed for the calibration batch (must differ from --seed; default seed+1)")

    parser = argparse.ArgumentParser(
        prog="devbound",
        description="Empirical certification of uniform matrix deviation bounds and their consequences.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")

    p = sub.add_parser("width", parents=[common], help="Gaussian width estimates for sets")
    p.add_argument("--set", action="append", required=True, help="set descriptor (repeatable)")
    p.add_argument("--samples", type=int, default=10_000)

    p = sub.add_parser("gamma", parents=[common], help="Gaussian complexity estimates for sets")
    p.add_argument("--set", action="append", required=True)
    p.add_argument("--samples", type=int, default=10_000)

    p = sub.add_parser("increments", parents=[common, ensemble], help="increment psi2 ratios over random pairs")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--pairs", type=int, default=50)
    p.add_argument("--trials", type=int, default=1000)

    p = sub.add_parser("deviate", parents=[common, ensemble], help="per-draw deviation suprema over a set")
    p.add_argument("--set", action="append", required=True)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--samples", type=int, default=10_000)

    p = sub.add_parser("tail", parents=[common, ensemble, calib], help="exceedance curve against exp(-u^2)")
    p.add_argument("--set", action="append", required=True)
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--u-grid", dest="u_grid", default="1,1.5,2")
    p.add_argument("--samples", type=int, default=10_000)

    p = sub.add_parser("local", parents=[common, ensemble, calib], help="norm-local envelope violations")
    p.add_argument("--set", action="append", required=True)
    p.add_argument("--t", type=float, default=2.0)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--probes", type=int, default=50)
    p.add_argument("--probe-seed", dest="probe_seed", type=int, default=0)
    p.add_argument("--gamma-samples", dest="gamma_samples", type=int, default=2000)

    p = sub.add_parser("singvals", parents=[common, ensemble], help="extreme singular values vs interval")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--c-cal", dest="c_cal", type=float, default=2.0)

    p = sub.add_parser("jl", parents=[common, ensemble], help="pairwise distortion of random projections")
    p.add_argument("--cloud", required=True, help="point cloud CSV, one point per row")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--c-cal", dest="c_cal", type=float, default=2.0)
    p.add_argument("--max-distortion", dest="max_distortion", type=float, default=None,
                   help="absolute distortion cap; defaults to the theoretical bound")

    p = sub.add_parser("escape", parents=[common, ensemble], help="kernel escape frequency over a row-count grid")
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m-grid", dest="m_grid", required=True, help="e.g. 2:15 or 2,4,8")
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--c-cal", dest="c_cal", type=float, default=2.0)
    p.add_argument("--samples", type=int, default=10_000)

    p = sub.add_parser("mstar", parents=[common, ensemble], help="kernel-section radius lower bounds")
    p.add_argument("--set", action="append", required=True)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--starts", type=int, default=8)
    p.add_argument("--c-cal", dest="c_cal", type=float, default=2.0)
    p.add_argument("--samples", type=int, default=10_000)

    p = sub.add_parser("image", parents=[common, ensemble], help="image radius against its additive bound")
    p.add_argument("--set", action="append", required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--c-cal", dest="c_cal", type=float, default=2.0)
    p.add_argument("--samples", type=int, default=10_000)

    p = sub.add_parser("recover", parents=[common, ensemble], help="noisy or noiseless l1 recovery trials")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--success-rtol", dest="success_rtol", type=float, default=1e-4)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=4000)
    p.add_argument("--tol", type=float, default=1e-13)

    p = sub.add_parser("select", parents=[common, ensemble, calib], help="uniform-over-inflation error bound")
    p.add_argument("--set", action="append", required=True)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--lambda", dest="lam_grid", default="1,2,4,8")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--gamma-samples", dest="gamma_samples", type=int, default=2000)
    p.add_argument("--quantile", type=float, default=0.99)
    p.add_argument("--truth-file", dest="truth_file", default=None, help="target vector CSV (defaults per set kind)")
    p.add_argument("--max-iter", dest="max_iter", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-9)

    p = sub.add_parser("phase", parents=[common, ensemble], help="exact-recovery phase transition curve")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--m-grid", dest="m_grid", required=True)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--success-rtol", dest="success_rtol", type=float, default=1e-4)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=4000)
    p.add_argument("--tol", type=float, default=1e-13)

    return parser


def _output_paths(out: str, fmt: str) -> tuple[Path, Path, Path]:
    base = Path(out)
    if base.suffix in (".csv", ".json"):
        stem = base.with_suffix("")
        data = base
    else:
        stem = base
        data = base.with_name(base.name + f".{fmt}")
    return data, stem.with_name(stem.name + ".summary.json"), stem.with_name(stem.name + ".png")


def main(argv: list[str] | None = None) -> int:
    raw = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        expanded = _expand_config(raw)
    except ConfigError as err:
        print(f"devbound: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    parser = _build_parser()
    args = parser.parse_args(expanded)
    if getattr(args, "trials", None) is not None and args.trials < 1:
        print("devbound: config error: --trials must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    handler = _HANDLERS[args.experiment]
    start = time.perf_counter()
    try:
        result = handler(args)
    except (ConfigError, ValueError) as err:
        print(f"devbound: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    wall = time.perf_counter() - start

    renderer = rows_to_csv if args.format == "csv" else rows_to_json
    data_text = renderer(args.experiment, result.params, result.columns, result.rows)
    if args.out is None:
        sys.stdout.write(data_text)
        if args.plot:
            print("devbound: --plot needs --out to place the figure; skipped", file=sys.stderr)
        if result.certified is not None:
            status = "pass" if result.certified else "fail"
            print(f"# certification: {status}", file=sys.stderr)
    else:
        data_path, summary_path, plot_path = _output_paths(args.out, args.format)
        write_text(data_path, data_text)
        artifacts = [str(data_path)]
        if args.plot:
            from .plotting import render_figure

            render_figure(args.experiment, result.columns, result.rows, result.aggregates, str(plot_path))
            artifacts.append(str(plot_path))
        aggregates = dict(result.aggregates)
        if result.certified is not None:
            aggregates["certified"] = result.certified
        write_text(
            summary_path,
            summary_document(args.experiment, args.seed, result.params, aggregates, artifacts, wall),
        )
    if args.do_assert and result.certified is False:
        return EXIT_CERTIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
