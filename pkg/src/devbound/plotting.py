"""Figure rendering for experiment outputs.

Every experiment's table gets one diagnostic figure written next to the
delimited data when plotting is requested.  Rendering never feeds back into
the data path: figures are derived from the same rows the writer receives.
"""

from __future__ import annotations

from typing import Any, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _table(columns: Sequence[str], rows: list[Sequence[Any]]) -> dict[str, np.ndarray]:
    cols: dict[str, np.ndarray] = {}
    for i, name in enumerate(columns):
        values = [row[i] for row in rows]
        try:
            cols[name] = np.array(values, dtype=float)
        except (TypeError, ValueError):
            cols[name] = np.array(values, dtype=object)
    return cols


def render_figure(
    experiment: str,
    columns: Sequence[str],
    rows: list[Sequence[Any]],
    aggregates: dict[str, Any],
    path: str,
) -> None:
    data = _table(columns, rows)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    renderer = _RENDERERS.get(experiment, _render_generic)
    renderer(ax, data, aggregates)
    ax.set_title(f"devbound {experiment}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _render_estimates(ax, data, aggregates) -> None:
    idx = np.arange(len(data["mean"]))
    err = 1.96 * data["std_error"]
    ax.errorbar(idx, data["mean"], yerr=err, fmt="o", capsize=4)
    ax.set_xticks(idx)
    ax.set_xticklabels([str(s) for s in data["set"]], rotation=20, ha="right", fontsize=8)
    ax.set_ylabel(str(data["statistic"][0]))


def _render_increments(ax, data, aggregates) -> None:
    ax.scatter(data["dist"], data["psi2_ratio"], s=18)
    med = float(np.median(data["psi2_ratio"]))
    ax.axhline(med, color="k", linestyle="--", linewidth=1, label=f"median {med:.3g}")
    ax.set_xlabel("pair distance")
    ax.set_ylabel("increment psi2 / distance")
    ax.legend()


def _render_deviate(ax, data, aggregates) -> None:
    ax.hist(data["sup_abs"], bins=40)
    mean = float(np.mean(data["sup_abs"]))
    ax.axvline(mean, color="k", linestyle="--", linewidth=1, label=f"mean {mean:.4g}")
    ax.set_xlabel("sup |deviation|")
    ax.set_ylabel("draws")
    ax.legend()


def _render_tail(ax, data, aggregates) -> None:
    ax.plot(data["u"], data["empirical"], "o-", label="empirical")
    ax.fill_between(data["u"], data["wilson_lo"], data["wilson_hi"], alpha=0.25)
    ax.plot(data["u"], data["target"], "k--", label="exp(-u^2)")
    ax.set_yscale("log")
    ax.set_xlabel("u")
    ax.set_ylabel("exceedance probability")
    ax.legend()


def _render_local(ax, data, aggregates) -> None:
    ax.hist(data["max_ratio"], bins=40)
    cutoff = float(aggregates["t"]) * float(aggregates["c_cal"])
    ax.axvline(cutoff, color="r", linestyle="--", linewidth=1, label=f"t*C = {cutoff:.3g}")
    ax.set_xlabel("max probe ratio per draw")
    ax.set_ylabel("draws")
    ax.legend()


def _render_singvals(ax, data, aggregates) -> None:
    ax.plot(data["trial"], data["sigma_min"], ".", label="smallest")
    ax.plot(data["trial"], data["sigma_max"], ".", label="largest")
    ax.axhline(float(aggregates["lower"]), color="k", linestyle="--", linewidth=1)
    ax.axhline(float(aggregates["upper"]), color="k", linestyle="--", linewidth=1)
    ax.set_xlabel("trial")
    ax.set_ylabel("singular value")
    ax.legend()


def _render_jl(ax, data, aggregates) -> None:
    ax.hist(data["max_distortion"], bins=30)
    ax.axvline(float(aggregates["bound"]), color="r", linestyle="--", linewidth=1, label="bound")
    ax.set_xlabel("max pairwise distortion")
    ax.set_ylabel("draws")
    ax.legend()


def _render_curve_over_m(ax, data, aggregates) -> None:
    ax.plot(data["m"], data["frequency"], "o-")
    ax.fill_between(data["m"], data["wilson_lo"], data["wilson_hi"], alpha=0.25)
    ax.set_xlabel("rows m")
    ax.set_ylabel("frequency")
    ax.set_ylim(-0.02, 1.02)


def _render_bound_pairs(ax, data, aggregates) -> None:
    value_col = "radius_lb" if "radius_lb" in data else "image_radius"
    ax.plot(data["trial"], data[value_col], ".", label=value_col)
    ax.plot(data["trial"], data["bound"], "k--", linewidth=1, label="bound")
    ax.set_xlabel("trial")
    ax.legend()


def _render_recover(ax, data, aggregates) -> None:
    errors = np.maximum(data["rel_error"], 1e-16)
    ax.hist(np.log10(errors), bins=30)
    ax.axvline(np.log10(float(aggregates["success_rtol"])), color="r", linestyle="--", linewidth=1)
    ax.set_xlabel("log10 relative error")
    ax.set_ylabel("trials")


def _render_select(ax, data, aggregates) -> None:
    lams = np.unique(data["lam"])
    ratio_groups = [data["ratio"][data["lam"] == lam] for lam in lams]
    ax.boxplot(ratio_groups, tick_labels=[f"{lam:g}" for lam in lams])
    ax.axhline(float(aggregates["c_cal"]), color="r", linestyle="--", linewidth=1, label="calibrated C")
    ax.set_xlabel("inflation factor")
    ax.set_ylabel("delta / rhs ratio")
    ax.legend()


def _render_generic(ax, data, aggregates) -> None:
    numeric = [k for k, v in data.items() if v.dtype != object]
    if not numeric:
        ax.text(0.5, 0.5, "no numeric columns", ha="center")
        return
    key = numeric[-1]
    ax.plot(np.arange(len(data[key])), data[key], ".-")
    ax.set_ylabel(key)
    ax.set_xlabel("row")


_RENDERERS = {
    "width": _render_estimates,
    "gamma": _render_estimates,
    "increments": _render_increments,
    "deviate": _render_deviate,
    "tail": _render_tail,
    "local": _render_local,
    "singvals": _render_singvals,
    "jl": _render_jl,
    "escape": _render_curve_over_m,
    "phase": _render_curve_over_m,
    "mstar": _render_bound_pairs,
    "image": _render_bound_pairs,
    "recover": _render_recover,
    "select": _render_select,
}
