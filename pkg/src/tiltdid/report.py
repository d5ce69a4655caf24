"""Render result figures to files next to the delimited outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

# Byte-stable PNGs: drop the writer's software tag so repeated runs with
# identical inputs produce identical files.
_SAVE_KWARGS = {"dpi": 150, "metadata": {"Software": None}}


def save_density_fan(path, grid, curves: dict) -> None:
    """Plot a fan of counterfactual dose densities keyed by delta."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    keys = sorted(curves)
    for delta in keys:
        color = "black" if delta == 0 else "grey"
        ax.plot(grid.points, curves[delta], color=color, lw=1.2 if delta == 0 else 0.8)
        ax.annotate(f"{delta:g}", (grid.points[-1], curves[delta][-1]),
                    fontsize=7, color="dimgrey",
                    textcoords="offset points", xytext=(3, 0))
    ax.set_xlabel("dose")
    ax.set_ylabel("density")
    ax.set_title("counterfactual dose densities by increment")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_estimate_curve(path, deltas, psi, ci_low, ci_high) -> None:
    """Plot the estimated effect curve over a delta grid with its band."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    has_band = all(v is not None for v in ci_low) and all(v is not None for v in ci_high)
    if has_band:
        ax.fill_between(deltas, ci_low, ci_high, color="steelblue", alpha=0.25,
                        label="confidence band")
    ax.plot(deltas, psi, color="steelblue", marker="o", ms=3, label="estimate")
    ax.axhline(0.0, color="grey", lw=0.6, ls=":")
    ax.set_xlabel("tilt increment")
    ax.set_ylabel("effect among the treated")
    ax.legend(loc="upper left", frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_study_figures(bias_path, coverage_path, result) -> None:
    """Bias and coverage panels for a simulation study."""
    deltas = [row.delta for row in result.rows]

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(deltas, [row.mean_psi for row in result.rows], color="steelblue",
            marker="o", ms=3, label="mean estimate")
    ax.plot(deltas, [row.truth for row in result.rows], color="firebrick",
            lw=1.2, label="estimand")
    ax.set_xlabel("tilt increment")
    ax.set_ylabel("effect among the treated")
    ax.legend(loc="upper left", frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(bias_path, **_SAVE_KWARGS)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(deltas, [row.coverage for row in result.rows], color="black",
            marker="o", ms=3)
    ax.axhline(0.95, color="firebrick", ls="--", lw=1.0)
    ax.set_ylim(0.0, 1.0)
    ax.set_xlabel("tilt increment")
    ax.set_ylabel("empirical coverage")
    fig.tight_layout()
    fig.savefig(coverage_path, **_SAVE_KWARGS)
    plt.close(fig)
