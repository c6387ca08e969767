"""Matplotlib rendering of the report outputs, written next to the CSVs."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _gamma_label(gamma: float) -> str:
    if gamma == 0:
        return "risk-neutral"
    kind = "risk-averse" if gamma > 0 else "risk-seeking"
    return f"{kind} (gamma={gamma:g})"


def render_gradient_field(mu_grid, sigma_grid, records_by_gamma, path) -> str:
    """Quiver panels of the exact gradient directions, one per gamma."""
    gammas = list(records_by_gamma)
    fig, axes = plt.subplots(1, len(gammas), figsize=(4.2 * len(gammas), 3.8),
                             sharex=True, sharey=True)
    if len(gammas) == 1:
        axes = [axes]
    mu_grid = np.asarray(mu_grid)
    sigma_grid = np.asarray(sigma_grid)
    for ax, gamma in zip(axes, gammas):
        recs = records_by_gamma[gamma]
        mu = np.array([r.extra["mu"] for r in recs])
        sig = np.array([r.extra["sigma"] for r in recs])
        du = np.array([r.extra["dj_dmean"] for r in recs])
        dv = np.array([r.extra["dj_dlog_std"] for r in recs])
        norm = np.hypot(du, dv)
        norm[norm == 0] = 1.0
        ax.quiver(mu, sig, du / norm, dv / norm, norm, cmap="viridis",
                  angles="xy", width=0.004)
        ax.set_title(_gamma_label(gamma))
        ax.set_xlabel("policy mean")
    axes[0].set_ylabel("policy std")
    fig.suptitle("exact gradient directions in (mean, log std) coordinates")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_histograms(hists_by_gamma, path) -> str:
    """Overlaid final-policy return histograms across risk factors."""
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    for gamma, hist in hists_by_gamma.items():
        centers = [c for c, _ in hist]
        counts = [n for _, n in hist]
        ax.step(centers, counts, where="mid", label=f"gamma={gamma:g}")
    ax.set_xlabel("return")
    ax.set_ylabel("count")
    ax.set_title("final-policy return distributions")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_badminton_trends(records, path) -> str:
    """Seed-median landing error, speed, and landing variance against gamma."""
    finals = [r for r in records if r.extra.get("final_eval")]
    gammas = sorted({r.gamma for r in finals})

    def med(key, gamma):
        vals = [r.extra[key] for r in finals if r.gamma == gamma]
        return float(np.median(vals)) if vals else np.nan

    fig, axes = plt.subplots(1, 3, figsize=(12.5, 3.8))
    panels = [("err_mean", "landing error"), ("speed", "commanded speed"),
              ("x1_var", "landing variance")]
    for ax, (key, label) in zip(axes, panels):
        for positive, marker in ((True, "o"), (False, "s")):
            gs = [g for g in gammas if (g > 0) == positive]
            ax.plot([abs(g) for g in gs], [med(key, g) for g in gs], marker=marker,
                    label="risk-averse" if positive else "risk-seeking")
        ax.set_xscale("log")
        ax.set_xlabel("|gamma|")
        ax.set_ylabel(label)
        ax.legend(fontsize=8)
    fig.suptitle("toy badminton: final-policy trends over the risk factor")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
