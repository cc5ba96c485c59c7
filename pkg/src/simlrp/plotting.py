"""Figures for benchmark reports, written to files with the Agg backend."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

METHOD_ORDER = ("Saliency", "Curvature", "HP", "BiLRP")


def _save(fig, path):
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_gamma_sweep(report, path):
    """ACS against gamma, with the HP level (gamma 0) as a reference line."""
    gammas = sorted(report.gamma_sweep)
    values = [report.gamma_sweep[g] for g in gammas]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(gammas, values, "o-", color="#b2182b", label="BiLRP")
    ax.axhline(report.acs["HP"], color="0.5", ls="--", lw=1, label="HP")
    ax.plot([report.best_gamma], [report.gamma_sweep[report.best_gamma]], "k*", ms=10)
    positive = [g for g in gammas if g > 0]
    if positive and len(positive) > 1:
        ax.set_xscale("symlog", linthresh=min(positive))
    ax.set_xticks(gammas, [f"{g:g}" for g in gammas], rotation=60, fontsize=7)
    ax.minorticks_off()
    ax.set_xlabel("gamma")
    ax.set_ylabel("ACS")
    ax.spines[["top", "right"]].set_visible(False)
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_acs(report, path):
    names = [m for m in METHOD_ORDER if m in report.acs]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.bar(names, [report.acs[m] for m in names],
           color=["0.7", "0.55", "#f4a582", "#b2182b"][:len(names)])
    ax.set_ylabel("ACS")
    ax.set_title(f"best gamma {report.best_gamma:g}", fontsize=9)
    ax.spines[["top", "right"]].set_visible(False)
    return _save(fig, path)


def plot_example(report, path):
    """6x6 pooled explanations of the first evaluation pair next to the ground truth."""
    ex = report.example
    panels = [("ground truth", ex["ground_truth"])]
    panels += [(m, ex[m]) for m in METHOD_ORDER if m in ex]
    fig, axes = plt.subplots(1, len(panels), figsize=(2.2 * len(panels), 2.4))
    for ax, (name, M) in zip(np.atleast_1d(axes), panels):
        M = np.asarray(M, dtype=float)
        v = np.abs(M).max() or 1.0
        ax.imshow(M, cmap="bwr", vmin=-v, vmax=v)
        ax.set_title(name, fontsize=9)
        ax.set_xticks(range(M.shape[1]), ex["seq_b"], fontsize=7)
        ax.set_yticks(range(M.shape[0]), ex["seq_a"], fontsize=7)
    return _save(fig, path)
