"""Figure rendering for run artifacts.

PNGs land next to the CSV files they visualize. They are a convenience for
eyeballing runs; the determinism contract covers the delimited files only,
since image bytes depend on the matplotlib build.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render_curves(path: str, reports, metric: str, title: str) -> None:
    """Per-student validation curves plus the ensemble curve when M > 1."""
    epochs = [r.epoch for r in reports]
    m_count = len(reports[0].val) if reports else 0
    fig, ax = plt.subplots(figsize=(6, 4))
    for m in range(m_count):
        ax.plot(epochs, [r.val[m] for r in reports],
                label=f"student {m}", linewidth=1.0)
    if m_count > 1:
        ax.plot(epochs, [r.ensemble_val for r in reports],
                label="ensemble", linestyle="--", color="black")
    warm = [r.epoch for r in reports if r.phase == "warmup"]
    if warm and len(warm) < len(reports):
        ax.axvline(max(warm) + 0.5, color="grey", linewidth=0.8)
    ax.set_xlabel("epoch")
    ax.set_ylabel(f"validation {metric}")
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_loss_curves(path: str, reports, title: str) -> None:
    """Group-mean loss components over epochs."""
    epochs = [r.epoch for r in reports]

    def mean(xs):
        return sum(xs) / len(xs)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [mean(r.ce) for r in reports], label="supervised")
    if any(any(r.l_g) for r in reports):
        ax.plot(epochs, [mean(r.l_g) for r in reports], label="adversarial")
    if any(any(r.l_b) for r in reports):
        ax.plot(epochs, [mean(r.l_b) for r in reports],
                label="prediction alignment")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_dynamic(path: str, levels, kd_deltas, oad_deltas,
                   kind: str, metric: str) -> None:
    """Robustness deltas against the single-model baseline per level."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.axhline(0.0, color="grey", linewidth=0.8)
    ax.plot(levels, kd_deltas, marker="o", label="kd - single")
    ax.plot(levels, oad_deltas, marker="s", label="group - single")
    ax.set_xlabel(f"{kind} level")
    ax.set_ylabel(f"delta {metric}")
    ax.set_title("robustness under graph perturbation")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_sweep(path: str, sizes, best_means, ens_means, metric: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(sizes, best_means, marker="o", label="best student")
    ax.plot(sizes, ens_means, marker="s", label="ensemble")
    ax.set_xlabel("group size")
    ax.set_ylabel(f"test {metric}")
    ax.set_title("effect of group size")
    ax.set_xticks(list(sizes))
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_distance_hist(path: str, distances, anchor: int) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(distances, bins=40)
    ax.set_xlabel(f"euclidean distance to node {anchor}")
    ax.set_ylabel("nodes")
    ax.set_title("embedding distances from anchor")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
