"""Figures for training logs, corpus reconstruction and metric comparisons.

Everything renders off-screen with the Agg backend. PNG metadata is stripped
so repeated runs write identical bytes.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_SAVE = {"dpi": 120, "metadata": {"Software": None}}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def plot_training_log(entries, path, title="training loss"):
    steps = [e.step for e in entries]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(steps, [e.total for e in entries], label="total", lw=1.5)
    ax.plot(steps, [e.listwise_loss for e in entries], label="listwise", lw=1, alpha=0.8)
    if any(e.inbatch_loss for e in entries):
        ax.plot(steps, [e.inbatch_loss for e in entries], label="in-batch", lw=1, alpha=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.legend(frameon=False)
    lr_ax = ax.twinx()
    lr_ax.plot(steps, [e.lr for e in entries], color="0.6", ls=":", lw=1)
    lr_ax.set_ylabel("learning rate", color="0.4")
    _finish(fig, path)


def plot_reconstruction(rows, path):
    """``rows``: dicts with keys ``param``, ``value``, ``mean``, ``std``; one panel per param."""
    params = list(dict.fromkeys(r["param"] for r in rows))
    fig, axes = plt.subplots(1, len(params), figsize=(3.2 * len(params), 3), squeeze=False)
    for ax, name in zip(axes[0], params):
        sel = [r for r in rows if r["param"] == name]
        ax.errorbar([r["value"] for r in sel], [r["mean"] for r in sel], yerr=[r["std"] for r in sel], marker="o", capsize=3)
        ax.set_xlabel(name)
        ax.set_ylim(0, 1.05)
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel("reconstruction accuracy")
    _finish(fig, path)


def plot_metric_comparison(means: dict, path, metric="ndcg@10"):
    """Bar chart of ``{system: mean metric}``."""
    names = list(means)
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(names), 3.2))
    bars = ax.bar(names, [means[n] for n in names], color="0.55")
    for bar, name in zip(bars, names):
        ax.annotate(f"{means[name]:.3f}", (bar.get_x() + bar.get_width() / 2, bar.get_height()), ha="center", va="bottom", fontsize=8)
    ax.set_ylabel(metric)
    ax.set_ylim(0, max(1.0, max(means.values(), default=0) * 1.1))
    _finish(fig, path)
