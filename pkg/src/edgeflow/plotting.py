"""Report figures (coverage bars, loss curves), rendered off-screen to PNG."""

from __future__ import annotations

import io
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .fsutil import atomic_write_bytes  # noqa: E402
from .kgraph import CoverageStats  # noqa: E402

_RC = {"font.size": 9, "axes.spines.top": False, "axes.spines.right": False, "figure.dpi": 100}


def _save(fig, path: str | Path) -> None:
    buf = io.BytesIO()
    # no software/date metadata so identical inputs give identical bytes
    fig.savefig(buf, format="png", metadata={"Software": None})
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def coverage_figure(stats: Sequence[tuple[str, CoverageStats]], path: str | Path) -> None:
    """Grouped bars of retrieved and golden nodes per hop, one group per graph."""
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, 2, figsize=(7, 2.8))
        width = 0.8 / max(len(stats), 1)
        hops = range(3)
        for i, (label, s) in enumerate(stats):
            xs = [h + (i - (len(stats) - 1) / 2) * width for h in hops]
            axes[0].bar(xs, s.amount, width, label=label)
            axes[1].bar(xs, s.golden, width, label=label)
        for ax, title in zip(axes, ("retrieved nodes", "golden nodes")):
            ax.set_xticks(list(hops))
            ax.set_xticklabels(["0-hop", "1-hop", "2-hop"])
            ax.set_title(title)
            ax.set_ylabel("mean per pair")
        axes[1].legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)


def loss_figure(rows: Sequence[dict], path: str | Path) -> None:
    """Per-epoch loss components and perplexity."""
    with plt.rc_context(_RC):
        fig, (ax, ax_ppl) = plt.subplots(1, 2, figsize=(7, 2.8))
        epochs = [r["epoch"] for r in rows]
        for key in ("L_gen", "L_copy", "L_gate", "L"):
            ax.plot(epochs, [r[key] for r in rows], marker=".", label=key)
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.legend(frameon=False)
        ax_ppl.plot(epochs, [r["ppl"] for r in rows], marker=".", color="k")
        ax_ppl.set_xlabel("epoch")
        ax_ppl.set_ylabel("train ppl")
        ax_ppl.set_yscale("log")
        fig.tight_layout()
        _save(fig, path)
