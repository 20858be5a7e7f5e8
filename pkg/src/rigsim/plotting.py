"""PNG figures written next to campaign CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _ecdf(ax, x, label):
    x = np.sort(np.asarray(x, dtype=np.float64))
    ax.step(x, np.arange(1, x.size + 1) / x.size, where="post", label=label)


def target_figure(spec: dict, path: str | Path) -> None:
    """Draw one figure from a target's figure description.

    Kinds: ``ecdf`` (several samples), ``hist`` (one sample and a reference
    line), ``scatter`` (x, y and a reference slope), ``estimate`` (a value
    with error bar and a reference).
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    kind = spec["kind"]
    if kind == "ecdf":
        for label, x in spec["series"].items():
            _ecdf(ax, x, label)
        ax.set_ylabel("empirical CDF")
        ax.legend()
    elif kind == "hist":
        x = np.asarray(spec["x"], dtype=np.float64)
        if spec.get("discrete"):
            bins = np.arange(x.min() - 0.5, x.max() + 1.5) if x.size else 10
        else:
            bins = "auto"
        ax.hist(x, bins=bins, density=True, alpha=0.7, label="graph")
        ax.axvline(float(np.mean(x)), color="C0", linestyle="--", label="sample mean")
        ax.axvline(spec["ref"], color="C3", label="limit")
        ax.legend()
    elif kind == "scatter":
        x, y = np.asarray(spec["x"]), np.asarray(spec["y"])
        ax.scatter(x, y, s=6, alpha=0.5)
        if x.size:
            grid = np.linspace(0, float(x.max()), 50)
            ax.plot(grid, spec["line"] * grid, color="C3", label="limit mean")
            ax.legend()
    elif kind == "estimate":
        ax.errorbar([0], [spec["value"]], yerr=[3 * spec["stderr"]], fmt="o", label="estimate (3 SE)")
        ax.axhline(spec["ref"], color="C3", label="limit")
        ax.set_xticks([])
        ax.legend()
    else:
        plt.close(fig)
        raise ValueError(f"unknown figure kind {kind!r}")
    ax.set_title(spec.get("title", ""))
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
