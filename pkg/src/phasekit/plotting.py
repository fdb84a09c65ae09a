"""Figure rendering for the report path.

Figures are a convenience layer over the delimited outputs; the CSV and
JSON files remain the canonical data products.  Everything renders
through the Agg backend at a fixed DPI with stable metadata so repeated
runs produce stable images.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_field_heatmap",
    "save_marginals_plot",
    "save_lines_plot",
    "save_histogram_plot",
]

_DPI = 140
_META = {"Software": "phasekit"}


def _finish(fig, path: str):
    fig.savefig(path, dpi=_DPI, metadata=_META)
    plt.close(fig)


def save_field_heatmap(field, path: str, title: str = "", log: bool = False,
                       xlabel: str = "q", ylabel: str = "p"):
    """Heatmap of a PhaseField; amplitude fields show their magnitude."""
    vals = np.abs(field.values) if np.iscomplexobj(field.values) else np.real(field.values)
    if log:
        vals = np.log10(np.maximum(vals, 1e-300))
    g = field.grid
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    im = ax.imshow(
        vals.T,
        origin="lower",
        extent=[g.q_min - g.dq / 2, g.q_max + g.dq / 2,
                g.p_min - g.dp / 2, g.p_max + g.dp / 2],
        aspect="auto",
        cmap="viridis",
    )
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, shrink=0.9)
    fig.tight_layout()
    _finish(fig, path)


def save_marginals_plot(qs, f_q, ps, f_p, path: str, title: str = ""):
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6))
    axes[0].plot(qs, f_q, lw=1.2)
    axes[0].set_xlabel("q")
    axes[0].set_ylabel("marginal density")
    axes[1].plot(ps, f_p, lw=1.2, color="tab:orange")
    axes[1].set_xlabel("p")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    _finish(fig, path)


def save_lines_plot(x, curves: dict, path: str, xlabel: str = "",
                    title: str = ""):
    """One axis, several labeled curves."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for label, y in curves.items():
        ax.plot(x, y, lw=1.2, label=label)
    ax.set_xlabel(xlabel)
    if len(curves) > 1:
        ax.legend(frameon=False)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _finish(fig, path)


def save_histogram_plot(edges, density, path: str, overlay=None,
                        xlabel: str = "E", title: str = ""):
    """Step plot of a binned density with an optional smooth overlay."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.stairs(density, edges, fill=True, alpha=0.45)
    if overlay is not None:
        xs, ys = overlay
        ax.plot(xs, ys, lw=1.4, color="tab:red")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("density")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _finish(fig, path)
