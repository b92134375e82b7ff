"""Report figures (PNG) written next to the CSV and gnuplot data files."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.4,
    "lines.markersize": 4,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def loglog_series(path, x, series: dict, xlabel: str, ylabel: str, title: str = "", slope_ref=None):
    """Log-log plot of one or more ``label -> y`` series, optionally with a reference slope."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        x = np.asarray(x, dtype=float)
        for label, y in series.items():
            y = np.abs(np.asarray(y, dtype=float))
            ok = y > 0
            ax.loglog(x[ok], y[ok], "o-", label=label)
        if slope_ref is not None and len(series):
            y0 = np.abs(np.asarray(next(iter(series.values())), dtype=float))[0]
            ax.loglog(x, y0 * (x / x[0]) ** slope_ref, "k--", lw=0.8, label=f"slope {slope_ref:g}")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title, fontsize=10)
        ax.legend()
        _save(fig, path)


def semilogy_series(path, x, series: dict, xlabel: str, ylabel: str, title: str = ""):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, y in series.items():
            ax.semilogy(x, np.maximum(np.abs(y), 1e-300), "-", label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title, fontsize=10)
        ax.legend()
        _save(fig, path)


def line_series(path, x, series: dict, xlabel: str, ylabel: str, title: str = ""):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, y in series.items():
            ax.plot(x, y, label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title, fontsize=10)
        ax.legend()
        _save(fig, path)


def field_image(path, values, extent, title: str = "", cmap: str = "viridis"):
    """Image of a 2D field; ``extent = (xmin, xmax, ymin, ymax)``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.6))
        im = ax.imshow(np.asarray(values).T, origin="lower", extent=extent, cmap=cmap, aspect="equal")
        fig.colorbar(im, ax=ax, shrink=0.85)
        ax.set_xlabel("$x_1$")
        ax.set_ylabel("$x_2$")
        if title:
            ax.set_title(title, fontsize=10)
        _save(fig, path)


def comparison_images(path, panels: dict, extent):
    """Side-by-side fields sharing one colour scale."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(panels), figsize=(3.4 * len(panels), 3.2))
        axes = np.atleast_1d(axes)
        vals = [np.asarray(v) for v in panels.values()]
        lo = min(float(v.min()) for v in vals)
        hi = max(float(v.max()) for v in vals)
        for ax, (label, v) in zip(axes, panels.items()):
            im = ax.imshow(v.T, origin="lower", extent=extent, vmin=lo, vmax=hi, aspect="equal")
            ax.set_title(label, fontsize=10)
        fig.colorbar(im, ax=list(axes), shrink=0.8)
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)


def sinogram_image(path, sino, title: str = ""):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ext = (sino.offsets[0], sino.offsets[-1], sino.angles[0], sino.angles[-1])
        im = ax.imshow(np.real(sino.values), origin="lower", extent=ext, aspect="auto", cmap="magma")
        fig.colorbar(im, ax=ax)
        ax.set_xlabel("offset $s$")
        ax.set_ylabel(r"angle $\theta$")
        if title:
            ax.set_title(title, fontsize=10)
        _save(fig, path)
