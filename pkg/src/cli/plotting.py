"""
SVG figures for decay experiments and the recursion audit (matplotlib, Agg backend).
"""

import logging
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..core.moments import DecayFit  # noqa: E402

logger = logging.getLogger(__name__)


def plot_decay(distances: Sequence[float], means: Sequence[float], stderrs: Sequence[float],
               fit: Optional[DecayFit], path: Path, title: str = "") -> Path:
    """Log-moment against distance: points with error bars and the fitted line."""
    R = np.asarray(distances, dtype=float)
    mean = np.asarray(means, dtype=float)
    err = np.asarray(stderrs, dtype=float)
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    # error bars must stay positive on a log axis
    lower = np.minimum(err, mean * 0.999)
    ax.errorbar(R, mean, yerr=[lower, err], fmt="o", color="#1565C0", ecolor="#90CAF9",
                capsize=3, label="estimate")
    if fit is not None:
        grid = np.linspace(R.min(), R.max(), 100)
        ax.plot(grid, np.exp(fit.intercept - fit.m * grid), color="#D32F2F",
                label=f"fit: m = {fit.m:.3f} ± {fit.m_stderr:.3f}, r² = {fit.r2:.3f}")
        ax.annotate(f"slope −m = {-fit.m:.3f}", xy=(0.03, 0.05), xycoords="axes fraction", fontsize=9)
    ax.set_yscale("log")
    ax.set_xlabel("R (symmetrized distance)")
    ax.set_ylabel("fractional moment")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", color="#E0E0E0", linewidth=0.6)
    ax.legend(loc="upper right", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    logger.debug("Decay plot saved to %s", path)
    return path


def plot_recursion(scales: Sequence[int], upsilon: Sequence[float], stderrs: Sequence[float],
                   envelope: Optional[Sequence[float]], rate_envelope: Optional[Sequence[float]],
                   path: Path, title: str = "") -> Path:
    """Upsilon(L_k) with the predicted worst-case envelope and its exponential rate."""
    L = np.asarray(scales, dtype=float)
    ups = np.asarray(upsilon, dtype=float)
    err = np.asarray(stderrs, dtype=float)
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    positive = ups > 0
    ax.errorbar(L[positive], ups[positive], yerr=err[positive], fmt="o", color="#1565C0",
                capsize=3, label="Υ(L_k)")
    if envelope is not None:
        ax.plot(L, envelope, "--", color="#EF5350", label="recursion envelope")
    if rate_envelope is not None:
        ax.plot(L, rate_envelope, ":", color="#66BB6A", label="exp(−μ̃ L_k)")
    ax.set_yscale("log")
    ax.set_xlabel("L_k")
    ax.set_ylabel("Υ")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", color="#E0E0E0", linewidth=0.6)
    ax.legend(fontsize=9)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
