"""Report figures rendered to files with the Agg backend."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import DecayReport, RateFit  # noqa: E402


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_series(rows: Sequence[dict], path: str | Path) -> Path:
    """Energy, enstrophies and gradient-part norms against time."""
    t = np.array([r["time"] for r in rows])
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax0.plot(t, [r["energy"] for r in rows], label="energy")
    ax0.plot(t, [r["enstrophy_u"] for r in rows], label="enstrophy u")
    ax0.plot(t, [r["enstrophy_B"] for r in rows], label="enstrophy B")
    ax0.set_xlabel("t")
    ax0.legend(frameon=False)
    for key, label in (("q_u_L4", "|Qu|_L4"), ("q_B_L4", "|QB|_L4"), ("div_u", "|div u|_L2")):
        y = np.array([r[key] for r in rows])
        ok = np.isfinite(y) & (y > 0)
        if ok.any():
            ax1.semilogy(t[ok], y[ok], label=label)
    ax1.set_xlabel("t")
    ax1.legend(frameon=False)
    return _save(fig, path)


def plot_rate_fits(fits: dict[str, RateFit], path: str | Path, xlabel: str = "epsilon") -> Path:
    """Measured pairs and fitted power laws on log-log axes."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for name, fit in fits.items():
        x = np.array([p[0] for p in fit.pairs])
        y = np.array([p[1] for p in fit.pairs])
        if fit.below_floor:
            continue
        (line,) = ax.loglog(x, y, "o", label=f"{name}: {fit.exponent:.3f}")
        xs = np.geomspace(x.min(), x.max(), 20)
        ax.loglog(xs, fit.prefactor * xs**fit.exponent, "-", color=line.get_color(), lw=0.8)
    ax.set_xlabel(xlabel)
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_decay(reports: Sequence[DecayReport], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    for r in reports:
        ax.loglog(r.taus, r.averages, "o-", label="sponge" if r.sponge else "no sponge")
    ax.set_xlabel("tau")
    ax.set_ylabel("time-averaged window energy of Qu")
    ax.legend(frameon=False)
    return _save(fig, path)
