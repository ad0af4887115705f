"""Figures written next to the CLI's delimited outputs."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.5, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "legend.fontsize": 8,
    "savefig.dpi": 150,
}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_constellation(cset, path, title=None):
    """Scatter of the points with their circles and the hyperbola ``xy = nu``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        t = np.linspace(0, 2 * np.pi, 400)
        for r in cset.radii:
            ax.plot(r * np.cos(t), r * np.sin(t), color="0.75", lw=0.8)
        lim = 1.15 * max(np.max(np.abs(cset.points)), 1.0)
        if cset.nu != 0:
            x = np.linspace(abs(cset.nu) / lim, lim, 300)
            s = np.sign(cset.nu)
            for sx in (1, -1):
                ax.plot(sx * x, s * sx * abs(cset.nu) / x, color="tab:orange", lw=0.8)
        else:
            ax.axhline(0, color="tab:orange", lw=0.8)
            ax.axvline(0, color="tab:orange", lw=0.8)
        ax.plot(cset.points.real, cset.points.imag, "o", color="tab:blue")
        for i, z in enumerate(cset.points):
            ax.annotate(str(i), (z.real, z.imag), textcoords="offset points", xytext=(4, 4),
                        fontsize=7)
        ax.set_xlim(-lim, lim)
        ax.set_ylim(-lim, lim)
        ax.set_aspect("equal")
        ax.set_xlabel("in-phase x")
        ax.set_ylabel("quadrature y")
        ax.set_title(title or f"M={cset.m}, nu={cset.nu:g}")
        return _save(fig, path)


def plot_gain_sweep(rows, path):
    """Coding gain against nu, one line per constellation size."""
    by_m = defaultdict(list)
    for r in rows:
        by_m[int(r["m"])].append((float(r["nu"]), float(r["coding_gain"])))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for m, pts in sorted(by_m.items()):
            pts.sort()
            ax.plot(*zip(*pts), "o-", label=f"M = {m}")
        ax.set_xlabel("nu")
        ax.set_ylabel("coding gain")
        ax.legend()
        return _save(fig, path)


def plot_bler(curves, path, title=None):
    """Semilog BLER curves; ``curves`` maps a legend label to (snr, bler) pairs."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, pts in curves.items():
            pts = [(s, b) for s, b in sorted(pts) if b > 0]
            if pts:
                ax.semilogy(*zip(*pts), "o-", label=label)
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel("BLER")
        ax.grid(True, which="both", alpha=0.3)
        if title:
            ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def write_xy(path, header, xs, ys):
    """Plot-data file: one header line, then ``x y`` pairs."""
    lines = [header] + [f"{x:.10g} {y:.10g}" for x, y in zip(xs, ys)]
    Path(path).write_text("\n".join(lines) + "\n")
