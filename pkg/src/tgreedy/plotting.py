"""
Figures for AUROC curves.

``curve_svg`` is a dependency-free writer for a single source/target chart:
two data polylines plus the chance line at 0.5. The multi-panel report
figures go through matplotlib.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .evaluate import CurveSeries, LooResult

WIDTH, HEIGHT = 480, 320
MARGIN = 48
COLORS = {"greedy": "#c0392b", "t_greedy": "#2c6fbb"}


def _xy(steps, values, xmax):
    x0, x1 = MARGIN, WIDTH - MARGIN / 2
    y0, y1 = HEIGHT - MARGIN, MARGIN / 2
    xs = x0 + (x1 - x0) * np.asarray(steps, float) / max(xmax, 1)
    ys = y0 + (y1 - y0) * np.asarray(values, float)
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))


def curve_svg(curve: CurveSeries, title: str = "") -> str:
    """Source AUROC (dashed), target AUROC (solid) and the chance line."""
    xmax = int(curve.steps.max()) if curve.steps.size else 1
    color = COLORS.get(curve.label.split(":")[0], "#333333")
    y_chance = HEIGHT - MARGIN - (HEIGHT - 1.5 * MARGIN) * 0.5
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN / 2}" '
        f'y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{MARGIN}" y2="{MARGIN / 2}" '
        f'stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">'
        f'features added</text>',
        f'<text x="14" y="{HEIGHT / 2}" font-size="12" '
        f'transform="rotate(-90 14 {HEIGHT / 2})" text-anchor="middle">AUROC</text>',
        f'<text x="{MARGIN - 6}" y="{HEIGHT - MARGIN + 4}" text-anchor="end" font-size="10">0</text>',
        f'<text x="{MARGIN - 6}" y="{MARGIN / 2 + 4}" text-anchor="end" font-size="10">1</text>',
        f'<text x="{WIDTH - MARGIN / 2}" y="{HEIGHT - MARGIN + 14}" text-anchor="end" '
        f'font-size="10">{xmax}</text>',
    ]
    if title:
        parts.append(f'<text x="{WIDTH / 2}" y="16" text-anchor="middle" font-size="13">'
                     f'{escape(title)}</text>')
    parts += [
        f'<polyline class="chance" fill="none" stroke="gray" stroke-width="1" '
        f'points="{MARGIN},{y_chance:.2f} {WIDTH - MARGIN / 2},{y_chance:.2f}"/>',
        f'<polyline class="source" fill="none" stroke="{color}" stroke-width="2" '
        f'stroke-dasharray="6,4" points="{_xy(curve.steps, curve.source_auroc, xmax)}"/>',
        f'<polyline class="target" fill="none" stroke="{color}" stroke-width="2" '
        f'points="{_xy(curve.steps, curve.target_auroc, xmax)}"/>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


def write_curve_svg(path, curve: CurveSeries, title: str = "") -> None:
    Path(path).write_text(curve_svg(curve, title))


def _axes_curves(ax, curve: CurveSeries, color, name):
    ax.plot(curve.steps, curve.source_auroc, "--", color=color, lw=1.4, label=f"{name} source")
    ax.plot(curve.steps, curve.target_auroc, "-", color=color, lw=1.4, label=f"{name} target")


def plot_loo(results: Sequence[LooResult], path, max_panels: int = 4) -> None:
    """Per-held-out panels, the averaged panel and the T-statistic of each pick."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    held = [s.label.split(":", 1)[1] for s in results[0].series][:max_panels]
    ncols = len(held) + 2
    fig, axes = plt.subplots(1, ncols, figsize=(2.6 * ncols, 2.6), sharey=False)
    for res in results:
        color = COLORS.get(res.method, "black")
        for ax, s in zip(axes, res.series[:max_panels]):
            _axes_curves(ax, s, color, res.method)
        _axes_curves(axes[-2], res.average, color, res.method)
        axes[-1].plot(res.average.steps[1:], res.average.t_values[1:], color=color,
                      lw=1.4, label=res.method)
    for ax, title in zip(axes[:-1], [f"held out {h}" for h in held] + ["average"]):
        ax.axhline(0.5, color="gray", lw=0.8)
        ax.set_ylim(0.3, 1.0)
        ax.set_title(title, fontsize=9)
        ax.set_xlabel("features added", fontsize=8)
    axes[0].set_ylabel("AUROC", fontsize=8)
    axes[-1].set_title("T of added feature", fontsize=9)
    axes[-1].set_xlabel("features added", fontsize=8)
    axes[-2].legend(fontsize=6, loc="lower left")
    for ax in axes:
        ax.tick_params(labelsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_exceedance(report, path) -> None:
    """Empirical tail frequency against both bound curves, log scale."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 3))
    ax.semilogy(report.t_grid, np.minimum(report.bound_value, 1), "k-", label="2 exp(-t/2)")
    ax.semilogy(report.t_grid, report.statement_bound, "k:", label="exp(-t/2)")
    emp = np.where(report.empirical_freq > 0, report.empirical_freq, np.nan)
    ax.semilogy(report.t_grid, emp, "o", color=COLORS["t_greedy"], label="empirical")
    ax.set_xlabel("t")
    ax.set_ylabel("P[ratio > t]")
    ax.set_title(f"{report.dist}, n={report.n}", fontsize=9)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
