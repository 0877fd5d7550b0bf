"""SVG rendering of ensembles, bands and objective slices.

Figures are built on :class:`matplotlib.figure.Figure` directly so no
global pyplot state is touched. Dates and element ids are pinned so the
same inputs always give the same SVG text.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Sequence

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from warpband.bayes_lm import FittedModel, posterior_draw
from warpband.boundary import BandGrid, ContourSet
from warpband.optimizer import DecisionEnsemble
from warpband.polybasis import expand_many

log = logging.getLogger(__name__)

WIDTH_IN = 8.0
HEIGHT_IN = 6.0
DPI = 100
SVG_METADATA = {"Date": None, "Creator": "warpband"}

BAND_COLOR = "tab:blue"
MEAN_COLOR = "tab:purple"
DRAW_COLOR = "0.6"
TRUTH_COLOR = "tab:green"


def _figure() -> Figure:
    return Figure(figsize=(WIDTH_IN, HEIGHT_IN), dpi=DPI)


def _save(fig: Figure, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context({"svg.hashsalt": "warpband", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata=SVG_METADATA)
    log.debug("Rendered %s", path)
    return path


def _draw_contour(ax, contour: ContourSet, **style) -> None:
    label = style.pop("label", None)
    for k, line in enumerate(contour.polylines):
        ax.plot(line[:, 0], line[:, 1], **style, label=label if k == 0 else None)


def plot_band(
    band: BandGrid,
    mean_contour: ContourSet,
    draw_contours: Sequence[ContourSet],
    names: Sequence[str],
    path: str | Path,
    *,
    truth_contour: Optional[ContourSet] = None,
) -> Path:
    """Shaded band, mean zero contour, draw contours and the optional truth."""
    fig = _figure()
    ax = fig.add_subplot()
    if band.band_mask.any():
        ax.contourf(
            band.x_axis,
            band.y_axis,
            band.band_mask.T.astype(float),
            levels=[0.5, 1.5],
            colors=[BAND_COLOR],
            alpha=0.3,
        )

    for contour in draw_contours:
        _draw_contour(ax, contour, color=DRAW_COLOR, linewidth=0.6)
    _draw_contour(ax, mean_contour, color=MEAN_COLOR, linewidth=2.0, label="posterior mean")
    if truth_contour is not None:
        _draw_contour(ax, truth_contour, color=TRUTH_COLOR, linewidth=2.0, label="truth")

    if mean_contour.empty:
        ax.text(
            0.5, 0.5, "no boundary in slice", transform=ax.transAxes, ha="center", va="center"
        )

    unit = "sd" if band.mode == "standardized" else "units"
    ax.set_title(
        f"{band.output}: {100 * (1 - band.alpha):g}% band, epsilon={band.epsilon:g} {unit}"
    )
    ax.set_xlim(band.x_axis[0], band.x_axis[-1])
    ax.set_ylim(band.y_axis[0], band.y_axis[-1])
    ax.set_xlabel(names[0])
    ax.set_ylabel(names[1])
    if not mean_contour.empty or truth_contour is not None:
        ax.legend(loc="upper right")
    return _save(fig, path)


def plot_marginals(ensemble: DecisionEnsemble, directory: str | Path) -> list[Path]:
    """One histogram per input with the median solid and quartiles dashed."""
    paths = []
    used = ensemble.decisions[ensemble.converged] if ensemble.converged.any() else ensemble.decisions
    for k, summary in enumerate(ensemble.summaries):
        fig = _figure()
        ax = fig.add_subplot()
        ax.hist(used[:, k], bins=30, color="0.75", edgecolor="0.4")
        ax.axvline(summary.median, color="red", linewidth=2.0, label="median")
        ax.axvline(summary.q25, color="red", linestyle="--", label="25th / 75th percentile")
        ax.axvline(summary.q75, color="red", linestyle="--")
        ax.set_xlabel(summary.name)
        ax.set_ylabel("count")
        ax.set_title(f"Optimal {summary.name} over {ensemble.R} posterior draws")
        ax.legend(loc="upper right")
        paths.append(_save(fig, Path(directory) / f"marginal_{summary.name}.svg"))
    return paths


def plot_realizations(
    model: FittedModel,
    ensemble: DecisionEnsemble,
    path: str | Path,
    *,
    output: int = 0,
    curves: int = 50,
) -> Path:
    """Sampled response curves of a one input model with their optima marked."""
    spec = model.domain.specs[0]
    coded = np.linspace(-1.0, 1.0, 301)[:, None]
    physical = model.domain.decode(coded)[:, 0]
    features = expand_many(model.basis, coded)

    fig = _figure()
    ax = fig.add_subplot()
    for i in range(min(curves, ensemble.R)):
        draw = posterior_draw(model, ensemble.seed, i, hierarchical=ensemble.hierarchical)
        beta = draw.betas[output]
        ax.plot(physical, features @ beta, color="tab:blue", linewidth=0.5, alpha=0.6)
        optimum = ensemble.decisions_coded[i][None, :]
        ax.plot(
            ensemble.decisions[i, 0],
            float(expand_many(model.basis, optimum)[0] @ beta),
            "o",
            color="red",
            markersize=3,
        )

    ax.set_xlabel(spec.name)
    ax.set_ylabel(model.output_names[output])
    ax.set_title("Posterior realizations and their optimal decisions")
    return _save(fig, path)


def plot_objective(
    x_axis: np.ndarray,
    y_axis: np.ndarray,
    values: np.ndarray,
    names: Sequence[str],
    path: str | Path,
    *,
    marker: Optional[Sequence[float]] = None,
) -> Path:
    """Filled contours of the composite objective over a slice."""
    fig = _figure()
    ax = fig.add_subplot()
    filled = ax.contourf(x_axis, y_axis, values.T, levels=20, cmap="viridis")
    fig.colorbar(filled, ax=ax, label="objective")
    if marker is not None:
        ax.plot(marker[0], marker[1], "x", color="red", markersize=12, markeredgewidth=2)
    ax.set_xlabel(names[0])
    ax.set_ylabel(names[1])
    ax.set_title("Surrogate objective")
    return _save(fig, path)
