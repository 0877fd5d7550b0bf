"""Zero-level sets and their Monte Carlo confidence bands on 2-D slices.

A slice frees two inputs and pins the rest. On the slice grid we evaluate
the posterior mean surface and the prediction standard deviation, trace
zero contours with marching squares and count, per grid point, how many
posterior draws fall within the tolerance.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np
import pandas as pd

from warpband.bayes_lm import FittedModel, posterior_betas
from warpband.dataset import ScaledDomain
from warpband.exceptions import ConfigurationError, DegeneratePosterior
from warpband.formats import BandMetadataRecord, ContourRecord, SliceRecord
from warpband.optimizer import Objective, objective_many
from warpband.polybasis import expand_many
from warpband.util import ordered_map

log = logging.getLogger(__name__)

BandMode = Literal["standardized", "absolute"]
MIN_RESOLUTION = 16
DEFAULT_RESOLUTION = 201
NEAR_ZERO = 1e-12
_DRAW_CHUNK = 64


@dataclass(frozen=True)
class SliceSpec:
    """Two free inputs on a grid, the remaining inputs pinned.

    Parameters
    ----------
    free_dims: tuple[int, int]
        Indices of the free inputs, horizontal axis first.
    fixed_values: tuple[float, ...]
        Physical values of the other inputs in ascending index order.
    grid_resolution: tuple[int, int]
        Grid points along each free axis.
    """

    free_dims: tuple[int, int]
    fixed_values: tuple[float, ...] = ()
    grid_resolution: tuple[int, int] = (DEFAULT_RESOLUTION, DEFAULT_RESOLUTION)

    def __post_init__(self):
        object.__setattr__(self, "free_dims", tuple(int(k) for k in self.free_dims))
        object.__setattr__(self, "fixed_values", tuple(float(v) for v in self.fixed_values))
        object.__setattr__(
            self, "grid_resolution", tuple(int(g) for g in self.grid_resolution)
        )
        if len(self.free_dims) != 2 or self.free_dims[0] == self.free_dims[1]:
            raise ConfigurationError(f"Need two distinct free dims, got {self.free_dims}")
        if len(self.grid_resolution) != 2 or min(self.grid_resolution) < MIN_RESOLUTION:
            raise ConfigurationError(
                f"Grid resolution must be at least {MIN_RESOLUTION} per axis, "
                f"got {self.grid_resolution}"
            )

    def fixed_dims(self, d: int) -> list[int]:
        return [k for k in range(d) if k not in self.free_dims]

    def validate(self, domain: ScaledDomain) -> SliceSpec:
        """Check the slice against ``domain``, returns itself for chaining.

        Raises
        ------
        ConfigurationError
            Free dims out of range, wrong number of fixed values
            or a fixed value outside its variable's range.
        """
        if domain.d < 2:
            raise ConfigurationError("Slices need at least two input dimensions")
        if any(not 0 <= k < domain.d for k in self.free_dims):
            raise ConfigurationError(f"Free dims {self.free_dims} out of range for d={domain.d}")

        fixed = self.fixed_dims(domain.d)
        if len(fixed) != len(self.fixed_values):
            raise ConfigurationError(
                f"Expected {len(fixed)} fixed values, got {len(self.fixed_values)}"
            )
        for k, value in zip(fixed, self.fixed_values):
            spec = domain.specs[k]
            if not spec.lower <= value <= spec.upper:
                raise ConfigurationError(
                    f"Fixed value {spec.name}={value} outside [{spec.lower}, {spec.upper}]"
                )
        return self

    def coded_axes(self) -> tuple[np.ndarray, np.ndarray]:
        g1, g2 = self.grid_resolution
        return np.linspace(-1.0, 1.0, g1), np.linspace(-1.0, 1.0, g2)

    def physical_axes(self, domain: ScaledDomain) -> tuple[np.ndarray, np.ndarray]:
        u, v = self.coded_axes()
        i, j = self.free_dims
        return (
            domain.center[i] + domain.half_width[i] * u,
            domain.center[j] + domain.half_width[j] * v,
        )

    def coded_points(self, domain: ScaledDomain) -> np.ndarray:
        """The ``g1 x g2 x d`` array of coded grid points."""
        self.validate(domain)
        u, v = self.coded_axes()
        points = np.empty(self.grid_resolution + (domain.d,))
        fixed = self.fixed_dims(domain.d)
        if fixed:
            pinned = np.zeros(domain.d)
            pinned[fixed] = self.fixed_values
            points[...] = domain.encode(pinned)

        i, j = self.free_dims
        points[..., i] = u[:, None]
        points[..., j] = v[None, :]
        return points

    def to_record(self) -> SliceRecord:
        return SliceRecord(
            free_dims=list(self.free_dims),
            fixed_values=list(self.fixed_values),
            grid_resolution=list(self.grid_resolution),
        )


def eval_slice(
    model: FittedModel, output: int | str, slice_spec: SliceSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Mean surface ``p(x)^T beta_hat_l`` and ``sigma_y(x)`` over the slice grid."""
    X = slice_spec.coded_points(model.domain)
    return model.mean_surface(X, output), model.sd_surface(X, output)


def objective_slice(
    model: FittedModel, slice_spec: SliceSpec, objective: Objective, betas=None
) -> np.ndarray:
    """The composite objective over the slice grid, point estimates by default."""
    X = slice_spec.coded_points(model.domain)
    return objective_many(model.basis, model.betas if betas is None else betas, objective, X)


@dataclass(frozen=True)
class ContourSet:
    """Polylines of a level set in physical slice coordinates."""

    polylines: tuple[np.ndarray, ...]
    level: float = 0.0
    source: str = "mean"

    @property
    def empty(self) -> bool:
        return not self.polylines

    def points(self) -> np.ndarray:
        if self.empty:
            return np.empty((0, 2))
        return np.vstack(self.polylines)

    def to_record(self) -> ContourRecord:
        return ContourRecord(
            level=self.level,
            source=self.source,
            polylines=[line.tolist() for line in self.polylines],
        )


def _edge_point(surface, xs, ys, edge, level) -> tuple[float, float]:
    axis, i, j = edge
    i1, j1 = (i + 1, j) if axis == 0 else (i, j + 1)
    v0 = surface[i, j] - level
    v1 = surface[i1, j1] - level
    t = min(max(v0 / (v0 - v1), 0.0), 1.0)
    return (
        float(xs[i] * (1.0 - t) + xs[i1] * t),
        float(ys[j] * (1.0 - t) + ys[j1] * t),
    )


def _cell_segments(above: np.ndarray, surface: np.ndarray, i: int, j: int, level: float):
    corners = ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1))
    # Cell edges in corner order: c0-c1, c1-c2, c3-c2, c0-c3
    edges = ((0, i, j), (1, i + 1, j), (0, i, j + 1), (1, i, j))
    bits = [bool(above[c]) for c in corners]
    crossed = [k for k in range(4) if bits[k] != bits[(k + 1) % 4]]

    if len(crossed) == 2:
        return [(edges[crossed[0]], edges[crossed[1]])]

    # Saddle: the centre value decides which diagonal pair is connected
    center_above = float(np.mean([surface[c] for c in corners])) > level
    if center_above == bits[0]:
        # c0 and c2 are joined through the centre, c1 and c3 are cut off
        return [(edges[0], edges[1]), (edges[2], edges[3])]
    return [(edges[3], edges[0]), (edges[1], edges[2])]


def _join(segments) -> list[list]:
    adjacency: dict = {}
    for a, b in segments:
        adjacency.setdefault(a, []).append(b)
        adjacency.setdefault(b, []).append(a)

    visited_segments = set()
    chains = []

    def walk(start):
        chain = [start]
        current = start
        while True:
            step = None
            for nxt in adjacency[current]:
                key = frozenset((current, nxt))
                if key not in visited_segments:
                    step = nxt
                    visited_segments.add(key)
                    break
            if step is None:
                return chain
            chain.append(step)
            current = step
            if current == start:
                return chain

    # Open chains start at edges that only one segment touches
    for edge in sorted(adjacency):
        if len(adjacency[edge]) == 1 and any(
            frozenset((edge, n)) not in visited_segments for n in adjacency[edge]
        ):
            chains.append(walk(edge))

    for edge in sorted(adjacency):
        if any(frozenset((edge, n)) not in visited_segments for n in adjacency[edge]):
            chains.append(walk(edge))

    return chains


def marching_squares(
    surface: np.ndarray, xs: np.ndarray, ys: np.ndarray, *, level: float = 0.0, source: str = "mean"
) -> ContourSet:
    """Trace the ``level`` set of ``surface[i, j]`` sampled at ``(xs[i], ys[j])``.

    Crossings are linearly interpolated on cell edges and chained into
    polylines; closed loops repeat their first point at the end.
    """
    surface = np.asarray(surface, dtype=float)
    if not np.all(np.isfinite(surface)):
        raise ConfigurationError("Contour surface contains non-finite values")

    above = surface > level
    corners = above[:-1, :-1].astype(int) + above[1:, :-1] + above[1:, 1:] + above[:-1, 1:]
    mixed = np.argwhere((corners > 0) & (corners < 4))

    segments = []
    for i, j in mixed:
        segments.extend(_cell_segments(above, surface, int(i), int(j), level))

    polylines = []
    for chain in _join(segments):
        points = np.array([_edge_point(surface, xs, ys, edge, level) for edge in chain])
        points.setflags(write=False)
        polylines.append(points)

    return ContourSet(polylines=tuple(polylines), level=level, source=source)


def zero_contour(
    surface: np.ndarray,
    slice_spec: SliceSpec,
    domain: ScaledDomain,
    *,
    source: str = "mean",
) -> ContourSet:
    """The zero-level set of a slice surface in physical slice coordinates.

    Returns an empty set when the surface keeps one sign over the slice.
    """
    xs, ys = slice_spec.physical_axes(domain)
    return marching_squares(surface, xs, ys, level=0.0, source=source)


class Region(enum.IntEnum):
    NEGATIVE = -1
    NEAR_ZERO = 0
    POSITIVE = 1


def sign_regions(surface: np.ndarray) -> np.ndarray:
    """Label every grid point by the sign of ``surface``.

    Values within ``1e-12`` of the surface's largest magnitude
    are labelled :attr:`Region.NEAR_ZERO`.
    """
    surface = np.asarray(surface, dtype=float)
    if not np.all(np.isfinite(surface)):
        raise ConfigurationError("Region surface contains non-finite values")

    labels = np.sign(surface).astype(np.int8)
    scale = float(np.max(np.abs(surface))) if surface.size else 0.0
    labels[np.abs(surface) <= NEAR_ZERO * scale] = Region.NEAR_ZERO
    return labels


@dataclass(frozen=True)
class BandGrid:
    """Monte Carlo coverage of one output on one slice for one tolerance."""

    slice: SliceSpec
    output: str
    x_axis: np.ndarray
    y_axis: np.ndarray
    mean_surface: np.ndarray
    sd_surface: np.ndarray
    coverage_fraction: np.ndarray
    band_mask: np.ndarray
    alpha: float
    epsilon: float
    R: int
    seed: int
    mode: BandMode = "standardized"

    @property
    def band_fraction(self) -> float:
        return float(self.band_mask.mean())

    def to_frame(self, names: Sequence[str]) -> pd.DataFrame:
        xx, yy = np.meshgrid(self.x_axis, self.y_axis, indexing="ij")
        return pd.DataFrame(
            {
                names[0]: xx.ravel(),
                names[1]: yy.ravel(),
                "mean": self.mean_surface.ravel(),
                "sd": self.sd_surface.ravel(),
                "coverage": self.coverage_fraction.ravel(),
                "in_band": self.band_mask.ravel().astype(int),
            }
        )

    def metadata_record(self) -> BandMetadataRecord:
        return BandMetadataRecord(
            output=self.output,
            alpha=self.alpha,
            epsilon=self.epsilon,
            R=self.R,
            seed=self.seed,
            mode=self.mode,
            slice=self.slice.to_record(),
            band_fraction=self.band_fraction,
        )


@dataclass(frozen=True)
class BandResult:
    """Bands for one or more tolerances sharing one set of posterior draws."""

    bands: tuple[BandGrid, ...]
    mean_contour: ContourSet
    draw_contours: tuple[ContourSet, ...]

    @property
    def band(self) -> BandGrid:
        return self.bands[0]


def _check_band_params(alpha: float, epsilons: Sequence[float], R: int) -> None:
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
    if not epsilons or any(not e > 0 for e in epsilons):
        raise ConfigurationError(f"epsilon values must be > 0, got {list(epsilons)}")
    if R < 1:
        raise ConfigurationError(f"R must be at least 1, got {R}")
    if R < 100:
        log.warning("R=%s draws give a coverage resolution coarser than 1%%", R)


def _count_within(
    features: np.ndarray,
    sd: np.ndarray,
    draws: np.ndarray,
    epsilons: Sequence[float],
    mode: BandMode,
    threads: int,
) -> np.ndarray:
    """Per point and tolerance, how many draws satisfy the band inequality."""
    thresholds = np.asarray(epsilons, dtype=float)

    def count(start: int) -> np.ndarray:
        responses = features @ draws[start : start + _DRAW_CHUNK].T
        if mode == "standardized":
            responses = np.abs(responses) / sd[:, None]
        else:
            responses = np.abs(responses)
        return np.stack([(responses <= e).sum(axis=1) for e in thresholds])

    # Integer counts, the sum does not depend on how chunks are scheduled
    chunks = ordered_map(count, range(0, draws.shape[0], _DRAW_CHUNK), threads=threads)
    return np.sum(chunks, axis=0)


def coverage_at(
    model: FittedModel,
    output: int | str,
    X_coded,
    *,
    epsilon: float,
    R: int,
    seed: int,
    mode: BandMode = "standardized",
    hierarchical: bool = False,
) -> np.ndarray:
    """Fraction of posterior draws within tolerance at arbitrary coded points."""
    index = model.output_index(output)
    X = np.atleast_2d(np.asarray(X_coded, dtype=float))
    draws = posterior_betas(model, R, seed, hierarchical=hierarchical)[:, index, :]
    features = expand_many(model.basis, X)
    counts = _count_within(features, model.sd_surface(X, index), draws, [epsilon], mode, 1)
    return counts[0] / R


def confidence_bands(
    model: FittedModel,
    output: int | str,
    slice_spec: SliceSpec,
    alpha: float,
    epsilons: Sequence[float],
    R: int,
    seed: int,
    *,
    mode: BandMode = "standardized",
    draw_contours: int = 20,
    hierarchical: bool = False,
    threads: int = 1,
) -> BandResult:
    """Confidence bands of one output's zero-level set for several tolerances.

    Every tolerance is evaluated on the same ``R`` draws, so bands are
    nested in ``epsilon``.

    Parameters
    ----------
    model: FittedModel
        The fitted model.
    output: int | str
        Output index or name.
    slice_spec: SliceSpec
        The slice to evaluate.
    alpha: float
        A grid point is in the band when at least ``1 - alpha``
        of the draws satisfy the inequality.
    epsilons: Sequence[float]
        Tolerances, in standard deviations for ``mode="standardized"``
        and in response units for ``mode="absolute"``.
    R: int
        Number of posterior draws.
    seed: int
        Posterior stream seed.
    draw_contours: int
        How many draw zero contours to trace for display.

    Raises
    ------
    DegeneratePosterior
        The output's ``sigma2_hat`` is zero.
    """
    _check_band_params(alpha, epsilons, R)
    index = model.output_index(output)
    name = model.output_names[index]
    if model.outputs[index].sigma2_hat <= 0.0:
        raise DegeneratePosterior(
            f"Output {name!r} has sigma2_hat = 0, its confidence band is undefined"
        )

    X = slice_spec.coded_points(model.domain)
    shape = slice_spec.grid_resolution
    features = expand_many(model.basis, X.reshape(-1, model.domain.d))
    mean = model.mean_surface(X, index)
    sd = model.sd_surface(X, index)

    draws = posterior_betas(model, R, seed, hierarchical=hierarchical, threads=threads)[:, index, :]
    counts = _count_within(features, sd.ravel(), draws, epsilons, mode, threads)
    log.info("Counted %s draws over a %sx%s grid for %s", R, *shape, name)

    x_axis, y_axis = slice_spec.physical_axes(model.domain)
    bands = []
    for epsilon, count in zip(epsilons, counts):
        coverage = (count / R).reshape(shape)
        bands.append(
            BandGrid(
                slice=slice_spec,
                output=name,
                x_axis=x_axis,
                y_axis=y_axis,
                mean_surface=mean,
                sd_surface=sd,
                coverage_fraction=coverage,
                band_mask=coverage >= 1.0 - alpha,
                alpha=alpha,
                epsilon=float(epsilon),
                R=R,
                seed=seed,
                mode=mode,
            )
        )

    contours = tuple(
        zero_contour(
            (features @ draws[i]).reshape(shape), slice_spec, model.domain, source=f"draw({i})"
        )
        for i in range(min(draw_contours, R))
    )
    return BandResult(
        bands=tuple(bands),
        mean_contour=zero_contour(mean, slice_spec, model.domain),
        draw_contours=contours,
    )


def confidence_band(
    model: FittedModel,
    output: int | str,
    slice_spec: SliceSpec,
    alpha: float,
    epsilon: float,
    R: int,
    seed: int,
    **kwargs,
) -> BandResult:
    """Single tolerance form of :func:`confidence_bands`."""
    return confidence_bands(model, output, slice_spec, alpha, [epsilon], R, seed, **kwargs)


def default_slice(
    domain: ScaledDomain,
    free_dims: tuple[int, int],
    anchor: Optional[np.ndarray] = None,
    resolution: int = DEFAULT_RESOLUTION,
) -> SliceSpec:
    """A slice whose fixed inputs sit at ``anchor`` (physical), the box centre by default."""
    anchor = domain.center if anchor is None else np.asarray(anchor, dtype=float)
    fixed = [k for k in range(domain.d) if k not in free_dims]
    return SliceSpec(
        free_dims=free_dims,
        fixed_values=tuple(float(anchor[k]) for k in fixed),
        grid_resolution=(resolution, resolution),
    ).validate(domain)
