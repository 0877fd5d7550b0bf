"""Composite surrogate objective and its box-constrained minimization.

The objective is ``G(x) = sum_l w_l (p(x)^T beta_l)^2`` on the coded box
``[-1, 1]^d``. Minimization is multi-start L-BFGS-B with analytic gradients.
Running it once per posterior draw yields the decision ensemble.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Literal, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.optimize
from scipy import stats

from warpband.bayes_lm import FittedModel, posterior_draw
from warpband.dataset import ScaledDomain
from warpband.designgen import lhs
from warpband.exceptions import ConfigurationError, DimensionMismatch
from warpband.formats import DimensionSummaryRecord, EnsembleSummaryRecord, OptimumRecord
from warpband.polybasis import BasisSpec, expand_many, gradient_many
from warpband.util import ordered_map

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Objective:
    """Weighted sum of squared responses."""

    weights: tuple[float, ...]
    kind: Literal["sum-of-squares", "weighted-sum-of-squares"] = field(init=False)

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        if weights.ndim != 1 or weights.size < 1:
            raise ConfigurationError("Objective weights must be a non-empty vector")
        if np.any(weights < 0) or not np.any(weights > 0):
            raise ConfigurationError("Objective weights must be >= 0 and not all zero")
        object.__setattr__(self, "weights", tuple(float(w) for w in weights))
        plain = bool(np.all(weights == 1.0))
        object.__setattr__(self, "kind", "sum-of-squares" if plain else "weighted-sum-of-squares")

    @classmethod
    def sum_of_squares(cls, m: int) -> Objective:
        return cls(weights=(1.0,) * m)

    @classmethod
    def weighted(cls, weights: Sequence[float]) -> Objective:
        return cls(weights=tuple(weights))

    @property
    def m(self) -> int:
        return len(self.weights)


def _check_shapes(basis: BasisSpec, betas, objective: Objective) -> np.ndarray:
    betas = np.asarray(betas, dtype=float)
    if betas.ndim == 1:
        betas = betas[None, :]
    if betas.shape != (objective.m, basis.p):
        raise DimensionMismatch((objective.m, basis.p), betas.shape)
    return betas


def objective_many(basis: BasisSpec, betas, objective: Objective, X_coded) -> np.ndarray:
    """Evaluate ``G`` at every row of ``X_coded``."""
    betas = _check_shapes(basis, betas, objective)
    responses = expand_many(basis, X_coded) @ betas.T
    return (responses**2) @ np.asarray(objective.weights)


def eval_objective(basis: BasisSpec, betas, objective: Objective, x) -> float:
    """``G`` at a single coded point."""
    return float(objective_many(basis, betas, objective, np.asarray(x, dtype=float)[None, :])[0])


def eval_gradient(basis: BasisSpec, betas, objective: Objective, x) -> np.ndarray:
    """Analytic gradient ``sum_l 2 w_l y_l(x) J(x)^T beta_l`` at a coded point."""
    betas = _check_shapes(basis, betas, objective)
    x = np.asarray(x, dtype=float)
    features = expand_many(basis, x[None, :])[0]
    jacobian = gradient_many(basis, x[None, :])[0]
    responses = betas @ features
    scaled = 2.0 * np.asarray(objective.weights) * responses
    return jacobian.T @ (betas.T @ scaled)


def projected_gradient_norm(x: np.ndarray, grad: np.ndarray) -> float:
    """Max-norm of ``x - clip(x - grad)`` on the coded box."""
    return float(np.max(np.abs(x - np.clip(x - grad, -1.0, 1.0))))


@dataclass(frozen=True)
class OptimizerSettings:
    """Multi-start L-BFGS-B settings.

    Parameters
    ----------
    starts: int
        Total number of starts: ``2^min(d, 4)`` corner biased points
        followed by Latin hypercube points.
    gtol: float
        Projected gradient norm accepted as converged.
    step_tol: float
        Final step length accepted as converged.
    max_iter: int
        Iteration cap per start.
    corner_fraction: float
        How far towards the corners the corner starts sit, in coded units.
    """

    starts: int = 16
    gtol: float = 1e-8
    step_tol: float = 1e-12
    max_iter: int = 1000
    corner_fraction: float = 0.75

    def __post_init__(self):
        if self.starts < 1:
            raise ConfigurationError(f"Need at least one start, got {self.starts}")


def start_points(d: int, settings: OptimizerSettings, seed: int, *stream: int) -> np.ndarray:
    """Coded start points: corner biased first, then LHS."""
    k = min(d, 4)
    corners = []
    for signs in itertools.product((-1.0, 1.0), repeat=k):
        point = np.zeros(d)
        point[:k] = settings.corner_fraction * np.array(signs)
        corners.append(point)

    corners = np.array(corners)[: settings.starts]
    remaining = settings.starts - corners.shape[0]
    if remaining <= 0:
        return corners

    fill = 2.0 * lhs(remaining, d, seed, *stream).points - 1.0
    return np.vstack([corners, fill])


@dataclass(frozen=True)
class OptimResult:
    """The best multi-start result, reported in both unit systems."""

    x_star: np.ndarray
    x_star_coded: np.ndarray
    objective_value: float
    starts_used: int
    converged: bool
    projected_gradient: float

    def to_record(self, names: Sequence[str]) -> OptimumRecord:
        return OptimumRecord(
            x_star=self.x_star.tolist(),
            x_star_coded=self.x_star_coded.tolist(),
            objective_value=self.objective_value,
            starts_used=self.starts_used,
            converged=self.converged,
            input_names=list(names),
        )


class _StartOutcome(NamedTuple):
    value: float
    x: tuple
    converged: bool
    projected_gradient: float


def _single_start(basis, betas, objective, x0, settings) -> _StartOutcome:
    def value_and_grad(x):
        return (
            eval_objective(basis, betas, objective, x),
            eval_gradient(basis, betas, objective, x),
        )

    previous = [np.array(x0, dtype=float)]
    last_step = [np.inf]

    def track(xk):
        last_step[0] = float(np.linalg.norm(xk - previous[0]))
        previous[0] = np.array(xk, dtype=float)

    result = scipy.optimize.minimize(
        value_and_grad,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=[(-1.0, 1.0)] * basis.d,
        callback=track,
        options={"maxiter": settings.max_iter, "gtol": settings.gtol, "ftol": 1e-15},
    )
    x = np.clip(result.x, -1.0, 1.0)
    value = eval_objective(basis, betas, objective, x)
    pg = projected_gradient_norm(x, eval_gradient(basis, betas, objective, x))
    converged = bool(result.success) or pg <= settings.gtol or last_step[0] <= settings.step_tol

    # Never report anything worse than where we started
    start_value = eval_objective(basis, betas, objective, x0)
    if start_value < value:
        x, value = np.array(x0, dtype=float), start_value
        pg = projected_gradient_norm(x, eval_gradient(basis, betas, objective, x))
        converged = pg <= settings.gtol

    log.debug("Start %s -> %s (G=%.6g, converged=%s)", x0, x, value, converged)
    return _StartOutcome(value, tuple(x.tolist()), converged, pg)


def minimize(
    basis: BasisSpec,
    betas,
    objective: Objective,
    domain: ScaledDomain,
    settings: Optional[OptimizerSettings] = None,
    *,
    seed: int = 0,
    stream: Sequence[int] = (),
) -> OptimResult:
    """Minimize ``G`` over the box.

    Parameters
    ----------
    basis: BasisSpec
        The basis ``betas`` are expressed in.
    betas
        ``m x p`` coefficient matrix.
    objective: Objective
        Output weights.
    domain: ScaledDomain
        The box, used to report the optimum in physical units.
    settings: Optional[OptimizerSettings]
        Defaults to :class:`OptimizerSettings`.
    seed: int
        Seeds the LHS part of the start points.
    stream: Sequence[int]
        Extra stream identifiers, for example the draw index.

    Returns
    -------
    OptimResult
        The best start by objective value, ties broken by the
        lexicographically smallest coded point. ``converged`` is
        ``False`` when the winning start did not converge.
    """
    settings = settings or OptimizerSettings()
    betas = _check_shapes(basis, betas, objective)
    if domain.d != basis.d:
        raise DimensionMismatch(f"domain with d={basis.d}", domain.d)

    starts = start_points(basis.d, settings, seed, *stream)
    runs = [_single_start(basis, betas, objective, x0, settings) for x0 in starts]
    best = min(runs, key=lambda run: (run.value, run.x))
    if not any(run.converged for run in runs):
        log.warning("No start converged, returning the best iterate (G=%.6g)", best.value)

    x_coded = np.array(best.x)
    return OptimResult(
        x_star=np.clip(domain.decode(x_coded), domain.lower, domain.upper),
        x_star_coded=x_coded,
        objective_value=best.value,
        starts_used=len(starts),
        converged=best.converged,
        projected_gradient=best.projected_gradient,
    )


def point_optimum(
    model: FittedModel,
    objective: Objective,
    settings: Optional[OptimizerSettings] = None,
    *,
    seed: int = 0,
) -> OptimResult:
    """Minimize the surrogate objective built from the point estimates."""
    return minimize(model.basis, model.betas, objective, model.domain, settings, seed=seed)


@dataclass(frozen=True)
class DimensionSummary:
    name: str
    median: float
    q25: float
    q75: float
    interval_lower: float
    interval_upper: float
    mode: Optional[float]

    def to_record(self) -> DimensionSummaryRecord:
        return DimensionSummaryRecord(
            name=self.name,
            median=self.median,
            q25=self.q25,
            q75=self.q75,
            interval_lower=self.interval_lower,
            interval_upper=self.interval_upper,
            mode=self.mode,
        )


def _kde_mode(values: np.ndarray, lower: float, upper: float) -> Optional[float]:
    if values.size < 2 or np.ptp(values) == 0:
        return float(values[0]) if values.size else None

    try:
        density = stats.gaussian_kde(values)
    except np.linalg.LinAlgError:
        return None

    grid = np.linspace(lower, upper, 1001)
    return float(grid[int(np.argmax(density(grid)))])


@dataclass(frozen=True)
class DecisionEnsemble:
    """Optimal decisions under ``R`` posterior draws.

    Summaries are computed over converged draws only,
    ``non_converged`` reports how many were left out.
    """

    decisions: np.ndarray
    decisions_coded: np.ndarray
    objective_values: np.ndarray
    converged: np.ndarray
    seed: int
    input_names: tuple[str, ...]
    point: OptimResult
    interval_level: float = 0.95
    summaries: tuple[DimensionSummary, ...] = field(default=())
    hierarchical: bool = False

    @property
    def R(self) -> int:
        return self.decisions.shape[0]

    @property
    def non_converged(self) -> int:
        return int(np.sum(~self.converged))

    @property
    def median(self) -> np.ndarray:
        return np.array([s.median for s in self.summaries])

    @property
    def q25(self) -> np.ndarray:
        return np.array([s.q25 for s in self.summaries])

    @property
    def q75(self) -> np.ndarray:
        return np.array([s.q75 for s in self.summaries])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"draw_index": np.arange(self.R), "converged": self.converged})
        for k, name in enumerate(self.input_names):
            frame[name] = self.decisions[:, k]
        frame["objective_value"] = self.objective_values
        return frame

    def summary_record(self) -> EnsembleSummaryRecord:
        return EnsembleSummaryRecord(
            R=self.R,
            seed=self.seed,
            hierarchical=self.hierarchical,
            converged=self.R - self.non_converged,
            non_converged=self.non_converged,
            interval_level=self.interval_level,
            dimensions=[s.to_record() for s in self.summaries],
            point_optimum=self.point.x_star.tolist(),
            minimum_objective=self.point.objective_value,
        )


def summarize(
    decisions: np.ndarray,
    converged: np.ndarray,
    domain: ScaledDomain,
    interval_level: float = 0.95,
) -> tuple[DimensionSummary, ...]:
    """Per-dimension quartiles, central interval and KDE mode.

    Quantiles are order statistics of the used draws, never interpolated.
    """
    used = decisions[converged] if converged.any() else decisions
    if not converged.any():
        log.warning("No posterior draw converged, summarizing all %s draws", len(decisions))

    tail = 0.5 * (1.0 - interval_level)
    summaries = []
    for k, spec in enumerate(domain.specs):
        column = used[:, k]
        q25, median, q75, low, high = np.quantile(
            column, [0.25, 0.5, 0.75, tail, 1.0 - tail], method="inverted_cdf"
        )
        summaries.append(
            DimensionSummary(
                name=spec.name,
                median=float(median),
                q25=float(q25),
                q75=float(q75),
                interval_lower=float(low),
                interval_upper=float(high),
                mode=_kde_mode(column, spec.lower, spec.upper),
            )
        )
    return tuple(summaries)


def decision_ensemble(
    model: FittedModel,
    objective: Objective,
    R: int,
    seed: int,
    settings: Optional[OptimizerSettings] = None,
    *,
    threads: int = 1,
    hierarchical: bool = False,
    interval_level: float = 0.95,
) -> DecisionEnsemble:
    """Minimize the objective once per posterior draw.

    Draw ``i`` uses posterior stream ``(seed, i)`` and its own LHS starts,
    so the ensemble does not depend on ``threads``.

    Raises
    ------
    ConfigurationError
        ``R < 1`` or the objective does not match the model outputs.
    """
    if R < 1:
        raise ConfigurationError(f"R must be at least 1, got {R}")
    if objective.m != model.m:
        raise ConfigurationError(
            f"Objective has {objective.m} weights for {model.m} model outputs"
        )

    settings = settings or OptimizerSettings()
    point = point_optimum(model, objective, settings, seed=seed)

    def solve(i: int) -> OptimResult:
        draw = posterior_draw(model, seed, i, hierarchical=hierarchical)
        return minimize(
            model.basis, draw.betas, objective, model.domain, settings, seed=seed, stream=(i, 1)
        )

    results = ordered_map(solve, range(R), threads=threads)
    decisions = np.vstack([r.x_star for r in results])
    converged = np.array([r.converged for r in results])
    if not converged.all():
        log.warning("%s of %s posterior draws did not converge", int((~converged).sum()), R)

    log.info("Solved %s posterior draws", R)
    return DecisionEnsemble(
        decisions=decisions,
        decisions_coded=np.vstack([r.x_star_coded for r in results]),
        objective_values=np.array([r.objective_value for r in results]),
        converged=converged,
        seed=seed,
        input_names=model.domain.names,
        point=point,
        interval_level=interval_level,
        summaries=summarize(decisions, converged, model.domain, interval_level),
        hierarchical=hierarchical,
    )
