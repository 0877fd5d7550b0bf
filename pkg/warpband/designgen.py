from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.stats import qmc

from warpband.dataset import VariableSpec
from warpband.exceptions import ConfigurationError, DimensionMismatch
from warpband.util import rng_for

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LhsDesign:
    """A Latin hypercube design on the unit cube."""

    points: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def strata(self) -> np.ndarray:
        """Zero based stratum index of every coordinate, each column is a permutation."""
        return np.minimum(np.floor(self.points * self.n).astype(np.int64), self.n - 1)


def lhs(n: int, d: int, seed: int, *stream: int) -> LhsDesign:
    """Plain Latin hypercube sample with uniform jitter inside each stratum.

    Parameters
    ----------
    n: int
        Number of points.
    d: int
        Number of dimensions.
    seed: int
        The design is a pure function of ``(n, d, seed, *stream)``.
    stream: int
        Optional extra stream identifiers, used to derive
        independent designs from one master seed.
    """
    if n < 1 or d < 1:
        raise ConfigurationError(f"LHS needs n >= 1 and d >= 1, got n={n}, d={d}")

    sampler = qmc.LatinHypercube(d=d, scramble=True, seed=rng_for(seed, *stream))
    points = sampler.random(n)
    points.setflags(write=False)
    return LhsDesign(points=points, seed=seed)


def scale_to_box(design: LhsDesign, specs: Sequence[VariableSpec]) -> np.ndarray:
    """Affinely map the unit design onto the physical box of ``specs``."""
    if len(specs) != design.d:
        raise DimensionMismatch(f"{design.d} variable specs", len(specs))

    lower = np.array([s.lower for s in specs])
    upper = np.array([s.upper for s in specs])
    return lower + (upper - lower) * design.points


def design_frame(design: LhsDesign, specs: Sequence[VariableSpec]) -> pd.DataFrame:
    """Unit and physical coordinates side by side, for export."""
    physical = scale_to_box(design, specs)
    frame = pd.DataFrame(
        design.points, columns=[f"{s.name}_unit" for s in specs]
    )
    for k, spec in enumerate(specs):
        frame[spec.name] = physical[:, k]
    return frame


def write_design(design: LhsDesign, specs: Sequence[VariableSpec], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    design_frame(design, specs).to_csv(
        path, index=False, float_format="%.17g", lineterminator="\n"
    )
    log.info("Wrote %s point design to %s", design.n, path)
    return path
