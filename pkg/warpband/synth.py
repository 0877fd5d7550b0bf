"""Synthetic quadratic datasets with a known ground truth.

Example 1 is a one dimensional cure-style deformation curve whose vertex
sits at 134 degrees. Example 2 is a two dimensional quadratic on
``[-10, 10]^2`` whose zero-level set is an ellipse-like curve.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from scipy import stats

from warpband.dataset import Dataset, VariableSpec
from warpband.designgen import lhs, scale_to_box
from warpband.exceptions import ConfigurationError
from warpband.formats import TruthRecord
from warpband.polybasis import BasisSpec, expand_many
from warpband.util import rng_for

log = logging.getLogger(__name__)

# Physical coefficients in basis order 1, x1, x2, x1^2, x1*x2, x2^2
EXAMPLE2_COEFFICIENTS = (-82.17, -2.01, -1.61, 2.4, -1.2, 3.76)
EXAMPLE2_SPECS = (VariableSpec("x1", -10.0, 10.0), VariableSpec("x2", -10.0, 10.0))

# 0.2 + 0.004 * (T - 134)^2 in basis order 1, T, T^2
EXAMPLE1_COEFFICIENTS = (72.024, -1.072, 0.004)
EXAMPLE1_SPECS = (VariableSpec("temperature", 120.0, 150.0),)
EXAMPLE1_SIGMA2 = 1e-4

NoiseKind = Literal["gamma", "none", "fixed", "per-observation"]


@dataclass(frozen=True)
class NoiseSpec:
    """How observation noise is generated.

    ``gamma`` draws one variance per dataset from Gamma(shape 2, rate 1),
    ``per-observation`` draws one per row, ``fixed`` uses ``sigma2``.
    """

    kind: NoiseKind = "gamma"
    sigma2: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("gamma", "none", "fixed", "per-observation"):
            raise ConfigurationError(f"Unknown noise mode {self.kind!r}")
        if self.kind == "fixed" and (self.sigma2 is None or self.sigma2 < 0):
            raise ConfigurationError("Fixed noise needs a non-negative sigma2")

    @classmethod
    def parse(cls, text: str) -> NoiseSpec:
        """Parse ``gamma``, ``none``, ``per-observation`` or ``fixed:<sigma2>``."""
        if text.startswith("fixed"):
            _, _, value = text.partition(":")
            try:
                return cls("fixed", float(value))
            except ValueError:
                raise ConfigurationError(f"Cannot parse noise mode {text!r}") from None
        return cls(text)  # type: ignore[arg-type]

    def label(self) -> str:
        return f"fixed:{self.sigma2!r}" if self.kind == "fixed" else self.kind


@dataclass(frozen=True)
class SyntheticData:
    dataset: Dataset
    truth: TruthRecord

    def write_truth(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.truth, indent=2), encoding="utf-8")
        return path


def load_truth(path: str | Path) -> TruthRecord:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Truth sidecar {path} does not exist")

    try:
        record = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Truth sidecar {path} is not valid JSON: {e}") from e

    if not isinstance(record, dict) or not {"exponents", "coefficients"} <= record.keys():
        raise ConfigurationError(
            f"Truth sidecar {path} needs \"exponents\" and \"coefficients\""
        )
    return record


def truth_values(truth: TruthRecord, X_physical) -> np.ndarray:
    """Evaluate the noiseless ground truth at physical points."""
    basis = BasisSpec.from_exponents(truth["exponents"])
    return expand_many(basis, X_physical) @ np.asarray(truth["coefficients"])


def _noise(n: int, noise: NoiseSpec, rng: np.random.Generator) -> tuple[np.ndarray, Optional[float]]:
    if noise.kind == "none":
        return np.zeros(n), 0.0

    if noise.kind == "fixed":
        sigma2 = float(noise.sigma2)
        return rng.normal(0.0, np.sqrt(sigma2), n), sigma2

    variance = stats.gamma(a=2.0, scale=1.0)
    if noise.kind == "gamma":
        sigma2 = float(variance.rvs(random_state=rng))
        return rng.normal(0.0, np.sqrt(sigma2), n), sigma2

    sigma2s = variance.rvs(size=n, random_state=rng)
    return rng.normal(0.0, 1.0, n) * np.sqrt(sigma2s), None


def _synthesize(
    example: int,
    coefficients,
    specs,
    output: str,
    n: int,
    seed: int,
    noise: NoiseSpec,
    degree: int,
) -> SyntheticData:
    basis = BasisSpec(d=len(specs), degree=degree)
    if n < basis.p:
        raise ConfigurationError(f"Example {example} needs n >= {basis.p}, got {n}")

    X = scale_to_box(lhs(n, basis.d, seed, 0), specs)
    # The LHS map can overshoot a bound by an ulp
    X = np.clip(X, [s.lower for s in specs], [s.upper for s in specs])
    clean = expand_many(basis, X) @ np.asarray(coefficients)
    errors, sigma2 = _noise(n, noise, rng_for(seed, 1))

    truth = TruthRecord(
        example=example,
        coefficients=list(coefficients),
        exponents=basis.to_record(),
        noise=noise.label(),
        sigma2=sigma2,
        seed=seed,
        n=n,
    )
    dataset = Dataset(
        inputs=X,
        outputs=(clean + errors)[:, None],
        input_specs=specs,
        output_names=(output,),
    )
    log.info("Synthesized example %s with n=%s (noise %s)", example, n, noise.label())
    return SyntheticData(dataset=dataset, truth=truth)


def synth_example2(n: int, seed: int, noise: NoiseSpec = NoiseSpec()) -> SyntheticData:
    """The two input quadratic on ``[-10, 10]^2`` sampled with a Latin hypercube.

    Raises
    ------
    ConfigurationError
        ``n < 6``.
    """
    return _synthesize(2, EXAMPLE2_COEFFICIENTS, EXAMPLE2_SPECS, "y", n, seed, noise, 2)


def synth_example1(
    n: int, seed: int, noise: NoiseSpec = NoiseSpec("fixed", EXAMPLE1_SIGMA2)
) -> SyntheticData:
    """A cure-style quadratic deformation curve over temperature."""
    return _synthesize(
        1, EXAMPLE1_COEFFICIENTS, EXAMPLE1_SPECS, "deformation", n, seed, noise, 2
    )


def true_zero_points(truth: TruthRecord, count: int = 1000) -> np.ndarray:
    """Points on the zero set of a two input quadratic ground truth.

    ``x1`` is swept densely over its range and the quadratic in ``x2``
    is solved at each step; roots outside ``[-10, 10]`` are dropped.
    Returns at most ``count`` points spread evenly along the sweep.
    """
    basis = BasisSpec.from_exponents(truth["exponents"])
    if basis.d != 2 or basis.degree != 2:
        raise ConfigurationError("Zero set sampling needs a two input quadratic")

    c0, c1, c2, c11, c12, c22 = truth["coefficients"]
    lower, upper = EXAMPLE2_SPECS[0].lower, EXAMPLE2_SPECS[0].upper
    points = []
    for x1 in np.linspace(lower, upper, 20 * count):
        roots = np.roots([c22, c2 + c12 * x1, c0 + c1 * x1 + c11 * x1**2])
        for root in roots:
            if abs(root.imag) < 1e-12 and lower <= root.real <= upper:
                points.append((x1, root.real))

    points = np.array(points)
    if len(points) <= count:
        return points
    keep = np.linspace(0, len(points) - 1, count).round().astype(int)
    return points[keep]
