"""Per-output least squares fits and their posterior.

Every response ``y_l`` is modelled as ``P beta_l + e_l`` with i.i.d. normal
errors. Under a flat prior on ``beta_l`` and Jeffreys' prior on the noise
variance the conditional posterior is ``MVN(beta_hat, sigma^2 (P^T P)^-1)``;
sampling plugs in the MAP variance ``RSS / (n - p)`` unless hierarchical
sampling is requested.
"""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass
from math import comb
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import scipy.linalg
from scipy import stats

from warpband.dataset import Dataset, ScaledDomain, VariableSpec, to_coded
from warpband.exceptions import (
    ConfigurationError,
    DimensionMismatch,
    FactorizationFailed,
    RankDeficient,
    UnderDetermined,
)
from warpband.formats import ModelRecord, OutputRecord
from warpband.polybasis import BasisSpec, build_design, expand, expand_many
from warpband.util import ordered_map, rng_for

log = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-10
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class FittedOutput:
    """The fit of a single response column."""

    name: str
    beta_hat: np.ndarray
    sigma2_hat: float
    residual_ss: float
    r2: float
    # Lower triangular L with L @ L.T == (P^T P)^-1
    xtx_inv_factor: np.ndarray
    n: int

    @property
    def p(self) -> int:
        return self.beta_hat.shape[0]

    def to_record(self) -> OutputRecord:
        return OutputRecord(
            name=self.name,
            beta_hat=self.beta_hat.tolist(),
            sigma2_hat=float(self.sigma2_hat),
            residual_ss=float(self.residual_ss),
            r2=float(self.r2),
            xtx_inv_factor=self.xtx_inv_factor.tolist(),
        )


@dataclass(frozen=True)
class FittedModel:
    """One fitted output per response, sharing a basis and a coded domain."""

    outputs: tuple[FittedOutput, ...]
    basis: BasisSpec
    domain: ScaledDomain

    @property
    def output_names(self) -> tuple[str, ...]:
        return tuple(o.name for o in self.outputs)

    @property
    def m(self) -> int:
        return len(self.outputs)

    @property
    def n(self) -> int:
        return self.outputs[0].n

    @property
    def betas(self) -> np.ndarray:
        """The ``m x p`` matrix of point estimates."""
        return np.vstack([o.beta_hat for o in self.outputs])

    @property
    def sigma2(self) -> np.ndarray:
        return np.array([o.sigma2_hat for o in self.outputs])

    def output_index(self, output: int | str) -> int:
        """Resolve an output given by position or by name.

        Raises
        ------
        ConfigurationError
            No such output.
        """
        if isinstance(output, str):
            try:
                return self.output_names.index(output)
            except ValueError:
                raise ConfigurationError(f"Unknown output {output!r}") from None

        index = int(output)
        if not 0 <= index < self.m:
            raise ConfigurationError(
                f"Output index {index} out of range for {self.m} outputs"
            )
        return index

    def mean_surface(self, X_coded, output: int | str) -> np.ndarray:
        """Vectorized ``p(x)^T beta_hat_l`` over the rows of ``X_coded``."""
        fitted = self.outputs[self.output_index(output)]
        return expand_many(self.basis, X_coded) @ fitted.beta_hat

    def sd_surface(self, X_coded, output: int | str) -> np.ndarray:
        """Vectorized prediction standard deviation over the rows of ``X_coded``."""
        fitted = self.outputs[self.output_index(output)]
        features = expand_many(self.basis, X_coded)
        quad = np.sum((features @ fitted.xtx_inv_factor) ** 2, axis=-1)
        return np.sqrt(fitted.sigma2_hat * quad)

    def physical_coefficients(self, output: int | str) -> np.ndarray:
        """Coefficients of the same polynomial written in physical units.

        The coded polynomial is expanded term by term, so the result uses
        the basis term order with ``x`` in physical units.
        """
        fitted = self.outputs[self.output_index(output)]
        center = self.domain.center
        scale = 1.0 / self.domain.half_width
        index = {tuple(row): j for j, row in enumerate(self.basis.exponents.tolist())}

        physical = np.zeros(self.basis.p)
        for beta, row in zip(fitted.beta_hat, self.basis.exponents.tolist()):
            if beta == 0.0:
                continue
            # t_k = scale_k * x_k - scale_k * center_k, raised to row[k]
            for powers in itertools.product(*(range(a + 1) for a in row)):
                coefficient = beta
                for k, (a, j) in enumerate(zip(row, powers)):
                    coefficient *= (
                        comb(a, j)
                        * scale[k] ** j
                        * (-scale[k] * center[k]) ** (a - j)
                    )
                physical[index[powers]] += coefficient

        return physical

    def to_record(self) -> ModelRecord:
        return ModelRecord(
            format="warpband-model",
            version=MODEL_FORMAT_VERSION,
            n=self.n,
            p=self.basis.p,
            degree=self.basis.degree,
            exponents=self.basis.to_record(),
            inputs=[s.to_record() for s in self.domain.specs],
            outputs=[o.to_record() for o in self.outputs],
        )

    @classmethod
    def from_record(cls, record: ModelRecord) -> FittedModel:
        try:
            if record["format"] != "warpband-model":
                raise ConfigurationError("Not a warpband model file")

            basis = BasisSpec.from_exponents(record["exponents"])
            domain = ScaledDomain(tuple(VariableSpec.from_record(r) for r in record["inputs"]))
            outputs = tuple(
                FittedOutput(
                    name=o["name"],
                    beta_hat=np.array(o["beta_hat"], dtype=float),
                    sigma2_hat=float(o["sigma2_hat"]),
                    residual_ss=float(o["residual_ss"]),
                    r2=float(o["r2"]),
                    xtx_inv_factor=np.array(o["xtx_inv_factor"], dtype=float),
                    n=int(record["n"]),
                )
                for o in record["outputs"]
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"Malformed model record: {e}") from e

        for o in outputs:
            if o.beta_hat.shape != (basis.p,) or o.xtx_inv_factor.shape != (basis.p, basis.p):
                raise DimensionMismatch(f"p={basis.p} coefficients", o.beta_hat.shape)

        return cls(outputs=outputs, basis=basis, domain=domain)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_record(), indent=2), encoding="utf-8")
        log.info("Wrote model with %s outputs to %s", self.m, path)
        return path

    @classmethod
    def load(cls, path: str | Path) -> FittedModel:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"Model file {path} does not exist")

        try:
            record = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Model file {path} is not valid JSON: {e}") from e
        return cls.from_record(record)


def _offending_terms(P: np.ndarray, rank: int, names: Sequence[str]) -> list[str]:
    # Column pivoting moves the dependent columns to the back
    _, _, pivots = scipy.linalg.qr(P, mode="economic", pivoting=True)
    return [names[j] for j in sorted(pivots[rank:])]


def fit(dataset: Dataset, basis: BasisSpec) -> FittedModel:
    """Fit every output column by least squares on the coded inputs.

    Parameters
    ----------
    dataset: Dataset
        Coded dataset, a physical one is coded first.
    basis: BasisSpec
        The polynomial basis shared by all outputs.

    Returns
    -------
    FittedModel

    Raises
    ------
    UnderDetermined
        ``n <= p``.
    RankDeficient
        The smallest singular value of ``P`` is below ``1e-10`` times the largest.
    FactorizationFailed
        ``(P^T P)^-1`` could not be Cholesky factorized.
    """
    if not dataset.coded:
        dataset, domain = to_coded(dataset)
    else:
        domain = ScaledDomain(dataset.input_specs)

    if basis.d != dataset.d:
        raise DimensionMismatch(f"basis for d={dataset.d}", f"d={basis.d}")

    n, p = dataset.n, basis.p
    if n <= p:
        raise UnderDetermined(n, p)

    P = build_design(basis, dataset.inputs).values
    singular = scipy.linalg.svdvals(P)
    rank = int(np.sum(singular >= RANK_TOLERANCE * singular[0]))
    if rank < p:
        raise RankDeficient(_offending_terms(P, rank, basis.term_names(domain.names)))

    Q, R = scipy.linalg.qr(P, mode="economic")
    Y = dataset.outputs
    B = scipy.linalg.solve_triangular(R, Q.T @ Y)

    R_inv = scipy.linalg.solve_triangular(R, np.eye(p))
    try:
        factor = scipy.linalg.cholesky(R_inv @ R_inv.T, lower=True)
    except np.linalg.LinAlgError as e:
        raise FactorizationFailed from e
    factor.setflags(write=False)

    residuals = Y - P @ B
    outputs = []
    for j, name in enumerate(dataset.output_names):
        rss = float(residuals[:, j] @ residuals[:, j])
        centered = Y[:, j] - Y[:, j].mean()
        tss = float(centered @ centered)
        r2 = 1.0 - rss / tss if tss > 0 else 1.0
        beta = B[:, j].copy()
        beta.setflags(write=False)
        outputs.append(
            FittedOutput(
                name=name,
                beta_hat=beta,
                sigma2_hat=rss / (n - p),
                residual_ss=rss,
                r2=r2,
                xtx_inv_factor=factor,
                n=n,
            )
        )
        log.debug("Output %s: R2=%.4f sigma2=%.6g", name, r2, rss / (n - p))

    log.info("Fitted %s outputs with p=%s terms on n=%s runs", len(outputs), p, n)
    return FittedModel(outputs=tuple(outputs), basis=basis, domain=domain)


@dataclass(frozen=True)
class PosteriorDraw:
    """One joint draw of every output's coefficients."""

    betas: np.ndarray
    draw_index: int
    seed: int
    sigma2: np.ndarray


def posterior_draw(
    model: FittedModel, seed: int, draw_index: int, *, hierarchical: bool = False
) -> PosteriorDraw:
    """Draw ``draw_index`` of the stream identified by ``seed``.

    The result is a pure function of ``(seed, draw_index)``.
    """
    rng = rng_for(seed, draw_index)
    if hierarchical:
        sigma2 = np.array(
            [
                stats.invgamma.rvs(a=o.n / 2, scale=o.residual_ss / 2, random_state=rng)
                if o.residual_ss > 0
                else 0.0
                for o in model.outputs
            ]
        )
    else:
        sigma2 = model.sigma2

    z = rng.standard_normal((model.m, model.basis.p))
    betas = np.empty((model.m, model.basis.p))
    for l, fitted in enumerate(model.outputs):
        betas[l] = fitted.beta_hat + np.sqrt(sigma2[l]) * (fitted.xtx_inv_factor @ z[l])

    return PosteriorDraw(betas=betas, draw_index=draw_index, seed=seed, sigma2=sigma2)


def sample_posterior(
    model: FittedModel, R: int, seed: int, *, hierarchical: bool = False
) -> Iterator[PosteriorDraw]:
    """Lazily yield ``R`` posterior draws.

    Parameters
    ----------
    model: FittedModel
        The fitted model.
    R: int
        Number of draws, at least 1.
    seed: int
        Master seed, draw ``i`` only depends on ``(seed, i)``.
    hierarchical: bool
        Draw ``sigma^2 ~ Inv-Gamma(n/2, RSS/2)`` per draw instead
        of plugging in the MAP value.
    """
    if R < 1:
        raise ConfigurationError(f"R must be at least 1, got {R}")

    for i in range(R):
        yield posterior_draw(model, seed, i, hierarchical=hierarchical)


def posterior_betas(
    model: FittedModel,
    R: int,
    seed: int,
    *,
    hierarchical: bool = False,
    threads: int = 1,
) -> np.ndarray:
    """Materialize ``R`` draws as an ``R x m x p`` array."""
    if R < 1:
        raise ConfigurationError(f"R must be at least 1, got {R}")

    draws = ordered_map(
        lambda i: posterior_draw(model, seed, i, hierarchical=hierarchical).betas,
        range(R),
        threads=threads,
    )
    return np.stack(draws)


def _warn_outside(x: np.ndarray) -> None:
    if np.any(np.abs(x) > 1.0):
        log.warning("Predicting outside the coded box at %s", x.tolist())


def predict_mean(model: FittedModel, x, output: int | str) -> float:
    """Point prediction ``p(x)^T beta_hat_l`` at a coded point."""
    x = np.asarray(x, dtype=float)
    _warn_outside(x)
    fitted = model.outputs[model.output_index(output)]
    return float(expand(model.basis, x) @ fitted.beta_hat)


def predict_sd(model: FittedModel, x, output: int | str) -> float:
    """Prediction standard deviation ``sqrt(sigma2 p^T (P^T P)^-1 p)`` at a coded point."""
    x = np.asarray(x, dtype=float)
    fitted = model.outputs[model.output_index(output)]
    features = expand(model.basis, x) @ fitted.xtx_inv_factor
    return float(np.sqrt(fitted.sigma2_hat * (features @ features)))
