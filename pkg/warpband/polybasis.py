from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

from warpband.exceptions import ConfigurationError, DimensionMismatch

log = logging.getLogger(__name__)

MAX_DEGREE = 4


def _graded_lex_exponents(d: int, degree: int) -> np.ndarray:
    rows = []
    for total in range(degree + 1):
        # combinations_with_replacement walks variable indices in order,
        # which yields exponent vectors in descending lexicographic order
        for combo in itertools.combinations_with_replacement(range(d), total):
            exponent = [0] * d
            for k in combo:
                exponent[k] += 1
            rows.append(exponent)

    return np.array(rows, dtype=np.int64).reshape(-1, d)


@dataclass(frozen=True, eq=False)
class BasisSpec:
    """A full polynomial basis ``p(x)`` of total degree ``degree`` in ``d`` inputs.

    Terms are ordered by total degree, then lexicographically on their
    exponent vectors so ``x1`` comes before ``x2`` and ``x1^2`` before
    ``x1*x2``. Term 0 is always the intercept.
    """

    d: int
    degree: int

    def __post_init__(self):
        if self.d < 1:
            raise ConfigurationError(f"A basis needs d >= 1, got {self.d}")
        if not 0 <= self.degree <= MAX_DEGREE:
            raise ConfigurationError(
                f"Basis degree must lie in 0..{MAX_DEGREE}, got {self.degree}"
            )

        exponents = _graded_lex_exponents(self.d, self.degree)
        exponents.setflags(write=False)
        object.__setattr__(self, "_exponents", exponents)

    def __eq__(self, other):
        if not isinstance(other, BasisSpec):
            return NotImplemented
        return (self.d, self.degree) == (other.d, other.degree)

    def __hash__(self):
        return hash((self.d, self.degree))

    @property
    def exponents(self) -> np.ndarray:
        """The ``p x d`` matrix of exponent vectors, one row per term."""
        return self._exponents  # type: ignore[attr-defined]

    @property
    def p(self) -> int:
        return comb(self.d + self.degree, self.degree)

    def term_names(self, names: Sequence[str] | None = None) -> list[str]:
        """Human readable term labels such as ``1``, ``x1``, ``x1*x2``, ``x2^2``."""
        if names is None:
            names = [f"x{k + 1}" for k in range(self.d)]

        labels = []
        for row in self.exponents:
            parts = []
            for name, power in zip(names, row):
                if power == 1:
                    parts.append(name)
                elif power > 1:
                    parts.append(f"{name}^{power}")
            labels.append("*".join(parts) or "1")
        return labels

    def to_record(self) -> list[list[int]]:
        return self.exponents.tolist()

    @classmethod
    def from_exponents(cls, exponents: Sequence[Sequence[int]]) -> BasisSpec:
        """Rebuild a basis from its serialized exponent list.

        Raises
        ------
        ConfigurationError
            The exponent list is not a canonical full basis.
        """
        exponents = np.asarray(exponents, dtype=np.int64)
        if exponents.ndim != 2 or exponents.shape[0] < 1 or exponents.shape[1] < 1:
            raise ConfigurationError("Exponent list must be a non-empty matrix")

        basis = cls(d=exponents.shape[1], degree=int(exponents.sum(axis=1).max()))
        if not np.array_equal(basis.exponents, exponents):
            raise ConfigurationError("Exponent list is not in canonical term order")
        return basis

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.d:
            raise DimensionMismatch(f"last axis of length {self.d}", x.shape)
        return x


def expand_many(basis: BasisSpec, X) -> np.ndarray:
    """Evaluate ``p(x)`` for every row of ``X``, shape ``(..., d) -> (..., p)``."""
    X = basis._check(X)
    return np.prod(np.power(X[..., None, :], basis.exponents), axis=-1)


def expand(basis: BasisSpec, x) -> np.ndarray:
    """Evaluate the feature vector ``p(x)`` of a single point.

    Raises
    ------
    DimensionMismatch
        ``x`` does not have ``d`` entries.
    """
    x = basis._check(x)
    if x.ndim != 1:
        raise DimensionMismatch(f"vector of length {basis.d}", x.shape)
    return expand_many(basis, x[None, :])[0]


@dataclass(frozen=True)
class DesignMatrix:
    """The ``n x p`` matrix ``P`` whose rows are ``p(x_i)``."""

    values: np.ndarray
    basis: BasisSpec

    @property
    def n(self) -> int:
        return self.values.shape[0]


def build_design(basis: BasisSpec, X) -> DesignMatrix:
    """Stack ``expand`` over the rows of ``X``."""
    X = basis._check(X)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DimensionMismatch(f"n x {basis.d} matrix with n >= 1", X.shape)

    values = expand_many(basis, X)
    values.setflags(write=False)
    return DesignMatrix(values=values, basis=basis)


def gradient_many(basis: BasisSpec, X) -> np.ndarray:
    """Analytic Jacobians of ``p`` at every row, shape ``(..., d) -> (..., p, d)``."""
    X = basis._check(X)
    E = basis.exponents
    eye = np.eye(basis.d, dtype=np.int64)
    # reduced[k] holds the exponents after differentiating in x_k
    reduced = np.clip(E[None, :, :] - eye[:, None, :], 0, None)
    powers = np.prod(np.power(X[..., None, None, :], reduced), axis=-1)
    # powers has shape (..., d, p)
    jac = powers * E.T
    return np.swapaxes(jac, -1, -2)


def gradient(basis: BasisSpec, x) -> np.ndarray:
    """The ``p x d`` Jacobian of ``p(x)``; entry ``(j, k)`` is d(term j)/dx_k."""
    x = basis._check(x)
    if x.ndim != 1:
        raise DimensionMismatch(f"vector of length {basis.d}", x.shape)
    return gradient_many(basis, x[None, :])[0]
