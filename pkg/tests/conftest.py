from pathlib import Path

import numpy as np
import pytest

import warpband
from warpband import (
    BasisSpec,
    Dataset,
    FittedModel,
    FittedOutput,
    NoiseSpec,
    ScaledDomain,
    VariableSpec,
    fit,
    load_csv,
    load_schema,
    synth_example2,
)

DATA_DIR = Path(warpband.__file__).parent / "data"


def coded_dataset(rng: np.random.Generator, n: int, d: int, m: int = 1) -> Dataset:
    """Random inputs on the coded box with random responses."""
    specs = tuple(VariableSpec(f"x{k + 1}", -1.0, 1.0) for k in range(d))
    return Dataset(
        inputs=rng.uniform(-1.0, 1.0, (n, d)),
        outputs=rng.normal(size=(n, m)),
        input_specs=specs,
        output_names=tuple(f"y{j + 1}" for j in range(m)),
        coded=True,
    )


def exact_model(betas, specs, *, degree: int = 1, n: int = 10) -> FittedModel:
    """A model with the given coefficients and zero noise."""
    basis = BasisSpec(d=len(specs), degree=degree)
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    outputs = tuple(
        FittedOutput(
            name=f"y{j + 1}",
            beta_hat=beta,
            sigma2_hat=0.0,
            residual_ss=0.0,
            r2=1.0,
            xtx_inv_factor=np.eye(basis.p),
            n=n,
        )
        for j, beta in enumerate(betas)
    )
    return FittedModel(outputs=outputs, basis=basis, domain=ScaledDomain(tuple(specs)))


@pytest.fixture(scope="session")
def cure_schema():
    return load_schema(DATA_DIR / "cure_demo.json")


@pytest.fixture(scope="session")
def cure_dataset(cure_schema):
    return load_csv(DATA_DIR / "cure_demo.csv", cure_schema)


@pytest.fixture(scope="session")
def cure_model(cure_dataset):
    return fit(cure_dataset, BasisSpec(d=1, degree=2))


@pytest.fixture(scope="session")
def example2_clean():
    return synth_example2(500, 7, NoiseSpec("none"))


@pytest.fixture(scope="session")
def example2_clean_model(example2_clean):
    return fit(example2_clean.dataset, BasisSpec(d=2, degree=2))


@pytest.fixture(scope="session")
def example2_noisy():
    return synth_example2(500, 7)


@pytest.fixture(scope="session")
def example2_noisy_model(example2_noisy):
    return fit(example2_noisy.dataset, BasisSpec(d=2, degree=2))
