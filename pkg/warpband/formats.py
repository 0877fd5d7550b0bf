from typing import TypedDict, Optional, List, Literal


class VariableRecord(TypedDict):
    name: str
    lower: float
    upper: float


class SchemaRecord(TypedDict, total=False):
    inputs: List[VariableRecord]
    outputs: List[str]
    strict: bool
    degree: int
    weights: List[float]


class OutputRecord(TypedDict):
    name: str
    beta_hat: List[float]
    sigma2_hat: float
    residual_ss: float
    r2: float
    # Row-major lower-triangular factor of (P^T P)^-1
    xtx_inv_factor: List[List[float]]


class ModelRecord(TypedDict):
    format: Literal["warpband-model"]
    version: int
    n: int
    p: int
    degree: int
    exponents: List[List[int]]
    inputs: List[VariableRecord]
    outputs: List[OutputRecord]


class DimensionSummaryRecord(TypedDict):
    name: str
    median: float
    q25: float
    q75: float
    interval_lower: float
    interval_upper: float
    mode: Optional[float]


class EnsembleSummaryRecord(TypedDict):
    R: int
    seed: int
    hierarchical: bool
    converged: int
    non_converged: int
    interval_level: float
    dimensions: List[DimensionSummaryRecord]
    point_optimum: List[float]
    minimum_objective: float


class OptimumRecord(TypedDict):
    x_star: List[float]
    x_star_coded: List[float]
    objective_value: float
    starts_used: int
    converged: bool
    input_names: List[str]


class SliceRecord(TypedDict):
    free_dims: List[int]
    fixed_values: List[float]
    grid_resolution: List[int]


class BandMetadataRecord(TypedDict):
    output: str
    alpha: float
    epsilon: float
    R: int
    seed: int
    mode: Literal["standardized", "absolute"]
    slice: SliceRecord
    band_fraction: float


class ContourRecord(TypedDict):
    level: float
    source: str
    polylines: List[List[List[float]]]


class TruthRecord(TypedDict):
    example: int
    coefficients: List[float]
    exponents: List[List[int]]
    noise: str
    sigma2: Optional[float]
    seed: int
    n: int
