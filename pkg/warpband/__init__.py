from .exceptions import *
from .dataset import (
    VariableSpec,
    Schema,
    Dataset,
    ScaledDomain,
    load_schema,
    load_csv,
    write_csv,
    to_coded,
    from_coded,
)
from .polybasis import BasisSpec, DesignMatrix, expand, build_design, gradient
from .bayes_lm import (
    FittedOutput,
    FittedModel,
    PosteriorDraw,
    fit,
    sample_posterior,
    posterior_draw,
    predict_mean,
    predict_sd,
)
from .designgen import LhsDesign, lhs, scale_to_box
from .optimizer import (
    Objective,
    OptimizerSettings,
    OptimResult,
    DecisionEnsemble,
    eval_objective,
    eval_gradient,
    minimize,
    point_optimum,
    decision_ensemble,
)
from .boundary import (
    SliceSpec,
    ContourSet,
    BandGrid,
    BandResult,
    Region,
    eval_slice,
    objective_slice,
    zero_contour,
    sign_regions,
    confidence_band,
    confidence_bands,
)
from .synth import NoiseSpec, SyntheticData, synth_example1, synth_example2

__all__ = (
    "BaseWarpbandException",
    "ConfigurationError",
    "DuplicateCommand",
    "UnknownCommand",
    "DatasetError",
    "EmptyDataset",
    "DuplicateColumn",
    "MalformedCell",
    "RaggedRow",
    "OutOfRange",
    "DimensionMismatch",
    "NumericalError",
    "UnderDetermined",
    "RankDeficient",
    "FactorizationFailed",
    "DegeneratePosterior",
    "VariableSpec",
    "Schema",
    "Dataset",
    "ScaledDomain",
    "load_schema",
    "load_csv",
    "write_csv",
    "to_coded",
    "from_coded",
    "BasisSpec",
    "DesignMatrix",
    "expand",
    "build_design",
    "gradient",
    "FittedOutput",
    "FittedModel",
    "PosteriorDraw",
    "fit",
    "sample_posterior",
    "posterior_draw",
    "predict_mean",
    "predict_sd",
    "LhsDesign",
    "lhs",
    "scale_to_box",
    "Objective",
    "OptimizerSettings",
    "OptimResult",
    "DecisionEnsemble",
    "eval_objective",
    "eval_gradient",
    "minimize",
    "point_optimum",
    "decision_ensemble",
    "SliceSpec",
    "ContourSet",
    "BandGrid",
    "BandResult",
    "Region",
    "eval_slice",
    "objective_slice",
    "zero_contour",
    "sign_regions",
    "confidence_band",
    "confidence_bands",
    "NoiseSpec",
    "SyntheticData",
    "synth_example1",
    "synth_example2",
)

__version__ = "0.1.0"
