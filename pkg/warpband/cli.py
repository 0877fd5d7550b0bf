"""Command line workflow: fit, optimize, uq, boundary, synth, design and pipeline.

Every command writes its artifacts into ``--out`` and returns an exit code:
0 on success, 1 for I/O and configuration problems and 2 for numerical
and model failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from warpband import __version__
from warpband.bayes_lm import FittedModel, fit
from warpband.boundary import (
    DEFAULT_RESOLUTION,
    SliceSpec,
    confidence_bands,
    objective_slice,
    zero_contour,
)
from warpband.commands import CommandRegistry
from warpband.dataset import Schema, load_csv, load_schema, write_csv
from warpband.designgen import lhs, write_design
from warpband.exceptions import BaseWarpbandException, ConfigurationError
from warpband.optimizer import (
    Objective,
    OptimizerSettings,
    decision_ensemble,
    point_optimum,
)
from warpband.plotting import plot_band, plot_marginals, plot_objective, plot_realizations
from warpband.polybasis import BasisSpec
from warpband.synth import NoiseSpec, load_truth, synth_example1, synth_example2, truth_values
from warpband.util import resolve_seed

log = logging.getLogger(__name__)
registry = CommandRegistry()

DEFAULT_DEGREE = 2
DEFAULT_R = 1000
DEFAULT_ALPHA = 0.05
DEFAULT_EPS = 2.5
MODEL_FILE = "model.json"
CSV_FLOAT_FORMAT = "%.17g"


@dataclass(frozen=True)
class RunConfig:
    """Everything one command invocation needs."""

    command: str
    out: Path = Path(".")
    data: Optional[Path] = None
    config: Optional[Path] = None
    model: Optional[Path] = None
    truth: Optional[Path] = None
    degree: Optional[int] = None
    weights: Optional[tuple[float, ...]] = None
    R: int = DEFAULT_R
    seed: int = 0
    alpha: float = DEFAULT_ALPHA
    eps: tuple[float, ...] = (DEFAULT_EPS,)
    slice: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    mode: str = "standardized"
    anchor: str = "median"
    hierarchical: bool = False
    draw_contours: int = 20
    grid: int = DEFAULT_RESOLUTION
    starts: int = 16
    relaxed: bool = False
    objective_contour: bool = False
    threads: int = 1
    example: int = 2
    n: int = 500
    noise: str = "gamma"

    def validate(self) -> RunConfig:
        """Check value ranges and that every given input path exists."""
        if self.R < 1:
            raise ConfigurationError(f"--R must be at least 1, got {self.R}")
        if any(not e > 0 for e in self.eps):
            raise ConfigurationError(f"--eps values must be > 0, got {list(self.eps)}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"--alpha must lie in (0, 1), got {self.alpha}")
        if self.anchor not in ("median", "point"):
            raise ConfigurationError(f"--anchor must be median or point, got {self.anchor!r}")
        if self.threads < 1:
            raise ConfigurationError(f"--threads must be at least 1, got {self.threads}")
        for path in (self.data, self.config, self.truth):
            if path is not None and not path.is_file():
                raise FileNotFoundError(f"{path} does not exist")
        return self

    @property
    def model_path(self) -> Path:
        return self.model if self.model is not None else self.out / MODEL_FILE

    @property
    def settings(self) -> OptimizerSettings:
        return OptimizerSettings(starts=self.starts)


def _write_json(record, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=2), encoding="utf-8")
    log.info("Wrote %s", path)
    return path


def _write_frame(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    log.info("Wrote %s", path)
    return path


def _load_schema(cfg: RunConfig) -> Schema:
    if cfg.config is None:
        raise ConfigurationError("This command needs --config")
    schema = load_schema(cfg.config)
    if cfg.relaxed:
        schema = replace(schema, strict=False)
    return schema


def _objective(cfg: RunConfig, model: FittedModel) -> Objective:
    weights = cfg.weights
    if weights is None and cfg.config is not None:
        weights = load_schema(cfg.config).weights
    if weights is None:
        return Objective.sum_of_squares(model.m)
    if len(weights) != model.m:
        raise ConfigurationError(f"Expected {model.m} weights, got {len(weights)}")
    return Objective.weighted(weights)


def fit_report(model: FittedModel) -> tuple[dict, pd.DataFrame]:
    """R2, noise variance and the coefficient table of every output."""
    terms = model.basis.term_names(model.domain.names)
    rows = []
    summary = {"n": model.n, "p": model.basis.p, "degree": model.basis.degree, "outputs": []}
    for o in model.outputs:
        physical = model.physical_coefficients(o.name)
        for term, coded, phys in zip(terms, o.beta_hat, physical):
            rows.append({"output": o.name, "term": term, "coded": coded, "physical": phys})
        summary["outputs"].append(
            {"name": o.name, "r2": o.r2, "sigma2_hat": o.sigma2_hat, "residual_ss": o.residual_ss}
        )
    return summary, pd.DataFrame(rows)


@registry.command(help="Fit one polynomial surrogate per output")
def cmd_fit(cfg: RunConfig) -> int:
    if cfg.data is None:
        raise ConfigurationError("fit needs --data")

    schema = _load_schema(cfg)
    dataset = load_csv(cfg.data, schema)
    degree = cfg.degree if cfg.degree is not None else schema.degree or DEFAULT_DEGREE
    model = fit(dataset, BasisSpec(d=dataset.d, degree=degree))
    model.save(cfg.model_path)

    summary, coefficients = fit_report(model)
    _write_json(summary, cfg.out / "fit_report.json")
    _write_frame(coefficients, cfg.out / "coefficients.csv")
    for o in model.outputs:
        log.info("%s: R2=%.4f sigma2_hat=%.6g", o.name, o.r2, o.sigma2_hat)
    return 0


@registry.command(help="Minimize the surrogate objective with the point estimates")
def cmd_optimize(cfg: RunConfig) -> int:
    model = FittedModel.load(cfg.model_path)
    result = point_optimum(model, _objective(cfg, model), cfg.settings, seed=cfg.seed)
    _write_json(result.to_record(model.domain.names), cfg.out / "optimum.json")
    log.info(
        "Optimum %s with objective %.6g (converged=%s)",
        dict(zip(model.domain.names, result.x_star.tolist())),
        result.objective_value,
        result.converged,
    )
    return 0


@registry.command(help="Distribution of optimal decisions under posterior draws")
def cmd_uq(cfg: RunConfig) -> int:
    model = FittedModel.load(cfg.model_path)
    ensemble = decision_ensemble(
        model,
        _objective(cfg, model),
        cfg.R,
        cfg.seed,
        cfg.settings,
        threads=cfg.threads,
        hierarchical=cfg.hierarchical,
    )
    _write_frame(ensemble.to_frame(), cfg.out / "ensemble.csv")
    _write_json(ensemble.summary_record(), cfg.out / "uq_summary.json")
    plot_marginals(ensemble, cfg.out)
    if model.domain.d == 1:
        plot_realizations(model, ensemble, cfg.out / "realizations.svg")
    return 0


def _resolve_dim(token: str, model: FittedModel) -> int:
    token = token.strip()
    if token.isdigit():
        index = int(token) - 1
        if not 0 <= index < model.domain.d:
            raise ConfigurationError(f"Input index {token} out of range 1..{model.domain.d}")
        return index
    return model.domain.index_of(token)


def parse_slice(tokens: Sequence[str], model: FittedModel, anchor, grid: int) -> SliceSpec:
    """Parse ``free=i,j fixed=name:value,...``.

    Free inputs are names or 1-based indices. Inputs that are neither
    free nor listed under ``fixed`` are pinned at ``anchor``.
    """
    free: Optional[tuple[int, int]] = None
    pinned = {k: float(v) for k, v in enumerate(anchor)}
    for token in " ".join(tokens).split():
        key, _, value = token.partition("=")
        if key == "free":
            dims = [_resolve_dim(t, model) for t in value.split(",") if t]
            if len(dims) != 2:
                raise ConfigurationError(f"free= needs two inputs, got {value!r}")
            free = (dims[0], dims[1])
        elif key == "fixed":
            for item in filter(None, value.split(",")):
                name, _, number = item.partition(":")
                try:
                    pinned[_resolve_dim(name, model)] = float(number)
                except ValueError:
                    raise ConfigurationError(f"Cannot parse fixed value {item!r}") from None
        else:
            raise ConfigurationError(f"Unknown slice token {token!r}")

    if free is None:
        if model.domain.d != 2:
            raise ConfigurationError("--slice free=i,j is required when d != 2")
        free = (0, 1)

    fixed = [k for k in range(model.domain.d) if k not in free]
    return SliceSpec(
        free_dims=free,
        fixed_values=tuple(pinned[k] for k in fixed),
        grid_resolution=(grid, grid),
    ).validate(model.domain)


def _summary_medians(cfg: RunConfig, model: FittedModel) -> Optional[np.ndarray]:
    """Medians from a ``uq_summary.json`` written by the same settings, if any."""
    path = cfg.out / "uq_summary.json"
    if not path.is_file():
        return None
    try:
        record = json.loads(path.read_text(encoding="utf-8"))
        names = [d["name"] for d in record["dimensions"]]
        same_run = (
            record["R"] == cfg.R
            and record["seed"] == cfg.seed
            and bool(record.get("hierarchical", False)) == cfg.hierarchical
        )
    except (json.JSONDecodeError, KeyError, TypeError):
        log.warning("Ignoring unreadable %s", path)
        return None
    if not same_run or names != list(model.domain.names):
        return None
    log.info("Slice anchor read from %s", path)
    return np.array([float(d["median"]) for d in record["dimensions"]])


def slice_anchor(cfg: RunConfig, model: FittedModel, objective: Objective) -> np.ndarray:
    """Physical point that pins the inputs a slice does not vary.

    ``median`` is the per-input median of the decision ensemble, ``point``
    the optimum of the point-estimate surrogate.
    """
    if cfg.anchor == "point":
        return point_optimum(model, objective, cfg.settings, seed=cfg.seed).x_star

    medians = _summary_medians(cfg, model)
    if medians is not None:
        return medians
    ensemble = decision_ensemble(
        model,
        objective,
        cfg.R,
        cfg.seed,
        cfg.settings,
        threads=cfg.threads,
        hierarchical=cfg.hierarchical,
    )
    return ensemble.median


@registry.command(help="Confidence bands of each output's zero-level set on a 2-D slice")
def cmd_boundary(cfg: RunConfig) -> int:
    model = FittedModel.load(cfg.model_path)
    objective = _objective(cfg, model)
    # Two input slices pin nothing, the anchor only matters for d > 2 or the marker
    if model.domain.d > 2 or cfg.objective_contour:
        anchor = slice_anchor(cfg, model, objective)
    else:
        anchor = model.domain.decode(np.zeros(model.domain.d))
    slice_spec = parse_slice(cfg.slice, model, anchor, cfg.grid)
    names = [model.domain.names[k] for k in slice_spec.free_dims]
    truth = load_truth(cfg.truth) if cfg.truth is not None else None

    grid_points = None
    if truth is not None:
        grid_points = model.domain.decode(slice_spec.coded_points(model.domain))

    outputs = cfg.outputs or model.output_names
    for output in outputs:
        index = model.output_index(output)
        name = model.output_names[index]
        result = confidence_bands(
            model,
            index,
            slice_spec,
            cfg.alpha,
            cfg.eps,
            cfg.R,
            cfg.seed,
            mode=cfg.mode,  # type: ignore[arg-type]
            draw_contours=cfg.draw_contours,
            hierarchical=cfg.hierarchical,
            threads=cfg.threads,
        )
        if result.mean_contour.empty:
            log.info("Output %s has no zero boundary in this slice", name)

        truth_contour = None
        if truth is not None:
            truth_contour = zero_contour(
                truth_values(truth, grid_points), slice_spec, model.domain, source="truth-oracle"
            )

        contours = [result.mean_contour, *result.draw_contours]
        if truth_contour is not None:
            contours.append(truth_contour)
        _write_json([c.to_record() for c in contours], cfg.out / f"contours_{name}.json")

        for band in result.bands:
            stem = f"band_{name}_eps{band.epsilon:g}"
            _write_frame(band.to_frame(names), cfg.out / f"{stem}.csv")
            _write_json(band.metadata_record(), cfg.out / f"{stem}.json")
            plot_band(
                band,
                result.mean_contour,
                result.draw_contours,
                names,
                cfg.out / f"{stem}.svg",
                truth_contour=truth_contour,
            )

    if cfg.objective_contour:
        values = objective_slice(model, slice_spec, objective)
        x_axis, y_axis = slice_spec.physical_axes(model.domain)
        xx, yy = np.meshgrid(x_axis, y_axis, indexing="ij")
        frame = pd.DataFrame({names[0]: xx.ravel(), names[1]: yy.ravel(), "objective": values.ravel()})
        _write_frame(frame, cfg.out / "objective_slice.csv")
        marker = [anchor[k] for k in slice_spec.free_dims]
        plot_objective(x_axis, y_axis, values, names, cfg.out / "objective_slice.svg", marker=marker)

    return 0


@registry.command(help="Generate a synthetic dataset with a ground truth sidecar")
def cmd_synth(cfg: RunConfig) -> int:
    noise = NoiseSpec.parse(cfg.noise)
    if cfg.example == 2:
        data = synth_example2(cfg.n, cfg.seed, noise)
    elif cfg.example == 1:
        # Example 1 keeps its own small fixed noise unless one is given
        if noise.kind == "gamma":
            data = synth_example1(cfg.n, cfg.seed)
        else:
            data = synth_example1(cfg.n, cfg.seed, noise)
    else:
        raise ConfigurationError(f"Unknown example {cfg.example}, expected 1 or 2")

    stem = f"synth_example{cfg.example}"
    write_csv(data.dataset, cfg.out / f"{stem}.csv")
    data.write_truth(cfg.out / f"{stem}.truth.json")
    schema = Schema(
        inputs=data.dataset.input_specs, outputs=data.dataset.output_names, degree=2
    )
    _write_json(schema.to_record(), cfg.out / f"{stem}.config.json")
    return 0


@registry.command(help="Export a Latin hypercube design over the configured inputs")
def cmd_design(cfg: RunConfig) -> int:
    schema = _load_schema(cfg)
    design = lhs(cfg.n, len(schema.inputs), cfg.seed)
    write_design(design, schema.inputs, cfg.out / "design.csv")
    return 0


@registry.command(help="Run fit, optimize, uq and boundary in order")
def cmd_pipeline(cfg: RunConfig) -> int:
    for step in ("fit", "optimize", "uq", "boundary"):
        if step == "boundary" and FittedModel.load(cfg.model_path).domain.d < 2:
            log.info("Skipping boundary, slices need two inputs")
            break
        log.info("Pipeline step %s", step)
        code = registry.get(step)(cfg)
        if code:
            return code
    return 0


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", type=Path, help="Run table CSV")
    common.add_argument("--config", type=Path, help="JSON schema sidecar")
    common.add_argument("--model", type=Path, help=f"Model JSON, defaults to OUT/{MODEL_FILE}")
    common.add_argument("--truth", type=Path, help="Ground truth sidecar from synth")
    common.add_argument("--degree", type=int, help=f"Basis degree (default {DEFAULT_DEGREE})")
    common.add_argument("--weights", type=_floats, help="Comma separated objective weights")
    common.add_argument("--R", dest="R", type=int, default=DEFAULT_R, help="Posterior draws")
    common.add_argument("--seed", type=int, help="Master seed, falls back to WARPBAND_SEED")
    common.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    common.add_argument("--eps", type=float, action="append", help="Band tolerance, repeatable")
    common.add_argument("--slice", nargs="+", default=[], help="free=i,j fixed=name:value,...")
    common.add_argument("--outputs", nargs="+", default=[], help="Outputs to analyse")
    common.add_argument("--mode", choices=("standardized", "absolute"), default="standardized")
    common.add_argument(
        "--anchor",
        choices=("median", "point"),
        default="median",
        help="Where unsliced inputs are pinned: ensemble median or point optimum",
    )
    common.add_argument("--hierarchical", action="store_true", help="Sample sigma^2 too")
    common.add_argument("--draw-contours", type=int, default=20)
    common.add_argument("--grid", type=int, default=DEFAULT_RESOLUTION)
    common.add_argument("--starts", type=int, default=16)
    common.add_argument("--relaxed", action="store_true", help="Warn on out of range rows")
    common.add_argument("--objective-contour", action="store_true")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--example", type=int, default=2, choices=(1, 2))
    common.add_argument("--n", type=int, default=500)
    common.add_argument("--noise", default="gamma", help="gamma, none, per-observation or fixed:<sigma2>")
    common.add_argument("--out", type=Path, default=Path("."))
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(
        prog="warpband",
        description="Bayesian polynomial surrogates, decision uncertainty and boundary bands",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in registry.names:
        sub.add_parser(name, parents=[common], help=registry.help_for(name))
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        command=args.command,
        out=args.out,
        data=args.data,
        config=args.config,
        model=args.model,
        truth=args.truth,
        degree=args.degree,
        weights=args.weights,
        R=args.R,
        seed=resolve_seed(args.seed),
        alpha=args.alpha,
        eps=tuple(args.eps) if args.eps else (DEFAULT_EPS,),
        slice=tuple(args.slice),
        outputs=tuple(args.outputs),
        mode=args.mode,
        anchor=args.anchor,
        hierarchical=args.hierarchical,
        draw_contours=args.draw_contours,
        grid=args.grid,
        starts=args.starts,
        relaxed=args.relaxed,
        objective_contour=args.objective_contour,
        threads=args.threads,
        example=args.example,
        n=args.n,
        noise=args.noise,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        cfg = config_from_args(args).validate()
        cfg.out.mkdir(parents=True, exist_ok=True)
        return registry.get(cfg.command)(cfg)
    except FileNotFoundError as e:
        log.error("%s", e)
        return 1
    except BaseWarpbandException as e:
        log.error("%s", e)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
