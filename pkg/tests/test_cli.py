import json

import numpy as np
import pandas as pd
import pytest

from conftest import DATA_DIR
from warpband import FittedModel, SliceSpec
from warpband.cli import main, parse_slice
from warpband.util import SEED_ENV_VAR, resolve_seed


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--example", "2", "--n", "200", "--seed", "7", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def fitted_dir(synth_dir):
    code = main(
        [
            "fit",
            "--data", str(synth_dir / "synth_example2.csv"),
            "--config", str(synth_dir / "synth_example2.config.json"),
            "--out", str(synth_dir),
        ]
    )
    assert code == 0
    return synth_dir


def test_synth_writes_dataset_and_truth(synth_dir):
    frame = pd.read_csv(synth_dir / "synth_example2.csv")
    truth = json.loads((synth_dir / "synth_example2.truth.json").read_text())

    assert list(frame.columns) == ["x1", "x2", "y"]
    assert len(frame) == 200
    assert truth["seed"] == 7
    assert truth["noise"] == "gamma"


def test_fit_artifacts(fitted_dir):
    report = json.loads((fitted_dir / "fit_report.json").read_text())
    coefficients = pd.read_csv(fitted_dir / "coefficients.csv", dtype={"term": str})
    model = FittedModel.load(fitted_dir / "model.json")

    assert report["p"] == 6
    assert report["outputs"][0]["r2"] > 0.99
    assert list(coefficients["term"]) == ["1", "x1", "x2", "x1^2", "x1*x2", "x2^2"]
    assert model.output_names == ("y",)


def test_optimize_and_boundary(fitted_dir, tmp_path):
    args = ["--model", str(fitted_dir / "model.json"), "--out", str(tmp_path), "--seed", "3"]
    assert main(["optimize", *args]) == 0
    optimum = json.loads((tmp_path / "optimum.json").read_text())
    assert optimum["input_names"] == ["x1", "x2"]

    code = main(
        [
            "boundary",
            *args,
            "--R", "100",
            "--grid", "41",
            "--eps", "2.5",
            "--eps", "3",
            "--draw-contours", "5",
            "--truth", str(fitted_dir / "synth_example2.truth.json"),
            "--objective-contour",
        ]
    )
    assert code == 0

    band = pd.read_csv(tmp_path / "band_y_eps2.5.csv")
    assert list(band.columns) == ["x1", "x2", "mean", "sd", "coverage", "in_band"]
    assert len(band) == 41 * 41
    metadata = json.loads((tmp_path / "band_y_eps3.json").read_text())
    assert metadata["R"] == 100 and metadata["epsilon"] == 3.0

    contours = json.loads((tmp_path / "contours_y.json").read_text())
    assert [c["source"] for c in contours] == [
        "mean", *[f"draw({i})" for i in range(5)], "truth-oracle"
    ]
    for name in ("band_y_eps2.5.svg", "objective_slice.csv", "objective_slice.svg"):
        assert (tmp_path / name).is_file()


def test_uq_is_thread_independent(fitted_dir, tmp_path):
    outputs = []
    for threads in ("1", "8"):
        out = tmp_path / threads
        code = main(
            [
                "uq",
                "--model", str(fitted_dir / "model.json"),
                "--R", "12",
                "--starts", "4",
                "--seed", "5",
                "--threads", threads,
                "--out", str(out),
            ]
        )
        assert code == 0
        outputs.append((out / "ensemble.csv").read_bytes())

    assert outputs[0] == outputs[1]
    summary = json.loads((tmp_path / "1" / "uq_summary.json").read_text())
    assert summary["R"] == 12
    assert (tmp_path / "1" / "marginal_x1.svg").is_file()


def test_boundary_bands_are_thread_independent(fitted_dir, tmp_path):
    bands = []
    for threads in ("1", "8"):
        out = tmp_path / threads
        args = ["--model", str(fitted_dir / "model.json"), "--R", "150", "--grid", "31"]
        assert main(["boundary", *args, "--threads", threads, "--out", str(out)]) == 0
        bands.append((out / "band_y_eps2.5.csv").read_bytes())
    assert bands[0] == bands[1]


def test_cure_demo_pipeline(tmp_path):
    code = main(
        [
            "pipeline",
            "--data", str(DATA_DIR / "cure_demo.csv"),
            "--config", str(DATA_DIR / "cure_demo.json"),
            "--R", "20",
            "--starts", "4",
            "--out", str(tmp_path),
        ]
    )
    assert code == 0

    optimum = json.loads((tmp_path / "optimum.json").read_text())
    assert 133.0 <= optimum["x_star"][0] <= 135.0
    assert (tmp_path / "realizations.svg").is_file()
    assert not list(tmp_path.glob("band_*"))


def test_missing_data_exits_1(tmp_path):
    code = main(
        ["fit", "--data", str(tmp_path / "nope.csv"), "--config", str(DATA_DIR / "cure_demo.json")]
    )
    assert code == 1


def test_malformed_data_exits_1(tmp_path):
    data = tmp_path / "runs.csv"
    data.write_text("temperature,deformation\n130,0.3\n132,oops\n", encoding="utf-8")
    code = main(
        ["fit", "--data", str(data), "--config", str(DATA_DIR / "cure_demo.json"), "--out", str(tmp_path)]
    )
    assert code == 1


def test_under_determined_exits_2(tmp_path):
    data = tmp_path / "runs.csv"
    data.write_text("temperature,deformation\n120,1\n130,0.3\n140,0.4\n", encoding="utf-8")
    code = main(
        ["fit", "--data", str(data), "--config", str(DATA_DIR / "cure_demo.json"), "--out", str(tmp_path)]
    )
    assert code == 2


def test_bad_alpha_exits_1(fitted_dir, tmp_path):
    code = main(
        ["boundary", "--model", str(fitted_dir / "model.json"), "--alpha", "1.5", "--out", str(tmp_path)]
    )
    assert code == 1


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv(SEED_ENV_VAR, "42")
    assert resolve_seed(None) == 42
    assert resolve_seed(7) == 7
    monkeypatch.delenv(SEED_ENV_VAR)
    assert resolve_seed(None) == 0


def test_parse_slice(fitted_dir):
    model = FittedModel.load(fitted_dir / "model.json")
    anchor = np.zeros(2)

    assert parse_slice([], model, anchor, 51) == SliceSpec((0, 1), (), (51, 51))
    assert parse_slice(["free=x2,x1"], model, anchor, 51).free_dims == (1, 0)
    assert parse_slice(["free=2,1"], model, anchor, 51).free_dims == (1, 0)


def test_design_export(tmp_path):
    code = main(
        ["design", "--config", str(DATA_DIR / "cure_demo.json"), "--n", "12", "--out", str(tmp_path)]
    )
    assert code == 0

    frame = pd.read_csv(tmp_path / "design.csv")
    assert list(frame.columns) == ["temperature_unit", "temperature"]
    assert len(frame) == 12
    assert frame["temperature"].between(120.0, 150.0).all()


def test_ragged_data_exits_1(tmp_path):
    data = tmp_path / "runs.csv"
    data.write_text("temperature,deformation\n130,0.3\n132,0.4,9\n", encoding="utf-8")
    code = main(
        ["fit", "--data", str(data), "--config", str(DATA_DIR / "cure_demo.json"), "--out", str(tmp_path)]
    )
    assert code == 1


def test_malformed_truth_exits_1(fitted_dir, tmp_path):
    truth = tmp_path / "truth.json"
    truth.write_text('{"exponents": [[0, 0]', encoding="utf-8")
    code = main(
        [
            "boundary",
            "--model", str(fitted_dir / "model.json"),
            "--truth", str(truth),
            "--R", "100",
            "--grid", "21",
            "--out", str(tmp_path),
        ]
    )
    assert code == 1


@pytest.fixture(scope="module")
def three_input_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("three")
    rng = np.random.default_rng(11)
    X = rng.uniform(-1.0, 1.0, (60, 3))
    y = X[:, 0] ** 2 + X[:, 1] ** 2 + 0.5 * X[:, 2] - 0.5 + rng.normal(0.0, 0.05, 60)
    pd.DataFrame({"x1": X[:, 0], "x2": X[:, 1], "x3": X[:, 2], "y": y}).to_csv(
        out / "runs.csv", index=False
    )
    schema = {
        "inputs": [{"name": f"x{k}", "lower": -1.0, "upper": 1.0} for k in (1, 2, 3)],
        "outputs": ["y"],
        "degree": 2,
    }
    (out / "runs.json").write_text(json.dumps(schema), encoding="utf-8")
    code = main(
        ["fit", "--data", str(out / "runs.csv"), "--config", str(out / "runs.json"), "--out", str(out)]
    )
    assert code == 0
    return out


def _pinned_x3(three_input_dir, out, *extra):
    args = [
        "boundary",
        "--model", str(three_input_dir / "model.json"),
        "--slice", "free=1,2",
        "--R", "30",
        "--starts", "4",
        "--seed", "4",
        "--grid", "21",
        "--out", str(out),
        *extra,
    ]
    assert main(args) == 0
    metadata = json.loads((out / "band_y_eps2.5.json").read_text())
    assert metadata["slice"]["free_dims"] == [0, 1]
    return metadata["slice"]["fixed_values"][0]


def test_boundary_pins_at_summary_median(three_input_dir, tmp_path):
    summary = {
        "R": 30,
        "seed": 4,
        "hierarchical": False,
        "dimensions": [
            {"name": name, "median": median}
            for name, median in (("x1", 0.1), ("x2", -0.2), ("x3", 0.35))
        ],
    }
    (tmp_path / "uq_summary.json").write_text(json.dumps(summary), encoding="utf-8")
    assert _pinned_x3(three_input_dir, tmp_path) == pytest.approx(0.35)


def test_summary_from_other_settings_is_ignored(three_input_dir, tmp_path):
    summary = {
        "R": 999,
        "seed": 4,
        "hierarchical": False,
        "dimensions": [{"name": f"x{k}", "median": 0.35} for k in (1, 2, 3)],
    }
    (tmp_path / "uq_summary.json").write_text(json.dumps(summary), encoding="utf-8")
    assert _pinned_x3(three_input_dir, tmp_path) != pytest.approx(0.35)


def test_boundary_pins_at_ensemble_median(three_input_dir, tmp_path):
    uq_out = tmp_path / "uq"
    code = main(
        [
            "uq",
            "--model", str(three_input_dir / "model.json"),
            "--R", "30",
            "--starts", "4",
            "--seed", "4",
            "--out", str(uq_out),
        ]
    )
    assert code == 0
    summary = json.loads((uq_out / "uq_summary.json").read_text())
    median_x3 = summary["dimensions"][2]["median"]

    assert _pinned_x3(three_input_dir, tmp_path / "bands") == pytest.approx(median_x3, abs=1e-12)


def test_boundary_can_pin_at_point_optimum(three_input_dir, tmp_path):
    args = ["--model", str(three_input_dir / "model.json"), "--seed", "4", "--starts", "4"]
    assert main(["optimize", *args, "--out", str(tmp_path)]) == 0
    optimum = json.loads((tmp_path / "optimum.json").read_text())

    pinned = _pinned_x3(three_input_dir, tmp_path / "bands", "--anchor", "point")
    assert pinned == pytest.approx(optimum["x_star"][2], abs=1e-12)
