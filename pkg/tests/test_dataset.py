import json
import logging

import numpy as np
import pytest

from warpband import (
    ConfigurationError,
    Dataset,
    DatasetError,
    DuplicateColumn,
    EmptyDataset,
    MalformedCell,
    OutOfRange,
    RaggedRow,
    Schema,
    ScaledDomain,
    VariableSpec,
    from_coded,
    load_csv,
    load_schema,
    to_coded,
    write_csv,
)

SCHEMA = Schema(
    inputs=(VariableSpec("x1", 0.0, 10.0), VariableSpec("x2", -1.0, 1.0)),
    outputs=("y",),
)


def write(tmp_path, text: str):
    path = tmp_path / "runs.csv"
    path.write_text(text, encoding="utf-8")
    return path


def test_load_bundled_demo(cure_dataset):
    assert cure_dataset.n == 16
    assert cure_dataset.d == 1
    assert cure_dataset.m == 1
    assert cure_dataset.input_names == ("temperature",)
    assert cure_dataset.output_names == ("deformation",)
    assert cure_dataset.inputs[0, 0] == 120.0
    assert cure_dataset.inputs[-1, 0] == 150.0
    assert not cure_dataset.coded


def test_load_ignores_unused_columns(tmp_path):
    path = write(tmp_path, "run,x1,note,x2,y\n1,2.5,a,0.5,3\n2,7.5,b,-0.5,4\n")
    dataset = load_csv(path, SCHEMA)

    np.testing.assert_array_equal(dataset.inputs, [[2.5, 0.5], [7.5, -0.5]])
    np.testing.assert_array_equal(dataset.outputs, [[3.0], [4.0]])


def test_arrays_are_read_only(tmp_path):
    dataset = load_csv(write(tmp_path, "x1,x2,y\n1,0,1\n2,0,2\n"), SCHEMA)
    with pytest.raises(ValueError):
        dataset.inputs[0, 0] = 5.0


def test_malformed_cell_names_row_and_column(tmp_path):
    path = write(tmp_path, "x1,x2,y\n1,0,1\n2,0,2\n3,0,abc\n")
    with pytest.raises(MalformedCell) as error:
        load_csv(path, SCHEMA)

    assert error.value.row == 3
    assert error.value.column == "y"
    assert error.value.value == "abc"


def test_empty_cell_is_malformed(tmp_path):
    path = write(tmp_path, "x1,x2,y\n1,,1\n")
    with pytest.raises(MalformedCell) as error:
        load_csv(path, SCHEMA)
    assert error.value.column == "x2"


def test_duplicate_column(tmp_path):
    path = write(tmp_path, "x1,x2,x1,y\n1,0,1,1\n")
    with pytest.raises(DuplicateColumn) as error:
        load_csv(path, SCHEMA)
    assert error.value.column == "x1"


def test_long_rows_are_rejected(tmp_path):
    path = write(tmp_path, "x1,x2,y\n1,2,3,4\n5,6,7,8\n")
    with pytest.raises(RaggedRow) as error:
        load_csv(path, SCHEMA)

    assert isinstance(error.value, DatasetError)
    assert error.value.line == 2


def test_long_row_after_valid_rows(tmp_path):
    path = write(tmp_path, "x1,x2,y\n1,0,1\n2,0,2\n3,0,3,9\n")
    with pytest.raises(RaggedRow) as error:
        load_csv(path, SCHEMA)
    assert error.value.line == 4


def test_short_row_is_rejected(tmp_path):
    path = write(tmp_path, "x1,x2,y,notes\n1,0,1,a\n2,0,2\n")
    with pytest.raises(RaggedRow) as error:
        load_csv(path, SCHEMA)
    assert error.value.line == 3


def test_invalid_utf8(tmp_path):
    path = tmp_path / "runs.csv"
    path.write_bytes(b"x1,x2,y\n1,0,\xff\xfe\n")
    with pytest.raises(DatasetError):
        load_csv(path, SCHEMA)


def test_header_only_is_empty(tmp_path):
    with pytest.raises(EmptyDataset):
        load_csv(write(tmp_path, "x1,x2,y\n"), SCHEMA)


def test_missing_column(tmp_path):
    with pytest.raises(ConfigurationError):
        load_csv(write(tmp_path, "x1,y\n1,1\n"), SCHEMA)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "nope.csv", SCHEMA)


def test_out_of_range_strict(tmp_path):
    path = write(tmp_path, "x1,x2,y\n1,0,1\n11,0,2\n")
    with pytest.raises(OutOfRange) as error:
        load_csv(path, SCHEMA)

    assert error.value.row == 2
    assert error.value.column == "x1"
    assert error.value.value == 11.0


def test_out_of_range_relaxed_warns(tmp_path, caplog):
    path = write(tmp_path, "x1,x2,y\n1,0,1\n11,0,2\n")
    relaxed = Schema(inputs=SCHEMA.inputs, outputs=SCHEMA.outputs, strict=False)
    with caplog.at_level(logging.WARNING, logger="warpband.dataset"):
        dataset = load_csv(path, relaxed)

    assert dataset.n == 2
    assert "outside" in caplog.text


def test_write_then_load_is_exact(tmp_path):
    rng = np.random.default_rng(3)
    dataset = Dataset(
        inputs=np.column_stack([rng.uniform(0, 10, 25), rng.uniform(-1, 1, 25)]),
        outputs=rng.normal(size=(25, 1)),
        input_specs=SCHEMA.inputs,
        output_names=SCHEMA.outputs,
    )
    reloaded = load_csv(write_csv(dataset, tmp_path / "out.csv"), SCHEMA)

    np.testing.assert_array_equal(reloaded.inputs, dataset.inputs)
    np.testing.assert_array_equal(reloaded.outputs, dataset.outputs)


def test_coding_maps_bounds_to_unit_box():
    dataset = Dataset(
        inputs=[[0.0, -1.0], [10.0, 1.0], [5.0, 0.0]],
        outputs=[1.0, 2.0, 3.0],
        input_specs=SCHEMA.inputs,
        output_names=SCHEMA.outputs,
    )
    coded, domain = to_coded(dataset)

    assert coded.coded
    np.testing.assert_allclose(coded.inputs, [[-1, -1], [1, 1], [0, 0]], atol=1e-15)
    np.testing.assert_array_equal(coded.outputs, dataset.outputs)
    np.testing.assert_allclose(from_coded(coded.inputs, domain), dataset.inputs, atol=1e-12)


def test_coding_round_trip_random_points():
    specs = (VariableSpec("a", 120.0, 150.0), VariableSpec("b", -3.5, 0.25))
    domain = ScaledDomain(specs)
    x = np.random.default_rng(0).uniform(domain.lower, domain.upper, (100, 2))
    np.testing.assert_allclose(domain.decode(domain.encode(x)), x, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("lower, upper", [(1.0, 1.0), (2.0, 1.0), (0.0, np.inf)])
def test_invalid_variable_range(lower, upper):
    with pytest.raises(ConfigurationError):
        VariableSpec("x", lower, upper)


def test_schema_rejects_duplicate_names():
    with pytest.raises(ConfigurationError):
        Schema(inputs=(VariableSpec("x", 0, 1),), outputs=("x",))


def test_schema_rejects_wrong_weight_count():
    with pytest.raises(ConfigurationError):
        Schema(inputs=(VariableSpec("x", 0, 1),), outputs=("y", "z"), weights=(1.0,))


def test_load_schema_invalid_json(tmp_path):
    path = tmp_path / "schema.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_schema(path)


def test_load_schema_missing_keys(tmp_path):
    path = tmp_path / "schema.json"
    path.write_text(json.dumps({"inputs": []}), encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_schema(path)


def test_four_input_four_output_schema(tmp_path):
    record = {
        "inputs": [
            {"name": "melt_temperature", "lower": 40, "upper": 50},
            {"name": "mold_temperature", "lower": 40, "upper": 60},
            {"name": "packing_pressure", "lower": 300, "upper": 500},
            {"name": "packing_time", "lower": 2, "upper": 6},
        ],
        "outputs": ["u1", "u2", "u3", "u4"],
        "strict": True,
        "weights": [1, 1, 1, 1],
    }
    path = tmp_path / "schema.json"
    path.write_text(json.dumps(record), encoding="utf-8")
    schema = load_schema(path)

    assert [s.name for s in schema.inputs] == [r["name"] for r in record["inputs"]]
    assert schema.outputs == ("u1", "u2", "u3", "u4")
    assert schema.weights == (1.0, 1.0, 1.0, 1.0)
    assert Schema.from_record(schema.to_record()) == schema
