import copy
import json

import numpy as np
import pytest

from photomoments import DisplacedStateModel, NormalizedMoments, SourceSpec, make_fock
from photomoments import io as pio

SCENARIO = {
    "schema_version": 1,
    "source": {"variant": "fock", "n": 1, "n_max": 40},
    "overlap": 0.9,
    "grid": {"disp_sq": [0.5, 1.0]},
    "detector": {"bins": 4, "eta": 0.2},
    "trials": 1000,
    "seed": 3,
}


def test_moments_round_trip():
    g = NormalizedMoments([0.5, 0.2], 1.3, errors=[0.01, 0.02], mean_error=0.04)
    again = pio.moments_from_dict(json.loads(pio.dumps(pio.moments_to_dict(g))))
    np.testing.assert_array_equal(again.g, g.g)
    np.testing.assert_array_equal(again.errors, g.errors)
    assert (again.mean, again.mean_error) == (1.3, 0.04)


def test_moments_without_errors():
    d = pio.moments_to_dict(NormalizedMoments([0.5], 1.0))
    assert d["errors"] is None and "mean_error" not in d
    with pytest.raises(pio.SchemaError):
        pio.moments_from_dict({"g": [0.5]})


def test_model_round_trip():
    spec = SourceSpec("heralded_pdc", squeeze=0.3, herald_efficiency=0.2)
    model = DisplacedStateModel(spec.build(), 0.71, 0.8)
    for d in (pio.model_to_dict(model, spec), pio.model_to_dict(model)):
        again = pio.model_from_dict(json.loads(pio.dumps(d)))
        np.testing.assert_allclose(again.source.probs, model.source.probs, atol=1e-15)
        assert (again.overlap, again.disp_sq) == (0.71, 0.8)
    with pytest.raises(pio.SchemaError):
        pio.model_from_dict({"overlap": 0.5})


def test_dumps_is_deterministic_and_strict():
    text = pio.dumps({"b": float("nan"), "a": np.float64(1.5), "c": np.arange(2)})
    assert text == pio.dumps({"c": [0, 1], "a": 1.5, "b": None})
    assert json.loads(text) == {"a": 1.5, "b": None, "c": [0, 1]}


def test_dataset_round_trip():
    text = pio.write_dataset_csv([1.1, 1.5], [[0.2, 0.1], [0.9, 1.2]], [[0.01, 0.02], [0.01, 0.03]])
    ds = pio.read_dataset_csv(text)
    np.testing.assert_array_equal(ds.means, [1.1, 1.5])
    np.testing.assert_array_equal(ds.g, [[0.2, 0.1], [0.9, 1.2]])
    assert len(ds.points()) == 2


def test_dataset_default_errors():
    ds = pio.read_dataset_csv("mean,g2\n1.2,0.5\n")
    assert ds.errors.tolist() == [[1.0]]


@pytest.mark.parametrize("text,line", [
    ("mean,g2\n1.2,0.5\n1.3,abc\n", 3),
    ("mean,g2,err2\n1.2,0.5,0.1\n1.3,0.6,0.1\nnan,0.7,0.1\n", 4),
    ("g2\n0.5\n", 1),
    ("mean,g3\n1,2\n", 1),
])
def test_dataset_errors_name_line(text, line):
    with pytest.raises(pio.SchemaError, match=f"line {line}"):
        pio.read_dataset_csv(text)


def test_dataset_empty():
    with pytest.raises(pio.SchemaError):
        pio.read_dataset_csv("mean,g2\n")


def test_scenario_parses():
    sc = pio.scenario_from_dict(copy.deepcopy(SCENARIO))
    assert sc.disp_sq == [0.5, 1.0]
    assert sc.m_max == 4 and sc.twin_beam is None
    np.testing.assert_array_equal(sc.source.probs, make_fock(1).probs)


def test_scenario_mean_grid():
    data = copy.deepcopy(SCENARIO)
    data["grid"] = {"mean": [1.0, 2.5]}
    assert pio.scenario_from_dict(data).disp_sq == [0.0, 1.5]
    data["grid"] = {"mean": [0.5]}
    with pytest.raises(pio.SchemaError, match="grid/mean"):
        pio.scenario_from_dict(data)


@pytest.mark.parametrize("path,value,where", [
    (("trials",), 0, "trials"),
    (("overlap",), 1.5, "overlap"),
    (("grid",), {"disp_sq": []}, "grid/disp_sq"),
    (("detector", "bins"), 0, "detector/bins"),
    (("schema_version",), 2, "schema_version"),
    (("source", "variant"), "thermal", "source/variant"),
])
def test_scenario_schema_errors(path, value, where):
    data = copy.deepcopy(SCENARIO)
    target = data
    for key in path[:-1]:
        target = target[key]
    target[path[-1]] = value
    with pytest.raises(pio.SchemaError, match=f"field {where}"):
        pio.scenario_from_dict(data)


def test_scenario_order_exceeds_bins():
    data = copy.deepcopy(SCENARIO)
    data["analysis"] = {"m_max": 6}
    with pytest.raises(pio.SchemaError, match="m_max"):
        pio.scenario_from_dict(data)


def test_load_json_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "a": 1,\n  oops\n}\n')
    with pytest.raises(pio.SchemaError, match="line 3"):
        pio.load_json(path)
