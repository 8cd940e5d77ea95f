import json

import numpy as np
import pytest

from zipfrac.errors import ConfigError
from zipfrac.io import format_float, grid_csv_text, read_grid_csv, write_grid_csv, write_json


def test_float_format_round_trips():
    for x in (0.1, 1 / 3, -2.5e-300, np.pi):
        assert float(format_float(x)) == x


def test_csv_text_layout():
    text = grid_csv_text([np.array([0.0, 1.0]), np.array([0.0, 0.5, 1.0])], np.arange(6.0).reshape(2, 3))
    lines = text.splitlines()
    assert lines[0] == "x1,x2,value"
    assert lines[1:4] == ["0,0,0", "0,0.5,1", "0,1,2"]
    assert len(lines) == 7


def test_round_trip(tmp_path):
    axes = [np.array([0.0, 1 / 3, 1.0]), np.array([-1.0, 0.0, 0.25, 2.0])]
    vals = np.random.default_rng(0).normal(size=(3, 4))
    write_grid_csv(tmp_path / "g.csv", axes, vals)
    data = read_grid_csv(tmp_path / "g.csv")
    assert np.array_equal(data.values, vals)
    assert all(np.array_equal(a, b) for a, b in zip(data.partition.nodes, axes))


def test_json_written_atomically(tmp_path):
    write_json(tmp_path / "sub" / "a.json", {"x": 1})
    assert json.loads((tmp_path / "sub" / "a.json").read_text()) == {"x": 1}
    assert [p.name for p in (tmp_path / "sub").iterdir()] == ["a.json"]


@pytest.mark.parametrize("text", [
    "",
    "a,b,value\n0,0,1\n",
    "x1,value\n0,1\n0.5\n",
    "x1,value\n0,1\n1,2\n0.5,3\n",
    "x1,value\n0,1\n0.5,two\n1,3\n",
])
def test_bad_csv_rejected(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ConfigError):
        read_grid_csv(path)
