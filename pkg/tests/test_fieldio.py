import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from roughheat.fieldio import (
    FieldFormatError,
    canonical_json,
    read_field,
    to_jsonable,
    write_columns,
    write_field,
)
from roughheat.grid import make_grid

GRID = make_grid(2, [(0, 1), (0, 0.5)], 0.0625, 0.25, 0.0625)


@given(
    arrays(np.float64, st.tuples(st.integers(1, 5), st.just(16), st.just(8)), elements=st.floats(allow_nan=False, allow_infinity=False)),
    st.integers(0, 3),
)
def test_roundtrip_is_bit_exact(tmp_path_factory, values, first):
    path = tmp_path_factory.mktemp("f") / "u.json"
    write_field(path, values, GRID, "u", first_step=first, meta={"k": 1})
    f = read_field(path)
    assert f.values.tobytes() == values.tobytes()
    assert f.first_step == first
    assert f.grid.hash == GRID.hash
    assert f.header["meta"] == {"k": 1}


def test_single_slab_is_promoted(tmp_path):
    write_field(tmp_path / "a.json", np.ones(GRID.shape), GRID, "a")
    assert read_field(tmp_path / "a.json").values.shape == (1,) + GRID.shape


def test_shape_mismatch(tmp_path):
    with pytest.raises(FieldFormatError):
        write_field(tmp_path / "a.json", np.ones((3, 3)), GRID, "a")


def test_checksum_corruption_is_detected(tmp_path):
    path = write_field(tmp_path / "a.json", np.arange(128.0).reshape(GRID.shape), GRID, "a")
    raw = bytearray(path.with_suffix(".bin").read_bytes())
    raw[5] ^= 0xFF
    path.with_suffix(".bin").write_bytes(bytes(raw))
    with pytest.raises(FieldFormatError, match="checksum"):
        read_field(path)


@pytest.mark.parametrize("edit", ["drop_dims", "schema", "garbage", "slabs"])
def test_header_errors(tmp_path, edit):
    path = write_field(tmp_path / "a.json", np.zeros(GRID.shape), GRID, "a")
    header = json.loads(path.read_text())
    if edit == "drop_dims":
        del header["dims"]
    elif edit == "schema":
        header["schema"] = 99
    elif edit == "slabs":
        header["slabs"] = 2
    text = "{not json" if edit == "garbage" else json.dumps(header)
    path.write_text(text)
    with pytest.raises(FieldFormatError):
        read_field(path)


def test_to_jsonable_handles_non_finite():
    out = to_jsonable({"a": np.array([1.0, np.inf]), "b": math.nan, "c": np.int64(3), "d": (np.bool_(True),)})
    assert out == {"a": [1.0, "inf"], "b": "nan", "c": 3, "d": [True]}
    with pytest.raises(TypeError):
        to_jsonable(object())


@given(st.dictionaries(st.text(max_size=5), st.floats(allow_nan=False, allow_infinity=False) | st.integers(), max_size=6))
def test_canonical_json_is_order_independent(d):
    reordered = dict(reversed(list(d.items())))
    assert canonical_json(d) == canonical_json(reordered)
    assert json.loads(canonical_json(d)) == d


def test_write_columns(tmp_path):
    path = write_columns(tmp_path / "c.txt", [[0.1, 0.2], [1 / 3, 2 / 3]], header="x y")
    back = np.loadtxt(path)
    assert np.array_equal(back, [[0.1, 1 / 3], [0.2, 2 / 3]])
