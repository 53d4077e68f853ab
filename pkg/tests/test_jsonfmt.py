import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mycobow import jsonfmt


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_floats_roundtrip_exactly(x):
    back = json.loads(jsonfmt.dumps({"x": x}))["x"]
    assert float(back) == x or (x == 0.0 and back == 0.0)


def test_seventeen_significant_digits():
    s = jsonfmt.dumps({"x": 0.1})
    assert "0.10000000000000001" in s


def test_floats_stay_floats():
    doc = json.loads(jsonfmt.dumps({"a": 1.0, "b": 1}))
    assert isinstance(doc["a"], float)
    assert isinstance(doc["b"], int)


def test_ndarrays_serialized():
    arr = np.array([[1.5, 2.5]])
    doc = json.loads(jsonfmt.dumps({"m": arr}))
    assert doc["m"] == [[1.5, 2.5]]


def test_non_finite_rejected():
    with pytest.raises(ValueError, match="non-finite"):
        jsonfmt.dumps({"x": math.nan})
    with pytest.raises(ValueError, match="non-finite"):
        jsonfmt.dumps({"x": math.inf})


def test_non_string_keys_rejected():
    with pytest.raises(TypeError, match="keys"):
        jsonfmt.dumps({1: "x"})


def test_file_roundtrip(tmp_path):
    doc = {"name": "m", "values": [1.0, 2.0, None, True], "nested": {"k": 3}}
    path = tmp_path / "doc.json"
    jsonfmt.dump(doc, path)
    assert jsonfmt.load(path) == doc
