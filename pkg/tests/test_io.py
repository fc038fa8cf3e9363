import json

import jsonschema
import numpy as np
import pytest

from liebn import io as lio
from liebn.errors import InvalidInput


def test_matrix_text_round_trip(tmp_path, rng):
    mats = rng.standard_normal((4, 3, 3)) * 10.0 ** rng.integers(-5, 5, (4, 3, 3))
    path = tmp_path / "m.txt"
    lio.write_matrices(path, mats)
    text = path.read_text()
    assert text.splitlines()[0] == "dim 3 count 4"
    assert len(text.splitlines()) == 1 + 4 * 3
    # 17 significant digits survive float64 exactly
    assert np.array_equal(lio.read_matrices(path), mats)


def test_single_matrix_and_empty_stack():
    assert lio.format_matrices(np.eye(2)).startswith("dim 2 count 1\n")
    assert lio.parse_matrices("dim 2 count 0\n").shape == (0, 2, 2)


@pytest.mark.parametrize("text", [
    "",
    "dims 2 count 1\n1 0\n0 1\n",
    "dim 2 count 2\n1 0\n0 1\n",
    "dim 2 count 1\n1 0 0\n0 1\n",
    "dim 2 count 1\n1 x\n0 1\n",
])
def test_malformed_matrix_files(text):
    with pytest.raises(InvalidInput):
        lio.parse_matrices(text)


def test_non_square_rejected():
    with pytest.raises(InvalidInput):
        lio.format_matrices(np.zeros((2, 3)))


def _doc(**over):
    doc = {"schema_version": "1", "command": "bench", "config": {}, "summary": {},
           "records": [{"family": "so", "dim": 3, "repetitions": 30}], "timing": {}}
    doc.update(over)
    return doc


def test_schema_accepts_and_rejects():
    lio.validate_report(_doc())
    with pytest.raises(jsonschema.ValidationError):
        lio.validate_report(_doc(schema_version="2"))
    with pytest.raises(jsonschema.ValidationError):
        lio.validate_report(_doc(records=[{"family": "so", "dim": 3, "repetitions": 29}]))
    bad = _doc()
    del bad["timing"]
    with pytest.raises(jsonschema.ValidationError):
        lio.validate_report(bad)


def test_schema_is_valid_draft_2020_12():
    jsonschema.Draft202012Validator.check_schema(lio.load_schema())


def test_dumps_rejects_nan():
    with pytest.raises(ValueError):
        lio.dumps_report({"x": float("nan")})
    assert json.loads(lio.dumps_report({"b": 1, "a": [1.5]})) == {"a": [1.5], "b": 1}


def test_csv_and_strip_timing():
    recs = [{"step": 0, "x": [1, 2], "wall_clock_s": 0.1}, {"step": 1, "y": None}]
    lines = lio.records_to_csv(recs).splitlines()
    assert lines[0] == "step,x,wall_clock_s,y"
    assert lines[1] == '0,"[1, 2]",0.1,'
    doc = {"records": recs, "timing": {"a": 1}, "wall_clock_s": 2.0}
    assert lio.strip_timing(doc) == {"records": [{"step": 0, "x": [1, 2]}, {"step": 1, "y": None}]}
