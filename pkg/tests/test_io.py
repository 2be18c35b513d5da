import io
import json
import pathlib

import numpy as np
import pytest

from ilptemper import errors
from ilptemper.core import EnergyParams, FeasTolerance, energy, is_feasible, objective, violation
from ilptemper.instances import generate
from ilptemper.io import (
    dumps_canonical,
    load_instance,
    read_canonical,
    read_mps,
    read_trace,
    save_instance,
    write_canonical,
    write_mps,
    write_trace,
)
from ilptemper.tempering import TraceRecord

import mps_cases
from oracles import all_states


def test_fixture_suite_is_large_enough():
    assert len(mps_cases.VALID) >= 10
    kinds = {op for case in mps_cases.VALID.values() for _, op, _ in case["rows"]}
    assert kinds == {"<=", ">=", "=="}
    assert any(c.get("maximize") for c in mps_cases.VALID.values())


@pytest.mark.parametrize("fname", sorted(mps_cases.VALID))
def test_fixture_matches_natural_form(fname):
    case = mps_cases.VALID[fname]
    inst = read_mps(pathlib.Path(mps_cases.path(fname)))
    assert inst.n == len(case["vars"]) <= 10
    assert inst.metadata["columns"].split(",") == case["vars"]
    lam = 3.0
    for x in all_states(inst.n):
        obj, viol, feas = mps_cases.natural_eval(case, x)
        assert objective(inst, x) == pytest.approx(obj, abs=1e-12)
        assert violation(inst, x, 1)[0] == pytest.approx(viol, abs=1e-12)
        assert energy(inst, x, EnergyParams(lam)) == pytest.approx(obj + lam * viol, abs=1e-12)
        assert is_feasible(inst, x, FeasTolerance(0.0)) == feas


@pytest.mark.parametrize("fname", sorted(mps_cases.REJECTED))
def test_rejected_fixtures(fname):
    code, line = mps_cases.REJECTED[fname]
    with pytest.raises(errors.ParseError) as ei:
        read_mps(pathlib.Path(mps_cases.path(fname)))
    assert type(ei.value).__name__ == code and ei.value.code == code
    assert ei.value.line == line


def test_g_row_hand_conversion():
    inst = read_mps(pathlib.Path(mps_cases.path("g_row.mps")))
    assert inst.c.tolist() == [1.0, 1.0]
    assert inst.dense().tolist() == [[-1.0, -1.0]] and inst.b.tolist() == [-1.0]


def test_equality_split_order():
    inst = read_mps(pathlib.Path(mps_cases.path("e_row.mps")))
    assert inst.dense().tolist() == [[1.0, 1.0], [-1.0, -1.0]]
    assert inst.b.tolist() == [1.0, -1.0]


def test_metadata_records_sense_and_constant():
    inst = read_mps(pathlib.Path(mps_cases.path("obj_constant.mps")))
    assert inst.metadata["objective_constant_dropped"] == "-10"
    assert inst.m == 1  # the second free row is not a constraint
    inst = read_mps(pathlib.Path(mps_cases.path("max_sense.mps")))
    assert inst.metadata["sense"] == "MAX" and inst.name == "MAXNEXT"


def test_error_reports_column():
    with pytest.raises(errors.ParseError) as ei:
        read_mps(pathlib.Path(mps_cases.path("bad_number.mps")))
    assert ei.value.column == 13
    assert str(ei.value).startswith("line 6, column 13")


@pytest.mark.parametrize("text, err", [
    ("NAME a\nROWS\n N obj\nCOLUMNS\n x obj 1\n y obj 1\n x obj 2\nBOUNDS\n BV b x\n BV b y\nENDATA\n", errors.ParseError),
    ("NAME a\nROWS\n N obj\n X r\nENDATA\n", errors.ParseError),
    ("NAME a\nROWS\n N obj\nCOLUMNS\nENDATA\n", errors.ValidationError),
    ("NAME a\nROWS\n N obj\nCOLUMNS\n x obj 1\nBOUNDS\n BV b x\nENDATA\n x obj 1\n", errors.ParseError),
    ("NAME a\nFOO\nENDATA\n", errors.ParseError),
    ("NAME a\nOBJSENSE SIDEWAYS\nENDATA\n", errors.ParseError),
])
def test_malformed_inputs(text, err):
    with pytest.raises(err):
        read_mps(text)


def test_reader_accepts_bytes_and_streams():
    text = pathlib.Path(mps_cases.path("g_row.mps")).read_text()
    a = read_mps(text)
    assert read_mps(text.encode()) == a
    assert read_mps(io.StringIO(text)) == a
    assert read_mps(io.BytesIO(text.encode())) == a


def test_missing_file_is_io_failure(tmp_path):
    with pytest.raises(errors.IoFailure):
        read_mps(tmp_path / "absent.mps")


def test_mps_write_read_round_trip(ref3):
    back = read_mps(write_mps(ref3), name="ref3")
    assert np.array_equal(back.c, ref3.c) and np.array_equal(back.b, ref3.b)
    assert back.dense().tolist() == ref3.dense().tolist()


def test_canonical_round_trip(ref3):
    assert read_canonical(write_canonical(ref3)) == ref3
    assert read_canonical(dumps_canonical(ref3)) == ref3


def test_canonical_large_instance_reserializes_identically():
    inst = generate("mvc", 1000, seed=0, affinity=70)
    text = dumps_canonical(inst)
    again = dumps_canonical(read_canonical(text))
    assert text == again and inst.m == 65100


def test_canonical_errors(ref3):
    doc = write_canonical(ref3)
    with pytest.raises(errors.SchemaVersionMismatch):
        read_canonical({**doc, "schema": "ilp-canonical/0"})
    with pytest.raises(errors.ValidationError):
        read_canonical({**doc, "rows": doc["rows"][:-1]})
    with pytest.raises(errors.ValidationError):
        read_canonical({k: v for k, v in doc.items() if k != "c"})
    with pytest.raises(errors.ValidationError):
        read_canonical({**doc, "n": 2})
    with pytest.raises(errors.ParseError):
        read_canonical("{not json")


def test_save_and_load_by_extension(tmp_path, ref3):
    for name in ("a.json", "a.mps"):
        p = tmp_path / name
        save_instance(ref3, p)
        back = load_instance(p)
        assert back.dense().tolist() == ref3.dense().tolist()
    assert json.loads((tmp_path / "a.json").read_text())["schema"] == "ilp-canonical/1"


def test_trace_empty_and_single():
    assert write_trace([]) == "wall_seconds,step,incumbent_obj,best_energy,feasible_found\n"
    text = write_trace([TraceRecord(1.5, 100, -2.0, -2.0, True)])
    assert text.splitlines() == ["wall_seconds,step,incumbent_obj,best_energy,feasible_found",
                                 "1.5,100,-2,-2,true"]


def test_trace_round_trip_is_exact():
    rng = np.random.default_rng(0)
    recs = [TraceRecord(float(rng.random()), k, None if k < 3 else float(rng.normal()),
                        float(rng.normal() * 1e6), k >= 3) for k in range(10)]
    text = write_trace(recs)
    assert "\r" not in text
    assert read_trace(text) == recs


def test_trace_to_binary_sink():
    buf = io.BytesIO()
    write_trace([TraceRecord(0.1, 1, None, 3.0, False)], buf)
    assert buf.getvalue().decode().endswith("0.10000000000000001,1,,3,false\n")


def test_trace_parse_errors():
    with pytest.raises(errors.ParseError):
        read_trace("a,b\n")
    with pytest.raises(errors.ParseError) as ei:
        read_trace("wall_seconds,step,incumbent_obj,best_energy,feasible_found\n1,2,3,4,maybe\n")
    assert ei.value.line == 2
