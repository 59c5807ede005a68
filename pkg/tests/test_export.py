import io
import json
import math

from fracpoin.estimate import RoomsRow, SweepRow
from fracpoin.export import (
    RECORD_HEADER,
    ROOMS_HEADER,
    SWEEP_HEADER,
    jsonable,
    open_output,
    seed_line,
    write_json,
    write_records_csv,
    write_rooms_csv,
    write_sweep_csv,
)
from fracpoin.functional import RatioRecord


def _record(field_id="random-0", constant=2.0):
    return RatioRecord.from_sides(
        0.5, 1.0, constant, domain="square", p=2.0, s=0.5, tau=None, beta=0.0, kernel="classical", field_id=field_id
    )


def test_seed_line_skips_missing_params():
    assert seed_line(7, p=2.0, localized=None) == "# seed=7 p=2.0"
    assert seed_line(None) == "# seed=None"


def test_write_json_puts_the_seed_first():
    out = io.StringIO()
    write_json({"value": 0.5, "record": _record()}, out, seed=3)
    doc = json.loads(out.getvalue())
    assert doc["seed"] == 3
    assert doc["record"]["ratio"] == 0.5
    assert doc["record"]["passed"] is True


def test_write_json_without_seed():
    out = io.StringIO()
    write_json([1, 2], out, seed=5)
    assert json.loads(out.getvalue()) == [1, 2]


def test_jsonable_nested():
    assert jsonable({1: (SweepRow(tau=0.5, theoretical=2.0, empirical=1.0, slack=2.0),)}) == {
        "1": [{"tau": 0.5, "theoretical": 2.0, "empirical": 1.0, "slack": 2.0}]
    }


def test_records_csv():
    out = io.StringIO()
    write_records_csv([_record(), _record("random-1", constant=0.1)], out, 0, p=2.0)
    lines = out.getvalue().splitlines()
    assert lines[0] == "# seed=0 p=2.0"
    assert lines[1] == ",".join(RECORD_HEADER)
    assert lines[2].endswith(",true")
    assert lines[3].endswith(",false")
    assert ",," in lines[2]


def test_sweep_and_rooms_csv():
    out = io.StringIO()
    write_sweep_csv([SweepRow(tau=0.5, theoretical=10.0, empirical=1.0, slack=10.0)], out, 1)
    assert out.getvalue().splitlines()[1:] == [",".join(SWEEP_HEADER), "0.5,10.0,1.0,10.0"]
    out = io.StringIO()
    write_rooms_csv([RoomsRow(j=1, width="1/2", cells=144, estimate=math.pi, growth=1.0)], out, None, k=2)
    lines = out.getvalue().splitlines()
    assert lines[0] == "# seed=None k=2"
    assert lines[1] == ",".join(ROOMS_HEADER)
    assert lines[2].startswith("1,1/2,144,")


def test_open_output_to_file(tmp_path):
    path = tmp_path / "out.json"
    with open_output(path) as handle:
        write_json({"a": 1}, handle)
    assert json.loads(path.read_text()) == {"a": 1}


def test_open_output_defaults_to_stdout(capsys):
    with open_output("-") as handle:
        handle.write("hello\n")
    assert capsys.readouterr().out == "hello\n"
