import json
from fractions import Fraction

import pytest

from fracpoin.cli import run
from fracpoin.export import RECORD_HEADER, SWEEP_HEADER


def test_constants(capsys):
    assert run(["constants", "--n", "2", "--K", "3"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["seed"] == 0
    assert doc["variant"] == "john"
    assert doc["N"] == 144
    assert doc["total"] == pytest.approx(2 * doc["C0"] * doc["C1"])


@pytest.mark.parametrize(
    "argv",
    [
        ["constants", "--p", "0.5"],
        ["verify", "--s", "1.5"],
        ["whitney", "--gen", "-1"],
        ["hardy-probe", "--trials", "0"],
        ["frobnicate"],
    ],
)
def test_usage_errors(argv, capsys):
    assert run(argv) == 2
    assert capsys.readouterr().err


def test_whitney_to_file(tmp_path):
    out = tmp_path / "whitney.json"
    assert run(["whitney", "--gen", "3", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["seed"] == 0
    assert doc["report"]["passed"] is True
    assert len(doc["cubes"]) == 16


def test_verify_csv(capsys):
    argv = ["verify", "--depth", "2", "--fields", "random:2", "--kernel", "classical", "--diagonal-depth", "1"]
    assert run(argv) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("# seed=0")
    assert lines[1] == ",".join(RECORD_HEADER)
    assert len(lines) == 4
    assert all(line.endswith(",true") for line in lines[2:])


def test_verify_json(capsys):
    argv = ["verify", "--depth", "2", "--fields", "random:1", "--kernel", "classical", "--diagonal-depth", "1", "--format", "json"]
    assert run(argv) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["kernel"] == "classical"
    assert len(doc["records"]) == 1


def test_cover_cube(capsys):
    assert run(["cover-cube", "--m", "2"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["m"] == 2
    assert len(doc["nodes"]) == 4


def test_cover_john(capsys):
    assert run(["cover-john", "--gen", "3", "--F", "corner"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert Fraction(doc["K_exact"]) >= Fraction(41, 8)
    assert set(doc["reports"]) == {"covering", "side_vs_distance", "weight_comparability"}


def test_estimate(capsys):
    argv = ["estimate", "--depth", "2", "--kernel", "classical", "--diagonal-depth", "1", "--certificate"]
    assert run(argv) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["method"] == "rayleigh"
    assert doc["estimate"] > 0
    assert len(doc["certificate"]["values"]) == 16


def test_sweep_tau(capsys):
    assert run(["sweep-tau", "--depth", "2", "--taus", "0.4,0.8", "--K", "41/8"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[1] == ",".join(SWEEP_HEADER)
    assert len(lines) == 4


def test_decompose(capsys):
    assert run(["decompose", "--depth", "3", "--gen", "3", "--field", "bump", "--parts"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["report"]["passed"] is True
    assert doc["decomposition"]["parts"]


def test_hardy_subcommand(capsys):
    assert run(["hardy-probe", "--depth", "3", "--gen", "3", "--trials", "5", "--q", "inf"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["passed"] is True


def test_missing_domain_file_is_a_usage_error(tmp_path, capsys):
    assert run(["whitney", "--domain", str(tmp_path / "missing.json")]) == 2
    assert "Cannot read domain file" in capsys.readouterr().err


def test_field_document_without_values_is_a_usage_error(capsys):
    argv = ["verify", "--depth", "2", "--kernel", "classical", "--fields", json.dumps({"vals": [0.0] * 16})]
    assert run(argv) == 2
    assert "values" in capsys.readouterr().err


def test_unwritable_output_is_a_usage_error(tmp_path):
    assert run(["constants", "--out", str(tmp_path / "missing" / "out.json")]) == 2


def test_failing_property_exits_one(capsys):
    # balls of radius 0.1 d(x) see no other cell, so every nonconstant field has zero energy
    argv = ["verify", "--depth", "2", "--kernel", "tau_ball", "--tau", "0.1", "--diagonal-depth", "0", "--fields", "random:1"]
    assert run(argv) == 1
    lines = capsys.readouterr().out.splitlines()
    assert lines[2].endswith(",false")
