import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from rangecert import cli
from rangecert.cli import Report, main, parse_document, spectra_csv
from rangecert.errors import SchemaError

SAMPLES = Path(__file__).resolve().parent.parent / "samples"


def _doc(tmp_path, obj, name="doc.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj, indent=1))
    return str(p)


def _run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_certify_two_projections(capsys):
    code, out, _ = _run(["certify", str(SAMPLES / "two_projections.json")], capsys)
    report = json.loads(out)
    assert code == 0
    assert report["lambda_min_M"] == pytest.approx(0.5, abs=1e-12)
    assert report["verdict"]["certified"] is True


def test_certify_graph_example_not_certified(capsys, tmp_path):
    out = tmp_path / "r.json"
    code, _, _ = _run(["certify", str(SAMPLES / "graph_nonclosed.json"), "--out", str(out)], capsys)
    report = json.loads(out.read_text())
    assert code == 1
    assert report["model_oracle"]["ess_cos"] == 1.0
    assert report["inputs"]["eps"][0][1] == 1.0


def test_malformed_document_exits_2_with_line(capsys):
    code, _, err = _run(["certify", str(SAMPLES / "malformed.json")], capsys)
    assert code == 2
    assert "line" in err and "colour" in err


@pytest.mark.parametrize("text, fragment", [
    ('{"version": 1,\n "system": ', "invalid JSON"),
    ('{"version": 2, "system": {"model": {"name": "graph", "params": {"tail": [0]}}}}', "version"),
    ('{"version": 1,\n "system": {"model": {"name": "graph",\n "params": {"tail": "x"}}}}', "line 3"),
    ('{"version": 1, "system": {"model": {"name": "graph", "params": {"tail": [0]}}},\n'
     ' "analysis": {"truncate": [20, 10]}}', "strictly increasing"),
    ('{"version": 1, "system": {"model": {"name": "graph", "params": {"tail": [0]}}},\n'
     ' "overrides": {"gamma": {"nobody": 1}}}', "unknown operator label"),
])
def test_schema_errors(text, fragment):
    with pytest.raises(SchemaError) as err:
        parse_document(text)
    assert fragment in str(err.value)


def test_missing_file_exits_2(capsys, tmp_path):
    code, _, _ = _run(["certify", str(tmp_path / "absent.json")], capsys)
    assert code == 2


def test_hypothesis_violation_names_operator(capsys, tmp_path):
    doc = {"version": 1, "system": {"operators": [
        {"label": "shrinking", "op": {"type": "ep_diag", "tail": [0],
                                      "decay": {"kind": "geometric", "coeffs": [1], "ratio": 0.5}}},
        {"label": "identity", "op": {"type": "ep_diag", "tail": [1]}},
    ]}}
    code, out, err = _run(["certify", _doc(tmp_path, doc)], capsys)
    assert code == 2
    assert json.loads(out)["error"]["label"] == "shrinking"
    assert "shrinking" in err


def test_overrides_are_applied(capsys, tmp_path):
    doc = {"version": 1,
           "system": {"model": {"name": "two_subspace", "params": {"tail_cos": [0.5]}}},
           "overrides": {"gamma": {"P1": 0.9}, "eps": [{"pair": ["P1", "P2"], "value": 0.7}]}}
    code, out, _ = _run(["certify", _doc(tmp_path, doc)], capsys)
    report = json.loads(out)
    assert code == 0
    assert report["inputs"]["gamma_provenance"][0] == "user-supplied"
    assert report["inputs"]["eps"][0][1] == 0.7


def test_analyze_constant_angle(capsys, tmp_path):
    out = tmp_path / "a.json"
    code, _, _ = _run(["analyze", str(SAMPLES / "two_projections.json"),
                       "--truncate", "50,100", "--out", str(out)], capsys)
    assert code == 0
    diag = json.loads(out.read_text())["diagnostics"]
    for entry in diag["per_n"]:
        assert entry["smallest_nonzero"] == pytest.approx(0.5, abs=1e-12)
        assert entry["gap_check"]["passed"]
    assert diag["kernel_counts"] == [0, 0]


def test_analyze_disjoint_and_graph(capsys, tmp_path):
    out = tmp_path / "d.json"
    _run(["analyze", str(SAMPLES / "disjoint_projections.json"), "--out", str(out)], capsys)
    assert json.loads(out.read_text())["diagnostics"]["kernel_counts"] == [0, 0, 0]
    code, _, _ = _run(["analyze", str(SAMPLES / "graph_nonclosed.json"), "--out", str(out)], capsys)
    diag = json.loads(out.read_text())["diagnostics"]
    assert code == 1
    assert diag["kernel_counts_strictly_increasing"]


def test_analyze_csv_is_stable_and_locale_free(capsys, tmp_path):
    paths = []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        _run(["analyze", str(SAMPLES / "two_projections.json"), "--truncate", "5,10",
              "--out", str(out)], capsys)
        paths.append(Path(f"{out}.spectra.csv"))
    a, b = (p.read_bytes() for p in paths)
    assert a == b
    assert b"\r" not in a
    lines = a.decode().splitlines()
    assert lines[0] == "N,eig_index,eigenvalue"
    assert len(lines) == 1 + 2 * 5 + 2 * 10
    n, i, val = lines[1].split(",")
    assert n == "5" and i == "0" and float(val) == pytest.approx(0.5)


def test_analyze_reports_unavailable_truncation(capsys, tmp_path):
    ds = {"type": "direct_sum", "parts": [{"type": "ep_diag", "tail": [1]},
                                          {"type": "ep_diag", "tail": [1]}]}
    doc = {"version": 1, "system": {"operators": [
        {"label": "even", "op": ds},
        {"label": "skewed", "op": ds, "allocation": [3, 1]},
    ]}}
    out = tmp_path / "u.json"
    _run(["analyze", _doc(tmp_path, doc), "--truncate", "7", "--out", str(out)], capsys)
    entry = json.loads(out.read_text())["diagnostics"]["per_n"][0]
    assert entry["labels"] == ["even"]
    assert entry["unavailable"][0]["label"] == "skewed"


def test_analyze_needs_sizes(capsys, tmp_path):
    doc = {"version": 1, "system": {"model": {"name": "graph", "params": {"tail": [1]}}}}
    code, _, _ = _run(["analyze", _doc(tmp_path, doc)], capsys)
    assert code == 2


def test_report_round_trip(capsys, tmp_path):
    out = tmp_path / "r.json"
    _run(["analyze", str(SAMPLES / "graph_nonclosed.json"), "--out", str(out)], capsys)
    text = out.read_text()
    report = Report.from_dict(json.loads(text))
    assert json.loads(report.to_json()) == json.loads(text)
    assert Report.from_dict(json.loads(report.to_json())) == report


def test_fuzz_is_deterministic_and_reports_equality(capsys):
    args = ["fuzz-lemma2", "--trials", "25", "--seed", "99", "--inject-equality"]
    code1, out1, _ = _run(args, capsys)
    code2, out2, _ = _run(args, capsys)
    assert code1 == code2 == 0 and out1 == out2
    assert "violations=0" in out1 and "equality_case_slack=0.0" in out1


def test_fuzz_violation_prints_seed(capsys, monkeypatch):
    from rangecert.certify import Lemma2Result

    monkeypatch.setattr(cli, "lemma2_bound_check", lambda h, p: Lemma2Result(-1.0, 0.0, False))
    code, out, _ = _run(["fuzz-lemma2", "--trials", "3", "--seed", "5"], capsys)
    assert code == 1
    assert f"VIOLATION trial=0 seed={cli.trial_seed(5, 0)}" in out


def test_bad_arguments_exit_2(capsys):
    assert _run(["fuzz-lemma2", "--trials", "0"], capsys)[0] == 2
    with pytest.raises(SystemExit) as err:
        main(["no-such-command"])
    assert err.value.code == 2


def test_spectra_csv_format():
    text = spectra_csv([(2, [0.1, 1 / 3])])
    assert text == "N,eig_index,eigenvalue\n2,0,0.1\n2,1,0.3333333333333333\n"


def test_selftest_names_failing_item_under_perturbed_tolerance():
    env = dict(os.environ, RCC_TOLERANCE_SCALE="1e13")
    proc = subprocess.run([sys.executable, "-m", "rangecert.cli", "selftest"],
                          capture_output=True, text=True, env=env, timeout=300)
    assert proc.returncode == 1
    assert "AC-4 FAIL" in proc.stdout
    for k in range(1, 11):
        assert f"AC-{k} " in proc.stdout
