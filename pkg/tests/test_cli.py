import json

import numpy as np
import pytest

from opinf_nse.cli import build_parser, main
from opinf_nse.io import load_model, read_matrix, write_matrix


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out


@pytest.fixture
def snapdir(tmp_path, capsys):
    code, _ = run(capsys, "simulate", "--steps", 300, "--out", tmp_path / "snaps")
    assert code == 0
    return tmp_path / "snaps"


def test_generate(tmp_path, capsys):
    code, out = run(capsys, "generate", "--seed", 5, "--nv", 6, "--np", 2, "--m", 2,
                    "--out", tmp_path)
    assert code == 0
    report = json.loads(out.out)
    model = load_model(report["model"])
    assert (model.n_v, model.n_p, model.m) == (6, 2, 2)


def test_simulate_writes_snapshots(snapdir):
    meta = json.loads((snapdir / "snapshots.json").read_text())
    assert meta["n_times"] == 301
    assert read_matrix(snapdir / "V.oifs").shape == (4, 301)


def test_simulate_with_input_file(tmp_path, capsys):
    t = np.linspace(0, 10, 51)
    write_matrix(tmp_path / "u.csv", np.sin(t)[None, :])
    code, _ = run(capsys, "simulate", "--steps", 50, "--inputs", tmp_path / "u.csv",
                  "--out", tmp_path / "s")
    assert code == 0
    assert np.allclose(read_matrix(tmp_path / "s" / "U.oifs"), np.sin(t)[None, :])


def test_pod_divfree(snapdir, tmp_path, capsys):
    code, out = run(capsys, "pod", "--snapshots", snapdir, "--model", snapdir / "model.json",
                    "--divfree", "--order", 2, "--order", 3, "--out", tmp_path / "p")
    assert code == 0
    report = json.loads(out.out)
    assert report["bases"]["3"]["constraint_residual"] < 1e-10
    assert read_matrix(report["bases"]["2"]["file"]).shape == (4, 2)


@pytest.mark.parametrize("method", ["opinf", "opinf_lin"])
def test_infer(snapdir, tmp_path, capsys, method):
    code, out = run(capsys, "infer", "--snapshots", snapdir, "--method", method,
                    "--out", tmp_path / "r")
    assert code == 0
    report = json.loads(out.out)
    assert report["3"]["tol"] > 0


def test_dmd(snapdir, tmp_path, capsys):
    code, out = run(capsys, "dmd", "--snapshots", snapdir, "--order", 2, "--out", tmp_path / "d")
    assert code == 0
    report = json.loads(out.out)
    assert set(report) == {"dmd_r2", "dmdc_r2", "dmdquad_r2"}
    assert read_matrix(report["dmdquad_r2"]["H"]).shape == (2, 3)


def test_lcurve(snapdir, tmp_path, capsys):
    code, out = run(capsys, "lcurve", "--snapshots", snapdir, "--lcurve-points", 12,
                    "--out", tmp_path / "l")
    assert code == 0
    rows = np.loadtxt(tmp_path / "l" / "lcurve.csv", delimiter=",", skiprows=1)
    assert rows.shape == (12, 6) and rows[:, 5].sum() == 1


def test_ingest_reports_residual(snapdir, tmp_path, capsys):
    code, out = run(capsys, "ingest", "--snapshots", snapdir, "--model", snapdir / "model.json",
                    "--out", tmp_path / "copy")
    assert code == 0
    report = json.loads(out.out)
    assert report["constraint_residual"] < 1e-10
    assert (tmp_path / "copy" / "snapshots.json").exists()


def test_ingest_mapping_syntax(snapdir, capsys):
    code, out = run(capsys, "ingest", "--snapshots",
                    f"times={snapdir / 'times.oifs'},V={snapdir / 'V.oifs'}")
    assert code == 0
    assert json.loads(out.out)["n_times"] == 301


def test_compare(tmp_path, capsys):
    code, out = run(capsys, "compare", "--steps", 200, "--method", "opinf", "--method", "dmd",
                    "--out", tmp_path)
    assert code == 0
    summary = json.loads(out.out)
    assert [r["method"] for r in summary["results"]] == ["opinf", "dmd"]
    assert (tmp_path / "summary.json").exists()


def test_compare_config_file_with_override(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"steps": 150, "methods": ["pod"],
                                                 "orders": [2]}))
    code, out = run(capsys, "compare", "--config", tmp_path / "c.json", "--order", 3,
                    "--out", tmp_path / "o")
    assert code == 0
    summary = json.loads(out.out)
    assert summary["config"]["steps"] == 150
    assert summary["results"][0]["order"] == 3


@pytest.mark.parametrize("argv", [
    ["compare", "--order", "0"],
    ["compare", "--lcurve-min", "1e-3", "--lcurve-max", "1e-6"],
    ["ingest", "--snapshots", "/nonexistent/dir"],
    ["simulate", "--inputs", "chirp"],
])
def test_config_errors_exit_2(tmp_path, capsys, argv):
    code, out = run(capsys, *argv, "--out", tmp_path) if argv[0] != "ingest" else \
        run(capsys, *argv)
    assert code == 2
    assert out.err.startswith("error:")


def test_truncated_input_exit_2(snapdir, capsys):
    v = snapdir / "V.oifs"
    v.write_bytes(v.read_bytes()[:-1])
    code, out = run(capsys, "ingest", "--snapshots", snapdir)
    assert code == 2 and "byte offset" in out.err


def test_numerical_failure_exit_3(tmp_path, capsys):
    # the quadratic term of a gigantic Stokes state overflows
    code, out = run(capsys, "simulate", "--inhomogeneous", "--uperp", 1e200, "--steps", 10,
                    "--out", tmp_path)
    assert code == 3
    assert "non-finite" in out.err


def test_help_documents_defaults(capsys):
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices
    assert set(sub) == {"generate", "simulate", "pod", "infer", "dmd", "compare", "lcurve",
                        "ingest"}
    text = " ".join(sub["compare"].format_help().split())
    for flag in ("--seed", "--steps", "--lcurve-min", "--out", "--rollout"):
        assert flag in text
    assert "(default: 1e-11)" in text and "(default: 1000)" in text
    assert text.count("(default: results)") == 1
