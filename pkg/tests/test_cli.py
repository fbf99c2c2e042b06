import json

import numpy as np

from torusflow import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_gallery_lists_metrics(capsys):
    code, out, _ = run(capsys, "gallery")
    assert code == 0
    payload = json.loads(out)
    assert payload["metrics"][0] == "flat"
    assert payload["command"] == "gallery"
    assert len(payload["config_sha256"]) == 64


def test_gallery_describe(capsys):
    code, out, _ = run(capsys, "gallery", "--describe", "liouville", "--grid", "64")
    assert code == 0
    payload = json.loads(out)
    assert payload["max_abs_curvature"] > 1.0
    assert abs(payload["total_curvature"]) < 1e-6


def test_integrate_csv(capsys, tmp_path):
    csv_path = tmp_path / "traj.csv"
    code, out, _ = run(capsys, "integrate", "--metric", "flat", "--angle", "0.5",
                       "--horizon", "2.0", "--csv", str(csv_path))
    assert code == 0
    payload = json.loads(out)
    assert payload["config"]["horizon"] == 2.0
    header = csv_path.read_text().splitlines()
    assert header[0].startswith("# metric=flat")
    assert header[1] == "t,x,y,vx,vy,s"
    data = np.loadtxt(csv_path, delimiter=",", skiprows=2)
    assert data.shape[1] == 6


def test_rotation_field_csv_carries_config_hash(capsys, tmp_path):
    csv_path = tmp_path / "field.csv"
    code, out, _ = run(capsys, "rotation-field", "--metric", "flat",
                       "--n-angles", "4", "--horizon", "20.0", "--dt", "0.5",
                       "--csv", str(csv_path))
    assert code == 0
    payload = json.loads(out)
    header = csv_path.read_text().splitlines()[0]
    assert payload["config_sha256"] in header


def test_unknown_metric_exits_2(capsys):
    code, out, err = run(capsys, "integrate", "--metric", "nope",
                         "--angle", "0.0", "--horizon", "1.0")
    assert code == 2
    assert err.strip()


def test_usage_error_exits_2(capsys):
    assert run(capsys, "integrate", "--metric", "flat")[0] == 2
    assert run(capsys, "no-such-command")[0] == 2


def test_numerical_failure_manifest(capsys):
    # horizon too short for an escape direction: the failure is reported as
    # a manifest on stdout, not a traceback
    code, out, _ = run(capsys, "strip", "--metric", "flat", "--angle", "0.4",
                       "--horizon", "5.0")
    assert code == 1
    manifest = json.loads(out)
    assert manifest["failure"] == "NotEscaping"
    assert manifest["command"] == "strip"
    assert "config_sha256" in manifest


def test_config_hash_tracks_inputs(capsys):
    _, out1, _ = run(capsys, "gallery")
    _, out2, _ = run(capsys, "gallery")
    assert json.loads(out1)["config_sha256"] == json.loads(out2)["config_sha256"]
    _, out3, _ = run(capsys, "gallery", "--grid", "128")
    assert json.loads(out3)["config_sha256"] != json.loads(out1)["config_sha256"]


def test_csf_circle_run(capsys):
    code, out, _ = run(capsys, "csf", "--metric", "flat",
                       "--circle", "0.5,0.5,0.15", "--n", "64")
    assert code == 0
    payload = json.loads(out)
    assert payload["verdict"] == "shrank_to_point"
    assert abs(payload["extinction_time"] - 0.15 ** 2 / 2) / (0.15 ** 2 / 2) < 0.05


def test_entropy_custom_ladder(capsys, tmp_path):
    csv_path = tmp_path / "counts.csv"
    code, out, _ = run(capsys, "entropy", "--metric", "flat",
                       "--samples", "128", "--horizons", "2,4",
                       "--epsilons", "1.25,1.0", "--csv", str(csv_path))
    assert code == 0
    payload = json.loads(out)
    assert payload["sample_limited"] is False
    assert csv_path.exists()


def test_out_file_and_env_redirect(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("TORUSFLOW_OUT", str(tmp_path))
    code, out, _ = run(capsys, "gallery", "--out", "listing.json")
    assert code == 0
    target = tmp_path / "listing.json"
    assert target.exists()
    assert json.loads(target.read_text())["metrics"]
    assert str(target) in out
