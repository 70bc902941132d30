import json
import os

import pytest

from branchlab import cli
from branchlab.errors import ConfigError

C_RE = 0.7071067811865476


def freq_config(outdir, seed=0):
    return {
        "schema_version": 1,
        "kind": "frequency",
        "field": {"type": "power_sum", "n": 2,
                  "terms": [{"k": 1, "c": [[C_RE, 0.0], [0.0, C_RE]]}]},
        "params": {"radii": [0.25, 0.5, 1.0], "expect_constant": 0.5,
                   "tolerance": 1e-6,
                   "quadrature": {"nr": 32, "ntheta": 64, "nsphere": 128}},
        "output_dir": outdir,
        "seed": seed,
    }


def write_config(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=2))
    return str(path)


def test_validate_ok(tmp_path):
    path = write_config(tmp_path, freq_config("out"))
    assert cli.main(["validate", path]) == cli.EXIT_OK


def test_malformed_json_names_key(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert cli.main(["run", str(path)]) == cli.EXIT_CONFIG
    err = json.loads(capsys.readouterr().err.strip())
    assert err["key"] == "json"


@pytest.mark.parametrize("mutate,key", [
    (lambda c: c.pop("output_dir"), "output_dir"),
    (lambda c: c.update(kind="nonsense"), "kind"),
    (lambda c: c["params"].update(theta=0.7), "theta"),
    (lambda c: c["params"].update(tolerance=-1.0), "tolerance"),
    (lambda c: c.update(field={"type": "sampled", "path": "missing.csv"}), "field.path"),
])
def test_validation_errors(tmp_path, capsys, mutate, key):
    cfg = freq_config("out")
    mutate(cfg)
    path = write_config(tmp_path, cfg)
    assert cli.main(["validate", path]) == cli.EXIT_CONFIG
    err = json.loads(capsys.readouterr().err.strip())
    assert err["key"] == key


def test_run_frequency_and_report(tmp_path, capsys):
    path = write_config(tmp_path, freq_config("out"))
    assert cli.main(["run", path]) == cli.EXIT_OK
    outdir = tmp_path / "out"
    assert (outdir / "manifest.json").exists()
    summary = json.loads((outdir / "summary.json").read_text())
    assert summary["status"] == "ok"
    assert cli.main(["report", str(outdir)]) == cli.EXIT_OK
    text = capsys.readouterr().out
    assert "frequency_constant" in text and "pass" in text


def test_report_missing_manifest(tmp_path):
    os.makedirs(tmp_path / "empty", exist_ok=True)
    assert cli.main(["report", str(tmp_path / "empty")]) == cli.EXIT_NUMERICAL


def test_manifest_complete(tmp_path):
    path = write_config(tmp_path, freq_config("out"))
    cli.main(["run", path])
    outdir = tmp_path / "out"
    manifest = json.loads((outdir / "manifest.json").read_text())
    listed = {e["path"] for e in manifest["files"]}
    on_disk = {f for f in os.listdir(outdir) if f != "manifest.json"}
    assert listed == on_disk
    import hashlib

    for entry in manifest["files"]:
        data = (outdir / entry["path"]).read_bytes()
        assert hashlib.sha256(data).hexdigest() == entry["sha256"]


def test_determinism_byte_identical(tmp_path):
    path = write_config(tmp_path, freq_config("out_a"))
    cli.main(["run", path])
    cfg_b = freq_config("out_b")
    path_b = write_config(tmp_path, cfg_b, "config_b.json")
    cli.main(["run", path_b])
    for name in ("frequency_profile.csv", "summary.json", "frequency.svg"):
        a = (tmp_path / "out_a" / name).read_bytes()
        b = (tmp_path / "out_b" / name).read_bytes()
        assert a == b


def test_monotonicity_kind_with_control(tmp_path):
    cfg = {
        "schema_version": 1,
        "kind": "monotonicity",
        "field": {"type": "power_sum", "n": 2,
                  "terms": [{"k": 1, "c": [[C_RE, 0.0], [0.0, C_RE]]},
                            {"k": 5, "c": [[0.2, 0.0], [0.0, 0.2]]}]},
        "params": {"radii_range": [0.05, 0.9], "nradii": 12, "n_random": 2,
                   "include_control": True,
                   "quadrature": {"nr": 24, "ntheta": 48, "nsphere": 96}},
        "output_dir": "out_mono",
        "seed": 3,
    }
    path = write_config(tmp_path, cfg)
    assert cli.main(["run", path]) == cli.EXIT_OK
    summary = json.loads((tmp_path / "out_mono" / "summary.json").read_text())
    names = {c["name"]: c["status"] for c in summary["checks"]}
    assert names["monotone_configured_field"] == "pass"
    assert names["control_violates"] == "pass"


def test_decay_kind(tmp_path):
    cfg = {
        "schema_version": 1,
        "kind": "decay",
        "field": {"type": "power_sum", "n": 2,
                  "terms": [{"k": 1, "c": [[C_RE, 0.0], [0.0, C_RE]]},
                            {"k": 3, "c": [[0.02 * C_RE, 0.0], [0.0, 0.02 * C_RE]]}]},
        "params": {"k": 1, "theta": 0.125, "j_max": 2, "expect_ratio": 0.015625,
                   "quadrature": {"nr": 24, "ntheta": 48, "nsphere": 96}},
        "output_dir": "out_decay",
        "seed": 0,
    }
    path = write_config(tmp_path, cfg)
    assert cli.main(["run", path]) == cli.EXIT_OK
    outdir = tmp_path / "out_decay"
    run_data = json.loads((outdir / "decay_run.json").read_text())
    assert run_data["outcome"] == "decay"
    assert (outdir / "decay_loglog.svg").exists()


def test_full_pipeline_stage_error_exit_code(tmp_path):
    # corollaries stage needs a perturbation term; a single-term field makes
    # that stage fail while the others keep running
    cfg = {
        "schema_version": 1,
        "kind": "full-pipeline",
        "field": {"type": "power_sum", "n": 2,
                  "terms": [{"k": 1, "c": [[C_RE, 0.0], [0.0, C_RE]]}]},
        "params": {"stages": ["frequency", "corollaries"],
                   "radii": [0.25, 0.5],
                   "quadrature": {"nr": 16, "ntheta": 32, "nsphere": 64}},
        "output_dir": "out_pipe",
        "seed": 0,
    }
    path = write_config(tmp_path, cfg)
    assert cli.main(["run", path]) == cli.EXIT_NUMERICAL
    summary = json.loads((tmp_path / "out_pipe" / "summary.json").read_text())
    assert summary["stages"]["frequency"]["status"] == "ok"
    assert summary["stages"]["corollaries"]["status"] == "error"


def test_threads_env(monkeypatch):
    monkeypatch.setenv("BRANCHLAB_THREADS", "4")
    assert cli.thread_count() == 4
    monkeypatch.setenv("BRANCHLAB_THREADS", "bogus")
    assert cli.thread_count() == 1
    out = cli._pmap(lambda x: x * x, [1, 2, 3])
    assert out == [1, 4, 9]


def test_build_field_types(tmp_path):
    f1 = cli.build_field({"type": "power_sum", "n": 2,
                          "terms": [{"k": 2, "c": [[1.0, 0.0]]}]})
    assert f1.n == 2 and f1.m == 1
    f2 = cli.build_field({"type": "branch_polynomial", "n": 2,
                          "coeffs": [[-0.01, 0.0], [0.0, 0.0], [1.0, 0.0]]})
    assert f2.m == 2
    with pytest.raises(ConfigError):
        cli.build_field({"type": "alien"})
