import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from adaptive_lqr.errors import ConfigError
from adaptive_lqr.harness import cli, run as run_module
from adaptive_lqr.harness.config import (OUTPUT_DIR_ENV, ExperimentConfig, config_from_dict,
                                         load_config, preset, replicate_seed, splitmix64,
                                         stream_seeds)
from adaptive_lqr.harness.run import run_experiment
from adaptive_lqr.policies import FixedGainPolicy, optimal_policy
from adaptive_lqr.system import NoiseModel, draw_noise, simulate


def _small(tmp_path, **kw):
    base = dict(system="reference", policy={"kind": "rce", "sigma0": 0.1}, horizon=2000, replicates=3,
                seed=7, decomposition_horizons=[100, 1000], outputs=str(tmp_path / "out"))
    base.update(kw)
    return config_from_dict(base)


def test_splitmix_oracle():
    # reference value of the splitmix64 finalizer at 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert replicate_seed(5, 0) == 5 ^ 0xE220A8397B1DCDAF
    assert len({replicate_seed(0, i) for i in range(1000)}) == 1000
    s = stream_seeds(123)
    assert len(set(s.values())) == 3 and s == stream_seeds(123)


def test_config_validation():
    with pytest.raises(ConfigError):
        config_from_dict({"horizon": 10, "colour": "blue"})
    with pytest.raises(ConfigError):
        config_from_dict({"gamma": 1.0}).validate()
    with pytest.raises(ConfigError):
        config_from_dict({"policy": {"kind": "bandit"}}).validate()
    with pytest.raises(ConfigError):
        config_from_dict({"policy": {"kind": "gce", "side": {"kind": "support",
                                                             "file": "missing.yaml"}}}).validate()
    with pytest.raises(ConfigError):
        config_from_dict({"system": "nope"}).dynamics()
    with pytest.raises(ConfigError):
        preset("no-such-preset")
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.yaml")
    assert ExperimentConfig().validate().gamma == 1.2


def test_yaml_round_trip(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump({"system": "sparse", "policy": {"kind": "gce"}, "horizon": 500,
                                    "replicates": 2, "outputs": "res"}))
    cfg = load_config(path)
    assert cfg.horizon == 500 and cfg.policy["kind"] == "gce"
    assert cfg.output_dir() == tmp_path / "res"
    assert cfg.digest() == load_config(path).digest()


def test_output_dir_environment_override(tmp_path, monkeypatch):
    cfg = _small(tmp_path)
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "elsewhere"))
    assert cfg.output_dir() == tmp_path / "elsewhere"


def test_results_do_not_depend_on_worker_count(tmp_path):
    one = run_experiment(_small(tmp_path, outputs=str(tmp_path / "a"), workers=1))
    three = run_experiment(_small(tmp_path, outputs=str(tmp_path / "b"), workers=3))
    assert one.config_hash == three.config_hash
    for name in ("regret.csv", "estimation.csv", "decomposition.csv", "summary.csv"):
        assert one.files[name].read_bytes() == three.files[name].read_bytes()
    rows = list(csv.DictReader(io.StringIO(one.files["decomposition.csv"].read_text())))
    assert len(rows) == 6
    assert max(float(r["relative_residual"]) for r in rows) <= 1e-6
    assert (tmp_path / "a" / "plot_curves.py").exists()


def test_optimal_preset_writes_zero_regret(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))
    record = run_experiment(preset("optimal", horizon=1000, replicates=2))
    rows = list(csv.DictReader(io.StringIO(record.files["regret.csv"].read_text())))
    assert rows and all(float(r["regret"]) == 0.0 for r in rows)


def test_gce_outputs_include_p0_distance(tmp_path):
    record = run_experiment(_small(tmp_path, system="sparse", policy={"kind": "gce"}, replicates=1))
    header = record.files["estimation.csv"].read_text().splitlines()[0].split(",")
    assert "p0_distance" in header and "scaled_sq_error" in header


def test_failing_replicate_is_recorded(tmp_path, monkeypatch):
    real = run_module.build_policy

    def flaky(cfg, theta0, cost, seeds):
        if seeds == stream_seeds(replicate_seed(cfg.seed, 1)):
            raise RuntimeError("boom")
        return real(cfg, theta0, cost, seeds)

    monkeypatch.setattr(run_module, "build_policy", flaky)
    record = run_experiment(_small(tmp_path))
    assert [r["index"] for r in record.failures] == [1]
    assert "boom" in record.failures[0]["error"]
    manifest = json.loads(record.files["manifest.json"].read_text())
    assert manifest["replicates"][1]["error"].startswith("RuntimeError")


def test_cli_run(tmp_path, capsys):
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump({"horizon": 300, "replicates": 1}))
    assert cli.main(["run", str(path), "--output-dir", str(tmp_path / "cli")]) == 0
    assert (tmp_path / "cli" / "regret.csv").exists()
    assert "wrote" in capsys.readouterr().out


def test_cli_run_needs_a_config():
    with pytest.raises(SystemExit):
        cli.main(["run"])


def test_cli_verify_and_injected_bug(capsys):
    assert cli.main(["verify"]) == 0
    assert "verify: PASS" in capsys.readouterr().out
    assert cli.main(["verify", "--inject-bug"]) == 1
    out = capsys.readouterr().out
    assert "[FAIL] decomposition identity" in out


def test_cli_geometry(tmp_path):
    system = tmp_path / "sys.yaml"
    system.write_text(yaml.safe_dump({"a": [[0.0, 0.0], [0.0, 0.0]], "b": [[1.0, 0.0], [0.0, 1.0]]}))
    out = tmp_path / "geo.json"
    assert cli.main(["geometry", "--theta0", str(system), "--samples", "20", "--output", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["p0_dimension"] == 4 and report["tangent_dimension"] == 4


def test_cli_decompose(tmp_path, capsys, reference):
    theta, cost = reference
    noise = draw_noise(NoiseModel(np.eye(3), seed=1), 400)
    traj = simulate(theta, cost, FixedGainPolicy(np.zeros((3, 3))), noise)
    path = tmp_path / "traj.csv"
    path.write_text(traj.to_csv())
    assert cli.main(["decompose", "--trajectory", str(path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["n"] == 400 and out["relative_residual"] <= 1e-8
    opt = simulate(theta, cost, optimal_policy(theta, cost), noise)
    assert out["regret"] == pytest.approx(traj.costs.sum() - opt.costs.sum(), rel=1e-9)


def test_cli_reports_library_errors(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump({"horizon": 0}))
    assert cli.main(["run", str(path)]) == 2
    assert "error:" in capsys.readouterr().err


@pytest.mark.parametrize("name", ["reference-rce.yaml", "sparse-gce.yaml"])
def test_shipped_configs_validate(name):
    cfg = load_config(Path(__file__).parent.parent / "configs" / name).validate()
    assert cfg.horizon == 100_000 and cfg.replicates == 10
