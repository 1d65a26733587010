import json
import shutil

import pytest

from podlab.cli import main
from podlab.config import (
    config_hash,
    default_config,
    delay_distribution,
    load_config,
    validate_config,
)
from podlab.errors import ConfigError


class TestConfigValidation:
    def test_default_config_validates(self):
        assert validate_config(default_config()) is not None

    def test_unknown_key_rejected(self):
        cfg = default_config()
        cfg["plant"]["spice_level"] = 11
        with pytest.raises(ConfigError, match="spice_level"):
            validate_config(cfg)

    def test_unknown_nested_key_rejected(self):
        cfg = default_config()
        cfg["design"]["limits"]["volts"] = 1.0
        with pytest.raises(ConfigError, match="volts"):
            validate_config(cfg)

    def test_missing_section_rejected(self):
        cfg = default_config()
        del cfg["channel"]
        with pytest.raises(ConfigError, match="channel"):
            validate_config(cfg)

    def test_bad_schema_version_rejected(self):
        cfg = default_config()
        cfg["schema_version"] = 99
        with pytest.raises(ConfigError, match="schema_version"):
            validate_config(cfg)

    def test_invalid_json_rejected(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="JSON"):
            load_config(p)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.json")

    def test_hash_stable_and_sensitive(self):
        a = default_config()
        b = default_config()
        assert config_hash(a) == config_hash(b)
        b["simulation"]["base_seed"] = 43
        assert config_hash(a) != config_hash(b)

    def test_unknown_delay_kind_rejected(self):
        cfg = default_config()
        cfg["channel"]["delay"] = {"kind": "carrier-pigeon"}
        with pytest.raises(ConfigError, match="delay kind"):
            delay_distribution(cfg)

    def test_packaged_default_config_matches_builder(self):
        from importlib import resources

        text = resources.files("podlab.data").joinpath("default_config.json").read_text()
        assert json.loads(text) == default_config()


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = default_config()
    # keep the CLI stage fast; the full-size ensemble runs in the
    # acceptance suite
    cfg["simulation"]["n_runs"] = 3
    cfg["simulation"]["duration_s"] = 10.0
    cfg["simulation"]["metric_window_s"] = [1.0, 10.0]
    cfg_path = d / "config.json"
    cfg_path.write_text(json.dumps(cfg, indent=2))
    return d, cfg_path, cfg


@pytest.fixture(scope="module")
def pipeline_out(workdir):
    d, cfg_path, _ = workdir
    out = d / "out"
    stages = [
        ["plant", "build"], ["channel", "measure"], ["channel", "fit"],
        ["sysid", "prbs"], ["sysid", "fit"], ["design", "run"],
        ["analyze", "bode"], ["analyze", "eig"],
        ["sim", "run"], ["sim", "ensemble"],
    ]
    for stage in stages:
        rc = main(stage + ["--config", str(cfg_path), "--out", str(out)])
        assert rc == 0, f"stage {stage} failed"
    return out


class TestCliPipeline:
    def test_all_artifacts_written(self, pipeline_out):
        expected = [
            "plant.json", "delay_log.csv", "delay_histogram.json",
            "delay_surrogate.json", "experiment_p.csv", "experiment_q.csv",
            "identified_p.json", "identified_q.json",
            "design_p.json", "design_q.json",
            "bode_plant_delay_p.csv", "bode_open_loop_p.csv",
            "bode_plant_delay_q.csv", "bode_open_loop_q.csv",
            "eigen_study.json", "trace.csv", "ensemble.json",
        ]
        for name in expected:
            assert (pipeline_out / name).exists(), name

    def test_artifacts_embed_config_hash(self, workdir, pipeline_out):
        _, _, cfg = workdir
        h = config_hash(cfg)
        payload = json.loads((pipeline_out / "design_p.json").read_text())
        assert payload["config_sha256"] == h
        first = (pipeline_out / "trace.csv").read_text().splitlines()[0]
        assert h in first

    def test_design_artifacts_report_converged_solution(self, pipeline_out):
        for tag in ("p", "q"):
            d = json.loads((pipeline_out / f"design_{tag}.json").read_text())
            assert d["fnorm_inf"] < 1e-6
            assert any(d["converged"])
            for phi in d["phase_budget"]["phi_G_deg"]:
                assert abs(phi) < 5.0

    def test_eigen_study_shows_improvement(self, pipeline_out):
        study = json.loads((pipeline_out / "eigen_study.json").read_text())
        assert study["combined"]["stable"]
        baseline = study["p_loop"]["baseline"]
        for m in study["combined"]["target_modes"]:
            nearest = min(baseline, key=lambda b: abs(b["freq_hz"] - m["freq_hz"]))
            assert m["damping_ratio"] > nearest["damping_ratio"]

    def test_ensemble_median_below_one(self, pipeline_out):
        stats = json.loads((pipeline_out / "ensemble.json").read_text())
        assert stats["n_runs"] == 3
        assert stats["median_ratio"] < 1.0

    def test_sim_run_seed_determinism(self, workdir, pipeline_out, tmp_path):
        d, cfg_path, _ = workdir
        out2 = tmp_path / "copy"
        shutil.copytree(pipeline_out, out2)
        args = ["sim", "run", "--config", str(cfg_path), "--seed", "7"]
        assert main(args + ["--out", str(pipeline_out)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        assert (pipeline_out / "trace.csv").read_bytes() == (out2 / "trace.csv").read_bytes()


class TestCliErrors:
    def test_usage_error_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["plant"])
        assert exc.value.code == 2

    def test_unknown_command_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate", "--config", "x.json"])
        assert exc.value.code == 2

    def test_missing_config_file_exits_1(self, tmp_path, capsys):
        rc = main(["plant", "build", "--config", str(tmp_path / "nope.json"),
                   "--out", str(tmp_path / "out")])
        assert rc == 1
        assert "not found" in capsys.readouterr().err

    def test_missing_artifact_names_earlier_stage(self, workdir, tmp_path, capsys):
        _, cfg_path, _ = workdir
        rc = main(["design", "run", "--config", str(cfg_path),
                   "--out", str(tmp_path / "empty")])
        assert rc == 1
        assert "run the earlier stage first" in capsys.readouterr().err

    def test_nyquist_violation_reported(self, workdir, pipeline_out, tmp_path, capsys):
        d, _, cfg = workdir
        # a 0.8 msg/s channel cannot carry the 0.45 Hz mode
        slow = json.loads(json.dumps(cfg))
        slow["channel"]["rate_hz"] = 0.8
        slow_path = tmp_path / "slow.json"
        slow_path.write_text(json.dumps(slow))
        out = tmp_path / "out"
        shutil.copytree(pipeline_out, out)
        rc = main(["design", "run", "--config", str(slow_path), "--out", str(out)])
        assert rc == 1
        assert "NY-LIMIT" in capsys.readouterr().err

    def test_podlab_out_env_var(self, workdir, tmp_path, monkeypatch):
        _, cfg_path, _ = workdir
        target = tmp_path / "env_out"
        monkeypatch.setenv("PODLAB_OUT", str(target))
        assert main(["plant", "build", "--config", str(cfg_path)]) == 0
        assert (target / "plant.json").exists()
