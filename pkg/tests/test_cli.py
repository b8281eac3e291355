import json

import pytest

from jsqlab.cli import ExperimentConfig, build_config, load_config, main
from jsqlab.errors import ConfigurationError


class TestConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("")
        cfg = load_config(path)
        assert cfg.beta == [1.0]
        assert cfg.dt == 1e-3
        assert cfg.regen_level(1.0) == 1.0  # B defaults to max(1, level scale)
        assert cfg.seed == 0

    def test_negative_beta_names_field(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"beta": -1}))
        with pytest.raises(ConfigurationError, match="beta"):
            load_config(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"betaa": 1}))
        with pytest.raises(ConfigurationError, match="betaa"):
            load_config(path)

    def test_beta_list_accepted(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"beta": [0.5, 1, 2]}))
        assert load_config(path).beta == [0.5, 1, 2]

    def test_flag_overrides_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"seed": 5, "cycles": 100}))
        cfg = build_config(["tails", "--config", str(path), "--seed", "9"])
        assert cfg.seed == 9
        assert cfg.cycles == 100
        assert cfg.experiment == "tails"

    def test_b_default_tracks_drift(self):
        cfg = ExperimentConfig(experiment="tails", beta=[0.5])
        assert cfg.regen_level(0.5) == pytest.approx(2.0)
        cfg2 = ExperimentConfig(experiment="tails", beta=[0.5], B=1.0)
        assert cfg2.regen_level(0.5) == 1.0

    def test_invalid_fields(self):
        with pytest.raises(ConfigurationError, match="dt"):
            ExperimentConfig(experiment="tails", dt=-1.0)
        with pytest.raises(ConfigurationError, match="experiment"):
            ExperimentConfig(experiment="nope")
        with pytest.raises(ConfigurationError, match="q2_levels"):
            ExperimentConfig(experiment="tails", q2_levels=[3.0, 2.0])


@pytest.mark.slow
class TestRuns:
    def test_tails_file_contract_and_fanout(self, tmp_path):
        rc = main(["tails", "--beta", "0.5,1", "--cycles", "400", "--seed", "3",
                   "--out", str(tmp_path)])
        assert rc in (0, 1)  # statistical checks may be tight at 400 cycles
        for suffix in ("_beta0.5", "_beta1"):
            assert (tmp_path / f"tails_q1{suffix}.csv").exists()
            assert (tmp_path / f"tails_q2{suffix}.csv").exists()
        assert (tmp_path / "fits.json").exists()
        summary = json.loads((tmp_path / "tails_summary.json").read_text())
        assert summary["config"]["beta"] == [0.5, 1]
        assert "q2_slopes_increasing_in_beta" in summary["checks"]

    def test_byte_identical_reruns(self, tmp_path):
        args = ["tails", "--cycles", "300", "--seed", "7"]
        d1, d2 = tmp_path / "a", tmp_path / "b"
        main(args + ["--out", str(d1)])
        main(args + ["--out", str(d2)])
        for name in ("tails_q1.csv", "tails_q2.csv", "fits.json"):
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes()

    def test_parallel_workers_match_serial(self, tmp_path):
        base = ["tails", "--cycles", "300", "--seed", "5", "--replicas", "2"]
        d1, d2 = tmp_path / "serial", tmp_path / "parallel"
        main(base + ["--workers", "1", "--out", str(d1)])
        main(base + ["--workers", "2", "--out", str(d2)])
        for name in ("tails_q1.csv", "tails_q2.csv", "fits.json"):
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes()

    def test_env_var_output_dir(self, tmp_path, monkeypatch):
        target = tmp_path / "from_env"
        monkeypatch.setenv("JSQLAB_OUTPUT_DIR", str(target))
        main(["tails", "--cycles", "300", "--seed", "7"])
        assert (target / "tails_q2.csv").exists()

    def test_validate_writes_summary(self, tmp_path):
        rc = main(["validate", "--seed", "1", "--out", str(tmp_path)])
        summary = json.loads((tmp_path / "validate_summary.json").read_text())
        assert rc == 0
        assert summary["pass"] is True
        assert set(summary["checks"]) >= {
            "oracle_vs_mc_within_3se", "reflection_invariants",
            "regen_boundary_within_tol", "estimators_agree_3se",
            "mmn_delay_prob_within_3se", "mm1_busy_fraction_within_3se"}
        assert summary["config"]["experiment"] == "validate"

    def test_usage_error_exit_code(self):
        assert main(["tails", "--beta", "-2"]) == 2

    def test_extrema_file_contract(self, tmp_path):
        rc = main(["extrema", "--horizon", "1e4", "--seed", "1",
                   "--out", str(tmp_path)])
        assert rc == 0
        assert (tmp_path / "extrema.csv").exists()
        summary = json.loads((tmp_path / "extrema_summary.json").read_text())
        assert "q1_ratio_contained_beta=1" in summary["checks"]

    def test_prelimit_file_contract(self, tmp_path):
        rc = main(["prelimit", "--n", "100", "--beta", "1", "--cycles", "500",
                   "--horizon", "1e4", "--seed", "1", "--out", str(tmp_path)])
        assert rc in (0, 1)
        trace = (tmp_path / "prelimit_trace.csv").read_text().splitlines()
        assert trace[0] == "t,bar_q1,bar_q2,bar_q3"
        assert len(trace) > 100
        summary = json.loads((tmp_path / "prelimit_summary.json").read_text())
        assert summary["config"]["n_servers"] == 100
        assert "mean_bar_q3_small" in summary["checks"]

    def test_mmn_file_contract(self, tmp_path):
        rc = main(["mmn", "--horizon", "1e4", "--seed", "1", "--out", str(tmp_path)])
        assert rc == 0
        rows = (tmp_path / "mmn_tails.csv").read_text().splitlines()
        assert rows[0] == "level,sim_tail,exact_tail,jsq_s_tail"

    def test_hitting_file_contract(self, tmp_path):
        rc = main(["hitting", "--cycles", "400", "--seed", "1",
                   "--out", str(tmp_path)])
        assert rc in (0, 1)
        rows = (tmp_path / "hitting.csv").read_text().splitlines()
        assert rows[0] == "family,level,estimate,std_err"
        assert any(r.startswith("q2_up") for r in rows[1:])
        assert any(r.startswith("q1_down") for r in rows[1:])
