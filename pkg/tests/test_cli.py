import json
import pytest

from indeldiff.cli import main
from indeldiff.config import ConfigError, config_from_dict
from indeldiff.dataset import ToySpec, generate_toy_dataset, save_jsonl


def base_config(**overrides):
    cfg = {
        "seed": 5,
        "dataset": {"toy_family": "enumerable", "atom_types": ["C", "O"], "max_nodes": 2},
        "schedule": {"T": 10},
        "model": {"hidden": 4, "layers": 1},
        "train": {"epochs": 1, "batch_size": 4, "n_max": 3},
        "sample": {"count": 3, "guidance": 0.0},
    }
    for key, value in overrides.items():
        cfg.setdefault(key, {}).update(value) if isinstance(value, dict) else cfg.__setitem__(key, value)
    return cfg


@pytest.fixture()
def workdir(tmp_path):
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(base_config()))
    return tmp_path, cfg_path


class TestConfigValidation:
    def test_unknown_root_key_named(self):
        with pytest.raises(ConfigError, match="bogus"):
            config_from_dict({"bogus": 1})

    def test_unknown_section_key_named(self):
        with pytest.raises(ConfigError, match="wv"):
            config_from_dict({"schedule": {"wv": 0.1}})

    def test_bad_values_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"schedule": {"T": 1}})
        with pytest.raises(ConfigError):
            config_from_dict({"train": {"p_min": 0.0}})
        with pytest.raises(ConfigError):
            config_from_dict({"sample": {"time_support": "sideways"}})

    def test_defaults_round_trip(self):
        cfg = config_from_dict({})
        assert cfg.schedule.T == 50
        assert cfg.schedule.w == 0.05
        assert cfg.schedule.nu_edges == 1.5
        assert cfg.train.p_min == 0.2 and cfg.train.p_max == 1.0
        assert cfg.train.lambda_edge == 2.0
        assert cfg.train.rho == 0.1
        assert cfg.sample.guidance == 2.0
        assert cfg.eval.candidates == 20 and cfg.eval.steps == 100


class TestExitCodes:
    def test_bad_config_key_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"schedule": {"bogus_key": 1}}))
        code = main(["train", "--config", str(bad), "--checkpoint", str(tmp_path / "ck.json")])
        assert code == 2
        err = json.loads(capsys.readouterr().err)
        assert err["kind"] == "config" and "bogus_key" in err["error"]

    def test_checkpoint_mismatch_exits_3(self, workdir, capsys):
        tmp_path, cfg_path = workdir
        ck = tmp_path / "ck.json"
        assert main(["train", "--config", str(cfg_path), "--checkpoint", str(ck)]) == 0
        other = dict(base_config())
        other["schedule"] = {"T": 12}
        cfg2 = tmp_path / "config2.json"
        cfg2.write_text(json.dumps(other))
        code = main([
            "sample", "--config", str(cfg2), "--checkpoint", str(ck),
            "--out", str(tmp_path / "s.jsonl"),
        ])
        assert code == 3
        assert json.loads(capsys.readouterr().err)["kind"] == "compat"

    def test_missing_input_exits_4(self, workdir, capsys):
        tmp_path, cfg_path = workdir
        code = main([
            "sample", "--config", str(cfg_path), "--checkpoint", str(tmp_path / "nope.json"),
            "--out", str(tmp_path / "s.jsonl"),
        ])
        assert code == 4

    def test_guide_on_unconditional_model_exits_3(self, workdir, capsys):
        tmp_path, cfg_path = workdir
        ck = tmp_path / "ck.json"
        main(["train", "--config", str(cfg_path), "--checkpoint", str(ck)])
        code = main([
            "sample", "--config", str(cfg_path), "--checkpoint", str(ck),
            "--out", str(tmp_path / "s.jsonl"), "--guide", "mw=20",
        ])
        assert code == 3


class TestPipelineArtifacts:
    def test_sample_diagnostics_echo_config(self, workdir):
        tmp_path, cfg_path = workdir
        ck = tmp_path / "ck.json"
        main(["train", "--config", str(cfg_path), "--checkpoint", str(ck)])
        out = tmp_path / "s.jsonl"
        diag = tmp_path / "diag.json"
        code = main([
            "sample", "--config", str(cfg_path), "--checkpoint", str(ck),
            "--out", str(out), "--diagnostics", str(diag), "--size", "2",
        ])
        assert code == 0
        payload = json.loads(diag.read_text())
        assert payload["config"]["schedule"]["T"] == 10
        assert len(payload["chains"]) == 3
        # size trajectories recorded per chain
        assert all("sizes" in c and c["sizes"][0] == 2 for c in payload["chains"])

    def test_corrupt_at_horizon_marks_deletions(self, workdir):
        tmp_path, cfg_path = workdir
        data = tmp_path / "data.jsonl"
        records = generate_toy_dataset(ToySpec(atom_types=("C", "O"), max_nodes=2))
        save_jsonl(records, data)
        out = tmp_path / "corrupted.jsonl"
        code = main([
            "corrupt", "--config", str(cfg_path), "--dataset", str(data),
            "--t", "10", "--out", str(out), "--seed", "3",
        ])
        assert code == 0
        du_count = 0
        for line in out.read_text().splitlines():
            obj = json.loads(line)
            n_del = sum(1 for a in obj["atoms"] if a == "DEL")
            assert all(a != "DEL*" for a in obj["atoms"])  # horizon: transients absorbed
            expected_n0 = len([a for a in obj["atoms"] if a != "DEL"]) + n_del - sum(
                1 for s in obj["activation"] if s > 0
            )
            du_count += n_del
        assert du_count > 0  # some records drew deletion plans

    def test_determinism_bit_identical_outputs(self, workdir):
        tmp_path, cfg_path = workdir
        ck1, ck2 = tmp_path / "ck1.json", tmp_path / "ck2.json"
        main(["train", "--config", str(cfg_path), "--checkpoint", str(ck1)])
        main(["train", "--config", str(cfg_path), "--checkpoint", str(ck2)])
        assert ck1.read_bytes() == ck2.read_bytes()
        s1, s2 = tmp_path / "s1.jsonl", tmp_path / "s2.jsonl"
        for out in (s1, s2):
            main(["sample", "--config", str(cfg_path), "--checkpoint", str(ck1), "--out", str(out)])
        assert s1.read_bytes() == s2.read_bytes()

    def test_eval_produces_json_and_csv(self, workdir):
        tmp_path, cfg_path = workdir
        ck = tmp_path / "ck.json"
        main(["train", "--config", str(cfg_path), "--checkpoint", str(ck)])
        out = tmp_path / "s.jsonl"
        main(["sample", "--config", str(cfg_path), "--checkpoint", str(ck), "--out", str(out)])
        ev = tmp_path / "eval.json"
        csv_path = tmp_path / "eval.csv"
        code = main([
            "eval", "--config", str(cfg_path), "--samples", str(out),
            "--out", str(ev), "--csv", str(csv_path),
        ])
        assert code == 0
        payload = json.loads(ev.read_text())
        assert {"validity", "avg_nc", "max_nc", "nsc"} <= set(payload["samples"])
        assert csv_path.read_text().startswith("source,metric,value")
        # plot-ready validity-by-size data accompanies the aggregates
        assert payload["validity_by_size"]
        for entry in payload["validity_by_size"].values():
            assert {"count", "validity"} == set(entry)

    def test_sample_size_sweep_records_trajectories(self, workdir):
        # the grow/shrink harness: one checkpoint driven from two latent sizes
        tmp_path, cfg_path = workdir
        ck = tmp_path / "ck.json"
        main(["train", "--config", str(cfg_path), "--checkpoint", str(ck)])
        for size in ("2", "3"):
            diag = tmp_path / f"diag{size}.json"
            code = main([
                "sample", "--config", str(cfg_path), "--checkpoint", str(ck),
                "--out", str(tmp_path / f"s{size}.jsonl"), "--diagnostics", str(diag),
                "--size", size,
            ])
            assert code == 0
            payload = json.loads(diag.read_text())
            assert all(c["sizes"][0] == int(size) for c in payload["chains"])
