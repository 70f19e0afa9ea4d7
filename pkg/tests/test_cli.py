import json
import os

import numpy as np
import pytest

from quantformer.cli import main
from quantformer.errors import ConfigError
from quantformer.runconfig import load_config, validate_config

BASE = {
    "name": "tiny",
    "seed": 5,
    "frequency": "monthly",
    "synthetic_stocks": 12,
    "synthetic_periods": 45,
    "synthetic_signal": 1.0,
    "label_bins": 3,
    "label_fraction": 0.2,
    "hidden_dim": 8,
    "heads": 2,
    "blocks": 1,
    "epochs": 2,
    "batch_size": 32,
    "train_cutoff": 35,
    "fee_rate": 0.003,
    "initial_cash": 1000000.0,
}


def write_config(tmp_path, overrides=None, name="cfg.json"):
    data = dict(BASE)
    data["output_dir"] = str(tmp_path / "out")
    data.update(overrides or {})
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


class TestConfigValidation:
    def test_overfull_bands_rejected_before_any_work(self, tmp_path, capsys):
        path = write_config(tmp_path, {"label_bins": 3, "label_fraction": 0.4})
        assert main(["synth", "--config", path]) == 1
        assert "exceeds 1" in capsys.readouterr().err
        assert not os.path.exists(str(tmp_path / "out"))

    def test_unknown_field_rejected(self, tmp_path):
        path = write_config(tmp_path, {"learning_rat": 0.1})
        with pytest.raises(ConfigError, match="unknown config field"):
            load_config(path)

    def test_wrong_type_names_field(self):
        with pytest.raises(ConfigError, match="'epochs'"):
            validate_config({"epochs": "fifty"})

    def test_long_bins_length_checked(self):
        with pytest.raises(ConfigError, match="long_bins"):
            validate_config({"label_bins": 5, "long_bins": [1, 0, 0]})

    def test_defaults_fill_in(self):
        cfg = validate_config({})
        assert cfg.model.hidden_dim == 16
        assert cfg.model.heads == 16
        assert cfg.model.blocks == 6
        assert cfg.train.epochs == 50
        assert cfg.train.batch_size == 64
        assert cfg.train.learning_rate == pytest.approx(1e-3)
        assert cfg.strategy.fee_rate == pytest.approx(0.003)
        assert cfg.strategy.selection == (1, 0, 0)
        assert cfg.periods_per_year == 12

    def test_missing_file_and_bad_json(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(str(tmp_path / "nope.json"))
        bad = tmp_path / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(str(bad))


class TestStageGuards:
    def test_report_requires_backtest(self, tmp_path, capsys):
        path = write_config(tmp_path)
        assert main(["report", "--config", path]) == 1
        assert "missing artifact" in capsys.readouterr().err

    def test_train_requires_periods(self, tmp_path, capsys):
        path = write_config(tmp_path)
        assert main(["train", "--config", path]) == 1
        err = capsys.readouterr().err
        assert "periods.csv" in err and "synth or ingest" in err

    def test_ingest_requires_data_csv(self, tmp_path, capsys):
        path = write_config(tmp_path)
        assert main(["ingest", "--config", path]) == 1
        assert "data_csv" in capsys.readouterr().err

    def test_bad_cutoff_reported(self, tmp_path, capsys):
        path = write_config(tmp_path, {"train_cutoff": 44})
        assert main(["synth", "--config", path]) == 0
        assert main(["train", "--config", path]) == 1
        assert "train_cutoff" in capsys.readouterr().err


class TestPipeline:
    def test_full_pipeline_produces_artifacts(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "out"
        for command in ("synth", "train", "backtest", "report"):
            assert main([command, "--config", path]) == 0, command
        for artifact in ("synthetic_daily.csv", "periods.csv", "checkpoint.bin",
                         "loss_history.csv", "equity.csv", "weights.csv", "benchmark.csv",
                         "report.json", "equity.svg", "manifest.json"):
            assert (out / artifact).exists(), artifact

        report = json.loads((out / "report.json").read_text())
        assert set(report) == {"AR", "AER", "TR", "WR", "SR", "Alpha", "Beta", "MD",
                               "Sigma", "Sortino", "VaR99"}
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest) == {"synth", "train", "backtest", "report"}
        for stage in manifest.values():
            assert stage["seed"] == 5
            assert len(stage["config_sha256"]) == 64

    def test_ingest_path_equivalent_to_synth(self, tmp_path):
        from quantformer.synthetic import SyntheticSpec, generate_universe, write_daily_csv

        spec = SyntheticSpec(seed=5, n_stocks=12, n_periods=45)
        daily = tmp_path / "daily.csv"
        write_daily_csv(daily, generate_universe(spec))

        synth_cfg = write_config(tmp_path, {"output_dir": str(tmp_path / "a")}, "a.json")
        ingest_cfg = write_config(
            tmp_path, {"data_csv": str(daily), "output_dir": str(tmp_path / "b")}, "b.json")
        assert main(["synth", "--config", synth_cfg]) == 0
        assert main(["ingest", "--config", ingest_cfg]) == 0
        a = (tmp_path / "a" / "periods.csv").read_text()
        b = (tmp_path / "b" / "periods.csv").read_text()
        assert a == b

    def test_grid_search_config(self, tmp_path):
        path = write_config(tmp_path, {
            "grid": [{"hidden_dim": 8, "heads": 2, "blocks": 1, "epochs": 1}],
            "epochs": 1,
        })
        assert main(["synth", "--config", path]) == 0
        assert main(["train", "--config", path]) == 0


class TestReplicateTable1:
    def test_counts_and_null_modes(self, tmp_path, capsys):
        shared = {"synthetic_stocks": 10, "synthetic_periods": 40}
        monthly_wo = write_config(tmp_path, {**shared, "name": "Month_1"}, "m1.json")
        monthly_w = write_config(
            tmp_path, {**shared, "name": "Month_2", "include_null": True}, "m2.json")
        monthly_5 = write_config(
            tmp_path, {**shared, "name": "Month_3", "label_bins": 5, "long_bins": [1, 0, 0, 0, 0]},
            "m3.json")
        out_file = tmp_path / "table1.txt"
        assert main(["replicate-table1", "--configs", monthly_wo, monthly_w, monthly_5,
                     "--out", str(out_file)]) == 0
        text = capsys.readouterr().out
        assert out_file.read_text().strip() in text

        lines = [l for l in text.splitlines() if l.startswith("Month")]
        # sections: 40 periods -> decision times 19..38 -> 20 sections
        fields = [l.split() for l in lines]
        assert [f[4] for f in fields] == ["20", "20", "20"]
        # w/ and w/o differ only in sample count; 5-band w/o keeps all
        n = 10 * 20
        assert int(fields[0][3].replace(",", "")) == int(0.6 * n)
        assert int(fields[1][3].replace(",", "")) == n
        assert int(fields[2][3].replace(",", "")) == n
        assert [f[5] for f in fields] == ["w/o", "w/", "w/o"]

    def test_higher_frequency_means_more_samples(self, tmp_path, capsys):
        # same wall-clock span covered at increasing granularity
        monthly = write_config(
            tmp_path, {"name": "m", "synthetic_stocks": 6, "synthetic_periods": 30,
                       "frequency": "monthly"}, "fm.json")
        weekly = write_config(
            tmp_path, {"name": "w", "synthetic_stocks": 6, "synthetic_periods": 130,
                       "frequency": "weekly"}, "fw.json")
        daily = write_config(
            tmp_path, {"name": "d", "synthetic_stocks": 6, "synthetic_periods": 630,
                       "frequency": "daily"}, "fd.json")
        assert main(["replicate-table1", "--configs", monthly, weekly, daily]) == 0
        lines = [l.split() for l in capsys.readouterr().out.splitlines()
                 if l and l[0] in "mwd" and len(l.split()) == 6]
        counts = [int(f[3].replace(",", "")) for f in lines]
        assert counts[0] < counts[1] < counts[2]
