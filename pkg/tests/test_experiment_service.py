import json

import numpy as np
import pandas as pd
import pytest

from src.models.report_model import MetricsRow
from src.models.schemas import Algorithm, ArchFamily
from src.services.experiment_service import (
    CsvWriter, ExperimentService, build_architecture, evaluate_checkpoint, load_data, load_run_config, run_experiment,
    summarize, train_config, validate_run_config,
)
from src.models.training_model import EpochMetrics
from src.utils.config import settings
from src.utils.errors import ConfigurationError


class TestRunConfig:
    def test_ini_sections_and_overrides(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text("[run]\nalgorithm = bp\ndataset = blobs\nseeds = 1, 2\n\n[train]\nlr = 0.05\nepochs = 3\n")
        cfg = load_run_config(path, epochs=1)
        assert cfg.algorithm == Algorithm.BP
        assert cfg.seeds == [1, 2]
        assert cfg.lr == 0.05
        assert cfg.epochs == 1

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text("[run]\nlearning_speed = 3\n")
        with pytest.raises(ConfigurationError):
            load_run_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_run_config(tmp_path / "absent.ini")

    def test_family_decay_defaults(self):
        assert train_config(load_run_config(arch="rnn"), 0).decay_epochs == (300, 450)
        assert train_config(load_run_config(), 4).decay_epochs == (60, 90)

    @pytest.mark.parametrize("arch, epochs", [("fc", 100), ("cnn", 100), ("rnn", 500)])
    def test_family_epoch_defaults(self, arch, epochs):
        cfg = load_run_config(arch=arch)
        assert cfg.epochs == epochs
        assert train_config(cfg, 0).epochs == epochs

    def test_explicit_epochs_win(self):
        assert load_run_config(arch="rnn", epochs=7).epochs == 7

    def test_settings_supply_seed_and_worker_defaults(self, monkeypatch):
        monkeypatch.setattr(settings, "default_seed", 10)
        monkeypatch.setattr(settings, "workers", 3)
        cfg = load_run_config()
        assert cfg.seeds == [10, 11, 12]
        assert cfg.workers == 3

    def test_pepita_on_rnn_is_accepted(self):
        validate_run_config(load_run_config(arch="rnn", algorithm="pepita"))

    def test_rejects_alignment_outside_fc(self):
        with pytest.raises(ConfigurationError):
            validate_run_config(load_run_config(arch="rnn", record_alignment=True))


class TestData:
    def test_blobs_split_and_limit(self):
        train, test = load_data(load_run_config(dataset="blobs", limit=100))
        assert (len(train), len(test)) == (100, 200)
        arch = build_architecture(load_run_config(dataset="blobs"), train)
        assert arch[0].fan_in == 2 and arch[-1].fan_out == 2

    def test_sine_series(self):
        cfg = load_run_config(arch="rnn", dataset="sine", hidden=8)
        train, test = load_data(cfg)
        assert len(train) + len(test) == 600 - 24
        arch = build_architecture(cfg, train)
        assert arch[0].fan_out == 8


def test_summary_statistics():
    finals = {0: EpochMetrics(epoch=-1, loss=0.2, accuracy=0.9), 1: EpochMetrics(epoch=-1, loss=0.4, accuracy=0.8)}
    summary = summarize(finals)
    assert summary["accuracy"]["mean"] == pytest.approx(0.85)
    assert summary["accuracy"]["std"] == pytest.approx(np.std([0.9, 0.8], ddof=1))
    assert "rrse" not in summary


def test_csv_writer_appends_one_header(tmp_path):
    writer = CsvWriter(tmp_path / "rows.csv", ["a", "b"])
    writer.write([{"a": 1, "b": 2}])
    writer.write([{"a": 3, "b": 4}])
    assert pd.read_csv(tmp_path / "rows.csv").to_dict(orient="list") == {"a": [1, 3], "b": [2, 4]}


class TestRunExperiment:
    def test_blobs_run_writes_outputs(self, tmp_path):
        cfg = load_run_config(dataset="blobs", epochs=2, seeds="0,1", lr=0.05, batch_size=32, dropout=0.0,
                              record_alignment=True, workers=2, out=str(tmp_path))
        result = run_experiment(cfg)

        metrics = pd.read_csv(result.metrics_path)
        assert list(metrics.columns) == list(MetricsRow.COLUMNS)
        assert len(metrics) == 2 * 2 * 2
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["final_test"]["accuracy"]["values"] == result.summary["final_test"]["accuracy"]["values"]
        assert len(summary["final_test"]["accuracy"]["values"]) == 2
        alignment = pd.read_csv(result.alignment_path)
        assert set(alignment.epoch) == {0, 1, 2}

        restored = evaluate_checkpoint(result.model_paths[0], cfg)
        assert restored.accuracy == summary["final_test"]["accuracy"]["values"][0]

    @pytest.mark.parametrize("algorithm", ["bp", "pepita"])
    def test_recurrent_run(self, tmp_path, algorithm):
        cfg = load_run_config(arch=ArchFamily.RNN, algorithm=algorithm, dataset="sine", hidden=8, epochs=1, seeds="3",
                              batch_size=64, out=str(tmp_path))
        summary = run_experiment(cfg).summary
        assert {"rrse", "corr"} <= set(summary["final_test"])


class TestExperimentService:
    def test_submit_then_execute(self, tmp_path):
        service = ExperimentService()
        cfg = load_run_config(dataset="blobs", epochs=1, seeds="0", dropout=0.0, out=str(tmp_path))
        job = service.submit(cfg)
        assert job.status == "queued"
        assert service.execute(job.run_id, cfg).status == "completed"
        assert service.status(job.run_id).summary_path.endswith("summary.json")
        assert [j.run_id for j in service.jobs()] == [job.run_id]

    def test_submit_rejects_invalid_combination(self):
        with pytest.raises(ConfigurationError):
            ExperimentService().submit(load_run_config(arch="rnn", record_alignment=True))

    def test_lab_error_marks_run_failed(self, tmp_path):
        service = ExperimentService()
        cfg = load_run_config(arch="rnn", dataset=str(tmp_path / "absent.csv"), epochs=1, seeds="0",
                              out=str(tmp_path / "run"))
        job = service.submit(cfg)
        failed = service.execute(job.run_id, cfg)
        assert failed.status == "failed"
        assert failed.error_message.startswith("config:")

    def test_unknown_run(self):
        assert ExperimentService().status("nope") is None
