"""
Tests for configuration models and worker defaults.
"""

import pytest
from pydantic import ValidationError

from hublab_config import (
    PSI_THRESHOLDS,
    WORKERS_ENV,
    BuildConfig,
    ClusterConfig,
    RunManifest,
    default_sync_count,
    default_workers,
)
from hublab_errors import Algorithm, GraphClass, GraphFormat


class TestWorkerDefault:
    def test_environment_wins(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "3")
        assert default_workers() == 3

    def test_falls_back_to_cpu_count(self, monkeypatch, mocker):
        monkeypatch.delenv(WORKERS_ENV, raising=False)
        mocker.patch("hublab_config.os.cpu_count", return_value=6)
        assert default_workers() == 6

    @pytest.mark.parametrize("raw", ["zero", "0", "-2"])
    def test_bad_environment_value_is_ignored(self, monkeypatch, mocker, raw):
        monkeypatch.setenv(WORKERS_ENV, raw)
        mocker.patch("hublab_config.os.cpu_count", return_value=None)
        assert default_workers() == 1


class TestClusterConfig:
    @pytest.mark.parametrize("n, syncs", [(0, 1), (1, 1), (8, 1), (9, 2), (64, 2), (65, 3)])
    def test_default_sync_count(self, n, syncs):
        assert default_sync_count(n) == syncs
        assert ClusterConfig().syncs_for(n) == syncs

    def test_explicit_sync_count(self):
        assert ClusterConfig(sync_count=5).syncs_for(10**6) == 5

    def test_graph_class_threshold(self):
        cfg = ClusterConfig.for_graph_class(GraphClass.ROAD, q=4)
        assert cfg.psi_threshold == PSI_THRESHOLDS[GraphClass.ROAD]
        assert cfg.q == 4

    @pytest.mark.parametrize(
        "fields",
        [{"q": 0}, {"beta": 1.0}, {"psi_threshold": -1}, {"eta": -1}, {"sync_count": 0}],
    )
    def test_rejects_out_of_range(self, fields):
        with pytest.raises(ValidationError):
            ClusterConfig(**fields)

    def test_build_config_alpha_must_exceed_one(self):
        with pytest.raises(ValidationError):
            BuildConfig(workers=1, alpha=1.0)


class TestRunManifest:
    def make(self, **overrides):
        fields = {
            "input_path": "g.gr",
            "input_format": GraphFormat.DIMACS,
            "algorithm": Algorithm.HYBRID,
            "labels_path": "",
            "shards_dir": "out",
            "graph_digest": "ab",
            "ranking_digest": "cd",
            "build": BuildConfig(workers=2),
            "cluster": ClusterConfig(q=3, psi_threshold=250),
        }
        fields.update(overrides)
        return RunManifest(**fields)

    def test_write_then_read(self, tmp_path):
        path = str(tmp_path / "run.json")
        manifest = self.make()
        manifest.write(path)
        assert RunManifest.read(path) == manifest

    def test_samples_must_be_positive(self):
        with pytest.raises(ValidationError):
            self.make(samples=0)
