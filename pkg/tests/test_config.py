"""Experiment configuration parsing, defaults, and run-report rendering."""
import json

import pytest

from waferbench.config import (
    ANN_HIDDEN,
    ARCHITECTURES,
    DNN_HIDDEN,
    ConfigError,
    ExperimentConfig,
    HtmSettings,
    RunReport,
    canonical_json,
)
from waferbench.crossbar import MV_PER_UNIT
from waferbench.lstm import WINDOWED_LEARNING_RATE


def _minimal(arch="perceptron", **extra):
    base = {"architecture": arch, "train_path": "tr.txt", "test_path": "te.txt"}
    base.update(extra)
    return base


def test_from_dict_minimal_defaults():
    cfg = ExperimentConfig.from_dict(_minimal())
    assert cfg.architecture == "perceptron"
    assert cfg.epochs == 40 and cfg.seed == 0
    assert cfg.mv_per_unit == MV_PER_UNIT
    assert cfg.device.read_noise_sigma == pytest.approx(0.01)
    assert cfg.htm.bins == 8


def test_from_dict_rejects_unknown_and_missing_keys():
    with pytest.raises(ConfigError, match="unknown config key"):
        ExperimentConfig.from_dict(_minimal(learning_rte=0.01))
    with pytest.raises(ConfigError, match="missing required"):
        ExperimentConfig.from_dict({"architecture": "ann"})
    with pytest.raises(ConfigError, match="unknown key.*device"):
        ExperimentConfig.from_dict(_minimal(device={"g_mn": 1e-6}))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict("not a dict")


def test_unknown_architecture_rejected():
    with pytest.raises(ConfigError, match="unknown architecture"):
        ExperimentConfig.from_dict(_minimal(arch="cnn"))
    assert set(ARCHITECTURES) == {"perceptron", "ann", "dnn",
                                  "lstm_sequential", "lstm_windowed", "htm"}


def test_validation_of_numeric_fields():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(_minimal(epochs=0))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(_minimal(learning_rate=-0.1))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(_minimal(scale_max=0.0))


@pytest.mark.parametrize("arch,scale,rate", [
    ("perceptron", 0.5, 0.001),
    ("ann", 0.5, 0.001),
    ("dnn", 0.5, 0.001),
    ("lstm_sequential", 0.5, 0.001),
    ("lstm_windowed", 0.1, WINDOWED_LEARNING_RATE),
    ("htm", None, 0.001),
])
def test_per_architecture_resolution(arch, scale, rate):
    cfg = ExperimentConfig.from_dict(_minimal(arch))
    assert cfg.resolved_scale_max() == (pytest.approx(scale)
                                        if scale is not None else None)
    assert cfg.resolved_learning_rate() == pytest.approx(rate)


def test_explicit_overrides_beat_defaults():
    cfg = ExperimentConfig.from_dict(
        _minimal("lstm_windowed", learning_rate=0.01, scale_max=0.3))
    assert cfg.resolved_learning_rate() == pytest.approx(0.01)
    assert cfg.resolved_scale_max() == pytest.approx(0.3)
    tc = cfg.train_config()
    assert tc.learning_rate == pytest.approx(0.01)
    assert tc.epochs == 40 and tc.seed == 0


def test_network_spec_per_dense_architecture():
    assert ExperimentConfig.from_dict(_minimal("perceptron")) \
        .network_spec(152).layer_sizes == (152, 1)
    assert ExperimentConfig.from_dict(_minimal("ann")) \
        .network_spec(152).layer_sizes == (152, *ANN_HIDDEN, 1)
    assert ExperimentConfig.from_dict(_minimal("dnn")) \
        .network_spec(152).layer_sizes == (152, *DNN_HIDDEN, 1)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(_minimal("htm")).network_spec(152)


def test_lstm_config_per_recurrent_architecture():
    seq = ExperimentConfig.from_dict(_minimal("lstm_sequential")).lstm_config(152)
    assert (seq.mode, seq.hidden_dim, seq.time_steps) == ("sequential", 4, 152)
    win = ExperimentConfig.from_dict(_minimal("lstm_windowed")).lstm_config(152)
    assert (win.mode, win.input_dim) == ("windowed", 152)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(_minimal("ann")).lstm_config(152)


def test_round_trip_through_dict_and_json(tmp_path):
    cfg = ExperimentConfig.from_dict(
        _minimal("lstm_sequential", seed=3, epochs=7,
                 device={"read_noise_sigma": 0.05},
                 htm={"bins": 4}))
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again == cfg

    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.from_json_file(p) == cfg


def test_from_json_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        ExperimentConfig.from_json_file(tmp_path / "missing.json")
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        ExperimentConfig.from_json_file(p)


def test_htm_settings_build_pooler_config():
    s = HtmSettings(num_columns=64, active_columns=8)
    pc = s.pooler_config(seed=5)
    assert pc.num_columns == 64 and pc.active_columns == 8 and pc.seed == 5


def test_canonical_json_is_stable():
    a = canonical_json({"b": 1, "a": [1, 2]})
    b = canonical_json({"a": [1, 2], "b": 1})
    assert a == b
    assert a.endswith("\n")
    assert a.index('"a"') < a.index('"b"')


def test_run_report_excludes_wall_clock_from_metrics():
    rep = RunReport(architecture="ann", seed=1, config={"x": 1},
                    trace=[{"epoch": 1}], metrics={"accuracy": 0.9},
                    wall_clock_s=12.5)
    m = json.loads(rep.metrics_json())
    assert "wall_clock_s" not in m
    r = json.loads(rep.report_json())
    assert r["wall_clock_s"] == 12.5
    del r["wall_clock_s"]
    assert r == m
