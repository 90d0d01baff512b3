"""Shared fixtures: the generated dataset and the trained models that both
the integration tests and the acceptance suite reuse.

Training fixtures are session-scoped because they are the expensive part;
everything downstream treats the returned objects as read-only.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import pytest

from waferbench import dense, lstm, synthetic
from waferbench.dataset import scale_inputs

SEEDS = (0, 1, 2)
MILESTONES = (25, 40, 55)


@pytest.fixture(scope="session")
def wafer_ds():
    return synthetic.generate_wafer_like()


@pytest.fixture(scope="session")
def sc05(wafer_ds):
    return scale_inputs(wafer_ds, 0.5)


@pytest.fixture(scope="session")
def sc01(wafer_ds):
    return scale_inputs(wafer_ds, 0.1)


@dataclass
class SeqRun:
    accuracies: dict        # epoch -> test accuracy
    model_at_40: lstm.LstmModel
    wall_seconds: float


@pytest.fixture(scope="session")
def seq_runs(sc05):
    """Sequential training, seeds 0-2, milestone snapshots from one pass."""
    cfg = lstm.LstmConfig.sequential(sc05.series_length, hidden_dim=4)
    runs = {}
    for seed in SEEDS:
        snaps = {}

        def keep(epoch, model):
            if epoch in MILESTONES:
                snaps[epoch] = model

        t0 = time.perf_counter()
        lstm.train_lstm(cfg, sc05.train,
                        lstm.default_train_config(cfg, epochs=max(MILESTONES),
                                                  seed=seed),
                        on_epoch_end=keep)
        wall = time.perf_counter() - t0
        accs = {ep: lstm.evaluate_lstm(m, sc05.test).accuracy
                for ep, m in snaps.items()}
        runs[seed] = SeqRun(accs, snaps[40], wall)
    return runs


@pytest.fixture(scope="session")
def win_runs(sc01):
    """Windowed training, seeds 0-2, accuracies at 40 and 100 epochs."""
    cfg = lstm.LstmConfig.windowed(sc01.series_length)
    runs = {}
    for seed in SEEDS:
        snaps = {}

        def keep(epoch, model):
            if epoch in (40, 100):
                snaps[epoch] = model

        lstm.train_lstm(cfg, sc01.train,
                        lstm.default_train_config(cfg, epochs=100, seed=seed),
                        on_epoch_end=keep)
        runs[seed] = {ep: lstm.evaluate_lstm(m, sc01.test).accuracy
                      for ep, m in snaps.items()}
    return runs


@pytest.fixture(scope="session")
def perceptron_runs(sc05):
    spec = dense.NetworkSpec((sc05.series_length, 1), ("tanh",))
    at_40 = {}
    for seed in SEEDS:
        params, _ = dense.train(spec, sc05.train,
                                dense.TrainConfig(epochs=40, seed=seed))
        at_40[seed] = dense.evaluate(spec, params, sc05.test).accuracy
    params400, _ = dense.train(spec, sc05.train,
                               dense.TrainConfig(epochs=400, seed=0))
    at_400 = dense.evaluate(spec, params400, sc05.test).accuracy
    return {"at_40": at_40, "at_400_seed0": at_400}


@pytest.fixture(scope="session")
def dense_loss_runs(sc05):
    """Final-epoch mean training loss for the two multi-layer dense nets."""
    out = {}
    for name, sizes in (("ann", (sc05.series_length, 300, 1)),
                        ("dnn", (sc05.series_length, 300, 50, 100, 1))):
        spec = dense.NetworkSpec(sizes, ("tanh",) * (len(sizes) - 1))
        losses = []
        for seed in SEEDS:
            _, trace = dense.train(spec, sc05.train,
                                   dense.TrainConfig(epochs=40, seed=seed))
            losses.append(trace[-1].mean_loss)
        out[name] = losses
    return out
