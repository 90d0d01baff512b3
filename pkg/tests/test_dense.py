"""Dense feed-forward nets: forward/backward oracles, SGD mechanics, metrics."""
import math

import numpy as np
import pytest

from waferbench import dense
from waferbench.dense import (
    Metrics,
    NetworkSpec,
    Parameters,
    TrainConfig,
    TrainingDiverged,
    activate,
    activate_prime_from_output,
    backward,
    classify,
    clip_gradients,
    epoch_order,
    evaluate,
    forward,
    init_params,
    predict_batch,
    sgd_step,
    train,
)
from waferbench.dataset import TimeSeriesRecord


def _random_params(spec, seed, bias_scale=0.3):
    """init_params plus nonzero biases so bias gradients get exercised."""
    rng = np.random.default_rng(seed)
    base = init_params(spec, seed)
    biases = tuple(rng.normal(scale=bias_scale, size=b.shape) for b in base.biases)
    return Parameters(base.weights, biases)


# --- activations ---------------------------------------------------------

def test_activate_values():
    z = np.array([-1.5, 0.0, 0.7])
    np.testing.assert_allclose(activate("tanh", z), np.tanh(z))
    np.testing.assert_allclose(activate("linear", z), z)
    np.testing.assert_allclose(
        activate("sigmoid", z), [1.0 / (1.0 + math.exp(-v)) for v in z])
    with pytest.raises(ValueError):
        activate("relu", z)


@pytest.mark.parametrize("kind", ["tanh", "sigmoid", "linear"])
def test_activate_prime_matches_finite_difference(kind):
    z = np.linspace(-2.0, 2.0, 9)
    h = 1e-6
    fd = (activate(kind, z + h) - activate(kind, z - h)) / (2 * h)
    analytic = activate_prime_from_output(kind, activate(kind, z))
    np.testing.assert_allclose(analytic, fd, rtol=1e-6, atol=1e-9)


# --- spec and init -------------------------------------------------------

def test_network_spec_validation():
    with pytest.raises(ValueError):
        NetworkSpec((5,), ())
    with pytest.raises(ValueError):
        NetworkSpec((5, 0), ("tanh",))
    with pytest.raises(ValueError):
        NetworkSpec((5, 3), ("tanh", "tanh"))
    with pytest.raises(ValueError):
        NetworkSpec((5, 3), ("softmax",))
    spec = NetworkSpec((152, 300, 1), ("tanh", "tanh"))
    assert spec.num_layers == 2
    assert spec.input_size == 152 and spec.output_size == 1


def test_init_params_bounds_and_determinism():
    spec = NetworkSpec((9, 4, 2), ("tanh", "tanh"))
    p = init_params(spec, seed=3)
    assert p.weights[0].shape == (4, 9) and p.weights[1].shape == (2, 4)
    assert np.all(np.abs(p.weights[0]) <= 1.0 / math.sqrt(9))
    assert np.all(np.abs(p.weights[1]) <= 1.0 / math.sqrt(4))
    assert all(np.all(b == 0.0) for b in p.biases)
    q = init_params(spec, seed=3)
    for a, b in zip(p.weights, q.weights):
        np.testing.assert_array_equal(a, b)
    r = init_params(spec, seed=4)
    assert not np.array_equal(p.weights[0], r.weights[0])


# --- forward oracle ------------------------------------------------------

def test_forward_matches_hand_computation():
    spec = NetworkSpec((2, 2, 1), ("tanh", "tanh"))
    w0 = np.array([[0.3, -0.2], [0.5, 0.1]])
    b0 = np.array([0.05, -0.1])
    w1 = np.array([[0.7, -0.4]])
    b1 = np.array([0.2])
    params = Parameters((w0, w1), (b0, b1))
    x = np.array([0.6, -0.9])

    h1 = math.tanh(0.3 * 0.6 + (-0.2) * (-0.9) + 0.05)
    h2 = math.tanh(0.5 * 0.6 + 0.1 * (-0.9) + (-0.1))
    out = math.tanh(0.7 * h1 + (-0.4) * h2 + 0.2)

    y, cache = forward(spec, params, x)
    assert y.shape == (1,)
    assert y[0] == pytest.approx(out, abs=1e-14)
    assert len(cache) == 3
    np.testing.assert_allclose(cache[1], [h1, h2], atol=1e-14)


def test_forward_rejects_wrong_shape():
    spec = NetworkSpec((3, 1), ("tanh",))
    with pytest.raises(ValueError):
        forward(spec, init_params(spec, 0), np.zeros(4))


def test_forward_without_bias_ignores_bias_vectors():
    spec = NetworkSpec((3, 1), ("linear",), use_bias=False)
    params = Parameters((np.array([[1.0, 2.0, 3.0]]),), (np.array([99.0]),))
    y, _ = forward(spec, params, np.array([1.0, 1.0, 1.0]))
    assert y[0] == pytest.approx(6.0)


# --- backward vs central finite differences ------------------------------

def _fd_gradients(spec, params, x, target, step=1e-6):
    target = np.atleast_1d(np.asarray(target, dtype=np.float64))

    def loss(p):
        out, _ = forward(spec, p, x)
        r = out - target
        return 0.5 * float(r @ r)

    def perturbed(layer, idx, eps, which):
        ws = [w.copy() for w in params.weights]
        bs = [b.copy() for b in params.biases]
        (ws if which == "w" else bs)[layer][idx] += eps
        return Parameters(tuple(ws), tuple(bs))

    grad_w, grad_b = [], []
    for k, w in enumerate(params.weights):
        g = np.zeros_like(w)
        for idx in np.ndindex(*w.shape):
            g[idx] = (loss(perturbed(k, idx, step, "w"))
                      - loss(perturbed(k, idx, -step, "w"))) / (2 * step)
        grad_w.append(g)
    for k, b in enumerate(params.biases):
        g = np.zeros_like(b)
        for idx in np.ndindex(*b.shape):
            g[idx] = (loss(perturbed(k, idx, step, "b"))
                      - loss(perturbed(k, idx, -step, "b"))) / (2 * step)
        grad_b.append(g)
    return grad_w, grad_b


CASES = [
    ((3, 1), ("tanh",)),
    ((3, 1), ("linear",)),
    ((3, 1), ("sigmoid",)),
    ((4, 3, 1), ("tanh", "tanh")),
    ((3, 4, 2), ("sigmoid", "linear")),
    ((2, 3, 2, 1), ("tanh", "sigmoid", "tanh")),
]


@pytest.mark.parametrize("sizes,acts", CASES)
def test_backward_matches_finite_differences(sizes, acts):
    spec = NetworkSpec(sizes, acts)
    rng = np.random.default_rng(hash((sizes, acts)) % 2**32)
    for trial in range(3):
        params = _random_params(spec, seed=trial + 1)
        x = rng.uniform(-1, 1, size=spec.input_size)
        target = rng.choice([-1.0, 1.0], size=spec.output_size)
        _, cache = forward(spec, params, x)
        gw, gb = backward(spec, params, cache, target)
        fw, fb = _fd_gradients(spec, params, x, target)
        for a, f in zip(gw + gb, fw + fb):
            denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-8)
            assert float(np.max(np.abs(a - f) / denom)) < 1e-5


def test_backward_rejects_stale_cache():
    spec = NetworkSpec((3, 1), ("tanh",))
    params = init_params(spec, 0)
    with pytest.raises(ValueError):
        backward(spec, params, [np.zeros(3)], 1.0)          # wrong cache depth
    bad_cache = [np.zeros(4), np.zeros(1)]
    with pytest.raises(ValueError):
        backward(spec, params, bad_cache, 1.0)               # wrong layer shape


# --- clipping and SGD ----------------------------------------------------

def test_clip_gradients_scales_in_place():
    g1 = np.array([3.0, 0.0])
    g2 = np.array([[0.0, 4.0]])
    norm = clip_gradients([g1, g2], max_norm=2.5)
    assert norm == pytest.approx(5.0)
    total = math.sqrt(float(g1 @ g1) + float(np.sum(g2 * g2)))
    assert total == pytest.approx(2.5)


def test_clip_gradients_noop_below_threshold_or_disabled():
    g = np.array([0.3, 0.4])
    assert clip_gradients([g], max_norm=10.0) == pytest.approx(0.5)
    np.testing.assert_allclose(g, [0.3, 0.4])
    assert clip_gradients([g], max_norm=None) == pytest.approx(0.5)
    np.testing.assert_allclose(g, [0.3, 0.4])


def test_sgd_step_arithmetic_and_divergence_guard():
    spec = NetworkSpec((2, 1), ("linear",))
    params = Parameters((np.array([[1.0, 2.0]]),), (np.array([0.5]),))
    new = sgd_step(params, ([np.array([[10.0, 20.0]])], [np.array([5.0])]), 0.1)
    np.testing.assert_allclose(new.weights[0], [[0.0, 0.0]])
    np.testing.assert_allclose(new.biases[0], [0.0])
    with pytest.raises(TrainingDiverged):
        sgd_step(params, ([np.array([[np.nan, 0.0]])], [np.array([0.0])]), 0.1)


# --- epoch ordering ------------------------------------------------------

def test_epoch_order_deterministic_and_complete():
    a = epoch_order(seed=5, epoch=3, n=50, shuffle=True)
    b = epoch_order(seed=5, epoch=3, n=50, shuffle=True)
    np.testing.assert_array_equal(a, b)
    assert sorted(a.tolist()) == list(range(50))
    c = epoch_order(seed=5, epoch=4, n=50, shuffle=True)
    assert not np.array_equal(a, c)
    np.testing.assert_array_equal(
        epoch_order(seed=5, epoch=3, n=6, shuffle=False), np.arange(6))


def test_epoch_order_independent_of_total_epochs():
    # the order for epoch k must not depend on how long the run will be,
    # so a short run is a prefix of a longer one with the same seed
    for epoch in (1, 2, 7):
        np.testing.assert_array_equal(
            epoch_order(seed=9, epoch=epoch, n=20, shuffle=True),
            epoch_order(seed=9, epoch=epoch, n=20, shuffle=True))


def _toy_records(n=40, seed=0):
    """Linearly separable toy set: label tracks the mean of the series."""
    rng = np.random.default_rng(seed)
    recs = []
    for i in range(n):
        label = 1 if i % 2 == 0 else -1
        values = rng.normal(loc=0.4 * label, scale=0.15, size=6)
        recs.append(TimeSeriesRecord(label, values, i))
    return recs


def test_train_reduces_loss_and_snapshots_prefix():
    spec = NetworkSpec((6, 1), ("tanh",))
    recs = _toy_records()
    cfg_short = TrainConfig(learning_rate=0.05, epochs=3, seed=1)
    cfg_long = TrainConfig(learning_rate=0.05, epochs=6, seed=1)

    short_params, short_trace = train(spec, recs, cfg_short)
    snapshots = {}
    long_params, long_trace = train(
        spec, recs, cfg_long,
        on_epoch_end=lambda ep, p: snapshots.__setitem__(ep, p))

    assert [s.epoch for s in long_trace] == list(range(1, 7))
    assert long_trace[-1].mean_loss < long_trace[0].mean_loss
    assert long_trace[-1].train_accuracy >= 0.9
    # epoch-3 snapshot of the long run equals the short run's final params
    np.testing.assert_array_equal(snapshots[3].weights[0], short_params.weights[0])
    np.testing.assert_array_equal(snapshots[3].biases[0], short_params.biases[0])
    np.testing.assert_array_equal(snapshots[6].weights[0], long_params.weights[0])
    # trace prefix identical too
    for a, b in zip(short_trace, long_trace[:3]):
        assert a.mean_loss == b.mean_loss and a.train_accuracy == b.train_accuracy


def test_train_snapshots_are_isolated_copies():
    spec = NetworkSpec((6, 1), ("tanh",))
    grabbed = {}
    train(spec, _toy_records(), TrainConfig(epochs=2, seed=0),
          on_epoch_end=lambda ep, p: grabbed.__setitem__(ep, p))
    w1 = grabbed[1].weights[0].copy()
    grabbed[2].weights[0][:] = 999.0
    np.testing.assert_array_equal(grabbed[1].weights[0], w1)


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_train_diverges_with_explosive_rate():
    spec = NetworkSpec((6, 1), ("linear",))
    with pytest.raises(TrainingDiverged) as exc:
        train(spec, _toy_records(), TrainConfig(learning_rate=1e6, epochs=5, seed=0))
    assert exc.value.epoch >= 1


def test_train_rejects_empty_records():
    spec = NetworkSpec((6, 1), ("tanh",))
    with pytest.raises(ValueError):
        train(spec, [], TrainConfig())


# --- prediction and metrics ----------------------------------------------

def test_predict_batch_matches_forward_loop():
    spec = NetworkSpec((5, 4, 2), ("tanh", "sigmoid"))
    params = _random_params(spec, seed=2)
    X = np.random.default_rng(3).uniform(-1, 1, size=(7, 5))
    batch = predict_batch(spec, params, X)
    assert batch.shape == (7, 2)
    for i in range(7):
        single, _ = forward(spec, params, X[i])
        np.testing.assert_allclose(batch[i], single, atol=1e-12)
    with pytest.raises(ValueError):
        predict_batch(spec, params, np.zeros((3, 6)))


def test_classify_tie_break_is_positive():
    out = classify(np.array([0.0, -0.0, 1e-300, -1e-300, -0.2, 0.2]))
    np.testing.assert_array_equal(out, [1, 1, 1, -1, -1, 1])


def test_metrics_from_hand_counted_confusion():
    predicted = np.array([1, 1, -1, -1, 1, -1])
    labels = np.array([1, -1, -1, 1, 1, -1])
    m = Metrics.from_predictions(predicted, labels)
    assert (m.true_pos, m.true_neg, m.false_pos, m.false_neg) == (2, 2, 1, 1)
    assert m.accuracy == pytest.approx(4 / 6)
    assert m.recall_pos == pytest.approx(2 / 3)
    assert m.recall_neg == pytest.approx(2 / 3)
    assert m.balanced_accuracy == pytest.approx(2 / 3)
    d = m.as_dict()
    assert d["accuracy"] == m.accuracy and d["false_neg"] == 1


def test_evaluate_on_toy_data():
    spec = NetworkSpec((6, 1), ("tanh",))
    recs = _toy_records()
    params, _ = train(spec, recs, TrainConfig(learning_rate=0.05, epochs=10, seed=0))
    m = evaluate(spec, params, recs)
    assert m.accuracy >= 0.9
    with pytest.raises(ValueError):
        evaluate(spec, params, [])
