import numpy as np
import pytest

from gga.errors import ShapeMismatchError, TrainingDivergenceError
from gga.nn import (
    Model,
    TrainConfig,
    accuracy,
    load_model,
    log_softmax,
    loss_and_grad,
    save_model,
    softmax,
    train,
)
from gga.nn.layers import BatchNorm, Conv2d, Dense, Flatten, Rectifier, Softplus

ARCHS = [
    ([Dense(6, 8), Rectifier(), Dense(8, 3)], (6,)),
    ([Dense(6, 8), Softplus(beta=5.0), Dense(8, 3)], (6,)),
    ([Conv2d(2, 4, kernel=3, stride=2, pad=1), Rectifier(), Flatten(), Dense(16, 3)],
     (2, 4, 4)),
    ([Conv2d(1, 3, kernel=3), BatchNorm(3), Softplus(beta=5.0), Flatten(),
      Dense(12, 3)], (1, 4, 4)),
    ([Flatten(), Dense(8, 3)], (2, 4)),
]


def _fd_param_grad(model, x, y, kind, li, name, idx, eps=1e-6):
    p = model.params[li][name]
    old = p[idx]
    p[idx] = old + eps
    lp, _ = model.loss_param_grads(x, y, kind=kind)
    p[idx] = old - eps
    lm, _ = model.loss_param_grads(x, y, kind=kind)
    p[idx] = old
    return (lp - lm) / (2 * eps)


def _fd_input_grad(model, x, y, kind, n, idx, eps=1e-6):
    xp = x.copy()
    xp[(n, *idx)] += eps
    xm = x.copy()
    xm[(n, *idx)] -= eps
    lp, _ = loss_and_grad(model.forward(xp), y, kind)
    lm, _ = loss_and_grad(model.forward(xm), y, kind)
    return (lp[n] - lm[n]) / (2 * eps)


@pytest.mark.parametrize("arch_i", range(len(ARCHS)))
@pytest.mark.parametrize("kind", ["sce", "mse"])
def test_param_gradients_match_finite_differences(arch_i, kind, rng):
    layers, shape = ARCHS[arch_i]
    model = Model.build(layers, shape, seed=arch_i)
    x = rng.normal(0.4, 0.3, size=(4, *shape))
    y = rng.integers(0, 3, size=4)
    _, grads = model.loss_param_grads(x, y, kind=kind)
    for li, g in enumerate(grads):
        for name, garr in g.items():
            for _ in range(3):
                idx = tuple(rng.integers(0, s) for s in garr.shape)
                fd = _fd_param_grad(model, x, y, kind, li, name, idx)
                assert abs(fd - garr[idx]) <= 1e-4 * max(abs(fd), abs(garr[idx]), 1e-3)


@pytest.mark.parametrize("arch_i", range(len(ARCHS)))
@pytest.mark.parametrize("kind", ["sce", "mse"])
def test_input_gradients_match_finite_differences(arch_i, kind, rng):
    layers, shape = ARCHS[arch_i]
    model = Model.build(layers, shape, seed=arch_i)
    x = rng.normal(0.4, 0.3, size=(3, *shape))
    y = rng.integers(0, 3, size=3)
    g = model.input_gradients(x, y, kind=kind)
    assert g.shape == x.shape
    for _ in range(10):
        n = int(rng.integers(0, 3))
        idx = tuple(int(rng.integers(0, s)) for s in shape)
        fd = _fd_input_grad(model, x, y, kind, n, idx)
        an = g[(n, *idx)]
        assert abs(fd - an) <= 1e-4 * max(abs(fd), abs(an), 1e-3)


def test_sce_two_equal_logits_gives_log2():
    losses, grad = loss_and_grad(np.zeros((1, 2)), np.array([0]), "sce")
    assert losses[0] == pytest.approx(np.log(2.0), abs=1e-12)
    np.testing.assert_allclose(grad, [[-0.5, 0.5]], atol=1e-12)


def test_mse_two_equal_logits_gives_quarter():
    losses, _ = loss_and_grad(np.zeros((1, 2)), np.array([0]), "mse")
    assert losses[0] == pytest.approx(0.25, abs=1e-12)


def test_sce_gradient_rows_sum_to_zero(rng):
    logits = rng.normal(size=(8, 5))
    _, grad = loss_and_grad(logits, rng.integers(0, 5, size=8), "sce")
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-12)


def test_log_softmax_survives_huge_logits():
    logits = np.array([[1e8, 0.0, -1e8]])
    out = log_softmax(logits)
    assert np.all(np.isfinite(out))
    assert out[0, 0] == pytest.approx(0.0, abs=1e-12)
    probs = softmax(logits)
    assert probs.sum() == pytest.approx(1.0)


def test_unknown_loss_kind_rejected():
    with pytest.raises(ValueError):
        loss_and_grad(np.zeros((1, 2)), np.array([0]), "hinge")


def test_input_gradients_batch_matches_single(blobs_model, blobs_ds):
    """Rows are independent; batching only changes BLAS blocking, so the
    values agree to machine rounding."""
    x, y = blobs_ds.x[:6], blobs_ds.y[:6]
    batch = blobs_model.input_gradients(x, y)
    for i in range(6):
        single = blobs_model.input_gradients(x[i : i + 1], y[i : i + 1])
        np.testing.assert_allclose(batch[i], single[0], rtol=1e-12, atol=1e-15)


def test_class_input_gradients_matches_per_class(blobs_model, blobs_ds):
    x = blobs_ds.x[0]
    classes = np.arange(5)
    stacked = blobs_model.class_input_gradients(x, classes)
    for c in classes:
        direct = blobs_model.input_gradients(x[None], np.array([c]))
        np.testing.assert_allclose(stacked[c], direct[0], rtol=1e-12, atol=1e-15)


def test_train_matches_manual_nesterov_loop(rng):
    """Two epochs of train() against an inline reimplementation."""
    x = rng.normal(0.5, 0.2, size=(20, 4))
    y = rng.integers(0, 3, size=20)
    cfg = TrainConfig(epochs=2, batch_size=8, lr=0.1, momentum=0.9, seed=3)

    model = Model.build([Dense(4, 6), Rectifier(), Dense(6, 3)], (4,), seed=9)
    mirror = Model.build([Dense(4, 6), Rectifier(), Dense(6, 3)], (4,), seed=9)

    loop_rng = np.random.default_rng(cfg.seed)
    velocity = [{k: np.zeros_like(v) for k, v in p.items()} for p in mirror.params]
    lr = cfg.lr
    drops = {int(f * cfg.epochs) for f in cfg.lr_drop_points}
    for epoch in range(cfg.epochs):
        if epoch in drops and epoch > 0:
            lr /= cfg.lr_drop_factor
        order = loop_rng.permutation(20)
        for start in range(0, 20, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            _, grads = mirror.loss_param_grads(x[idx], y[idx], "sce")
            for p, v, g in zip(mirror.params, velocity, grads):
                for name in p:
                    v[name] = cfg.momentum * v[name] + g[name]
                    p[name] -= lr * (g[name] + cfg.momentum * v[name])

    train(model, x, y, cfg)
    for got, want in zip(model.params, mirror.params):
        for name in want:
            np.testing.assert_array_equal(got[name], want[name])


def test_lr_schedule_drops_at_fractional_epochs(rng):
    x = rng.normal(0.5, 0.2, size=(16, 4))
    y = rng.integers(0, 3, size=16)
    model = Model.build([Dense(4, 3)], (4,), seed=0)
    cfg = TrainConfig(epochs=10, batch_size=16, lr=1.0, lr_drop_factor=2.0, seed=0)
    history = train(model, x, y, cfg)
    lrs = [h["lr"] for h in history]
    assert lrs[:3] == [1.0, 1.0, 1.0]
    assert lrs[3:6] == [0.5, 0.5, 0.5]
    assert lrs[6:8] == [0.25, 0.25]
    assert lrs[8:] == [0.125, 0.125]


def test_zero_epochs_is_a_no_op(rng):
    x = rng.normal(size=(8, 4))
    y = rng.integers(0, 3, size=8)
    model = Model.build([Dense(4, 3)], (4,), seed=0)
    before = [{k: v.copy() for k, v in p.items()} for p in model.params]
    history = train(model, x, y, TrainConfig(epochs=0))
    assert history == []
    for got, want in zip(model.params, before):
        for name in want:
            np.testing.assert_array_equal(got[name], want[name])


def test_training_divergence_raises(rng):
    x = rng.normal(size=(8, 4)) * 1e4
    y = rng.integers(0, 3, size=8)
    model = Model.build([Dense(4, 3)], (4,), seed=0)
    with pytest.raises(TrainingDivergenceError) as err:
        train(model, x, y, TrainConfig(epochs=5, lr=1e9, divergence_limit=10.0))
    assert err.value.epoch is not None


def test_train_is_deterministic(rng):
    x = rng.normal(0.5, 0.2, size=(30, 4))
    y = rng.integers(0, 3, size=30)
    runs = []
    for _ in range(2):
        model = Model.build([Dense(4, 6), Rectifier(), Dense(6, 3)], (4,), seed=4)
        train(model, x, y, TrainConfig(epochs=3, batch_size=8, seed=4))
        runs.append(model.forward(x))
    np.testing.assert_array_equal(runs[0], runs[1])


def test_bad_train_config_rejected():
    with pytest.raises(ValueError):
        TrainConfig(epochs=-1)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(momentum=1.0)
    with pytest.raises(ValueError):
        TrainConfig(lr_drop_points=(0.6, 0.3))
    with pytest.raises(ValueError):
        TrainConfig(lr_drop_points=(0.0, 0.5))


def test_swap_activations_round_trip(blobs_model, blobs_ds):
    soft = blobs_model.swap_activations("softplus", beta=10.0)
    back = soft.swap_activations("rectifier")
    assert [type(l) for l in back.layers] == [type(l) for l in blobs_model.layers]
    np.testing.assert_array_equal(back.forward(blobs_ds.x[:4]),
                                  blobs_model.forward(blobs_ds.x[:4]))


def test_swap_shares_parameters(blobs_model):
    soft = blobs_model.swap_activations("softplus")
    assert soft.params[0]["w"] is blobs_model.params[0]["w"]


def test_swap_rejects_unknown_mode(blobs_model):
    with pytest.raises(ValueError):
        blobs_model.swap_activations("gelu")


def test_softplus_approaches_rectifier_as_beta_grows(rng):
    """The gap is bounded by log(2)/beta, so beta=100 keeps it under 0.01."""
    x = rng.normal(size=(50, 6))
    rect = Model.build([Dense(6, 8), Rectifier(), Dense(8, 3)], (6,), seed=2)
    soft = rect.swap_activations("softplus", beta=100.0)
    gap = np.abs(rect.forward(x) - soft.forward(x)).max()
    w2 = np.abs(rect.params[2]["w"]).sum(axis=0).max()
    assert gap <= (np.log(2.0) / 100.0) * w2 + 1e-12
    assert np.log(2.0) / 100.0 < 0.01


def test_activation_mode_property(blobs_model, softplus_model):
    assert blobs_model.activation_mode == "rectifier"
    assert softplus_model.activation_mode == "softplus"


def test_checkpoint_round_trip(tmp_path, blobs_model, blobs_ds):
    path = tmp_path / "m.gga"
    save_model(path, blobs_model, extra_meta={"note": "x"})
    loaded = load_model(path)
    np.testing.assert_array_equal(loaded.forward(blobs_ds.x[:8]),
                                  blobs_model.forward(blobs_ds.x[:8]))
    assert [type(l) for l in loaded.layers] == [type(l) for l in blobs_model.layers]
    assert loaded.input_shape == blobs_model.input_shape


def test_checkpoint_preserves_batchnorm_state(tmp_path, rng):
    model = Model.build(
        [Conv2d(1, 3, kernel=3), BatchNorm(3), Flatten(), Dense(12, 3)],
        (1, 4, 4), seed=0,
    )
    x = rng.normal(0.5, 0.2, size=(16, 1, 4, 4))
    y = rng.integers(0, 3, size=16)
    train(model, x, y, TrainConfig(epochs=2, batch_size=8, seed=0))
    path = tmp_path / "bn.gga"
    save_model(path, model)
    loaded = load_model(path)
    np.testing.assert_array_equal(loaded.forward(x), model.forward(x))


def test_build_rejects_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        Model.build([Dense(6, 8), Dense(9, 3)], (6,), seed=0)
    with pytest.raises(ShapeMismatchError):
        Model.build([Conv2d(2, 4, kernel=3)], (1, 8, 8), seed=0)


def test_forward_rejects_wrong_input_shape(blobs_model):
    with pytest.raises(ShapeMismatchError):
        blobs_model.forward(np.zeros((2, 11)))


def test_build_same_seed_same_params():
    a = Model.build([Dense(4, 6), Rectifier(), Dense(6, 3)], (4,), seed=7)
    b = Model.build([Dense(4, 6), Rectifier(), Dense(6, 3)], (4,), seed=7)
    for pa, pb in zip(a.params, b.params):
        for name in pa:
            np.testing.assert_array_equal(pa[name], pb[name])


def test_batchnorm_train_eval_modes_differ(rng):
    model = Model.build([Dense(4, 6), BatchNorm(6), Dense(6, 3)], (4,), seed=0)
    x = rng.normal(2.0, 3.0, size=(32, 4))
    # eval path uses running stats (fresh model: mean 0, var 1); train
    # normalizes with batch stats, so shifted data must disagree
    y_eval = model.forward(x, train=False)
    y_train = model.forward(x, train=True)
    assert not np.allclose(y_eval, y_train)
    # the train pass above updated the running stats
    y_eval_after = model.forward(x, train=False)
    assert not np.array_equal(y_eval, y_eval_after)


def test_accuracy_matches_manual(blobs_model, blobs_ds):
    manual = (blobs_model.predict(blobs_ds.x) == blobs_ds.y).mean()
    assert accuracy(blobs_model, blobs_ds.x, blobs_ds.y) == pytest.approx(manual)


def test_predict_matches_argmax(blobs_model, blobs_ds):
    logits = blobs_model.forward(blobs_ds.x[:10])
    np.testing.assert_array_equal(blobs_model.predict(blobs_ds.x[:10]),
                                  logits.argmax(axis=1))


def test_probabilities_sum_to_one(blobs_model, blobs_ds):
    probs = blobs_model.probabilities(blobs_ds.x[:10])
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert probs.min() >= 0.0
