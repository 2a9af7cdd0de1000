import math

import numpy as np
import pytest
from numpy.lib.stride_tricks import sliding_window_view

from met2img import _kernels
from met2img.nn import (
    BuildError,
    ConvDim,
    Head,
    NetworkSpec,
    OptimizerKind,
    TrainingConfig,
    adam_step,
    build,
    fc_input_size,
    feature_maps,
    loss,
    parse_arch,
    predictions,
    sgd_step,
    shape_trace,
    train,
)
from met2img.nn.checkpoint import CheckpointError, load, save


def rel_error(a, b, floor=1e-6):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def fd_check(net, x, y, h=1e-4):
    _, grads = net.gradients(x, y)
    worst = 0.0
    for p, g in zip(net.params, grads):
        fd = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss(net.spec.head, net.forward(x), y)
            p[idx] = old - h
            down = loss(net.spec.head, net.forward(x), y)
            p[idx] = old
            fd[idx] = (up - down) / (2 * h)
        worst = max(worst, rel_error(g, fd))
    return worst


def perturb_biases(net, rng):
    # non-zero biases keep activations away from ReLU kinks and pooling ties
    for p in net.params:
        if p.ndim == 1:
            p[...] = rng.normal(0, 0.1, p.shape)


@pytest.mark.parametrize("spec, shape", [
    (NetworkSpec(ConvDim.CONV2D, 2, 3), (3, 8, 8)),
    (NetworkSpec(ConvDim.CONV2D, 2, 3, Head.ONE_NODE), (3, 8, 8)),
    (NetworkSpec(ConvDim.CONV1D, 2, 3), (1, 12)),
    (NetworkSpec(ConvDim.NONE, 0, 0), (1, 12)),
    (NetworkSpec(ConvDim.NONE, 0, 0, Head.ONE_NODE, fc_hidden=5), (1, 12)),
])
def test_gradients_match_finite_differences(spec, shape):
    rng = np.random.default_rng(0)
    net = build(spec.with_input(shape), seed=1, dtype=np.float64)
    perturb_biases(net, rng)
    x = rng.random((4, *shape))
    y = np.array([0, 1, 1, 0])
    assert fd_check(net, x, y) < 1e-3


def test_shape_traces():
    assert fc_input_size(NetworkSpec().with_input((3, 64, 64))) == 20 * 28 * 28 == 15680
    assert fc_input_size(NetworkSpec().with_input((3, 32, 32))) == 2880
    trace = dict(shape_trace(NetworkSpec().with_input((3, 64, 64))))
    assert [trace[f"conv{i}"][1] for i in range(1, 6)] == [64, 62, 60, 58, 56]
    assert trace["maxpool"] == (20, 28, 28)
    assert fc_input_size(NetworkSpec(ConvDim.CONV1D, 2, 20).with_input((1, 542))) == 20 * 270


def test_shape_too_deep_names_layer():
    with pytest.raises(BuildError, match="conv4"):
        shape_trace(NetworkSpec(ConvDim.CONV2D, 5, 4).with_input((3, 6, 6)))


def test_spec_validation_and_parse():
    with pytest.raises(BuildError):
        NetworkSpec(ConvDim.CONV2D, 6, 20)
    with pytest.raises(BuildError):
        NetworkSpec(ConvDim.CONV2D, 2, 21)
    with pytest.raises(BuildError):
        NetworkSpec(ConvDim.NONE, 2, 20)
    assert parse_arch("conv2d:3:7") == NetworkSpec(ConvDim.CONV2D, 3, 7)
    assert parse_arch("fc").arch == "fc"
    assert parse_arch("conv1d:1:1:one-node").head is Head.ONE_NODE
    with pytest.raises(BuildError):
        parse_arch("conv2d:x:1")


def test_conv_forward_matches_direct_correlation():
    rng = np.random.default_rng(2)
    net = build(NetworkSpec(ConvDim.CONV2D, 1, 4).with_input((3, 6, 6)), dtype=np.float64)
    conv = net.layers[0]
    conv.b[...] = rng.normal(size=conv.b.shape)
    x = rng.random((2, 3, 6, 6))
    out = conv.forward(np.ascontiguousarray(x.transpose(1, 0, 2, 3)))
    W = conv.W.reshape(4, 3, 3, 3)
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    expected = np.zeros((4, 2, 6, 6))
    for o in range(4):
        for b in range(2):
            for i in range(6):
                for j in range(6):
                    expected[o, b, i, j] = np.sum(padded[b, :, i:i + 3, j:j + 3] * W[o]) + conv.b[o]
    np.testing.assert_allclose(out, expected, rtol=1e-12)


def test_zero_weights_give_uniform_output():
    net = build(NetworkSpec().with_input((3, 32, 32)))
    for p in net.params:
        p[...] = 0
    out = net.forward(np.random.default_rng(0).random((3, 3, 32, 32)))
    np.testing.assert_allclose(out, math.log(0.5), rtol=1e-6)
    assert loss(Head.TWO_NODE, out, [0, 1, 1]) == pytest.approx(math.log(2), rel=1e-6)


def test_log_softmax_normalised():
    net = build(NetworkSpec().with_input((3, 16, 16)), seed=3)
    out = net.forward(np.random.default_rng(1).random((5, 3, 16, 16)))
    np.testing.assert_allclose(np.exp(out).sum(axis=1), 1.0, rtol=1e-5)


def test_one_node_loss_and_predictions():
    assert loss(Head.ONE_NODE, np.array([0.5, 0.5]), [0, 1]) == pytest.approx(math.log(2))
    assert np.isfinite(loss(Head.ONE_NODE, np.array([0.0, 1.0]), [1, 0]))
    np.testing.assert_array_equal(predictions(Head.ONE_NODE, np.array([0.49, 0.5])), [0, 1])
    np.testing.assert_array_equal(predictions(Head.TWO_NODE, np.log([[0.3, 0.7], [0.8, 0.2]])), [1, 0])


def test_duplicate_sample_same_gradient():
    spec = NetworkSpec(ConvDim.CONV2D, 2, 3).with_input((3, 8, 8))
    net = build(spec, dtype=np.float64)
    x = np.random.default_rng(4).random((1, 3, 8, 8))
    l1, g1 = net.gradients(x, [1])
    l2, g2 = net.gradients(np.concatenate([x, x]), [1, 1])
    assert l1 == pytest.approx(l2)
    for a, b in zip(g1, g2):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_dead_relu_unit_has_zero_incoming_gradient():
    net = build(NetworkSpec(ConvDim.CONV2D, 2, 3).with_input((3, 8, 8)), dtype=np.float64)
    conv2 = net.layers[2]
    conv2.b[1] = -1e6
    _, grads = net.gradients(np.random.default_rng(5).random((4, 3, 8, 8)), [0, 1, 0, 1])
    assert np.all(grads[2][1] == 0) and grads[3][1] == 0


def test_sgd_momentum_recurrence():
    cfg = TrainingConfig(momentum=0.1, weight_decay=0.0, learning_rate=1.0)
    w = np.zeros(3)
    g = np.array([1.0, -2.0, 0.5])
    state = sgd_step([w], [g], cfg)
    np.testing.assert_allclose(state["v"][0], g)
    sgd_step([w], [g], cfg, state)
    np.testing.assert_allclose(state["v"][0], 1.1 * g)
    np.testing.assert_allclose(w, -2.1 * g)


def test_weight_decay_shrinks_weights():
    cfg = TrainingConfig(momentum=0.0, weight_decay=0.1, learning_rate=0.5)
    w = np.array([2.0, -4.0])
    sgd_step([w], [np.zeros(2)], cfg)
    np.testing.assert_allclose(w, [1.9, -3.8])
    w = np.array([2.0, -4.0])
    adam_step([w], [np.zeros(2)], cfg)
    assert np.all(np.abs(w) < [2.0, 4.0])


def test_adam_first_step_is_learning_rate():
    cfg = TrainingConfig(weight_decay=0.0, learning_rate=1e-3)
    w = np.zeros(4)
    adam_step([w], [np.array([3.0, -0.2, 1e-2, -50.0])], cfg)
    np.testing.assert_allclose(w, [-1e-3, 1e-3, -1e-3, 1e-3], rtol=1e-5)


def test_optimizer_defaults_by_head():
    cfg = TrainingConfig()
    assert cfg.optimizer_for(Head.TWO_NODE) is OptimizerKind.SGD_MOMENTUM
    assert cfg.optimizer_for(Head.ONE_NODE) is OptimizerKind.ADAM
    assert TrainingConfig(optimizer="adam").optimizer_for(Head.TWO_NODE) is OptimizerKind.ADAM


def toy_images(n=16, side=8, seed=0):
    rng = np.random.default_rng(seed)
    y = np.array([0, 1] * (n // 2))
    X = np.ones((n, 3, side, side), dtype=np.float32)
    X[y == 1, :, : side // 2] = 0.0
    X += rng.normal(0, 0.01, X.shape).astype(np.float32)
    return X, y


def test_toy_set_overfits_deterministically():
    X, y = toy_images()
    spec = NetworkSpec(ConvDim.CONV2D, 2, 4).with_input(X.shape[1:])
    cfg = TrainingConfig(epochs=200, seed=0)
    net, losses = train(build(spec, seed=0), X, y, cfg)
    assert np.array_equal(net.predict(X), y)
    tail = np.array(losses[20:])
    assert np.all(np.diff(tail) <= 1e-6)
    net2, losses2 = train(build(spec, seed=0), X, y, cfg)
    assert losses == losses2
    for a, b in zip(net.params, net2.params):
        np.testing.assert_array_equal(a, b)


def test_train_rejects_single_class():
    X, _ = toy_images()
    spec = NetworkSpec(ConvDim.CONV2D, 1, 2).with_input(X.shape[1:])
    with pytest.raises(ValueError, match="single class"):
        train(build(spec), X, np.zeros(16), TrainingConfig(epochs=1))


def test_feature_maps_shape_and_range():
    net = build(NetworkSpec().with_input((3, 64, 64)))
    maps = feature_maps(net, np.random.default_rng(0).random((3, 64, 64)))
    assert len(maps) == 20
    assert all(m.shape == (28, 28) for m in maps)
    assert all(m.min() >= 0 and m.max() <= 1 for m in maps)
    with pytest.raises(BuildError):
        feature_maps(build(NetworkSpec(ConvDim.NONE, 0, 0).with_input((1, 10))), np.zeros((1, 10)))


def test_feature_maps_1d():
    net = build(NetworkSpec(ConvDim.CONV1D, 2, 5).with_input((1, 20)))
    maps = feature_maps(net, np.random.default_rng(0).random((1, 20)))
    assert len(maps) == 5 and maps[0].shape == (1, 9)


def test_checkpoint_round_trip(tmp_path):
    spec = NetworkSpec(ConvDim.CONV2D, 2, 3).with_input((3, 8, 8))
    net = build(spec, seed=7)
    save(net, tmp_path / "n.ckpt")
    back = load(tmp_path / "n.ckpt", expected_spec=spec)
    x = np.random.default_rng(0).random((2, 3, 8, 8))
    np.testing.assert_array_equal(net.forward(x), back.forward(x))
    with pytest.raises(CheckpointError):
        load(tmp_path / "n.ckpt", expected_spec=NetworkSpec(ConvDim.CONV2D, 2, 4).with_input((3, 8, 8)))
    (tmp_path / "bad.ckpt").write_bytes(b"garbage")
    with pytest.raises(CheckpointError):
        load(tmp_path / "bad.ckpt")


def test_im2col_matches_windows():
    x = np.random.default_rng(0).random((2, 3, 5, 6))
    cols = _kernels.im2col(x, 3, 2)
    win = sliding_window_view(x, (3, 2), axis=(2, 3))  # C,B,Ho,Wo,kh,kw
    expected = win.transpose(0, 4, 5, 1, 2, 3).reshape(2 * 3 * 2, -1)
    np.testing.assert_array_equal(cols, expected)


def test_col2im_is_adjoint_of_im2col():
    rng = np.random.default_rng(1)
    x = rng.random((2, 3, 5, 6))
    c = rng.random((2 * 3 * 3, 3 * 3 * 4))
    for col2im in (_kernels.col2im_numpy, _kernels.col2im_numba):
        out = np.empty_like(x)
        col2im(c, out, 3, 3)
        assert np.sum(_kernels.im2col(x, 3, 3) * c) == pytest.approx(np.sum(x * out), rel=1e-12)


def test_maxpool_kernels_agree():
    rng = np.random.default_rng(2)
    x = rng.random((3, 2, 7, 9))
    a_out, a_arg = _kernels.maxpool_forward_numpy(x, 2, 2)
    b_out, b_arg = _kernels.maxpool_forward_numba(x, 2, 2)
    np.testing.assert_array_equal(a_out, b_out)
    np.testing.assert_array_equal(a_arg, b_arg)
    expected = x[:, :, :6, :8].reshape(3, 2, 3, 2, 4, 2).max(axis=(3, 5))
    np.testing.assert_array_equal(a_out, expected)
    d = rng.random(a_out.shape)
    ga = _kernels.maxpool_backward_numpy(d, a_arg, 7, 9, 2, 2)
    gb = _kernels.maxpool_backward_numba(d, b_arg, 7, 9, 2, 2)
    np.testing.assert_array_equal(ga, gb)
    assert ga.sum() == pytest.approx(d.sum())
    assert np.all(ga[:, :, 6, :] == 0) and np.all(ga[:, :, :, 8] == 0)


def test_maxpool_tie_goes_to_first():
    x = np.ones((1, 1, 2, 2))
    for fwd in (_kernels.maxpool_forward_numpy, _kernels.maxpool_forward_numba):
        _, arg = fwd(x, 2, 2)
        assert arg.ravel()[0] == 0
