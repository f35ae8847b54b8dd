import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from pcal import nn
from pcal.errors import (DimMismatch, InvalidShape, NonFiniteGradient,
                         StaleCache)


def test_netshape_validation():
    with pytest.raises(InvalidShape):
        nn.NetShape([4])
    with pytest.raises(InvalidShape):
        nn.NetShape([4, 0, 1])
    with pytest.raises(InvalidShape):
        nn.NetShape([4, 3], output_activation="tanh")
    shape = nn.NetShape([4, 8, 1], output_activation="sigmoid")
    assert shape.n_layers == 2 and shape.in_width == 4 and shape.out_width == 1


def test_init_deterministic_and_glorot_bounded():
    a = nn.init_net(nn.NetShape([7, 16, 3]), seed=11)
    b = nn.init_net(nn.NetShape([7, 16, 3]), seed=11)
    c = nn.init_net(nn.NetShape([7, 16, 3]), seed=12)
    for wa, wb in zip(a.weights, b.weights):
        assert_array_equal(wa, wb)
    assert any(not np.array_equal(wa, wc)
               for wa, wc in zip(a.weights, c.weights))
    for ba in a.biases:
        assert_array_equal(ba, np.zeros_like(ba))
    for w in a.weights:
        fan_in, fan_out = w.shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        assert np.all(np.abs(w) <= bound)


def test_forward_zero_weight_net_passes_bias():
    net = nn.init_net(nn.NetShape([3, 2]), seed=0)
    net.weights[0][:] = 0.0
    net.biases[0][:] = [1.5, -2.0]
    out, _ = nn.forward(net, np.zeros((4, 3)))
    assert_allclose(out, np.tile([1.5, -2.0], (4, 1)))


def test_forward_identity_linear_layer():
    net = nn.init_net(nn.NetShape([3, 3]), seed=0)
    net.weights[0][:] = np.eye(3)
    net.biases[0][:] = 0.0
    x = np.random.default_rng(0).normal(size=(5, 3))
    out, _ = nn.forward(net, x)
    assert_allclose(out, x)


def test_forward_sigmoid_output_range_and_value():
    net = nn.init_net(nn.NetShape([1, 1], output_activation="sigmoid"), seed=0)
    net.weights[0][:] = 1.0
    net.biases[0][:] = 0.0
    out, _ = nn.forward(net, np.array([[0.0], [100.0], [-100.0]]))
    assert_allclose(out[0, 0], 0.5)
    assert 0.0 < out[2, 0] < 1e-8 and 1.0 - 1e-8 < out[1, 0] <= 1.0


def test_forward_dim_mismatch():
    net = nn.init_net(nn.NetShape([3, 2]), seed=0)
    with pytest.raises(DimMismatch):
        nn.forward(net, np.zeros((4, 5)))
    with pytest.raises(DimMismatch):
        nn.forward(net, np.zeros(3))


def test_mse_loss_hand_value():
    # ((1-0)^2 + (3-1)^2) / 2 = 2.5
    loss, grad = nn.mse_loss(np.array([[1.0, 3.0]]), np.array([[0.0, 1.0]]))
    assert loss == pytest.approx(2.5)
    assert_allclose(grad, np.array([[1.0, 2.0]]))  # 2*(pred-target)/2


def test_mse_loss_zero_at_match():
    pred = np.random.default_rng(1).normal(size=(6, 2))
    loss, grad = nn.mse_loss(pred, pred)
    assert loss == 0.0
    assert_array_equal(grad, np.zeros_like(pred))


def test_mse_loss_shape_mismatch():
    with pytest.raises(DimMismatch):
        nn.mse_loss(np.zeros((2, 2)), np.zeros((2, 3)))


def test_backward_zero_grad_gives_zero():
    net = nn.init_net(nn.NetShape([4, 8, 2]), seed=3)
    x = np.random.default_rng(3).normal(size=(5, 4))
    out, cache = nn.forward(net, x)
    grads, gx = nn.backward(net, cache, np.zeros_like(out))
    assert_array_equal(gx, np.zeros_like(x))
    for dw, db in grads:
        assert_array_equal(dw, np.zeros_like(dw))
        assert_array_equal(db, np.zeros_like(db))


def test_backward_linear_layer_input_grad_is_w_transpose():
    net = nn.init_net(nn.NetShape([4, 2]), seed=5)
    x = np.random.default_rng(5).normal(size=(3, 4))
    out, cache = nn.forward(net, x)
    g = np.random.default_rng(6).normal(size=out.shape)
    _, gx = nn.backward(net, cache, g)
    assert_allclose(gx, g @ net.weights[0].T, rtol=0, atol=0)


def test_backward_stale_cache():
    net = nn.init_net(nn.NetShape([4, 8, 2]), seed=3)
    out, cache = nn.forward(net, np.zeros((5, 4)))
    with pytest.raises(StaleCache):
        nn.backward(net, cache, np.zeros((6, 2)))
    other = nn.init_net(nn.NetShape([4, 2]), seed=3)
    with pytest.raises(StaleCache):
        nn.backward(other, cache, out)


def kink_margin(net, x):
    """Distance of the closest pre-activation to the relu kink at 0."""
    _, cache = nn.forward(net, x)
    return min(float(np.min(np.abs(z))) for z in cache.pre_activations)


def sample_net_and_input(widths, output_activation, seed, rows=4,
                         margin=1e-3, attempts=200):
    """A (net, x) pair whose pre-activations stay clear of the relu kink.

    Central differences with h=1e-5 are meaningless when a unit sits within h
    of the kink, so the oracle only measures at clearly differentiable points.
    """
    rng = np.random.default_rng(seed)
    for _ in range(attempts):
        net = nn.init_net(nn.NetShape(widths, output_activation=output_activation),
                          seed=int(rng.integers(2 ** 31)))
        x = rng.normal(size=(rows, widths[0]))
        if kink_margin(net, x) > margin:
            return net, x
    raise AssertionError("could not find a kink-free configuration")


def finite_difference_check(net, x, seed, h=1e-5):
    """Max relative error between backprop and central differences."""
    rng = np.random.default_rng(seed)
    out, cache = nn.forward(net, x)
    g_out = rng.normal(size=out.shape)          # J = sum(g_out * output)

    def objective():
        y, _ = nn.forward(net, x)
        return float(np.sum(g_out * y))

    param_grads, gx = nn.backward(net, cache, g_out)
    analytic = []
    for dw, db in param_grads:
        analytic.extend([dw, db])
    analytic.append(gx)

    worst = 0.0
    arrays = list(net.params()) + [x]
    for arr, grad in zip(arrays, analytic):
        flat = arr.ravel()
        gflat = grad.ravel()
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            plus = objective()
            flat[i] = keep - h
            minus = objective()
            flat[i] = keep
            numeric = (plus - minus) / (2.0 * h)
            denom = max(abs(numeric), abs(gflat[i]), 1.0)
            worst = max(worst, abs(numeric - gflat[i]) / denom)
    return worst


@pytest.mark.parametrize("output_activation", ["linear", "sigmoid"])
def test_backward_matches_finite_differences(output_activation):
    rng = np.random.default_rng(17)
    for trial in range(3):
        widths = [int(rng.integers(2, 6)) for _ in range(4)]
        net, x = sample_net_and_input(widths, output_activation,
                                      seed=100 + trial)
        assert finite_difference_check(net, x, seed=trial) <= 1e-4


def test_sgd_step_arithmetic():
    net = nn.init_net(nn.NetShape([2, 1]), seed=0)
    net.weights[0][:] = 1.0
    state = nn.OptimizerState(algorithm="sgd", learning_rate=0.05)
    grads = [(np.ones((2, 1)), np.ones(1))]
    nn.optimizer_step(net, grads, state)
    assert_allclose(net.weights[0], np.full((2, 1), 0.95))
    assert_allclose(net.biases[0], np.array([-0.05]))


def test_zero_gradient_is_noop_for_sgd():
    net = nn.init_net(nn.NetShape([3, 4, 2]), seed=9)
    before = [p.copy() for p in net.params()]
    grads = [(np.zeros_like(w), np.zeros_like(b))
             for w, b in zip(net.weights, net.biases)]
    nn.optimizer_step(net, grads, nn.OptimizerState(algorithm="sgd"))
    for p, q in zip(net.params(), before):
        assert_array_equal(p, q)


def test_adam_drives_quadratic_to_zero():
    # minimize p^2 with grad 2p from p=1: |p| < 0.05 within 500 steps
    net = nn.init_net(nn.NetShape([1, 1]), seed=0)
    net.weights[0][:] = 1.0
    net.biases[0][:] = 0.0
    state = nn.OptimizerState(algorithm="adam", learning_rate=0.05)
    for _ in range(500):
        p = net.weights[0][0, 0]
        grads = [(np.array([[2.0 * p]]), np.zeros(1))]
        nn.optimizer_step(net, grads, state)
    assert abs(net.weights[0][0, 0]) < 0.05


def test_nonfinite_gradient_rejected_before_update():
    net = nn.init_net(nn.NetShape([2, 1]), seed=0)
    before = [p.copy() for p in net.params()]
    bad = [(np.array([[np.nan], [0.0]]), np.zeros(1))]
    with pytest.raises(NonFiniteGradient):
        nn.optimizer_step(net, bad, nn.OptimizerState())
    for p, q in zip(net.params(), before):
        assert_array_equal(p, q)


def test_sgd_monotone_on_convex_least_squares():
    rng = np.random.default_rng(21)
    x = rng.normal(size=(40, 3))
    y = rng.normal(size=(40, 1))
    net = nn.init_net(nn.NetShape([3, 1]), seed=2)
    aug = np.hstack([x, np.ones((40, 1))])
    lips = 2.0 * np.linalg.eigvalsh(aug.T @ aug / x.shape[0]).max()
    state = nn.OptimizerState(algorithm="sgd", learning_rate=0.9 / lips)
    last = np.inf
    for _ in range(100):
        pred, cache = nn.forward(net, x)
        loss, grad = nn.mse_loss(pred, y)
        assert loss <= last + 1e-12
        last = loss
        grads, _ = nn.backward(net, cache, grad)
        nn.optimizer_step(net, grads, state)


def test_reinit_equals_fresh_init():
    net = nn.init_net(nn.NetShape([5, 8, 2]), seed=1)
    out, cache = nn.forward(net, np.random.default_rng(0).normal(size=(3, 5)))
    _, grad = nn.mse_loss(out, np.zeros_like(out))
    grads, _ = nn.backward(net, cache, grad)
    nn.optimizer_step(net, grads, nn.OptimizerState())
    fresh = nn.reinit(net, seed=77)
    ref = nn.init_net(nn.NetShape([5, 8, 2]), seed=77)
    for p, q in zip(fresh.params(), ref.params()):
        assert_array_equal(p, q)


def test_training_determinism_bitwise():
    def run():
        net = nn.init_net(nn.NetShape([4, 16, 1]), seed=13)
        state = nn.OptimizerState()
        rng = np.random.default_rng(99)
        x = rng.normal(size=(50, 4))
        y = rng.normal(size=(50, 1))
        for _ in range(20):
            pred, cache = nn.forward(net, x)
            _, grad = nn.mse_loss(pred, y)
            grads, _ = nn.backward(net, cache, grad)
            nn.optimizer_step(net, grads, state)
        return net

    a, b = run(), run()
    for p, q in zip(a.params(), b.params()):
        assert_array_equal(p, q)


def test_checkpoint_roundtrip(tmp_path):
    net = nn.init_net(nn.NetShape([3, 6, 2], output_activation="sigmoid"), seed=4)
    path = tmp_path / "net.json"
    nn.save_net(net, path)
    loaded = nn.load_net(path)
    assert loaded.shape.to_dict() == net.shape.to_dict()
    assert loaded.init_seed == net.init_seed
    for p, q in zip(loaded.params(), net.params()):
        assert_array_equal(p, q)
    x = np.random.default_rng(8).normal(size=(5, 3))
    assert_array_equal(nn.forward(loaded, x)[0], nn.forward(net, x)[0])


def test_checkpoint_rejects_wrong_version(tmp_path):
    from pcal.errors import IoError
    from pcal.jsonio import read_json, write_json

    net = nn.init_net(nn.NetShape([2, 1]), seed=0)
    path = tmp_path / "net.json"
    nn.save_net(net, path)
    doc = read_json(path)
    doc["version"] = "other"
    write_json(path, doc)
    with pytest.raises(IoError):
        nn.load_net(path)
