import numpy as np
import pytest

from rmtkd.errors import (CorruptFile, InvalidInput, InvalidState,
                          VersionMismatch)
from rmtkd.network import (Checkpoint, DenseLayer, Network, backward, forward,
                           init_network, load_checkpoint, param_count,
                           save_checkpoint, sgd_step)
from rmtkd.rng import make_rng, normal, rng_state_bytes


def _tiny_net():
    """3 -> 2 relu -> 1 logits with hand-picked weights."""
    l0 = DenseLayer(weights=np.array([[1.0, -1.0, 0.0], [0.0, 2.0, 1.0]]),
                    bias=np.array([0.5, -3.0]), activation="relu")
    l1 = DenseLayer(weights=np.array([[1.0, 1.0]]), bias=np.array([0.0]),
                    activation="identity")
    return Network(layers=[l0, l1], input_dim=3, num_classes=1)


def _rnd_normal(seed):
    rng = make_rng(seed)
    return lambda shape: normal(rng, shape)


# ------------------------------------------------------------- construction

def test_dense_layer_rejects_bad_bias_and_activation():
    with pytest.raises(InvalidInput):
        DenseLayer(weights=np.ones((2, 3)), bias=np.ones(3))
    with pytest.raises(InvalidInput):
        DenseLayer(weights=np.ones((2, 3)), bias=None, activation="tanh")


def test_network_checks_chained_dims():
    l0 = DenseLayer(weights=np.ones((4, 3)), bias=np.zeros(4))
    l1 = DenseLayer(weights=np.ones((2, 5)), bias=np.zeros(2))
    with pytest.raises(InvalidInput):
        Network(layers=[l0, l1], input_dim=3, num_classes=2)


def test_network_checks_final_width():
    l0 = DenseLayer(weights=np.ones((4, 3)), bias=np.zeros(4), activation="identity")
    with pytest.raises(InvalidInput):
        Network(layers=[l0], input_dim=3, num_classes=2)


def test_init_network_shapes_and_activations():
    net = init_network([64, 32], 10, 5, _rnd_normal(0))
    assert [(l.out_dim, l.in_dim) for l in net.layers] == [(64, 10), (32, 64), (5, 32)]
    assert [l.activation for l in net.layers] == ["relu", "relu", "identity"]
    assert all(not l.frozen for l in net.layers)
    assert all(np.array_equal(l.bias, np.zeros(l.out_dim)) for l in net.layers)


def test_init_network_he_scale():
    # empirical std of a 256 x 128 He layer should sit near sqrt(2/128)
    net = init_network([256], 128, 2, _rnd_normal(1))
    got = net.layers[0].weights.std()
    assert abs(got - np.sqrt(2.0 / 128)) < 0.01


def test_copy_is_deep():
    net = _tiny_net()
    dup = net.copy()
    dup.layers[0].weights[0, 0] = 99.0
    assert net.layers[0].weights[0, 0] == 1.0


# ------------------------------------------------------------------ forward

def test_forward_hand_computed():
    net = _tiny_net()
    x = np.array([[1.0], [2.0], [0.0]])
    # z1 = [1-2+0.5, 4-3] = [-0.5, 1] -> relu -> [0, 1]; logits = [1]
    logits, trace = forward(net, x)
    assert np.allclose(logits, [[1.0]])
    assert trace is None


def test_forward_capture_layer():
    net = _tiny_net()
    x = np.array([[1.0], [2.0], [0.0]])
    _, trace = forward(net, x, capture_layer=0)
    assert np.allclose(trace, [[0.0], [1.0]])


def test_forward_capture_frozen_rejected():
    net = _tiny_net()
    net.layers[0].frozen = True
    with pytest.raises(InvalidInput):
        forward(net, np.zeros((3, 1)), capture_layer=0)


def test_forward_batch_shape_validated():
    net = _tiny_net()
    with pytest.raises(InvalidInput):
        forward(net, np.zeros((4, 2)))


# ----------------------------------------------------------------- backward

def test_backward_requires_matching_forward():
    net = _tiny_net()
    forward(net, np.zeros((3, 2)))
    with pytest.raises(InvalidState):
        backward(net, np.ones((3, 2)), None, np.zeros((1, 2)))


def test_backward_finite_difference():
    # quadratic logit loss L = 0.5 ||logits||^2 so dL/dlogits = logits
    net = init_network([8, 6], 5, 3, _rnd_normal(2))
    rng = make_rng(3)
    x = normal(rng, (5, 7))
    logits, _ = forward(net, x)
    grads = backward(net, x, None, logits)
    eps = 1e-6
    worst = 0.0
    for i, (gw, gb) in grads.items():
        for idx in [(0, 0), (gw.shape[0] - 1, gw.shape[1] - 1)]:
            w0 = net.layers[i].weights[idx]
            net.layers[i].weights[idx] = w0 + eps
            lp = 0.5 * np.sum(forward(net, x)[0] ** 2)
            net.layers[i].weights[idx] = w0 - eps
            lm = 0.5 * np.sum(forward(net, x)[0] ** 2)
            net.layers[i].weights[idx] = w0
            fd = (lp - lm) / (2 * eps)
            worst = max(worst, abs(fd - gw[idx]) / max(abs(fd), 1e-12))
        if gb is not None:
            b0 = net.layers[i].bias[0]
            net.layers[i].bias[0] = b0 + eps
            lp = 0.5 * np.sum(forward(net, x)[0] ** 2)
            net.layers[i].bias[0] = b0 - eps
            lm = 0.5 * np.sum(forward(net, x)[0] ** 2)
            net.layers[i].bias[0] = b0
            fd = (lp - lm) / (2 * eps)
            worst = max(worst, abs(fd - gb[0]) / max(abs(fd), 1e-12))
    forward(net, x)  # restore the cache the loop invalidated
    assert worst < 1e-6


def test_backward_skips_frozen_layers():
    net = init_network([6], 4, 2, _rnd_normal(4))
    net.layers[0].frozen = True
    x = normal(make_rng(5), (4, 3))
    logits, _ = forward(net, x)
    grads = backward(net, x, None, logits)
    assert set(grads) == {1}


def test_backward_hand_relu_mask():
    net = _tiny_net()
    x = np.array([[1.0], [2.0], [0.0]])  # hidden pre-act [-0.5, 1]: unit 0 dead
    logits, _ = forward(net, x)
    grads = backward(net, x, None, np.array([[1.0]]))
    gw0, gb0 = grads[0]
    # dead relu unit blocks the gradient entirely
    assert np.allclose(gw0[0], 0.0) and gb0[0] == 0.0
    assert np.allclose(gw0[1], [1.0, 2.0, 0.0]) and gb0[1] == 1.0
    gw1, gb1 = grads[1]
    assert np.allclose(gw1, [[0.0, 1.0]]) and gb1[0] == 1.0


# ----------------------------------------------------------------- sgd_step

def test_sgd_step_two_steps_momentum_oracle():
    layer = DenseLayer(weights=np.array([[1.0]]), bias=np.array([0.0]),
                       activation="identity")
    net = Network(layers=[layer], input_dim=1, num_classes=1)
    g = {0: (np.array([[2.0]]), np.array([0.0]))}
    net, state = sgd_step(net, g, lr=0.1, momentum=0.9)
    assert np.isclose(net.layers[0].weights[0, 0], 0.8)  # v=2, w=1-0.2
    net, state = sgd_step(net, g, lr=0.1, momentum=0.9, state=state)
    assert np.isclose(net.layers[0].weights[0, 0], 0.42)  # v=3.8, w=0.8-0.38


def test_sgd_step_leaves_frozen_layers():
    net = _tiny_net()
    net.layers[0].frozen = True
    before = net.layers[0].weights.copy()
    g = {0: (np.ones((2, 3)), np.ones(2)), 1: (np.zeros((1, 2)), np.zeros(1))}
    sgd_step(net, g, lr=0.5, momentum=0.0)
    assert np.array_equal(net.layers[0].weights, before)


def test_sgd_step_validates_hyperparams():
    net = _tiny_net()
    with pytest.raises(InvalidInput):
        sgd_step(net, {}, lr=-1.0, momentum=0.0)
    with pytest.raises(InvalidInput):
        sgd_step(net, {}, lr=0.1, momentum=1.0)


# -------------------------------------------------------------- param_count

def test_param_count_hand():
    net = _tiny_net()  # (2*3+2) + (1*2+1) = 8 + 3
    assert param_count(net) == (11, 0)
    net.layers.insert(1, DenseLayer(weights=np.eye(2), bias=None,
                                    activation="identity", frozen=True))
    net.check_dims()
    assert param_count(net) == (11, 4)


# ------------------------------------------------------------- checkpointing

def test_checkpoint_roundtrip_byte_exact(tmp_path):
    net = init_network([5, 4], 3, 2, _rnd_normal(6))
    net.layers.insert(1, DenseLayer(weights=np.eye(5)[:3], bias=None,
                                    activation="identity", frozen=True))
    net.layers[2].weights = net.layers[2].weights[:, :3]
    net.check_dims()
    net.history.append((0, 5, 3))
    cp = Checkpoint(format_version=1, network=net,
                    rng_state=rng_state_bytes(make_rng(9)),
                    metrics={"val_accuracy": 0.87, "epochs": 4})
    p1 = tmp_path / "a.rmtk"
    p2 = tmp_path / "b.rmtk"
    save_checkpoint(cp, p1)
    back = load_checkpoint(p1)
    save_checkpoint(back, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert back.metrics == cp.metrics
    assert back.network.history == [(0, 5, 3)]
    for a, b in zip(net.layers, back.network.layers):
        assert np.array_equal(a.weights, b.weights)
        assert (a.bias is None) == (b.bias is None)
        if a.bias is not None:
            assert np.array_equal(a.bias, b.bias)
        assert a.frozen == b.frozen and a.activation == b.activation


def test_checkpoint_bad_magic(tmp_path):
    p = tmp_path / "bad.rmtk"
    p.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(CorruptFile):
        load_checkpoint(p)


def test_checkpoint_version_mismatch(tmp_path):
    net = init_network([3], 2, 2, _rnd_normal(7))
    cp = Checkpoint(format_version=1, network=net, rng_state=b"", metrics={})
    p = tmp_path / "v.rmtk"
    save_checkpoint(cp, p)
    blob = bytearray(p.read_bytes())
    blob[4] = 2  # bump the little-endian version field
    p.write_bytes(bytes(blob))
    with pytest.raises(VersionMismatch):
        load_checkpoint(p)


def test_checkpoint_truncation(tmp_path):
    net = init_network([3], 2, 2, _rnd_normal(8))
    cp = Checkpoint(format_version=1, network=net, rng_state=b"xyz", metrics={})
    p = tmp_path / "t.rmtk"
    save_checkpoint(cp, p)
    p.write_bytes(p.read_bytes()[:-9])
    with pytest.raises(CorruptFile):
        load_checkpoint(p)
