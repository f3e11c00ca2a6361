import numpy as np
import pytest

from stokesae.engine import ConfigError, LayerSpec, Loss, Network, backward, gradient_check
from stokesae.engine import layers as layers_mod
from stokesae.models import build_cae, build_dae

TOL = 1e-4


def small_net(specs, input_shape, seed=0):
    return Network(specs, input_shape, seed=seed, dtype="float64")


SINGLE_LAYERS = {
    "dense": ([LayerSpec("dense", units=5)], (6,)),
    "conv1d": ([LayerSpec("conv1d", units=3, kernel=5)], (12, 2)),
    "conv1d_transpose": ([LayerSpec("conv1d_transpose", units=3, kernel=7)], (12, 2)),
    "maxpool1d": ([LayerSpec("maxpool1d", factor=2)], (12, 3)),
    "avgpool1d": ([LayerSpec("avgpool1d", factor=2)], (12, 3)),
    "upsample1d": ([LayerSpec("upsample1d", factor=2)], (6, 3)),
    "batchnorm_seq": ([LayerSpec("batchnorm")], (10, 3)),
    "batchnorm_flat": ([LayerSpec("batchnorm")], (7,)),
    "elu": ([LayerSpec("elu")], (10, 2)),
    "flatten": ([LayerSpec("flatten")], (5, 2)),
    "reshape": ([LayerSpec("reshape", target=(5, 2))], (10,)),
}


@pytest.mark.parametrize("name", sorted(SINGLE_LAYERS))
def test_single_layer(name, rng):
    specs, shape = SINGLE_LAYERS[name]
    net = small_net(specs, shape)
    x = rng.standard_normal((4,) + shape)
    result = gradient_check(net, x)
    assert float(result) < TOL, result.per_parameter


def test_batchnorm_inference_mode(rng):
    net = small_net([LayerSpec("batchnorm")], (8, 3))
    net.forward(rng.standard_normal((16, 8, 3)) * 2 + 1, training=True)
    result = gradient_check(net, rng.standard_normal((4, 8, 3)), training=False)
    assert float(result) < TOL


def test_dense_chain_is_tight(rng):
    # smooth and nearly linear: central differences agree far below the threshold
    net = small_net([LayerSpec("dense", units=4), LayerSpec("dense", units=3)], (5,))
    result = gradient_check(net, rng.standard_normal((4, 5)))
    assert float(result) < 1e-9


def test_max_pool_ties_are_skipped():
    net = small_net([LayerSpec("maxpool1d", factor=2)], (4, 1))
    x = np.array([[1.0, 1.0, 2.0, 0.5]]).reshape(1, 4, 1).repeat(4, axis=0)
    result = gradient_check(net, x, include_input=True)
    assert result.skipped > 0
    assert float(result) < TOL


def test_float32_graph_rejected(rng):
    net = Network([LayerSpec("dense", units=2)], (3,), dtype="float32")
    with pytest.raises(ConfigError):
        gradient_check(net, rng.standard_normal((4, 3)))


def test_detects_a_wrong_gradient(rng, monkeypatch):
    net = small_net([LayerSpec("dense", units=4), LayerSpec("elu")], (5,))
    monkeypatch.setattr(layers_mod.ops, "elu_backward", lambda y, g, alpha=1.0: g)
    result = gradient_check(net, rng.standard_normal((4, 5)) - 1.0)
    assert float(result) > 1e-2


def test_parameters_restored(rng):
    net = small_net([LayerSpec("conv1d", units=2, kernel=3), LayerSpec("elu")], (6, 1))
    before = net.state_dict()
    gradient_check(net, rng.standard_normal((4, 6, 1)))
    for name, value in net.state_dict().items():
        np.testing.assert_array_equal(value, before[name])


def test_backward_by_hand():
    # y = w * x + b summed over the batch; dL/dw = sum x, dL/db = batch size
    net = small_net([LayerSpec("dense", units=1)], (1,))
    net.load_state_dict({"00.dense.kernel": np.array([[2.0]]), "00.dense.bias": np.array([0.5])})
    x = np.array([[1.0], [3.0]])
    out = net.forward(x, training=True)
    grads, dx = backward(net, Loss(float(out.sum()), np.ones_like(out)))
    np.testing.assert_array_equal(grads["00.dense.kernel"], [[4.0]])
    np.testing.assert_array_equal(grads["00.dense.bias"], [2.0])
    np.testing.assert_array_equal(dx, [[2.0], [2.0]])


def test_backward_accumulation_reset(rng):
    net = small_net([LayerSpec("dense", units=2)], (3,))
    x = rng.standard_normal((4, 3))
    out = net.forward(x, training=True)
    first, _ = backward(net, Loss(0.0, np.ones_like(out)))
    second, _ = backward(net, Loss(0.0, np.ones_like(out)))
    for name in first:
        np.testing.assert_array_equal(first[name], second[name])


def test_backward_rejects_vector_loss(rng):
    net = small_net([LayerSpec("dense", units=2)], (3,))
    out = net.forward(rng.standard_normal((4, 3)), training=True)
    with pytest.raises(ValueError):
        backward(net, Loss(np.ones(2), np.ones_like(out)))


@pytest.mark.parametrize("builder,shape", [(build_dae, (224,)), (build_cae, (112, 2))])
def test_full_model_sampled(builder, shape, rng):
    net = builder(28, seed=3, dtype="float64")
    result = gradient_check(net, rng.uniform(0, 1, (4,) + shape), max_elements=6)
    assert float(result) < TOL, result.per_parameter
    assert result.checked > 0
