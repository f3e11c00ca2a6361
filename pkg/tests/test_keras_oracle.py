"""Cross-check the engine against an equivalent Keras model (skipped without TensorFlow).

Weights are copied layer by layer; outputs, loss gradients and one Adam step
must agree in float64.
"""
import os

import numpy as np
import pytest

os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "3")
tf = pytest.importorskip("tensorflow")
keras = tf.keras

from stokesae.engine import Adam, Parameter  # noqa: E402
from stokesae.models import Autoencoder, to_flat  # noqa: E402
from stokesae.training import loss_and_grad  # noqa: E402


def keras_layer(spec, dtype):
    kw = {"dtype": dtype}
    if spec.kind == "dense":
        return keras.layers.Dense(spec.units, **kw)
    if spec.kind == "conv1d":
        return keras.layers.Conv1D(spec.units, spec.kernel, padding="same", **kw)
    if spec.kind == "conv1d_transpose":
        return keras.layers.Conv1DTranspose(spec.units, spec.kernel, padding="same", **kw)
    if spec.kind == "maxpool1d":
        return keras.layers.MaxPooling1D(spec.factor, **kw)
    if spec.kind == "avgpool1d":
        return keras.layers.AveragePooling1D(spec.factor, **kw)
    if spec.kind == "upsample1d":
        return keras.layers.UpSampling1D(spec.factor, **kw)
    if spec.kind == "batchnorm":
        return keras.layers.BatchNormalization(epsilon=1e-3, momentum=0.99, **kw)
    if spec.kind == "elu":
        return keras.layers.ELU(1.0, **kw)
    if spec.kind == "flatten":
        return keras.layers.Flatten(**kw)
    if spec.kind == "reshape":
        return keras.layers.Reshape(spec.target, **kw)
    raise AssertionError(spec.kind)


def mirror(model):
    """A Keras Sequential with the same layers and weights as ``model.network``."""
    net = model.network
    km = keras.Sequential([keras.Input(net.input_shape, dtype="float64")]
                          + [keras_layer(s, "float64") for s in net.specs])
    for ours, theirs in zip(net.layers, km.layers):
        values = [p.value.astype(np.float64) for p in ours.params.values()]
        if values:
            theirs.set_weights(values)
    return km


@pytest.fixture(scope="module", params=["CAE", "DAE"])
def pair(request):
    model = Autoencoder.build(request.param, 28, seed=4, dtype="float64")
    rng = np.random.default_rng(0)
    # non-trivial moving statistics
    warm = rng.uniform(0, 1, (32, 112, 2))
    model.network.forward(model.to_input(warm), training=True, record=False)
    return model, mirror(model)


def test_inference_outputs_agree(pair):
    model, km = pair
    x = model.to_input(np.random.default_rng(1).uniform(0, 1, (6, 112, 2)))
    np.testing.assert_allclose(model.network.predict(x), km(x, training=False).numpy(), rtol=1e-9, atol=1e-11)


def test_training_gradients_agree(pair):
    model, km = pair
    batch = np.random.default_rng(2).uniform(0, 1, (8, 112, 2))
    x = model.to_input(batch)
    net = model.network
    snapshot = net.state_dict()
    out = net.forward(x, training=True)
    _, grad = loss_and_grad(model.from_output(out), batch)
    net.zero_grad()
    net.backward(model.to_input(grad))
    ours = [p.grad.copy() for _, p in net.parameters(trainable_only=True)]
    net.load_state_dict(snapshot)

    target = tf.constant(x)
    with tf.GradientTape() as tape:
        pred = km(target, training=True)
        if model.kind == "DAE":
            loss = tf.reduce_mean(tf.abs(pred[:, :112] - target[:, :112])) + \
                tf.reduce_mean(tf.abs(pred[:, 112:] - target[:, 112:]))
        else:
            loss = tf.reduce_mean(tf.abs(pred[..., 0] - target[..., 0])) + \
                tf.reduce_mean(tf.abs(pred[..., 1] - target[..., 1]))
    theirs = [g.numpy() for g in tape.gradient(loss, km.trainable_weights)]
    assert len(ours) == len(theirs)
    for a, b in zip(ours, theirs):
        np.testing.assert_allclose(a, b, rtol=1e-7, atol=1e-10)


def test_adam_step_agrees(rng):
    w = rng.standard_normal(5)
    grads = [rng.standard_normal(5) for _ in range(4)]
    # Keras passes lr and betas through float32; these values survive that exactly
    hyper = {"lr": 2.0 ** -7, "beta1": 0.875, "beta2": 1 - 2.0 ** -11}
    var = tf.Variable(w.copy())
    opt = keras.optimizers.Adam(learning_rate=hyper["lr"], beta_1=hyper["beta1"], beta_2=hyper["beta2"],
                                epsilon=1e-7)
    p = Parameter(w.copy())
    ours = Adam(**hyper)
    for g in grads:
        opt.apply_gradients([(tf.constant(g), var)])
        p.grad[...] = g
        ours.step([("w", p)])
    np.testing.assert_allclose(p.value, var.numpy(), rtol=1e-12)


def test_flatten_layout_matches_channel_blocks():
    x = np.random.default_rng(3).standard_normal((2, 112, 2))
    flat = to_flat(x)
    np.testing.assert_array_equal(flat[:, :112], x[..., 0])
