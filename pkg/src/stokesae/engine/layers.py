"""Layer objects wrapping :mod:`stokesae.engine.ops` with parameters and caches."""
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .config import DEFAULTS, ConfigError, ShapeError

KINDS = (
    "dense", "conv1d", "conv1d_transpose", "maxpool1d", "avgpool1d",
    "upsample1d", "batchnorm", "elu", "flatten", "reshape",
)


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer.

    ``units`` is the dense width or the number of conv filters, ``kernel`` the
    conv kernel width, ``factor`` the pool/upsample factor and ``target`` the
    per-example shape for ``reshape``.
    """

    kind: str
    units: int | None = None
    kernel: int | None = None
    factor: int | None = None
    target: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("dense", "conv1d", "conv1d_transpose") and (self.units is None or self.units < 1):
            raise ConfigError(f"{self.kind} needs a positive units/filters count")
        if self.kind in ("conv1d", "conv1d_transpose"):
            if self.kernel is None or self.kernel < 1 or self.kernel % 2 == 0:
                raise ConfigError(f"{self.kind} kernel width must be odd and >= 1, got {self.kernel}")
        if self.kind in ("maxpool1d", "avgpool1d", "upsample1d"):
            if self.factor is None or self.factor < 2:
                raise ConfigError(f"{self.kind} factor must be >= 2, got {self.factor}")
        if self.kind == "reshape":
            if not self.target or any(int(d) < 1 for d in self.target):
                raise ConfigError("reshape needs a positive target shape")
            object.__setattr__(self, "target", tuple(int(d) for d in self.target))

    def to_dict(self):
        d = {"kind": self.kind}
        for key in ("units", "kernel", "factor"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        if self.target is not None:
            d["target"] = list(self.target)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "target" in d:
            d["target"] = tuple(d["target"])
        return cls(**d)

    def label(self):
        if self.kind == "dense":
            return f"Dense_{self.units}"
        if self.kind == "conv1d":
            return f"Conv_{self.units},{self.kernel}"
        if self.kind == "conv1d_transpose":
            return f"Deconv_{self.units},{self.kernel}"
        if self.kind == "maxpool1d":
            return f"Maxpool_{self.factor}"
        if self.kind == "avgpool1d":
            return f"Avgpool_{self.factor}"
        if self.kind == "upsample1d":
            return f"Upsampling_{self.factor}"
        if self.kind == "reshape":
            return "Reshape" + str(self.target)
        return {"batchnorm": "BN", "elu": "ELU", "flatten": "Flatten"}[self.kind]


@dataclass
class Parameter:
    value: np.ndarray
    trainable: bool = True
    grad: np.ndarray = field(init=False)

    def __post_init__(self):
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0


def glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base layer: stateless unless it defines parameters.

    Shapes passed to ``build``/``output_shape`` exclude the batch axis.
    """

    has_kinks = False

    def __init__(self, spec):
        self.spec = spec
        self.params = {}
        self._cache = None

    def output_shape(self, input_shape):
        return tuple(input_shape)

    def build(self, input_shape, rng, dtype):
        return self.output_shape(input_shape)

    def forward(self, x, training=False, record=True):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def _cached(self):
        if self._cache is None:
            raise RuntimeError(f"{self.spec.kind}: backward called without a recorded forward pass")
        return self._cache


class Dense(Layer):
    def output_shape(self, input_shape):
        if len(input_shape) != 1:
            raise ShapeError(f"dense expects a flat input, got {input_shape}")
        return (self.spec.units,)

    def build(self, input_shape, rng, dtype):
        out = self.output_shape(input_shape)
        fan_in = input_shape[0]
        self.params = {
            "kernel": Parameter(glorot_uniform(rng, (fan_in, self.spec.units), fan_in, self.spec.units, dtype)),
            "bias": Parameter(np.zeros(self.spec.units, dtype=dtype)),
        }
        return out

    def forward(self, x, training=False, record=True):
        y = ops.dense_forward(x, self.params["kernel"].value, self.params["bias"].value)
        self._cache = x if record else None
        return y

    def backward(self, grad):
        x = self._cached()
        dx, dw, db = ops.dense_backward(x, self.params["kernel"].value, grad)
        self.params["kernel"].grad += dw
        self.params["bias"].grad += db
        return dx


class Conv1D(Layer):
    transpose = False

    def output_shape(self, input_shape):
        if len(input_shape) != 2:
            raise ShapeError(f"{self.spec.kind} expects (length, channels), got {input_shape}")
        return (input_shape[0], self.spec.units)

    def build(self, input_shape, rng, dtype):
        out = self.output_shape(input_shape)
        k, cin, cout = self.spec.kernel, input_shape[1], self.spec.units
        shape = (k, cout, cin) if self.transpose else (k, cin, cout)
        # Keras convention: receptive field times channel count on each side
        self.params = {
            "kernel": Parameter(glorot_uniform(rng, shape, k * cin, k * cout, dtype)),
            "bias": Parameter(np.zeros(cout, dtype=dtype)),
        }
        return out

    def forward(self, x, training=False, record=True):
        fwd = ops.conv1d_transpose_forward if self.transpose else ops.conv1d_forward
        y, cols = fwd(x, self.params["kernel"].value, self.params["bias"].value, return_cols=True)
        self._cache = (x, cols) if record else None
        return y

    def backward(self, grad):
        x, cols = self._cached()
        bwd = ops.conv1d_transpose_backward if self.transpose else ops.conv1d_backward
        dx, dk, db = bwd(x, self.params["kernel"].value, grad, cols=cols)
        self.params["kernel"].grad += dk
        self.params["bias"].grad += db
        return dx


class Conv1DTranspose(Conv1D):
    transpose = True


class _Pool(Layer):
    def output_shape(self, input_shape):
        if len(input_shape) != 2:
            raise ShapeError(f"{self.spec.kind} expects (length, channels), got {input_shape}")
        length, channels = input_shape
        if length % self.spec.factor:
            raise ShapeError(f"{self.spec.kind}: length {length} not divisible by {self.spec.factor}")
        return (length // self.spec.factor, channels)


class MaxPool1D(_Pool):
    has_kinks = True

    def forward(self, x, training=False, record=True):
        y, argmax = ops.maxpool1d(x, self.spec.factor)
        self._cache = argmax if record else None
        return y

    def backward(self, grad):
        return ops.maxpool1d_backward(grad, self._cached(), self.spec.factor)

    def kink_signature(self):
        """Argmax pattern of the last forward pass, used to detect ties in gradient checks."""
        return None if self._cache is None else self._cache.copy()


class AvgPool1D(_Pool):
    def forward(self, x, training=False, record=True):
        self._cache = True if record else None
        return ops.avgpool1d(x, self.spec.factor)

    def backward(self, grad):
        self._cached()
        return ops.avgpool1d_backward(grad, self.spec.factor)


class UpSample1D(Layer):
    def output_shape(self, input_shape):
        if len(input_shape) != 2:
            raise ShapeError(f"upsample1d expects (length, channels), got {input_shape}")
        return (input_shape[0] * self.spec.factor, input_shape[1])

    def forward(self, x, training=False, record=True):
        self._cache = True if record else None
        return ops.upsample1d(x, self.spec.factor)

    def backward(self, grad):
        self._cached()
        return ops.upsample1d_backward(grad, self.spec.factor)


class BatchNorm(Layer):
    def __init__(self, spec, epsilon=DEFAULTS.bn_epsilon, momentum=DEFAULTS.bn_momentum):
        super().__init__(spec)
        self.epsilon = epsilon
        self.momentum = momentum

    def build(self, input_shape, rng, dtype):
        c = input_shape[-1]
        self.params = {
            "gamma": Parameter(np.ones(c, dtype=dtype)),
            "beta": Parameter(np.zeros(c, dtype=dtype)),
            "moving_mean": Parameter(np.zeros(c, dtype=dtype), trainable=False),
            "moving_variance": Parameter(np.ones(c, dtype=dtype), trainable=False),
        }
        return tuple(input_shape)

    def forward(self, x, training=False, record=True):
        p = self.params
        y, cache = ops.batchnorm_forward(
            x, p["gamma"].value, p["beta"].value, p["moving_mean"].value, p["moving_variance"].value,
            training, self.epsilon, self.momentum,
        )
        self._cache = cache if record else None
        return y

    def backward(self, grad):
        dx, dgamma, dbeta = ops.batchnorm_backward(grad, self.params["gamma"].value, self._cached())
        self.params["gamma"].grad += dgamma
        self.params["beta"].grad += dbeta
        return dx


class ELU(Layer):
    has_kinks = True

    def __init__(self, spec, alpha=DEFAULTS.elu_alpha):
        super().__init__(spec)
        self.alpha = alpha

    def forward(self, x, training=False, record=True):
        y = ops.elu(x, self.alpha)
        self._cache = y if record else None
        return y

    def backward(self, grad):
        return ops.elu_backward(self._cached(), grad, self.alpha)

    def kink_signature(self):
        """Sign pattern of the last input (same as the output's); ELU has a second-derivative jump at 0."""
        return None if self._cache is None else self._cache > 0


class Flatten(Layer):
    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x, training=False, record=True):
        self._cache = x.shape if record else None
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._cached())


class Reshape(Layer):
    def output_shape(self, input_shape):
        if int(np.prod(input_shape)) != int(np.prod(self.spec.target)):
            raise ShapeError(f"cannot reshape {input_shape} to {self.spec.target}")
        return self.spec.target

    def forward(self, x, training=False, record=True):
        self._cache = x.shape if record else None
        return x.reshape((x.shape[0],) + self.spec.target)

    def backward(self, grad):
        return grad.reshape(self._cached())


_CLASSES = {
    "dense": Dense,
    "conv1d": Conv1D,
    "conv1d_transpose": Conv1DTranspose,
    "maxpool1d": MaxPool1D,
    "avgpool1d": AvgPool1D,
    "upsample1d": UpSample1D,
    "batchnorm": BatchNorm,
    "elu": ELU,
    "flatten": Flatten,
    "reshape": Reshape,
}


def make_layer(spec):
    return _CLASSES[spec.kind](spec)
