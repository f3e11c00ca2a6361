"""Sequential layer graphs with reverse-mode gradients."""
import copy
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .config import ConfigError, NumericError, ShapeError, as_dtype
from .layers import LayerSpec, make_layer


class Loss(NamedTuple):
    """A scalar loss value and its gradient with respect to the graph output."""

    value: float
    grad: np.ndarray


class Network:
    """An ordered stack of layers with declared shapes and named parameters.

    ``bottleneck_index`` marks the layer whose output is the latent vector;
    :meth:`encode` runs layers ``[0, bottleneck_index]`` and :meth:`decode`
    the remainder.
    """

    def __init__(self, specs, input_shape, bottleneck_index=None, seed=0, dtype="float32", name="network"):
        self.specs = [s if isinstance(s, LayerSpec) else LayerSpec.from_dict(s) for s in specs]
        self.input_shape = tuple(int(d) for d in input_shape)
        self.bottleneck_index = bottleneck_index
        self.seed = int(seed)
        self.dtype = as_dtype(dtype)
        self.name = name
        if bottleneck_index is not None and not 0 <= bottleneck_index < len(self.specs):
            raise ConfigError(f"bottleneck index {bottleneck_index} outside the layer list")

        rng = np.random.default_rng(self.seed)
        self.layers = []
        self.shapes = [self.input_shape]
        shape = self.input_shape
        for spec in self.specs:
            layer = make_layer(spec)
            shape = tuple(layer.build(shape, rng, self.dtype))
            self.layers.append(layer)
            self.shapes.append(shape)
        self.output_shape = shape

    # -- parameters ---------------------------------------------------------

    def parameters(self, trainable_only=False):
        out = []
        for i, layer in enumerate(self.layers):
            for pname, p in layer.params.items():
                if trainable_only and not p.trainable:
                    continue
                out.append((f"{i:02d}.{layer.spec.kind}.{pname}", p))
        return out

    @property
    def param_count(self):
        return int(sum(p.value.size for _, p in self.parameters()))

    def zero_grad(self):
        for _, p in self.parameters():
            p.zero_grad()

    def state_dict(self):
        return {name: p.value.copy() for name, p in self.parameters()}

    def load_state_dict(self, state):
        params = dict(self.parameters())
        if set(params) != set(state):
            raise ConfigError("state dict parameter names do not match the graph")
        for name, value in state.items():
            if params[name].value.shape != value.shape:
                raise ShapeError(f"{name}: expected {params[name].value.shape}, got {value.shape}")
            params[name].value[...] = value

    def astype(self, dtype):
        """Return a deep copy with every parameter cast to ``dtype``."""
        dtype = as_dtype(dtype)
        clone = copy.deepcopy(self)
        clone.dtype = dtype
        for layer in clone.layers:
            layer._cache = None
            for p in layer.params.values():
                p.value = p.value.astype(dtype)
                p.grad = np.zeros_like(p.value)
        return clone

    # -- evaluation -----------------------------------------------------------

    def _check_input(self, x, start):
        expected = self.shapes[start]
        if tuple(x.shape[1:]) != expected:
            raise ShapeError(f"{self.name}: expected per-example shape {expected}, got {tuple(x.shape[1:])}")

    def forward(self, x, training=False, record=True, start=0, stop=None):
        """Run layers ``[start, stop)`` on a batch."""
        x = np.asarray(x, dtype=self.dtype)
        self._check_input(x, start)
        for layer in self.layers[start:stop]:
            x = layer.forward(x, training=training, record=record)
        if not np.all(np.isfinite(x)):
            raise NumericError(f"{self.name}: non-finite values in forward output")
        return x

    def backward(self, grad, start=0, stop=None):
        """Propagate ``grad`` from the output of layer ``stop - 1`` back to the input of ``start``.

        Parameter gradients accumulate; call :meth:`zero_grad` first.
        """
        grad = np.asarray(grad, dtype=self.dtype)
        for layer in reversed(self.layers[start:stop]):
            grad = layer.backward(grad)
        for name, p in self.parameters(trainable_only=True):
            if not np.all(np.isfinite(p.grad)):
                raise NumericError(f"non-finite gradient in parameter {name}")
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"{self.name}: non-finite input gradient")
        return grad

    def predict(self, x, batch_size=4096):
        """Inference-mode forward pass in chunks, without recording caches."""
        x = np.asarray(x, dtype=self.dtype)
        outs = [self.forward(x[i:i + batch_size], record=False) for i in range(0, len(x), batch_size)]
        if not outs:
            return np.zeros((0,) + self.output_shape, dtype=self.dtype)
        return np.concatenate(outs)

    def encode(self, x, batch_size=4096):
        if self.bottleneck_index is None:
            raise ConfigError(f"{self.name} has no bottleneck layer")
        stop = self.bottleneck_index + 1
        x = np.asarray(x, dtype=self.dtype)
        outs = [self.forward(x[i:i + batch_size], record=False, stop=stop) for i in range(0, len(x), batch_size)]
        return np.concatenate(outs) if outs else np.zeros((0,) + self.shapes[stop], dtype=self.dtype)

    def decode(self, z, batch_size=4096):
        if self.bottleneck_index is None:
            raise ConfigError(f"{self.name} has no bottleneck layer")
        start = self.bottleneck_index + 1
        z = np.asarray(z, dtype=self.dtype)
        if z.ndim != 2 or z.shape[1:] != self.shapes[start]:
            raise ShapeError(f"latent width mismatch: expected {self.shapes[start]}, got {z.shape[1:]}")
        outs = [self.forward(z[i:i + batch_size], record=False, start=start) for i in range(0, len(z), batch_size)]
        return np.concatenate(outs) if outs else np.zeros((0,) + self.output_shape, dtype=self.dtype)

    def shape_trace(self):
        """One row per layer: ``(index, label, input shape, output shape, parameter count)``."""
        rows = []
        for i, layer in enumerate(self.layers):
            n = int(sum(p.value.size for p in layer.params.values()))
            rows.append((i, layer.spec.label(), self.shapes[i], self.shapes[i + 1], n))
        return rows

    def kink_signature(self):
        return [layer.kink_signature() for layer in self.layers if layer.has_kinks]


def backward(graph, loss):
    """Reverse-mode gradients of a scalar :class:`Loss` for every trainable parameter.

    Returns ``(param_grads, input_grad)`` where ``param_grads`` maps parameter
    names to copies of their gradients. The graph must hold a recorded
    forward pass that produced ``loss``.
    """
    if np.ndim(loss.value) != 0:
        raise ShapeError(f"loss must be a scalar, got shape {np.shape(loss.value)}")
    graph.zero_grad()
    dx = graph.backward(loss.grad)
    return {name: p.grad.copy() for name, p in graph.parameters(trainable_only=True)}, dx


def projection_loss(weights):
    """Smooth scalar loss ``sum(out * weights)`` used for gradient checking."""
    def loss_fn(out):
        return Loss(float(np.sum(out * weights)), weights.astype(out.dtype))
    return loss_fn


@dataclass
class GradCheckResult:
    max_relative_error: float
    per_parameter: dict = field(default_factory=dict)
    directional_error: float = 0.0
    checked: int = 0
    skipped: int = 0

    def __float__(self):
        return float(max(self.max_relative_error, self.directional_error))


def _relative_error(a, b, floor):
    return abs(a - b) / max(abs(a), abs(b), floor)


def gradient_check(graph, inputs, h=1e-4, loss_fn=None, training=True, max_elements=None,
                   include_input=True, seed=0, floor=1e-4, shrink_steps=2):
    """Compare reverse-mode gradients with central finite differences.

    Works on a float64 graph. ``max_elements`` caps the number of entries
    probed per parameter tensor (sampled without replacement, ``None`` checks
    every entry). A directional check along one random direction per tensor
    covers the unsampled entries.

    When the ``+-h`` perturbation changes a max-pool argmax or flips the sign
    of an ELU input, the step is divided by 10 (at most ``shrink_steps``
    times) until it stays on one side of every kink; entries that still cross
    (ties, where only a subgradient exists) are skipped. The
    relative error is ``|a - n| / max(|a|, |n|, floor)``, so at a 1e-4
    threshold an entry passes when it is within 1e-4 relative or 1e-8
    absolute (``np.isclose`` defaults). The absolute part matters for
    gradients that are exactly zero, such as a bias feeding batch norm
    through a linear path: central differences at ``h=1e-4`` only resolve
    them to about 1e-9.
    """
    if graph.dtype != np.float64:
        raise ConfigError("gradient_check requires a float64 graph; use graph.astype('float64')")
    rng = np.random.default_rng(seed)
    x = np.array(inputs, dtype=np.float64)
    if loss_fn is None:
        loss_fn = projection_loss(rng.standard_normal((len(x),) + graph.output_shape))
    saved = graph.state_dict()

    out = graph.forward(x, training=training)
    base_sig = graph.kink_signature()
    grads, dx = backward(graph, loss_fn(out))

    def probe(arr, idx, direction):
        """Central difference of the loss along ``direction`` at ``arr[idx]``."""
        orig = arr[idx].copy() if direction is not None else arr[idx]
        d = 1.0 if direction is None else direction
        step = h
        for _ in range(shrink_steps + 1):
            values = []
            ok = True
            for sign in (1, -1):
                arr[idx] = orig + sign * step * d
                values.append(loss_fn(graph.forward(x, training=training)).value)
                ok = ok and all(np.array_equal(a, b) for a, b in zip(graph.kink_signature(), base_sig))
            arr[idx] = orig
            if ok:
                return (values[0] - values[1]) / (2 * step)
            step /= 10
        return None

    targets = [(name, p.value, grads[name]) for name, p in graph.parameters(trainable_only=True)]
    if include_input:
        targets.append(("input", x, dx))

    result = GradCheckResult(0.0)
    for name, arr, g in targets:
        n = arr.size
        if max_elements is None or n <= max_elements:
            flat_ids = np.arange(n)
        else:
            flat_ids = np.sort(rng.choice(n, max_elements, replace=False))
        worst = 0.0
        for flat in flat_ids:
            idx = np.unravel_index(int(flat), arr.shape)
            num = probe(arr, idx, None)
            if num is None:
                result.skipped += 1
                continue
            result.checked += 1
            worst = max(worst, _relative_error(float(g[idx]), num, floor))
        result.per_parameter[name] = worst
        result.max_relative_error = max(result.max_relative_error, worst)

        direction = rng.standard_normal(arr.shape)
        num = probe(arr, Ellipsis, direction)
        if num is not None:
            result.directional_error = max(
                result.directional_error, _relative_error(float(np.sum(g * direction)), num, floor)
            )
    graph.load_state_dict(saved)
    return result
