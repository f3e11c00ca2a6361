import numpy as np

from .config import DEFAULTS, ConfigError, NumericError


class Adam:
    """Adam with the bias correction folded into the step size (Keras form).

    ``theta -= lr * sqrt(1 - b2^t) / (1 - b1^t) * m / (sqrt(v) + eps)``
    """

    def __init__(self, lr=1e-3, beta1=DEFAULTS.adam_beta1, beta2=DEFAULTS.adam_beta2,
                 epsilon=DEFAULTS.adam_epsilon):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = {}
        self.v = {}

    @property
    def lr(self):
        return self._lr

    @lr.setter
    def lr(self, value):
        if not value >= 0:
            raise ConfigError(f"learning rate must be non-negative, got {value}")
        self._lr = float(value)

    def step(self, params):
        """Apply one update to ``params``, an iterable of ``(name, Parameter)``."""
        params = [(n, p) for n, p in params if p.trainable]
        for name, p in params:
            if not np.all(np.isfinite(p.grad)):
                raise NumericError(f"non-finite gradient in parameter {name}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        step = float(self._lr * np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t))
        for name, p in params:
            if name not in self.m:
                self.m[name] = np.zeros_like(p.value)
                self.v[name] = np.zeros_like(p.value)
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * np.square(p.grad)
            p.value -= step * m / (np.sqrt(v) + self.epsilon)

    def state(self):
        return {"lr": self._lr, "beta1": self.beta1, "beta2": self.beta2, "epsilon": self.epsilon, "t": self.t}
