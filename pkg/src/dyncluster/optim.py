"""SGD-with-momentum and Adam, operating in place on parameter array lists."""

import numpy as np


class SgdMomentum:
    """v <- momentum*v - lr*g;  p <- p + v."""

    kind = "sgd_momentum"

    def __init__(self, lr, momentum=0.0):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.lr = lr
        self.momentum = momentum
        self.t = 0
        self._v = None

    def step(self, params, grads):
        if self._v is None:
            self._v = [np.zeros_like(p) for p in params]
        if len(params) != len(self._v) or len(grads) != len(self._v):
            raise ValueError("parameter/gradient list length mismatch")
        for p, g, v in zip(params, grads, self._v):
            if p.shape != g.shape:
                raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
            v *= self.momentum
            v -= self.lr * g
            p += v
        self.t += 1

    def state_arrays(self):
        return {"v": self._v or []}

    def load_state(self, arrays, t):
        self._v = list(arrays["v"])
        self.t = t


class Adam:
    """Bias-corrected Adam with the usual defaults."""

    kind = "adam"

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = None
        self._v = None
        self._scratch = None

    def step(self, params, grads):
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        if self._scratch is None:
            self._scratch = [np.empty_like(p) for p in self._m]
        if len(params) != len(self._m) or len(grads) != len(self._m):
            raise ValueError("parameter/gradient list length mismatch")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        step_size = self.lr / b1t
        denom_scale = 1.0 / np.sqrt(b2t)
        for p, g, m, v, w in zip(params, grads, self._m, self._v,
                                 self._scratch):
            if p.shape != g.shape:
                raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
            m *= self.beta1
            np.multiply(g, 1.0 - self.beta1, out=w)
            m += w
            v *= self.beta2
            np.multiply(g, g, out=w)
            w *= 1.0 - self.beta2
            v += w
            np.sqrt(v, out=w)
            w *= denom_scale
            w += self.eps
            np.divide(m, w, out=w)
            w *= step_size
            p -= w

    def state_arrays(self):
        return {"m": self._m or [], "v": self._v or []}

    def load_state(self, arrays, t):
        self._m = list(arrays["m"])
        self._v = list(arrays["v"])
        self.t = t


def make_optimizer(kind, lr, momentum=0.9):
    if kind == "adam":
        return Adam(lr)
    if kind == "sgd_momentum":
        return SgdMomentum(lr, momentum)
    raise ValueError(f"unknown optimizer kind {kind!r}")
