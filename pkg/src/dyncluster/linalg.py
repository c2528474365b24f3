"""Dense matrix ops, fully-connected forward/backward passes, and loss plumbing.

Matrices are plain row-major numpy arrays (float64 by default; float32 is
supported as a storage/compute mode, with reductions accumulated in float64).
Backward passes are hand-chained reverse-mode derivatives for the fixed
affine+activation layer structure used everywhere in this package; there is
no general autodiff.
"""

from dataclasses import dataclass

import numpy as np


class NumericError(RuntimeError):
    """A computation produced a non-finite value."""


def matmul(a, b):
    """Matrix product with explicit shape checking.

    Delegates to BLAS via numpy; results are deterministic for a fixed
    thread count.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


def relu(x):
    return np.maximum(x, 0.0)


@dataclass
class DenseLayer:
    """Fully-connected layer: y = act(x @ weights + bias)."""

    weights: np.ndarray  # (in, out)
    bias: np.ndarray     # (out,)
    activation: str      # "relu" | "linear"

    def __post_init__(self):
        if self.activation not in ("relu", "linear"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ValueError("weights must be 2-D and bias 1-D")
        if self.bias.shape[0] != self.weights.shape[1]:
            raise ValueError(
                f"bias length {self.bias.shape[0]} does not match "
                f"weight columns {self.weights.shape[1]}"
            )

    @property
    def n_in(self):
        return self.weights.shape[0]

    @property
    def n_out(self):
        return self.weights.shape[1]


def init_layer(rng, n_in, n_out, activation, dtype=np.float64):
    """He-uniform init for ReLU layers, Glorot-uniform for linear ones."""
    if activation == "relu":
        limit = np.sqrt(6.0 / n_in)
    else:
        limit = np.sqrt(6.0 / (n_in + n_out))
    w = rng.uniform(-limit, limit, size=(n_in, n_out)).astype(dtype)
    b = np.zeros(n_out, dtype=dtype)
    return DenseLayer(w, b, activation)


def mlp_forward(layers, x):
    """Run a batch through affine+activation layers.

    Returns (output, cache); the cache holds each layer's input and
    pre-activation, which is exactly what mlp_backward needs.
    """
    a = np.asarray(x)
    if a.ndim != 2:
        raise ValueError("input batch must be 2-D")
    if a.shape[1] != layers[0].n_in:
        raise ValueError(
            f"input width {a.shape[1]} does not match first layer "
            f"({layers[0].n_in})"
        )
    cache = []
    for layer in layers:
        s = a @ layer.weights + layer.bias
        cache.append((a, s))
        a = relu(s) if layer.activation == "relu" else s
    return a, cache


def mlp_backward(layers, cache, grad_output):
    """Chain-rule pass matching mlp_forward.

    grad_output is d(loss)/d(output). Returns ([(dW, db) per layer],
    d(loss)/d(input)). ReLU uses the zero subgradient at 0.
    """
    if len(cache) != len(layers):
        raise ValueError(
            f"cache holds {len(cache)} layers, model has {len(layers)}"
        )
    g = np.asarray(grad_output)
    owned = False  # never mutate the caller's array
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        a_in, s = cache[i]
        if g.shape != s.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match layer {i} "
                f"pre-activation {s.shape}"
            )
        if layers[i].activation == "relu":
            mask = s > 0
            if owned:
                g *= mask
            else:
                g = g * mask
                owned = True
        dw = a_in.T @ g
        db = g.sum(axis=0, dtype=np.float64).astype(g.dtype)
        grads[i] = (dw, db)
        g = g @ layers[i].weights.T
        owned = True
    return grads, g


def mse_loss(pred, target):
    """Mean over batch rows of squared L2 row norms, plus its gradient."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    r = pred - target
    n = pred.shape[0]
    value = float(np.sum(r * r, dtype=np.float64) / n)
    grad = (2.0 / n) * r
    return value, grad


def zero_grads_like(layers):
    return [
        (np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in layers
    ]


def add_grads(acc, grads, scale=1.0):
    """acc[i] += scale * grads[i], in place."""
    for (aw, ab), (gw, gb) in zip(acc, grads):
        if scale == 1.0:
            aw += gw
            ab += gb
        else:
            aw += scale * gw
            ab += scale * gb
    return acc


def layers_to_vector(layers):
    """Flatten parameters in layer order, weights before bias."""
    parts = []
    for l in layers:
        parts.append(l.weights.ravel())
        parts.append(l.bias.ravel())
    return np.concatenate(parts)


def grads_to_vector(grads):
    parts = []
    for gw, gb in grads:
        parts.append(gw.ravel())
        parts.append(gb.ravel())
    return np.concatenate(parts)


def set_layers_from_vector(layers, vec):
    """Write a flat parameter vector back into the layers, in place."""
    pos = 0
    for l in layers:
        n = l.weights.size
        l.weights[...] = vec[pos:pos + n].reshape(l.weights.shape)
        pos += n
        n = l.bias.size
        l.bias[...] = vec[pos:pos + n].reshape(l.bias.shape)
        pos += n
    if pos != vec.size:
        raise ValueError(f"vector length {vec.size} does not match layers ({pos})")


def finite_diff_gradient(loss_fn, params, step=1e-5):
    """Central-difference gradient of loss_fn at a flat parameter vector.

    The independent oracle used everywhere analytic gradients are tested.
    """
    params = np.asarray(params, dtype=np.float64)
    grad = np.zeros_like(params)
    work = params.copy()
    for i in range(params.size):
        work[i] = params[i] + step
        up = loss_fn(work)
        work[i] = params[i] - step
        down = loss_fn(work)
        work[i] = params[i]
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericError(f"loss not finite near coordinate {i}")
        grad[i] = (up - down) / (2.0 * step)
    return grad
