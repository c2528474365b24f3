"""Encoder/decoder/critic network definitions and the checkpoint container.

Checkpoints are .npz archives of named little-endian arrays plus a JSON
manifest string carrying shapes, optimizer scalars, RNG states, and the
architecture/config hashes.
"""

import hashlib
import json
import os
import tempfile

import numpy as np

from .linalg import DenseLayer, init_layer, mlp_forward
from .optim import Adam, SgdMomentum


DEFAULT_HIDDEN = (500, 500, 2000)
DEFAULT_LATENT = 10


class Autoencoder:
    """Fully-connected autoencoder.

    Encoder widths are d, *hidden, latent with ReLU everywhere except the
    linear bottleneck; the decoder mirrors them with a linear output layer.
    """

    def __init__(self, encoder, decoder):
        self.encoder = list(encoder)
        self.decoder = list(decoder)
        if self.encoder[-1].n_out != self.decoder[0].n_in:
            raise ValueError("encoder output width must match decoder input")
        if self.encoder[0].n_in != self.decoder[-1].n_out:
            raise ValueError("decoder must map back to the input width")

    @classmethod
    def build(cls, rng, d, hidden=DEFAULT_HIDDEN, latent=DEFAULT_LATENT,
              dtype=np.float64):
        enc_widths = [d, *hidden, latent]
        dec_widths = [latent, *reversed(hidden), d]
        encoder = []
        for i in range(len(enc_widths) - 1):
            act = "linear" if i == len(enc_widths) - 2 else "relu"
            encoder.append(init_layer(rng, enc_widths[i], enc_widths[i + 1],
                                      act, dtype))
        decoder = []
        for i in range(len(dec_widths) - 1):
            act = "linear" if i == len(dec_widths) - 2 else "relu"
            decoder.append(init_layer(rng, dec_widths[i], dec_widths[i + 1],
                                      act, dtype))
        return cls(encoder, decoder)

    @property
    def d(self):
        return self.encoder[0].n_in

    @property
    def latent_dim(self):
        return self.encoder[-1].n_out

    @property
    def dtype(self):
        return self.encoder[0].weights.dtype

    def parameters(self):
        """Flat list of parameter arrays: encoder then decoder, W before b."""
        out = []
        for layer in self.encoder + self.decoder:
            out.append(layer.weights)
            out.append(layer.bias)
        return out

    def encode(self, x):
        return mlp_forward(self.encoder, np.asarray(x, dtype=self.dtype))[0]

    def decode(self, z):
        return mlp_forward(self.decoder, np.asarray(z, dtype=self.dtype))[0]

    def reconstruct(self, x):
        return self.decode(self.encode(x))

    def layer_dims(self):
        dims = [(l.n_in, l.n_out, l.activation)
                for l in self.encoder + self.decoder]
        return dims

    def astype(self, dtype):
        if self.dtype == dtype:
            return self
        return Autoencoder(_cast_layers(self.encoder, dtype),
                           _cast_layers(self.decoder, dtype))


class Critic:
    """Scalar-output network scoring decoded interpolations."""

    def __init__(self, layers):
        self.layers = list(layers)
        if self.layers[-1].n_out != 1:
            raise ValueError("critic must emit one scalar per sample")

    @classmethod
    def build(cls, rng, d, hidden=DEFAULT_HIDDEN, dtype=np.float64):
        widths = [d, *hidden, 1]
        layers = []
        for i in range(len(widths) - 1):
            act = "linear" if i == len(widths) - 2 else "relu"
            layers.append(init_layer(rng, widths[i], widths[i + 1], act, dtype))
        return cls(layers)

    @property
    def dtype(self):
        return self.layers[0].weights.dtype

    def parameters(self):
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out

    def score(self, x):
        return mlp_forward(self.layers, np.asarray(x, dtype=self.dtype))[0]

    def layer_dims(self):
        return [(l.n_in, l.n_out, l.activation) for l in self.layers]

    def astype(self, dtype):
        if self.dtype == dtype:
            return self
        return Critic(_cast_layers(self.layers, dtype))


def _cast_layers(layers, dtype):
    return [DenseLayer(l.weights.astype(dtype), l.bias.astype(dtype),
                       l.activation) for l in layers]


def architecture_hash(ae, critic=None):
    """Stable fingerprint of layer widths and activations."""
    parts = ["enc+dec:" + ";".join(f"{i}x{o}:{a}" for i, o, a in ae.layer_dims())]
    if critic is not None:
        parts.append("crit:" + ";".join(f"{i}x{o}:{a}"
                                        for i, o, a in critic.layer_dims()))
    return hashlib.sha256("|".join(parts).encode()).hexdigest()[:16]


def _layers_to_arrays(prefix, layers, arrays, meta):
    meta[prefix] = [l.activation for l in layers]
    for i, l in enumerate(layers):
        arrays[f"{prefix}/{i}/W"] = l.weights
        arrays[f"{prefix}/{i}/b"] = l.bias


def _layers_from_arrays(prefix, arrays, meta):
    acts = meta[prefix]
    return [DenseLayer(arrays[f"{prefix}/{i}/W"], arrays[f"{prefix}/{i}/b"], a)
            for i, a in enumerate(acts)]


def _optimizer_meta(opt):
    meta = {"kind": opt.kind, "lr": opt.lr, "t": opt.t}
    if isinstance(opt, Adam):
        meta.update(beta1=opt.beta1, beta2=opt.beta2, eps=opt.eps)
    else:
        meta.update(momentum=opt.momentum)
    return meta


def _optimizer_from_meta(meta, arrays, prefix):
    if meta["kind"] == "adam":
        opt = Adam(meta["lr"], meta["beta1"], meta["beta2"], meta["eps"])
    else:
        opt = SgdMomentum(meta["lr"], meta["momentum"])
    state = {}
    for key in ("m", "v"):
        bufs = []
        i = 0
        while f"{prefix}/{key}/{i}" in arrays:
            bufs.append(arrays[f"{prefix}/{key}/{i}"])
            i += 1
        if bufs:
            state[key] = bufs
    if state:
        if meta["kind"] == "adam":
            opt.load_state({"m": state["m"], "v": state["v"]}, meta["t"])
        else:
            opt.load_state({"v": state["v"]}, meta["t"])
    return opt


def atomic_write_bytes(path, payload):
    """Write via a temp file + rename so a killed run never truncates."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path, ae, critic=None, optimizers=None, rng_states=None,
                    iteration=0, config_hash="", extra_arrays=None,
                    extra_meta=None):
    """Serialize models + optimizer buffers + RNG states to one .npz file."""
    arrays = {}
    meta = {
        "format_version": 1,
        "iteration": int(iteration),
        "arch_hash": architecture_hash(ae, critic),
        "config_hash": config_hash,
        "precision": "f32" if ae.dtype == np.float32 else "f64",
        "rng": rng_states or {},
        "optimizers": {},
    }
    _layers_to_arrays("enc", ae.encoder, arrays, meta)
    _layers_to_arrays("dec", ae.decoder, arrays, meta)
    if critic is not None:
        _layers_to_arrays("crit", critic.layers, arrays, meta)
    for name, opt in (optimizers or {}).items():
        meta["optimizers"][name] = _optimizer_meta(opt)
        for key, bufs in opt.state_arrays().items():
            for i, buf in enumerate(bufs):
                arrays[f"opt_{name}/{key}/{i}"] = buf
    for name, arr in (extra_arrays or {}).items():
        arrays[name] = arr
    if extra_meta:
        meta.update(extra_meta)
    meta["shapes"] = {k: list(v.shape) for k, v in arrays.items()}
    arrays["__manifest__"] = np.frombuffer(
        json.dumps(meta).encode(), dtype=np.uint8
    )

    import io

    buf = io.BytesIO()
    np.savez(buf, **arrays)
    atomic_write_bytes(path, buf.getvalue())
    return path


class CheckpointBundle:
    def __init__(self, ae, critic, optimizers, meta, arrays):
        self.ae = ae
        self.critic = critic
        self.optimizers = optimizers
        self.meta = meta
        self.arrays = arrays

    @property
    def iteration(self):
        return self.meta["iteration"]

    @property
    def rng_states(self):
        return self.meta.get("rng", {})


def load_checkpoint(path):
    with np.load(path) as z:
        arrays = {k: z[k] for k in z.files}
    meta = json.loads(bytes(arrays.pop("__manifest__")).decode())
    ae = Autoencoder(_layers_from_arrays("enc", arrays, meta),
                     _layers_from_arrays("dec", arrays, meta))
    critic = None
    if "crit" in meta:
        critic = Critic(_layers_from_arrays("crit", arrays, meta))
    optimizers = {
        name: _optimizer_from_meta(om, arrays, f"opt_{name}")
        for name, om in meta.get("optimizers", {}).items()
    }
    return CheckpointBundle(ae, critic, optimizers, meta, arrays)


def restore_rng(state):
    """Rebuild a numpy Generator from a saved bit-generator state dict."""
    gen = np.random.default_rng(0)
    if state["bit_generator"] != gen.bit_generator.state["bit_generator"]:
        raise ValueError(
            f"checkpoint used RNG {state['bit_generator']}, "
            "which does not match the runtime default"
        )
    gen.bit_generator.state = state
    return gen
