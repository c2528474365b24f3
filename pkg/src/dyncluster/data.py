"""Dataset loading, normalization, augmentation, and batching.

Two on-disk formats are supported:

* IDX (the classic big-endian MNIST container), transparently gunzipped.
* A flat little-endian container for 16x16 digit data:
  header  u32 magic (0x53505355, file starts with ASCII "USPS"),
          u32 sample count N, u32 flattened dimension d;
  payload N*d float32 pixel values;
  trailer optional N uint8 labels (presence inferred from file size).
  Payload values already inside [0, 1] are kept verbatim; otherwise the
  whole payload is min-max rescaled into [0, 1].
"""

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .validation import as_label_vector

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
USPS_MAGIC = 0x53505355


class FormatError(ValueError):
    """File does not match the declared binary format."""


@dataclass
class Dataset:
    """Flattened grayscale samples in [0, 1] plus optional labels."""

    X: np.ndarray
    labels: np.ndarray | None
    image_shape: tuple[int, int]
    name: str = ""

    def __post_init__(self):
        h, w = self.image_shape
        if self.X.ndim != 2 or self.X.shape[1] != h * w:
            raise ValueError(
                f"X has shape {self.X.shape}, expected (*, {h * w})"
            )
        if self.X.size:
            lo, hi = float(self.X.min()), float(self.X.max())
            if lo < 0.0 or hi > 1.0:
                raise ValueError(f"pixel values outside [0,1]: [{lo}, {hi}]")
        if self.labels is not None:
            self.labels = as_label_vector(self.labels, n=self.X.shape[0])

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def n_classes(self):
        if self.labels is None:
            return None
        return int(self.labels.max()) + 1


@dataclass
class AugmentConfig:
    """Random shift/rotation magnitudes; disabled config is the identity."""

    max_shift_fraction: float = 0.1
    max_rotation_degrees: float = 10.0
    enabled: bool = True

    def __post_init__(self):
        if not 0.0 <= self.max_shift_fraction <= 0.25:
            raise ValueError("max_shift_fraction must be in [0, 0.25]")
        if not 0.0 <= self.max_rotation_degrees <= 30.0:
            raise ValueError("max_rotation_degrees must be in [0, 30]")


def _read_bytes(path):
    with open(path, "rb") as f:
        head = f.read(2)
        f.seek(0)
        if path.endswith(".gz") or head == b"\x1f\x8b":
            return gzip.open(path, "rb").read()
        return f.read()


def _parse_idx(blob, path):
    if len(blob) < 4:
        raise OSError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack(">I", blob[:4])
    if magic == IDX_IMAGE_MAGIC:
        ndim = 3
    elif magic == IDX_LABEL_MAGIC:
        ndim = 1
    else:
        raise FormatError(f"{path}: bad IDX magic 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise OSError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", blob[4:header])
    expected = int(np.prod(dims))
    payload = blob[header:]
    if len(payload) < expected:
        raise OSError(
            f"{path}: payload holds {len(payload)} bytes, expected {expected}"
        )
    data = np.frombuffer(payload, dtype=np.uint8, count=expected)
    return magic, dims, data


def load_idx(images_path, labels_path=None, name=None):
    """Load an IDX image file (and optional IDX label file) as a Dataset.

    Pixel bytes are scaled by 1/255 into [0, 1].
    """
    magic, dims, raw = _parse_idx(_read_bytes(images_path), images_path)
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(f"{images_path}: not an IDX image file")
    n, h, w = dims
    x = raw.astype(np.float64).reshape(n, h * w) / 255.0
    labels = None
    if labels_path is not None:
        lmagic, ldims, lraw = _parse_idx(_read_bytes(labels_path), labels_path)
        if lmagic != IDX_LABEL_MAGIC:
            raise FormatError(f"{labels_path}: not an IDX label file")
        if ldims[0] != n:
            raise ValueError(
                f"label count {ldims[0]} does not match image count {n}"
            )
        labels = lraw.astype(np.int64)
    if name is None:
        name = images_path.rsplit("/", 1)[-1].split(".")[0]
    return Dataset(x, labels, (h, w), name)


def load_usps(path, name="usps"):
    """Load the flat binary container documented in this module."""
    blob = _read_bytes(path)
    if len(blob) < 12:
        raise OSError(f"{path}: truncated header")
    magic, n, d = struct.unpack("<III", blob[:12])
    if magic != USPS_MAGIC:
        raise FormatError(f"{path}: bad magic 0x{magic:08x}")
    body = blob[12:]
    need = n * d * 4
    if len(body) < need:
        raise OSError(f"{path}: payload holds {len(body)} bytes, need {need}")
    x = np.frombuffer(body, dtype="<f4", count=n * d).astype(np.float64)
    x = x.reshape(n, d)
    rest = body[need:]
    labels = None
    if len(rest) == n and n > 0:
        labels = np.frombuffer(rest, dtype=np.uint8).astype(np.int64)
    elif len(rest) not in (0, n):
        raise ValueError(f"{path}: {len(rest)} trailing bytes, expected 0 or {n}")
    lo, hi = (float(x.min()), float(x.max())) if x.size else (0.0, 0.0)
    if lo < 0.0 or hi > 1.0:
        span = hi - lo
        x = (x - lo) / span if span > 0 else np.zeros_like(x)
    side = int(round(np.sqrt(d)))
    if side * side != d:
        raise ValueError(f"{path}: dimension {d} is not a square image")
    return Dataset(x, labels, (side, side), name)


def save_usps(path, ds):
    """Write a Dataset into the flat binary container (float32 payload)."""
    from .models import atomic_write_bytes

    parts = [struct.pack("<III", USPS_MAGIC, ds.n, ds.d)]
    parts.append(np.ascontiguousarray(ds.X, dtype="<f4").tobytes())
    if ds.labels is not None:
        parts.append(ds.labels.astype(np.uint8).tobytes())
    atomic_write_bytes(path, b"".join(parts))
    return path


def augment(batch, shape, cfg, rng):
    """Independently shift and rotate each image in a flattened batch.

    Each image is rotated by a uniform angle in +-max_rotation_degrees
    about its center (positive = counterclockwise with row 0 on top),
    then shifted by whole pixels drawn uniformly in +-round(fraction*side)
    per axis. Resampling is bilinear with zero padding; the result is
    clipped to [0, 1]. A disabled config returns the input unchanged.
    """
    if not cfg.enabled:
        return batch
    h, w = shape
    b = batch.shape[0]
    imgs = batch.reshape(b, h, w)

    max_dy = int(round(cfg.max_shift_fraction * h))
    max_dx = int(round(cfg.max_shift_fraction * w))
    dy = rng.integers(-max_dy, max_dy + 1, size=b)[:, None, None]
    dx = rng.integers(-max_dx, max_dx + 1, size=b)[:, None, None]
    theta = np.radians(
        rng.uniform(-cfg.max_rotation_degrees, cfg.max_rotation_degrees, size=b)
    )[:, None, None]

    mr, mc = (h - 1) / 2.0, (w - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    ry = rr[None] - dy - mr
    cx = cc[None] - dx - mc
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    src_r = cos_t * ry + sin_t * cx + mr
    src_c = -sin_t * ry + cos_t * cx + mc

    r0 = np.floor(src_r).astype(np.int64)
    c0 = np.floor(src_c).astype(np.int64)
    wr = src_r - r0
    wc = src_c - c0

    def gather(ri, ci):
        ok = (ri >= 0) & (ri < h) & (ci >= 0) & (ci < w)
        flat = np.clip(ri, 0, h - 1) * w + np.clip(ci, 0, w - 1)
        idx = np.arange(b)[:, None, None] * (h * w) + flat
        return np.where(ok, imgs.reshape(-1)[idx], 0.0)

    out = ((1 - wr) * (1 - wc) * gather(r0, c0)
           + (1 - wr) * wc * gather(r0, c0 + 1)
           + wr * (1 - wc) * gather(r0 + 1, c0)
           + wr * wc * gather(r0 + 1, c0 + 1))
    out = np.clip(out, 0.0, 1.0).astype(batch.dtype)
    return out.reshape(b, h * w)


def batch_iter(ds, batch_size, rng):
    """One epoch of shuffled mini-batches, yielding (indices, rows)."""
    if ds.n == 0:
        raise ValueError("dataset is empty")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = rng.permutation(ds.n)
    for start in range(0, ds.n, batch_size):
        idx = order[start:start + batch_size]
        yield idx, ds.X[idx]
