"""Input validation helpers shared by the engine and the estimators."""

import numpy as np


def as_matrix(x, name="X", dtype=None):
    """Coerce to a 2-D float ndarray, rejecting NaN/Inf entries."""
    a = np.asarray(x, dtype=dtype if dtype is not None else np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite entries")
    return a


def check_same_shape(a, b, name_a="a", name_b="b"):
    if a.shape != b.shape:
        raise ValueError(
            f"shape mismatch: {name_a} is {a.shape}, {name_b} is {b.shape}"
        )


def check_unit_range(x, name="X"):
    lo, hi = float(x.min()), float(x.max())
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"{name} entries must lie in [0, 1], got [{lo}, {hi}]")


def as_label_vector(y, n=None, name="labels"):
    """Coerce to a 1-D int64 vector of non-negative labels."""
    v = np.asarray(y)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if v.size and not np.issubdtype(v.dtype, np.integer):
        w = np.asarray(v, dtype=np.float64)
        if not np.allclose(w, np.round(w)):
            raise ValueError(f"{name} must be integer-valued")
    v = v.astype(np.int64)
    if v.size and v.min() < 0:
        raise ValueError(f"{name} must be non-negative")
    if n is not None and v.shape[0] != n:
        raise ValueError(f"{name} has length {v.shape[0]}, expected {n}")
    return v


def check_consistent_length(a, b, name_a="a", name_b="b"):
    if len(a) != len(b):
        raise ValueError(
            f"length mismatch: {name_a} has {len(a)}, {name_b} has {len(b)}"
        )
