"""Dense tensor conventions and parameter initialization.

Tensors are plain ``numpy.float64`` arrays in row-major (C) order; every
public operation in the library produces and expects that dtype.  This
module pins the conventions and provides the few primitives the rest of
the stack builds on.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError
from .rng import Rng


def as_tensor(values) -> np.ndarray:
    """Coerce to a C-contiguous float64 array."""
    return np.ascontiguousarray(values, dtype=np.float64)


def require_finite(x: np.ndarray, what: str = "input") -> np.ndarray:
    if not np.isfinite(x).all():
        raise NumericError(f"{what} contains non-finite values")
    return x


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rank-2 matrix product (m,k) x (k,n) -> (m,n) in float64."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def init_scaled_uniform(shape, fan_in: int, rng: Rng) -> np.ndarray:
    """I.i.d. uniform entries in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    if fan_in < 1:
        raise ValueError(f"fan_in must be >= 1, got {fan_in}")
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    if any(extent <= 0 for extent in shape):
        raise ShapeError(f"zero or negative extent in shape {shape}")
    limit = 1.0 / np.sqrt(float(fan_in))
    return rng.uniform_array(shape, -limit, limit)
