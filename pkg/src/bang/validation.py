"""Input validation helpers used by the estimators and file readers."""

from __future__ import annotations

import numpy as np

from .errors import ParameterError

SUPPORTED_SCALARS = {"u8": np.uint8, "i8": np.int8, "f32": np.float32}


def check_positive(name: str, value: int | float, minimum=1) -> None:
    if value < minimum:
        raise ParameterError(f"{name} must be >= {minimum}, got {value}")


def check_matrix(x, name: str = "X", dtype=None) -> np.ndarray:
    """Coerce ``x`` to a 2-D contiguous array and reject NaN/inf floats."""
    arr = np.asarray(x) if dtype is None else np.asarray(x, dtype=dtype)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ParameterError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.dtype.kind == "f" and not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)


def check_scalar_kind(dtype: np.dtype, name: str = "data") -> str:
    """Map an array dtype onto one of the supported scalar kinds."""
    for kind, np_dtype in SUPPORTED_SCALARS.items():
        if dtype == np_dtype:
            return kind
    raise ParameterError(
        f"{name} must have dtype uint8, int8 or float32, got {dtype}"
    )


def as_float32_rows(x: np.ndarray) -> np.ndarray:
    """Widen integer scalar types to float32 before any distance math."""
    if x.dtype == np.float32:
        return x
    return x.astype(np.float32)
