"""Lossless conversion of dense-array files into the matrix container."""

from __future__ import annotations

import warnings

import numpy as np

from capvox import write_fmat

from .errors import ValidationError

_DTYPE_TAGS = {np.dtype("float32"): "f32", np.dtype("float64"): "f64"}


def convert_arrays(path_in, path_out, *, dtype: str | None = None) -> str:
    """Convert one ``.npy`` matrix to the container, keeping its dtype.

    Returns the dtype tag written. An explicit ``dtype`` may widen or
    narrow; narrowing f64 input to an f32 target warns because it rounds
    the stored values.
    """
    try:
        values = np.load(path_in, allow_pickle=False)
    except ValueError as exc:
        raise ValidationError(f"{path_in} is not a dense-array file: {exc}") from exc
    if values.ndim != 2:
        raise ValidationError(f"expected a 2-D matrix, got shape {values.shape}")
    if values.size == 0:
        raise ValidationError("refusing to convert an empty matrix")
    source = _DTYPE_TAGS.get(values.dtype)
    if source is None:
        raise ValidationError(
            f"unsupported dtype {values.dtype}; expected float32 or float64"
        )
    target = source if dtype is None else dtype
    if target not in ("f32", "f64"):
        raise ValidationError(f"unknown target dtype {target!r}")
    if source == "f64" and target == "f32":
        warnings.warn(
            "f64 input narrowed to f32; stored values are rounded", stacklevel=2
        )
    write_fmat(values, path_out, dtype=target)
    return target
