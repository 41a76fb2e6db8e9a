"""
Pattern: Builder (Creational)
Shared base for domain models that carry numpy count arrays
Arrays are coerced, checked and frozen during validation
"""
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict

INT64_MAX = np.iinfo(np.int64).max


def as_count_array(value: Any, ndim: int, name: str) -> np.ndarray:
    """Coerce to a read-only non-negative int64 array of the given rank"""
    try:
        raw = np.asarray(value)
    except (TypeError, ValueError) as e:
        raise ValueError(f"{name} is not a numeric array: {e}")

    if raw.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {raw.shape}")
    if raw.dtype == object and raw.size and all(isinstance(v, int) for v in raw.flat):
        raise ValueError(f"{name} count exceeds int64")
    if raw.size and raw.dtype.kind not in "iuf" and raw.dtype != np.bool_:
        raise ValueError(f"{name} must hold integers, got dtype {raw.dtype}")
    if raw.dtype.kind == "f":
        if not np.all(np.isfinite(raw)) or not np.all(raw == np.floor(raw)):
            raise ValueError(f"{name} must hold integers")
    if raw.size and (
        (raw.dtype.kind == "u" and raw.max() > INT64_MAX) or (raw.dtype.kind == "f" and raw.max() >= 2.0**63)
    ):
        raise ValueError(f"{name} count exceeds int64")

    array = raw.astype(np.int64, copy=True)
    if array.size and array.min() < 0:
        raise ValueError(f"{name} must be non-negative")
    array.flags.writeable = False
    return array


class ArrayModel(BaseModel):
    """Frozen model whose equality compares array fields element-wise"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    def __eq__(self, other: object) -> bool:
        if type(self) is not type(other):
            return NotImplemented
        for name in type(self).model_fields:
            mine, theirs = getattr(self, name), getattr(other, name)
            if isinstance(mine, np.ndarray) or isinstance(theirs, np.ndarray):
                if not np.array_equal(np.asarray(mine), np.asarray(theirs)):
                    return False
            elif mine != theirs:
                return False
        return True

    __hash__ = None
