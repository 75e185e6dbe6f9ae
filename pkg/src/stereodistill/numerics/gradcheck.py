"""Central finite-difference gradient checking.

The numerical route only ever calls the forward closure, so it stays
independent of the autodiff path it verifies.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

DEFAULT_H = 1e-5
# relative error floor: differences below ~1e-7 absolute never fail
REL_FLOOR = 1e-3


def finite_difference_grad(
    f: Callable[[], float], arr: np.ndarray, h: float = DEFAULT_H
) -> np.ndarray:
    """Central differences of scalar f() w.r.t. every element of arr.

    f must re-read arr on each call; arr is restored before returning.
    """
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / denom))
