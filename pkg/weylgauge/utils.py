import math
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_phase(phi):
    """Map a phase into (-pi, pi]. Works on scalars and arrays."""
    wrapped = np.mod(np.asarray(phi, dtype=float) + math.pi, TWO_PI) - math.pi
    wrapped = np.where(wrapped <= -math.pi, wrapped + TWO_PI, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def winding_index(phi: float) -> int:
    """Nearest integer multiple of 2*pi, rounding half up."""
    return int(math.floor(phi / TWO_PI + 0.5))


def fitted_order(steps: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(step)."""
    steps_arr = np.asarray(steps, dtype=float)
    errors_arr = np.abs(np.asarray(errors, dtype=float))
    if steps_arr.size < 2 or steps_arr.size != errors_arr.size:
        raise ValueError("fitted_order needs at least two (step, error) pairs")
    if np.any(errors_arr <= 0.0) or np.any(steps_arr <= 0.0):
        raise ValueError("fitted_order needs strictly positive steps and errors")
    slope, _ = np.polyfit(np.log(steps_arr), np.log(errors_arr), 1)
    return float(slope)


def richardson_limit(steps: Sequence[float], values: Sequence) -> complex | float:
    """Extrapolate ``values(step)`` to step -> 0 with a Neville tableau.

    Assumes an error expansion in integer powers of the step; the steps may be
    any decreasing sequence, not only halvings.
    """
    h = np.asarray(steps, dtype=float)
    if h.size == 0 or h.size != len(values):
        raise ValueError("richardson_limit needs matching non-empty sequences")
    table = [np.asarray(v, dtype=complex) for v in values]
    n = len(table)
    for level in range(1, n):
        for i in range(n - 1, level - 1, -1):
            ratio = h[i - level] / h[i]
            table[i] = table[i] + (table[i] - table[i - 1]) / (ratio - 1.0)
    is_complex = any(np.iscomplexobj(np.asarray(v)) for v in values)
    result = table[-1] if is_complex else table[-1].real
    if np.ndim(result) == 0:
        return result.item()
    return result


def lattice_spacing(axis: np.ndarray) -> float:
    """Uniform spacing of a 1D coordinate axis; raises on non-uniform input."""
    diffs = np.diff(axis)
    if diffs.size == 0:
        raise ValueError("axis needs at least two nodes")
    h = float(diffs.mean())
    if not np.allclose(diffs, h, rtol=1e-9, atol=0.0):
        raise ValueError("axis spacing is not uniform")
    return h
