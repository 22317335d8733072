"""Grid search with a golden-section polishing step, and small array helpers."""
import math

import numpy as np

from .exceptions import UsageError

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def as_grid(grid, name="grid"):
    arr = np.asarray(grid, dtype=float).ravel()
    if arr.size == 0:
        raise UsageError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{name} contains non-finite values")
    return arr


def linspace_spec(spec):
    """Build an axis from ``{"start", "stop", "num"}`` or pass a list through."""
    if isinstance(spec, dict):
        return np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
    return as_grid(spec)


def golden_max(f, lo, hi, tol=1e-10, max_iter=200):
    """Maximize a unimodal scalar function on [lo, hi]."""
    a, b = float(lo), float(hi)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    if fc >= fd:
        return c, fc
    return d, fd


def grid_argmax(f, grid, values=None, refine=True):
    """Maximize ``f`` over a sorted grid, then polish around the best node.

    Returns ``(x, f(x))``. The refined point only replaces the grid node when
    it strictly improves on it, so the result never drops below the grid max.
    """
    grid = np.sort(as_grid(grid))
    vals = np.array([f(x) for x in grid]) if values is None else np.asarray(values, float)
    k = int(np.nanargmax(vals))
    best_x, best_v = float(grid[k]), float(vals[k])
    if refine and grid.size > 1:
        lo = grid[max(k - 1, 0)]
        hi = grid[min(k + 1, grid.size - 1)]
        if hi > lo:
            x, v = golden_max(f, lo, hi)
            if np.isfinite(v) and v > best_v:
                best_x, best_v = float(x), float(v)
    return best_x, best_v


def grid_argmin(f, grid, values=None, refine=True):
    x, v = grid_argmax(lambda t: -f(t), grid,
                       None if values is None else -np.asarray(values, float), refine)
    return x, -v
