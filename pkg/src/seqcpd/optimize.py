"""Vectorised one-dimensional extremum search: grid scan plus golden section.

The objectives used in this package (information ratios, segment likelihood
ratios, boundary thresholds) are smooth on compact intervals but are not
assumed globally unimodal.  A uniform scan locates the best grid cell and a
golden-section search polishes the optimum inside the two neighbouring cells.
"""

from __future__ import annotations

import numpy as np

INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0

__all__ = ["golden_section", "grid_extremum"]


def golden_section(f, lo, hi, maximize=False, tol=1e-10, max_iter=200):
    """Golden-section search applied elementwise to a batch of brackets.

    ``f`` receives an array shaped like ``lo``/``hi`` and returns values of the
    same shape.  Returns ``(x_best, f_best)``; the bracket endpoints are
    evaluated too, so an optimum sitting on the boundary is found exactly.
    """
    a = np.array(lo, dtype=float, copy=True)
    b = np.array(hi, dtype=float, copy=True)
    sign = -1.0 if maximize else 1.0

    def g(x):
        return sign * np.asarray(f(x), dtype=float)

    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = g(c), g(d)
    scale = np.maximum(np.abs(a), np.abs(b))
    for _ in range(max_iter):
        if np.all(b - a <= tol * np.maximum(1.0, scale)):
            break
        left = fc < fd
        # left: keep [a, d] and old c becomes the new d; right: keep [c, b]
        # and old d becomes the new c.  One fresh evaluation per element.
        a_new = np.where(left, a, c)
        b_new = np.where(left, d, b)
        c_new = np.where(left, b_new - INV_PHI * (b_new - a_new), d)
        d_new = np.where(left, c, a_new + INV_PHI * (b_new - a_new))
        f_new = g(np.where(left, c_new, d_new))
        fc, fd = np.where(left, f_new, fd), np.where(left, fc, f_new)
        a, b, c, d = a_new, b_new, c_new, d_new
    xm = 0.5 * (a + b)
    candidates = np.stack([a, b, xm])
    values = np.stack([g(a), g(b), g(xm)])
    idx = np.argmin(values, axis=0)
    x_best = np.take_along_axis(candidates, idx[None, ...], axis=0)[0]
    f_best = np.take_along_axis(values, idx[None, ...], axis=0)[0]
    return x_best, sign * f_best


def grid_extremum(f, lo, hi, n=512, maximize=False, tol=1e-10, batch_shape=()):
    """Extremum of ``f`` over ``[lo, hi]`` for a batch of problems.

    ``f(x)`` must accept ``x`` of shape ``batch_shape + (k,)`` and return the
    same shape; the scan evaluates all ``n`` grid points at once and the
    refinement works on ``batch_shape + (1,)`` arrays.  ``lo == hi`` is
    allowed and returns the single point.
    """
    lo = float(lo)
    hi = float(hi)
    if hi < lo:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    if hi == lo:
        x = np.full(batch_shape + (1,), lo)
        v = np.asarray(f(x), dtype=float)
        return x[..., 0], v[..., 0]
    grid = np.linspace(lo, hi, max(int(n), 2))
    xg = np.broadcast_to(grid, batch_shape + grid.shape)
    vals = np.asarray(f(xg), dtype=float)
    idx = np.argmax(vals, axis=-1) if maximize else np.argmin(vals, axis=-1)
    best_v = np.take_along_axis(vals, idx[..., None], axis=-1)[..., 0]
    best_x = grid[idx]
    left = grid[np.maximum(idx - 1, 0)]
    right = grid[np.minimum(idx + 1, grid.size - 1)]

    def fx(x):
        return np.asarray(f(x[..., None]), dtype=float)[..., 0]

    xr, vr = golden_section(fx, left, right, maximize=maximize, tol=tol)
    better = vr > best_v if maximize else vr < best_v
    return np.where(better, xr, best_x), np.where(better, vr, best_v)
