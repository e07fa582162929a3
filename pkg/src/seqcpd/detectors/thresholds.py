"""Per-length thresholds for the optimizer-pair GLR detector.

For a segment of length ``m`` with sum ``Q``, the pair-scaled GLR statistic
``inf_theta sup_lam sum llr(lam, theta) / p(theta)`` reaches ``a`` exactly when
``Q`` crosses a level ``c_m`` that depends only on ``m``.  Writing
``g(theta, lam) = (m (b(lam) - b(theta)) + p(theta) a) / (lam - theta)`` in
natural coordinates,

* if post-change natural parameters lie above the pre-change ones the
  statistic reaches ``a`` iff ``Q >= sup_theta inf_lam g``;
* in the mirrored case it does so iff ``Q <= inf_theta sup_lam g``.

Both nested extrema are computed by grid scan plus golden section, batched
over ``m``.
"""

from __future__ import annotations

import numpy as np

from ..optimize import grid_extremum

SCAN_N = 96
TOL = 1e-12


class ThresholdTable:
    """Lazily extended table of ``c_m`` for ``m = 1, 2, ...``."""

    def __init__(self, family, theta, lam, p, a, up, scan_n=SCAN_N, block=128):
        self.family = family
        self.theta = theta
        self.lam = lam
        self.p = p
        self.a = float(a)
        self.up = bool(up)
        self.scan_n = scan_n
        self.block = block
        self.values = np.empty(0)

    def ensure(self, m_max):
        """Make sure ``values`` covers lengths ``1..m_max``; returns the array."""
        have = self.values.size
        if m_max <= have:
            return self.values
        target = max(m_max, have + self.block, 2 * have)
        ms = np.arange(have + 1, target + 1, dtype=float)
        self.values = np.concatenate([self.values, segment_thresholds(
            self.family, self.theta, self.lam, self.p, self.a, self.up, ms, self.scan_n)])
        return self.values


def segment_thresholds(family, theta, lam, p, a, up, ms, scan_n=SCAN_N):
    """``c_m`` for each length in ``ms`` (see the module docstring)."""
    ms = np.asarray(ms, dtype=float)
    b = lambda xi: family._b(xi, 0)  # noqa: E731
    th_lo, th_hi = _natural_range(family, theta)
    la_lo, la_hi = _natural_range(family, lam)
    batch = ms.shape

    def g(xt, xl):
        pt = np.asarray(p(family.from_natural(xt)), dtype=float)
        return (ms_b(xt) * (b(xl) - b(xt)) + pt * a) / (xl - xt)

    def ms_b(xt):
        return ms.reshape(batch + (1,) * (np.ndim(xt) - len(batch)))

    def inner(xt):
        # xt has shape batch + (k,); optimise over lam for every entry
        def f(xl):
            # evaluated on batch + (k, j) arrays of lam
            return g(xt[..., None], xl)

        _, val = grid_extremum(f, la_lo, la_hi, n=scan_n, maximize=not up, tol=TOL, batch_shape=xt.shape)
        return val

    _, c = grid_extremum(inner, th_lo, th_hi, n=scan_n, maximize=up, tol=TOL, batch_shape=batch)
    return c


def _natural_range(family, pset):
    x0 = float(family.to_natural(pset.lo))
    x1 = float(family.to_natural(pset.hi))
    return min(x0, x1), max(x0, x1)


def fast_path_bounds(family, theta_near, lam_near, lam_far, theta_set, p, a):
    """W-statistic bounds ``(w_stop, w_cont)`` for the fast path.

    ``W`` is the CUSUM of ``s (x - phi(theta_near, lam_near))``.  Stopping when
    ``W >= a max_theta p(theta) / |lam_near - theta|`` is always justified; the
    maximum is taken over the knots of ``p`` and a refined grid, and inflated
    by a relative 1e-9 so that rounding can only delay the shortcut (the exact
    segment test still runs below it).  ``W |lam_far - theta_near| <
    p(theta_near) a`` rules out an alarm at the near endpoint.
    """
    xl_near = float(family.natural(lam_near))
    xl_far = float(family.natural(lam_far))
    lo, hi = _natural_range(family, theta_set)

    def ratio(xt):
        return np.asarray(p(family.from_natural(xt)), dtype=float) / np.abs(xl_near - xt)

    _, best = grid_extremum(ratio, lo, hi, n=1024, maximize=True, tol=TOL)
    knots = np.asarray(getattr(p, "knots", np.empty(0)), dtype=float)
    knots = knots[(knots >= theta_set.lo) & (knots <= theta_set.hi)]
    ends = np.array([theta_set.lo, theta_set.hi])
    extra = ratio(family.to_natural(np.concatenate([knots, ends])))
    best = max(float(best), float(np.max(extra)))
    w_stop = a * best * (1.0 + 1e-9)
    xt_near = float(family.natural(theta_near))
    w_cont = float(p(theta_near)) * a / abs(xl_far - xt_near) * (1.0 - 1e-12)
    return w_stop, w_cont
