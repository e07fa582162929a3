"""Parameter sets and optimizer pairs.

An optimizer pair ``(p, q)`` consists of positive functions on the pre-change
set and the post-change set that are mutual infima of the information ratio::

    p(theta) = inf_lam I(lam, theta) / q(lam)
    q(lam)   = inf_theta I(lam, theta) / p(theta)

Starting from any positive ``q0`` on the post-change set, one application of
each map gives a pair (``optimizer_from`` then ``pair_close``).  The pair
scales the boundaries of the composite-hypothesis detectors.

Infima are computed by a uniform grid scan with golden-section refinement;
verification always recomputes them on an independent grid four times denser.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, PairVerificationError
from .optimize import grid_extremum

__all__ = [
    "ParamSet",
    "TabulatedFn",
    "ClosedFormFn",
    "OptimizerPair",
    "PairReport",
    "constant",
    "optimizer_from",
    "pair_close",
    "verify_pair",
    "normal_beta_pair",
    "beta_constant",
    "efficiency",
    "write_pair_csv",
    "read_pair_csv",
]

DEFAULT_GRID = 512
DEFAULT_TOL = 1e-3


@dataclass(frozen=True)
class ParamSet:
    """Closed interval ``[lo, hi]`` of user-facing parameters, or a single point.

    ``lo`` may be the family's open boundary (``-inf`` for a normal mean, ``0``
    for an exponential rate) with ``closed_lo=False``; such half-open sets are
    only meaningful for the half-open detector and cannot be tabulated.
    """

    lo: float
    hi: float
    closed_lo: bool = True
    closed_hi: bool = True
    grid_n: int = DEFAULT_GRID

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise DomainError("parameter set bounds must not be NaN")
        if self.hi < self.lo:
            raise DomainError(f"empty parameter set [{self.lo}, {self.hi}]")
        if self.grid_n < 2:
            raise DomainError("grid_n must be at least 2")

    @classmethod
    def point(cls, x):
        return cls(float(x), float(x))

    @classmethod
    def interval(cls, lo, hi, grid_n=DEFAULT_GRID):
        return cls(float(lo), float(hi), grid_n=grid_n)

    @property
    def is_point(self):
        return self.lo == self.hi

    @property
    def is_compact(self):
        return self.closed_lo and self.closed_hi and math.isfinite(self.lo) and math.isfinite(self.hi)

    def grid(self, n=None):
        if self.is_point:
            return np.array([self.lo])
        if not self.is_compact:
            raise DomainError(f"cannot tabulate the non-compact set {self}")
        return np.linspace(self.lo, self.hi, n or self.grid_n)

    def contains(self, x):
        lo_ok = x >= self.lo if self.closed_lo else x > self.lo
        hi_ok = x <= self.hi if self.closed_hi else x < self.hi
        return bool(lo_ok and hi_ok)

    def __str__(self):
        if self.is_point:
            return f"{{{self.lo:g}}}"
        left = "[" if self.closed_lo else "("
        right = "]" if self.closed_hi else ")"
        return f"{left}{self.lo:g}, {self.hi:g}{right}"


class TabulatedFn:
    """Positive function given by values on a strictly increasing grid.

    Evaluated by linear interpolation; a one-point table is constant.
    """

    def __init__(self, params, values, label=""):
        params = np.asarray(params, dtype=float).ravel()
        values = np.asarray(values, dtype=float).ravel()
        if params.shape != values.shape or params.size == 0:
            raise ValueError("params and values must be non-empty and equally long")
        if params.size > 1 and np.any(np.diff(params) <= 0):
            raise ValueError("tabulation parameters must be strictly increasing")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ValueError("tabulated values must be finite and strictly positive")
        self.params = params
        self.values = values
        self.label = label

    @property
    def knots(self):
        return self.params

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.params.size == 1:
            out = np.full(x.shape, self.values[0])
        else:
            out = np.interp(x, self.params, self.values)
        return float(out) if out.ndim == 0 else out

    def scaled(self, c):
        return TabulatedFn(self.params, self.values * c, self.label)

    def __repr__(self):
        return f"TabulatedFn({self.label or 'fn'}, n={self.params.size})"


class ClosedFormFn:
    """Positive function given by a vectorised callable."""

    def __init__(self, func, label=""):
        self.func = func
        self.label = label
        self.knots = np.array([])

    def __call__(self, x):
        out = np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)
        return float(out) if out.ndim == 0 else out

    def __repr__(self):
        return f"ClosedFormFn({self.label or 'fn'})"


def constant(c, label=None):
    """The constant function ``c`` (must be positive)."""
    c = float(c)
    if not c > 0:
        raise ValueError("constant functions in a pair must be positive")
    return ClosedFormFn(lambda x: np.full(np.shape(x), c), label or f"const {c:g}")


@dataclass
class OptimizerPair:
    """Positive ``p`` on ``theta_set`` and ``q`` on ``lam_set`` with fixed-point residual."""

    p: object
    q: object
    theta_set: ParamSet
    lam_set: ParamSet
    residual: float = math.nan
    tol: float = DEFAULT_TOL
    meta: dict = field(default_factory=dict)

    @property
    def verified(self):
        return self.residual <= self.tol


@dataclass
class PairReport:
    residual_p: float
    residual_q: float
    tol: float

    @property
    def residual(self):
        return max(self.residual_p, self.residual_q)

    @property
    def passed(self):
        return self.residual <= self.tol


def _check_positive(fn, xs, what):
    vals = np.asarray(fn(xs), dtype=float)
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        raise ValueError(f"{what} must be finite and strictly positive on its set")
    return vals


def _check_disjoint(family, theta_set, lam_set):
    t = family.to_natural(np.array([theta_set.lo, theta_set.hi]))
    l = family.to_natural(np.array([lam_set.lo, lam_set.hi]))
    if max(t) >= min(l) and max(l) >= min(t):
        raise DomainError(
            f"pre-change set {theta_set} and post-change set {lam_set} overlap"
        )


def _inf_ratio(family, fn, fixed, other_set, fixed_is_theta, n):
    """``inf_y I(., .) / fn(y)`` over ``other_set`` for each value in ``fixed``."""
    fixed = np.asarray(fixed, dtype=float)

    def ratio(y):
        fx = fixed.reshape(fixed.shape + (1,) * (y.ndim - fixed.ndim))
        info = family.kl(y, fx) if fixed_is_theta else family.kl(fx, y)
        return info / fn(y)

    _, val = grid_extremum(
        ratio, other_set.lo, other_set.hi, n=n, maximize=False, batch_shape=fixed.shape
    )
    return val


def optimizer_from(q0, family, theta_set, lam_set, n=None):
    """Tabulate ``p(theta) = inf_lam I(lam, theta) / q0(lam)`` on the pre-change grid."""
    _check_disjoint(family, theta_set, lam_set)
    _check_positive(q0, lam_set.grid(), "q0")
    thetas = theta_set.grid()
    vals = _inf_ratio(family, q0, thetas, lam_set, True, n or lam_set.grid_n)
    return TabulatedFn(thetas, vals, label="p")


def _residuals(family, p, q, theta_set, lam_set, thetas, lams, n_theta, n_lam):
    p_vals = np.asarray(p(thetas), dtype=float)
    q_vals = np.asarray(q(lams), dtype=float)
    p_back = _inf_ratio(family, q, thetas, lam_set, True, n_lam)
    q_back = _inf_ratio(family, p, lams, theta_set, False, n_theta)
    res_p = float(np.max(np.abs(p_vals - p_back) / p_vals))
    res_q = float(np.max(np.abs(q_vals - q_back) / q_vals))
    return res_p, res_q


def pair_close(p, family, theta_set, lam_set, tol=DEFAULT_TOL, n=None):
    """Complete an optimizer ``p`` to a pair by ``q(lam) = inf_theta I(lam, theta)/p(theta)``.

    Raises :class:`PairVerificationError` when the first fixed-point equation
    is violated by more than ``tol`` (relative), which means ``p`` was not an
    optimizer or the grids are too coarse.
    """
    _check_disjoint(family, theta_set, lam_set)
    _check_positive(p, theta_set.grid(), "p")
    lams = lam_set.grid()
    q_vals = _inf_ratio(family, p, lams, theta_set, False, n or theta_set.grid_n)
    q = TabulatedFn(lams, q_vals, label="q")
    res_p, res_q = _residuals(
        family, p, q, theta_set, lam_set, theta_set.grid(), lams,
        theta_set.grid_n, lam_set.grid_n,
    )
    residual = max(res_p, res_q)
    if residual > tol:
        raise PairVerificationError(
            f"fixed-point residual {residual:.3g} exceeds tolerance {tol:g}", residual
        )
    return OptimizerPair(p, q, theta_set, lam_set, residual=residual, tol=tol)


def verify_pair(pair, family, theta_set=None, lam_set=None, tol=DEFAULT_TOL, density=4):
    """Recompute both infima on grids ``density`` times denser; never raises."""
    theta_set = theta_set or pair.theta_set
    lam_set = lam_set or pair.lam_set
    n_t = theta_set.grid_n * density
    n_l = lam_set.grid_n * density
    thetas = theta_set.grid(n_t)
    lams = lam_set.grid(n_l)
    res_p, res_q = _residuals(family, pair.p, pair.q, theta_set, lam_set, thetas, lams, n_t, n_l)
    return PairReport(res_p, res_q, tol)


def beta_constant(beta):
    """``k_beta = 2 beta^2 (2 beta - 1)^(1/beta - 2)``, with its limit 1/2 at beta = 1/2."""
    beta = float(beta)
    if beta < 0.5:
        raise DomainError(f"beta must be >= 1/2, got {beta}")
    if beta == 0.5:
        return 0.5
    return 2.0 * beta * beta * (2.0 * beta - 1.0) ** (1.0 / beta - 2.0)


def normal_beta_pair(beta, theta_set=None, lam_set=None):
    """Closed-form pair ``p = k_beta |theta|^(2 - 1/beta)``, ``q = lam^(1/beta)`` for normal means.

    The natural sets are theta < 0 and lam > 0; the optional finite windows
    only record where the pair will be evaluated or verified.
    """
    k = beta_constant(beta)
    e_p = 2.0 - 1.0 / beta
    e_q = 1.0 / beta
    p = ClosedFormFn(lambda t: k * np.abs(t) ** e_p, label=f"p_beta={beta:g}")
    q = ClosedFormFn(lambda l: np.asarray(l, dtype=float) ** e_q, label=f"q_beta={beta:g}")
    pair = OptimizerPair(
        p, q,
        theta_set or ParamSet(-math.inf, 0.0, False, False),
        lam_set or ParamSet(0.0, math.inf, False, False),
        residual=0.0,
        meta={"beta": beta, "k_beta": k, "closed_form": True},
    )
    return pair


def efficiency(pair, family, theta, lam):
    """First-order efficiency ``p(theta) q(lam) / I(lam, theta)``."""
    theta = np.asarray(theta, dtype=float)
    lam = np.asarray(lam, dtype=float)
    out = pair.p(theta) * pair.q(lam) / family.kl(lam, theta)
    return float(out) if np.ndim(out) == 0 else out


def write_pair_csv(pair, path_or_file, theta_n=None, lam_n=None):
    """Write ``set,parameter,value`` rows for ``p`` on its grid and ``q`` on its grid."""
    thetas = pair.theta_set.grid(theta_n)
    lams = pair.lam_set.grid(lam_n)
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh)
        w.writerow(["set", "parameter", "value"])
        for t, v in zip(thetas, np.atleast_1d(pair.p(thetas))):
            w.writerow(["p", repr(float(t)), repr(float(v))])
        for l, v in zip(lams, np.atleast_1d(pair.q(lams))):
            w.writerow(["q", repr(float(l)), repr(float(v))])
    finally:
        if own:
            fh.close()


def read_pair_csv(path, tol=DEFAULT_TOL):
    """Load a pair written by :func:`write_pair_csv` (residual left unverified)."""
    rows = {"p": [], "q": []}
    with open(path, newline="") as fh:
        for row in csv.DictReader(line for line in fh if not line.startswith("#")):
            key = row["set"].strip()
            if key not in rows:
                raise ValueError(f"unknown set {key!r} in pair file")
            rows[key].append((float(row["parameter"]), float(row["value"])))
    if not rows["p"] or not rows["q"]:
        raise ValueError("pair file must contain both p and q rows")
    tp = np.array(sorted(rows["p"]))
    tq = np.array(sorted(rows["q"]))
    p = TabulatedFn(tp[:, 0], tp[:, 1], label="p")
    q = TabulatedFn(tq[:, 0], tq[:, 1], label="q")
    theta_set = ParamSet(tp[0, 0], tp[-1, 0], grid_n=max(len(tp), 2))
    lam_set = ParamSet(tq[0, 0], tq[-1, 0], grid_n=max(len(tq), 2))
    return OptimizerPair(p, q, theta_set, lam_set, tol=tol)
