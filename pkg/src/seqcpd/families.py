"""One-parameter exponential families ``f(x) = exp(xi * x - b(xi))``.

Each family maps a user-facing parameter (the normal mean, the exponential
rate) to its natural parameter ``xi`` and supplies the cumulant ``b`` with its
first two derivatives.  Everything else in the package (information numbers,
log-likelihood ratios, detector coefficients) is derived from those pieces, so
a new family only has to implement the small abstract surface below.

All log quantities are in nats.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

__all__ = [
    "Family",
    "NormalMean",
    "ExponentialRate",
    "NORMAL",
    "EXPONENTIAL",
    "get_family",
]


class Family:
    """Base class for a one-parameter exponential family.

    Subclasses provide ``natural_lo``/``natural_hi`` (the open natural
    parameter interval), the parameter map, the cumulant and a sampler.
    Instances hold no mutable state and can be shared between threads.
    """

    name = "abstract"
    natural_lo = -math.inf
    natural_hi = math.inf
    user_lo = -math.inf
    user_hi = math.inf
    # Whether b'(xi) tends to -inf at natural_lo (resp. +inf at natural_hi).
    # Needed by the half-open detector, which lets the pre-change set run
    # out to the edge of the natural space.
    mean_unbounded_lo = False
    mean_unbounded_hi = False
    # Integer tag used by the compiled kernels; -1 means no compiled
    # closed-form segment maximiser is available.
    kernel_code = -1

    # -- to be supplied by subclasses -------------------------------------

    def to_natural(self, theta):
        raise NotImplementedError

    def from_natural(self, xi):
        raise NotImplementedError

    def _b(self, xi, order):
        raise NotImplementedError

    def _draw(self, theta, rng, size):
        raise NotImplementedError

    # -- shared machinery --------------------------------------------------

    def check_user(self, theta):
        arr = np.asarray(theta, dtype=float)
        if not np.all((arr > self.user_lo) & (arr < self.user_hi)):
            raise DomainError(
                f"{self.name}: parameter {theta!r} outside "
                f"({self.user_lo}, {self.user_hi})"
            )
        return arr

    def check_natural(self, xi):
        arr = np.asarray(xi, dtype=float)
        if not np.all((arr > self.natural_lo) & (arr < self.natural_hi)):
            raise DomainError(
                f"{self.name}: natural parameter {xi!r} outside "
                f"({self.natural_lo}, {self.natural_hi})"
            )
        return arr

    def cumulant(self, xi, order=0):
        """Return ``b(xi)``, ``b'(xi)`` or ``b''(xi)`` for ``order`` 0, 1, 2."""
        if order not in (0, 1, 2):
            raise ValueError(f"order must be 0, 1 or 2, got {order!r}")
        xi = self.check_natural(xi)
        return _scalar(self._b(xi, order))

    def natural(self, theta):
        """Natural parameter of a user-facing parameter (domain-checked)."""
        return _scalar(self.to_natural(self.check_user(theta)))

    def mean(self, theta):
        """Mean of the sufficient statistic under ``theta``."""
        return self.cumulant(self.natural(theta), 1)

    def mean_to_natural(self, mu):
        """Inverse of ``b'``.  Families may override with a closed form."""
        from scipy.optimize import brentq

        lo, hi = self.natural_lo, self.natural_hi
        lo = -1e6 if math.isinf(lo) else lo + 1e-12 * max(1.0, abs(lo))
        hi = 1e6 if math.isinf(hi) else hi - 1e-12 * max(1.0, abs(hi))
        return brentq(lambda x: float(self._b(np.float64(x), 1)) - mu, lo, hi, xtol=1e-14)

    def kl(self, lam, theta):
        """Kullback-Leibler number ``I(lam, theta) = E_lam log(f_lam / f_theta)``."""
        xl = self.to_natural(self.check_user(lam))
        xt = self.to_natural(self.check_user(theta))
        val = (xl - xt) * self._b(xl, 1) - (self._b(xl, 0) - self._b(xt, 0))
        return _scalar(np.maximum(val, 0.0))

    def phi(self, theta, lam):
        """Chord slope ``(b(lam) - b(theta)) / (lam - theta)`` in natural coordinates."""
        xl = self.to_natural(self.check_user(lam))
        xt = self.to_natural(self.check_user(theta))
        if np.any(xl == xt):
            raise DomainError("phi is undefined for theta == lambda")
        return _scalar((self._b(xl, 0) - self._b(xt, 0)) / (xl - xt))

    def llr_coefficients(self, lam, theta):
        """Return ``(alpha, beta)`` with ``log f_lam(x)/f_theta(x) = alpha*x - beta``."""
        xl = float(self.natural(lam))
        xt = float(self.natural(theta))
        return xl - xt, float(self._b(np.float64(xl), 0) - self._b(np.float64(xt), 0))

    def llr(self, lam, theta, x):
        """Per-observation log-likelihood ratio of ``lam`` against ``theta``."""
        alpha, beta = self.llr_coefficients(lam, theta)
        return _scalar(alpha * np.asarray(x, dtype=float) - beta)

    def sample(self, theta, rng, size=None):
        """Exact draws from ``f_theta`` using the caller's generator."""
        theta = float(self.check_user(theta))
        return self._draw(theta, rng, size)

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash(type(self))


class NormalMean(Family):
    """N(theta, 1); the natural parameter is the mean itself."""

    name = "normal"
    mean_unbounded_lo = True
    mean_unbounded_hi = True
    kernel_code = 0

    def to_natural(self, theta):
        return theta

    def from_natural(self, xi):
        return xi

    def _b(self, xi, order):
        if order == 0:
            return 0.5 * xi * xi
        if order == 1:
            return xi
        return np.ones_like(xi)

    def mean_to_natural(self, mu):
        return float(mu)

    def kl(self, lam, theta):
        lam = self.check_user(lam)
        theta = self.check_user(theta)
        return _scalar(0.5 * (lam - theta) ** 2)

    def _draw(self, theta, rng, size):
        # theta + Z keeps common random numbers aligned across parameters
        return theta + rng.standard_normal(size)


class ExponentialRate(Family):
    """Exponential with rate theta > 0 (mean 1/theta); natural parameter -theta."""

    name = "exponential"
    natural_hi = 0.0
    user_lo = 0.0
    mean_unbounded_hi = True
    kernel_code = 1

    def to_natural(self, theta):
        return -theta

    def from_natural(self, xi):
        return -xi

    def _b(self, xi, order):
        if order == 0:
            return -np.log(-xi)
        if order == 1:
            return -1.0 / xi
        return 1.0 / (xi * xi)

    def mean_to_natural(self, mu):
        if mu <= 0:
            return self.natural_hi
        return -1.0 / mu

    def kl(self, lam, theta):
        lam = self.check_user(lam)
        theta = self.check_user(theta)
        d = theta / lam - 1.0
        return _scalar(np.maximum(d - np.log1p(d), 0.0))

    def _draw(self, theta, rng, size):
        return rng.standard_exponential(size) / theta


NORMAL = NormalMean()
EXPONENTIAL = ExponentialRate()

_REGISTRY = {
    "normal": NORMAL,
    "normal-mean-unit-variance": NORMAL,
    "exponential": EXPONENTIAL,
    "exponential-rate": EXPONENTIAL,
}


def get_family(name):
    try:
        return _REGISTRY[name.strip().lower()]
    except KeyError:
        raise DomainError(
            f"unknown family {name!r}; expected one of {sorted(set(_REGISTRY))}"
        ) from None


def _scalar(x):
    arr = np.asarray(x)
    return float(arr) if arr.ndim == 0 else arr
