"""Detector configuration, validation and alarm reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..errors import ConfigError, DomainError
from ..families import Family, NORMAL
from ..hypotheses import OptimizerPair, ParamSet

PROCEDURES = (
    "cusum",
    "m_star",
    "m_hat_star",
    "tau_glr",
    "t_star_mixture",
    "t_hat_star_glr",
    "t_beta_star",
    "t_zero_star",
    "open_m",
)

DEFAULT_ETA_GRID = 33
DEFAULT_THETA_GRID = 257


@dataclass(frozen=True)
class AlarmReport:
    """Outcome of feeding observations to a detector.

    ``n_stop`` is the alarm time when ``stopped`` and otherwise the number of
    observations consumed; ``censored`` marks a run cut off by the stream end
    or a step budget.
    """

    stopped: bool
    n_stop: int
    branch: str = ""
    statistic: float = math.nan
    censored: bool = False
    procedure: str = ""

    def line(self):
        if self.stopped:
            return (
                f"alarm procedure={self.procedure} n={self.n_stop} "
                f"branch={self.branch} statistic={self.statistic:.6g}"
            )
        return f"no-alarm procedure={self.procedure} n={self.n_stop}"


@dataclass(frozen=True)
class DetectorConfig:
    """Everything needed to build one stopping rule.

    ``a`` is in the procedure's own units: nats for ``cusum``/``tau_glr``,
    the information-normalised scale ``I(lam, theta) * a`` for the
    ``m_*``/``open_m`` family, ``p(theta) * a`` for the optimizer-pair rules,
    and ``a^beta`` / sample counts for the normal-mean rules.
    """

    procedure: str
    family: Family
    theta: ParamSet
    lam: ParamSet
    a: float
    pair: Optional[OptimizerPair] = None
    beta: Optional[float] = None
    eta_grid_n: int = DEFAULT_ETA_GRID
    theta_grid_n: int = DEFAULT_THETA_GRID
    allow_unverified_pair: bool = False
    label: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        validate(self)

    def with_threshold(self, a):
        return replace(self, a=float(a))

    # -- geometry in natural coordinates ----------------------------------

    @property
    def direction(self):
        """+1 when post-change natural parameters exceed pre-change ones, else -1."""
        return _direction(self.family, self.theta, self.lam)

    def theta_near(self):
        """End of the pre-change set closest to the post-change set."""
        return _near_far(self.family, self.theta, self.direction)[0]

    def theta_far(self):
        return _near_far(self.family, self.theta, self.direction)[1]

    def lam_near(self):
        """End of the post-change set closest to the pre-change set."""
        return _near_far(self.family, self.lam, -self.direction)[0]

    def lam_far(self):
        return _near_far(self.family, self.lam, -self.direction)[1]

    @property
    def name(self):
        return self.label or self.procedure


def _direction(family, theta, lam):
    t_lo, t_hi = sorted(_nat_bounds(family, theta))
    l_lo, l_hi = sorted(_nat_bounds(family, lam))
    if l_lo > t_hi:
        return 1
    if l_hi < t_lo:
        return -1
    raise ConfigError(f"pre-change set {theta} and post-change set {lam} overlap")


def _nat_bounds(family, pset):
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(family.to_natural(pset.lo)), float(family.to_natural(pset.hi))


def _near_far(family, pset, toward):
    """(near, far) user parameters of ``pset`` relative to direction ``toward``."""
    lo_nat, hi_nat = _nat_bounds(family, pset)
    lo_user, hi_user = pset.lo, pset.hi
    pairs = sorted([(lo_nat, lo_user), (hi_nat, hi_user)])
    if toward > 0:
        return pairs[1][1], pairs[0][1]
    return pairs[0][1], pairs[1][1]


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _in_domain(family, pset, allow_open=False):
    for x, closed in ((pset.lo, pset.closed_lo), (pset.hi, pset.closed_hi)):
        if allow_open and not closed:
            continue
        try:
            family.check_user(x)
        except DomainError as exc:
            raise ConfigError(str(exc)) from None


def validate(cfg):
    proc = cfg.procedure
    _require(proc in PROCEDURES, f"unknown procedure {proc!r}; expected one of {PROCEDURES}")
    _require(isinstance(cfg.family, Family), "family must be a Family instance")
    a = cfg.a
    _require(isinstance(a, (int, float)) and math.isfinite(a), f"threshold a must be finite, got {a!r}")
    if proc == "cusum":
        _require(a >= 0, "threshold a must be >= 0")
    else:
        _require(a > 0, "threshold a must be > 0")
    _in_domain(cfg.family, cfg.theta, allow_open=(proc == "m_hat_star"))
    _in_domain(cfg.family, cfg.lam)
    cfg.direction  # raises on overlap

    if proc == "cusum":
        _require(cfg.theta.is_point and cfg.lam.is_point, "cusum needs simple theta and lambda")
    elif proc in ("m_star", "open_m"):
        _require(cfg.lam.is_point, f"{proc} needs a simple post-change parameter")
        _require(cfg.theta.is_compact, f"{proc} needs a compact pre-change interval")
    elif proc == "m_hat_star":
        _require(cfg.lam.is_point, "m_hat_star needs a simple post-change parameter")
        fam = cfg.family
        lo_nat, hi_nat = sorted(_nat_bounds(fam, cfg.theta))
        if cfg.direction > 0:
            _require(
                lo_nat <= fam.natural_lo,
                "m_hat_star needs the pre-change set to extend to the lower edge of the natural space",
            )
            _require(fam.mean_unbounded_lo, f"family {fam.name} has bounded mean at the lower natural edge")
        else:
            _require(
                hi_nat >= fam.natural_hi,
                "m_hat_star needs the pre-change set to extend to the upper edge of the natural space",
            )
            _require(fam.mean_unbounded_hi, f"family {fam.name} has bounded mean at the upper natural edge")
    elif proc == "tau_glr":
        _require(cfg.theta.is_point, "tau_glr needs a simple pre-change parameter")
        _require(cfg.lam.is_compact, "tau_glr needs a compact post-change set")
    elif proc in ("t_hat_star_glr", "t_star_mixture"):
        _require(cfg.theta.is_compact and cfg.lam.is_compact, f"{proc} needs compact parameter sets")
        _require(cfg.pair is not None, f"{proc} needs an optimizer pair")
        if not cfg.allow_unverified_pair:
            _require(
                cfg.pair.verified,
                f"{proc}: optimizer pair is unverified (residual {cfg.pair.residual!r})",
            )
        grid = cfg.theta.grid(cfg.theta_grid_n) if not cfg.theta.is_point else np.array([cfg.theta.lo])
        p_vals = np.asarray(cfg.pair.p(grid), dtype=float)
        _require(np.all(np.isfinite(p_vals)) and np.all(p_vals > 0), "p must be positive on the pre-change set")
        if proc == "t_star_mixture" and not cfg.lam.is_point:
            _require(cfg.eta_grid_n >= 2, "eta_grid_n must be at least 2")
    elif proc in ("t_beta_star", "t_zero_star"):
        _require(cfg.family == NORMAL, f"{proc} is defined for the unit-variance normal family only")
        if proc == "t_beta_star":
            _require(cfg.beta is not None, "t_beta_star needs beta")
            if cfg.beta < 0.5:
                raise DomainError(f"beta must be >= 1/2, got {cfg.beta}")
