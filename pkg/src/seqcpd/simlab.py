"""Seeded Monte Carlo estimation of run lengths, threshold calibration and bound checks.

Replication ``r`` of a study draws its observations from
``Generator(PCG64(SeedSequence(master_seed, spawn_key=(r,))))``, in chunks of a
fixed growing schedule.  The stream of a replication therefore depends only
on ``(master_seed, r)`` and the sampled parameter, never on the threshold or
on where a detector happened to stop, which gives common random numbers
across thresholds for free and makes results independent of parallelism.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .detectors import DetectorConfig, make_detector
from .errors import CalibrationRangeError, ConfigError, DomainError

__all__ = [
    "SeedScheme",
    "ArlEstimate",
    "CalibrationResult",
    "BoundCheck",
    "run_lengths",
    "estimate_long_arl",
    "estimate_delay",
    "calibrate_threshold",
    "asymptotic_delay_constant",
    "asymptotic_delay_prediction",
    "wald_bound_check",
    "lower_bound_check",
    "cusum_exponent",
]

FIRST_CHUNK = 64
MAX_CHUNK = 1 << 16


@dataclass(frozen=True)
class SeedScheme:
    """Deterministic map from a replication index to an independent substream."""

    master_seed: int = 20080101

    def generator(self, r):
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(r),))
        return np.random.Generator(np.random.PCG64(seq))

    def describe(self):
        return f"PCG64(SeedSequence({self.master_seed}, spawn_key=(r,)))"


@dataclass(frozen=True)
class ArlEstimate:
    """Mean run length over uncensored replications, with censoring surfaced."""

    mean: float
    stderr: float
    reps: int
    censored: int
    horizon: int
    values: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def uncensored(self):
        return self.reps - self.censored

    @property
    def biased_low(self):
        return self.censored > 0

    def __str__(self):
        se = "n/a" if math.isnan(self.stderr) else f"{self.stderr:.4g}"
        tail = f", {self.censored} censored" if self.censored else ""
        return f"{self.mean:.6g} +- {se} ({self.reps} reps{tail})"


@dataclass(frozen=True)
class CalibrationResult:
    a: float
    achieved: ArlEstimate
    target: float
    mode: str
    history: tuple = ()
    rel_tol: float = 0.005

    @property
    def within_tolerance(self):
        """``|mean - target| <= max(3 se, rel_tol * target)``."""
        se = 0.0 if math.isnan(self.achieved.stderr) else self.achieved.stderr
        return abs(self.achieved.mean - self.target) <= max(3.0 * se, self.rel_tol * self.target)


@dataclass(frozen=True)
class BoundCheck:
    passed: bool
    observed: float
    bound: float
    detail: str = ""


def _chunks():
    size = FIRST_CHUNK
    while True:
        yield size
        size = min(size * 2, MAX_CHUNK)


def run_one(detector, family, param, rng, horizon):
    """Run ``detector`` from reset on i.i.d. draws from ``param``; return (n, censored)."""
    detector.reset()
    used = 0
    for size in _chunks():
        take = min(size, horizon - used)
        if take <= 0:
            return used, True
        xs = family.sample(param, rng, size)[:take]
        rep = detector.feed(xs)
        if rep.stopped:
            return rep.n_stop, False
        used += take


def _run_block(config, param, seeds, start, stop, horizon):
    det = make_detector(config, diagnostics=False)
    out = np.empty(stop - start, dtype=np.int64)
    cens = np.zeros(stop - start, dtype=bool)
    for i, r in enumerate(range(start, stop)):
        out[i], cens[i] = run_one(det, config.family, param, seeds.generator(r), horizon)
    return out, cens


def run_lengths(config, param, reps, horizon, seeds=None, workers=1):
    """Stopping times of ``reps`` replications (ordered by replication index)."""
    seeds = seeds or SeedScheme()
    if workers is None or workers <= 1 or reps < 2 * workers:
        return _run_block(config, param, seeds, 0, reps, horizon)
    edges = np.linspace(0, reps, workers + 1).astype(int)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_run_block, config, param, seeds, int(lo), int(hi), horizon)
            for lo, hi in zip(edges[:-1], edges[1:])
        ]
        parts = [f.result() for f in futures]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def summarize(values, censored, horizon):
    values = np.asarray(values)
    censored = np.asarray(censored, dtype=bool)
    done = values[~censored].astype(float)
    reps = int(values.size)
    if done.size == 0:
        mean, se = math.nan, math.nan
    else:
        mean = float(done.mean())
        se = float(done.std(ddof=1) / math.sqrt(done.size)) if done.size >= 2 else math.nan
    return ArlEstimate(mean, se, reps, int(censored.sum()), int(horizon), values=values)


def _check_reps(reps):
    if reps < 1:
        raise ConfigError("reps must be at least 1")


def estimate_long_arl(config, theta, reps, horizon=None, seeds=None, workers=1):
    """Mean stopping time with no change (all data from ``theta``)."""
    _check_reps(reps)
    horizon = int(horizon) if horizon else 10**7
    if horizon <= 0:
        raise ConfigError("horizon must be positive")
    config.family.check_user(theta)
    vals, cens = run_lengths(config, theta, reps, horizon, seeds, workers)
    return summarize(vals, cens, horizon)


def estimate_delay(config, lam, reps, seeds=None, horizon=10**6, workers=1):
    """Mean alarm time from the reset state with every observation from ``lam``.

    The change happens before the first observation, so the stopping time
    itself is the delay.  For the reset-type statistics used here the
    initial state is the least favourable one, so this is the worst-case
    conditional delay.
    """
    _check_reps(reps)
    config.family.check_user(lam)
    vals, cens = run_lengths(config, lam, reps, int(horizon), seeds, workers)
    return summarize(vals, cens, horizon)


def _estimate(config, mode, at, reps, seeds, horizon, workers):
    if mode == "delay":
        return estimate_delay(config, at, reps, seeds, horizon=horizon or 10**6, workers=workers)
    if mode == "long_arl":
        return estimate_long_arl(config, at, reps, horizon, seeds, workers)
    raise ConfigError(f"unknown calibration mode {mode!r}")


def calibrate_threshold(
    config_template,
    mode,
    target,
    at,
    reps,
    seeds=None,
    rel_tol=0.005,
    a_range=(1e-3, 1e3),
    a0=None,
    horizon=None,
    workers=1,
    a_tol=1e-4,
):
    """Find the threshold whose mean run length (delay or long ARL) crosses ``target``.

    Every trial threshold reuses the same replication streams, so the
    estimated mean is a nondecreasing step function of ``a``.  A doubling or
    halving search brackets the crossing and bisection narrows the bracket to
    ``a_tol`` (relative); the bracket end whose mean is closer to the target
    is returned.  ``history`` lists every trial as ``(a, mean)``.
    """
    if not target > 1:
        raise CalibrationRangeError(f"target {target} is not reachable: run lengths are at least 1")
    if mode not in ("delay", "long_arl"):
        raise ConfigError(f"unknown calibration mode {mode!r}")
    seeds = seeds or SeedScheme()
    lo_lim, hi_lim = a_range
    history = []
    cache = {}

    def trial(a):
        if a not in cache:
            est = _estimate(config_template.with_threshold(a), mode, at, reps, seeds, horizon, workers)
            # a majority of censored runs means the mean is beyond reach of the horizon
            mean = math.inf if est.censored * 2 > est.reps else est.mean
            cache[a] = (mean, est)
            history.append((a, mean))
        return cache[a]

    a = float(a0) if a0 else min(max(1.0, lo_lim), hi_lim)
    if trial(a)[0] < target:
        lo = a
        while True:
            a = a * 2.0
            if a > hi_lim:
                raise CalibrationRangeError(f"target {target} not reached for a <= {hi_lim:g}")
            if trial(a)[0] >= target:
                hi = a
                break
            lo = a
    else:
        hi = a
        while True:
            a = a / 2.0
            if a < lo_lim:
                raise CalibrationRangeError(f"target {target} already exceeded at a = {lo_lim:g}")
            if trial(a)[0] < target:
                lo = a
                break
            hi = a
    while hi - lo > a_tol * hi:
        mid = 0.5 * (lo + hi)
        if trial(mid)[0] < target:
            lo = mid
        else:
            hi = mid
    a_best = min((lo, hi), key=lambda x: abs(trial(x)[0] - target))
    return CalibrationResult(a_best, trial(a_best)[1], float(target), mode, tuple(history), rel_tol)


def asymptotic_delay_constant(family, theta0, theta1, lam):
    """C = ((lam - theta1)/I(lam, theta1) - (lam - theta0)/I(lam, theta0)) sqrt(b''(lam)/(2 pi)).

    Distances are in natural coordinates and taken in absolute value, so the
    mirrored orientation (post-change below pre-change) is covered too.
    ``theta0`` is the end of the pre-change interval far from ``lam``;
    ``theta0 = None`` gives the half-open constant (the far end at the edge of
    the natural space contributes nothing).
    """
    xl = float(family.natural(lam))
    x1 = float(family.natural(theta1))
    scale = math.sqrt(float(family.cumulant(xl, 2)) / (2.0 * math.pi))
    near = abs(xl - x1) / family.kl(lam, theta1)
    if theta0 is None:
        return near * scale
    x0 = float(family.natural(theta0))
    if not (abs(xl - x0) >= abs(xl - x1) and (xl - x0) * (xl - x1) > 0):
        raise DomainError("expected theta0 <= theta1 < lam (or the mirrored order) in natural coordinates")
    if x0 == x1:
        return 0.0
    far = abs(xl - x0) / family.kl(lam, theta0)
    c = (near - far) * scale
    if not c > 0:
        raise DomainError(f"delay constant must be positive, got {c}")
    return c


def asymptotic_delay_prediction(family, theta0, theta1, lam, a):
    """``a + C sqrt(a)``; ``theta0=None`` selects the half-open constant."""
    return a + asymptotic_delay_constant(family, theta0, theta1, lam) * math.sqrt(a)


def wald_bound_check(family, theta_set, lam, a, theta, reps, horizon, seeds=None, workers=1):
    """Compare the chance that the one-shot test ever alarms with ``exp(-I(lam, theta) a)``.

    Runs that stop after ``horizon`` are counted as never stopping, which
    can only lower the observed fraction; the check passes when the fraction
    is below the bound plus three binomial standard errors.
    """
    from .hypotheses import ParamSet

    if not theta_set.contains(theta):
        raise DomainError(f"theta={theta} is outside {theta_set}")
    cfg = DetectorConfig("open_m", family, theta_set, ParamSet.point(lam), float(a))
    vals, cens = run_lengths(cfg, theta, reps, int(horizon), seeds, workers)
    frac = float(np.mean(~cens))
    bound = math.exp(-family.kl(lam, theta) * a)
    se = math.sqrt(max(bound * (1.0 - bound), 1e-12) / reps)
    passed = frac <= bound + 3.0 * se
    return BoundCheck(passed, frac, bound, f"alarm fraction {frac:.4g} vs bound {bound:.4g} (+3se {3*se:.2g})")


def cusum_exponent(family, theta_c, lam, theta):
    """Positive root ``s`` of ``E_theta exp(s * llr(lam, theta_c)) = 1`` (0 if none).

    For a CUSUM built on ``llr(lam, theta_c)`` with raw threshold ``a`` the
    exponential martingale ``exp(s * sum llr)`` under ``theta`` gives
    ``E_theta N >= exp(s a)``.  At ``theta = theta_c`` the root is 1; it grows
    as ``theta`` moves away from ``lam`` and vanishes once the drift of the
    log-likelihood ratio under ``theta`` is no longer negative.
    """
    alpha, beta = family.llr_coefficients(lam, theta_c)
    xt = float(family.natural(theta))
    b0 = float(family.cumulant(xt))
    drift = alpha * float(family.cumulant(xt, 1)) - beta
    if not drift < 0:
        return 0.0

    def h(s):
        return float(family.cumulant(xt + s * alpha)) - b0 - s * beta

    # the root lies below the edge of the natural space along direction alpha
    edge = family.natural_hi if alpha > 0 else family.natural_lo
    s_max = (edge - xt) / alpha
    if math.isfinite(s_max):
        hi = s_max * (1.0 - 1e-12)
    else:
        hi = 1.0
        while h(hi) <= 0:
            hi *= 2.0
    return float(brentq(h, 1e-12, hi, xtol=1e-14))


def lower_bound_check(long_arl: ArlEstimate, exponent, a):
    """Pass when ``mean + 3 se >= exp(exponent * a)``.

    ``exponent`` is ``I(lam, theta)`` for the single-post-change detectors
    and ``p(theta)`` for the optimizer-pair detectors.  Censored runs make the
    mean an underestimate, which keeps the check conservative.
    """
    bound = math.exp(exponent * a)
    se = 0.0 if math.isnan(long_arl.stderr) else long_arl.stderr
    top = long_arl.mean + 3.0 * se
    if long_arl.censored and long_arl.uncensored == 0:
        top = math.inf
    return BoundCheck(top >= bound, long_arl.mean, bound, f"{long_arl} vs exp({exponent:.4g}*{a:g})={bound:.4g}")
