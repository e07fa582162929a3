"""Streaming detectors: one object per run, fed one observation or a chunk at a time.

Each detector owns its state arrays and delegates the per-observation work to
a compiled kernel, so ``step`` and ``feed`` share a single implementation.
After an alarm the detector refuses more input until ``reset`` is called.
"""

from __future__ import annotations

import math
from collections.abc import Iterable

import numpy as np
from scipy.special import logsumexp

from ..errors import ConfigError
from ..optimize import golden_section, grid_extremum
from . import _kernels as K
from .config import AlarmReport, DetectorConfig
from .thresholds import ThresholdTable, fast_path_bounds

__all__ = [
    "Detector",
    "make_detector",
    "run_detector",
    "segment_sup",
    "pair_segment_statistic",
]


def _as_chunk(xs):
    arr = np.ascontiguousarray(xs, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    return arr


def segment_sup(family, q, m, xt, lam_lo, lam_hi):
    """sup over natural ``xi`` in ``[lam_lo, lam_hi]`` of ``(xi - xt) q - m (b(xi) - b(xt))``.

    The objective is concave in ``xi``; the maximiser is the segment-mean MLE
    clipped to the interval.  Works on arrays of ``q`` and ``m``.
    """
    q = np.asarray(q, dtype=float)
    m = np.asarray(m, dtype=float)
    mu = q / m
    xi = np.vectorize(family.mean_to_natural, otypes=[float])(mu) if mu.ndim else family.mean_to_natural(float(mu))
    xi = np.clip(xi, lam_lo, lam_hi)
    b = family._b
    return (xi - xt) * q - m * (b(xi, 0) - b(np.float64(xt), 0))


def pair_segment_statistic(family, theta_set, lam_set, p, q, m, n=257):
    """``inf_theta sup_lam sum llr(lam, theta) / p(theta)`` for one segment.

    The sup over lam separates from theta: ``sup_lam [xi_lam Q - m b(xi_lam)]``
    is computed once and the theta-dependent part subtracted.
    """
    lam_lo, lam_hi = sorted((float(family.to_natural(lam_set.lo)), float(family.to_natural(lam_set.hi))))
    xi = min(max(family.mean_to_natural(q / m), lam_lo), lam_hi)
    top = xi * q - m * float(family._b(np.float64(xi), 0))
    th_lo, th_hi = sorted((float(family.to_natural(theta_set.lo)), float(family.to_natural(theta_set.hi))))

    def f(xt):
        pt = np.asarray(p(family.from_natural(xt)), dtype=float)
        return (top - (xt * q - m * family._b(xt, 0))) / pt

    _, val = grid_extremum(f, th_lo, th_hi, n=n, maximize=False, tol=1e-12)
    return float(val)


class Detector:
    """Base class.  Subclasses implement ``_init_state`` and ``_advance``."""

    procedure = ""

    def __init__(self, config: DetectorConfig, diagnostics=True):
        if not isinstance(config, DetectorConfig):
            raise ConfigError("expected a DetectorConfig")
        self.config = config
        self.diagnostics = diagnostics
        self.fam = config.family
        self._setup()
        self.reset()

    def _setup(self):
        pass

    def reset(self):
        """Return to the initial (pre-data) state."""
        self.n = 0
        self.stopped = False
        self.last_report = None
        self._init_state()

    def step(self, x) -> AlarmReport:
        """Process a single observation."""
        return self.feed(np.array([x], dtype=np.float64))

    def feed(self, xs) -> AlarmReport:
        """Process observations until an alarm or the end of ``xs``.

        Observations after the alarming one are left unread; the report's
        ``n_stop`` tells how many were used in total since ``reset``.
        """
        if self.stopped:
            raise RuntimeError("detector already alarmed; call reset() first")
        xs = _as_chunk(xs)
        report = self._advance(xs)
        if report is None:
            return AlarmReport(False, self.n, procedure=self.config.name)
        self.stopped = True
        self.last_report = report
        return report

    def _alarm(self, branch, statistic):
        return AlarmReport(True, self.n, branch=branch, statistic=float(statistic), procedure=self.config.name)

    def state_size(self):
        """Number of stored floating-point values (grows only where unavoidable)."""
        return sum(int(np.size(v)) for v in self._state_arrays())

    def _state_arrays(self):
        return [self.fs, self.ns]


class CusumDetector(Detector):
    procedure = "cusum"

    def _setup(self):
        cfg = self.config
        self.alpha, self.beta = self.fam.llr_coefficients(cfg.lam.lo, cfg.theta.lo)

    def _init_state(self):
        self.fs = np.zeros(1)
        self.ns = np.zeros(1, dtype=np.int64)

    def _advance(self, xs):
        status, _, _ = K.cusum_kernel(xs, 0, self.alpha, self.beta, float(self.config.a), self.fs, self.ns)
        self.n = int(self.ns[0])
        if status == K.ALARM:
            return self._alarm("cusum", self.fs[0])
        return None

    @property
    def statistic(self):
        return float(self.fs[0])


class MStarDetector(Detector):
    """Window branch on the far endpoint, lagged CUSUM branch on the near one."""

    procedure = "m_star"

    def _setup(self):
        cfg = self.config
        fam = self.fam
        lam = cfg.lam.lo
        self.theta_far, self.theta_near = cfg.theta_far(), cfg.theta_near()
        self.far = np.array(fam.llr_coefficients(lam, self.theta_far))
        self.near = np.array(fam.llr_coefficients(lam, self.theta_near))
        self.info_far = fam.kl(lam, self.theta_far)
        self.info_near = fam.kl(lam, self.theta_near)
        self.b = int(math.floor(cfg.a))

    def _init_state(self):
        size = self.b + 1
        self.far_ring = np.zeros(size)
        self.near_ring = np.zeros(size)
        self.w_ring = np.zeros(size)
        self.fs = np.array([0.0, -math.inf, -math.inf])
        self.ns = np.zeros(1, dtype=np.int64)

    def _advance(self, xs):
        a = float(self.config.a)
        status, _, code = K.m_star_kernel(
            xs, 0, self.far, self.near, self.info_far * a, self.info_near * a, self.b,
            self.far_ring, self.near_ring, self.w_ring, self.fs, self.ns,
        )
        self.n = int(self.ns[0])
        if status != K.ALARM:
            return None
        branch = {1: "window", 2: "lagged", 3: "window+lagged"}[code]
        stat = max(self.fs[1] / self.info_far, self.fs[2] / self.info_near)
        return self._alarm(branch, stat)

    def _state_arrays(self):
        return [self.far_ring, self.near_ring, self.w_ring, self.fs, self.ns]


class MHatStarDetector(Detector):
    """Half-open pre-change set: only the near endpoint and segments of length >= ceil(a)."""

    procedure = "m_hat_star"

    def _setup(self):
        cfg = self.config
        lam = cfg.lam.lo
        self.theta_near = cfg.theta_near()
        self.near = np.array(self.fam.llr_coefficients(lam, self.theta_near))
        self.info_near = self.fam.kl(lam, self.theta_near)
        self.c = max(int(math.ceil(cfg.a)), 1)

    def _init_state(self):
        self.near_ring = np.zeros(self.c)
        self.w_ring = np.zeros(self.c)
        self.fs = np.zeros(2)
        self.ns = np.zeros(1, dtype=np.int64)

    def _advance(self, xs):
        bound = self.info_near * float(self.config.a)
        status, _, _ = K.m_hat_star_kernel(xs, 0, self.near, bound, self.c, self.near_ring, self.w_ring, self.fs, self.ns)
        self.n = int(self.ns[0])
        if status == K.ALARM:
            return self._alarm("lagged", self.fs[1] / self.info_near)
        return None

    def _state_arrays(self):
        return [self.near_ring, self.w_ring, self.fs, self.ns]


class OpenMDetector(Detector):
    """One-shot open-ended test on the running sum; never restarts."""

    procedure = "open_m"

    def _setup(self):
        cfg = self.config
        fam = self.fam
        lam = cfg.lam.lo
        self.up = cfg.direction > 0
        self.mean_lam = fam.mean(lam)
        self.phi_near = fam.phi(cfg.theta_near(), lam)
        self.phi_far = fam.phi(cfg.theta_far(), lam)

    def _init_state(self):
        self.fs = np.zeros(2)
        self.ns = np.zeros(1, dtype=np.int64)

    def boundary(self, n):
        a = float(self.config.a)
        d = np.asarray(n, dtype=float) - a
        return self.mean_lam * a + np.where(d > 0, d * self.phi_near, d * self.phi_far)

    def _advance(self, xs):
        status, _, _ = K.open_m_kernel(
            xs, 0, self.up, self.mean_lam, float(self.config.a), self.phi_near, self.phi_far, self.fs, self.ns
        )
        self.n = int(self.ns[0])
        if status == K.ALARM:
            return self._alarm("sum", self.fs[0])
        return None


class TauGlrDetector(Detector):
    """Segment GLR against a simple pre-change parameter with dominated-start pruning."""

    procedure = "tau_glr"

    def _setup(self):
        cfg = self.config
        fam = self.fam
        self.xt = float(fam.natural(cfg.theta.lo))
        self.lam_lo, self.lam_hi = sorted((float(fam.natural(cfg.lam.lo)), float(fam.natural(cfg.lam.hi))))
        self.compiled = fam.kernel_code in (K.FAMILY_NORMAL, K.FAMILY_EXPONENTIAL)

    def _init_state(self):
        self.cand_s = np.zeros(64)
        self.cand_n = np.zeros(64, dtype=np.int64)
        self.fs = np.array([0.0, -math.inf])
        self.ns = np.zeros(2, dtype=np.int64)

    def _advance(self, xs):
        if not self.compiled:
            return self._advance_python(xs)
        start = 0
        a = float(self.config.a)
        while True:
            status, idx, _ = K.tau_glr_kernel(
                xs, start, self.fam.kernel_code, self.xt, self.lam_lo, self.lam_hi, a,
                self.cand_s, self.cand_n, self.fs, self.ns,
            )
            self.n = int(self.ns[0])
            if status == K.NEED_SPACE:
                self.cand_s = np.concatenate([self.cand_s, np.zeros(self.cand_s.size)])
                self.cand_n = np.concatenate([self.cand_n, np.zeros(self.cand_n.size, dtype=np.int64)])
                start = idx
                continue
            if status == K.ALARM:
                return self._alarm("segment", self.fs[1])
            return None

    def _advance_python(self, xs):
        # Generic families: golden-section maximisation of the concave
        # segment log-likelihood ratio over the natural post-change interval.
        fam = self.fam
        a = float(self.config.a)
        count = int(self.ns[1])
        qs = list(self.fs[0] - self.cand_s[:count])
        ms = list(self.n - self.cand_n[:count])
        for x in xs:
            qs.append(0.0)
            ms.append(0)
            q = np.asarray(qs) + x
            m = np.asarray(ms) + 1
            self.n += 1

            def f(xi, q=q, m=m):
                return (xi - self.xt) * q - m * (fam._b(xi, 0) - fam._b(np.float64(self.xt), 0))

            if self.lam_lo == self.lam_hi:
                vals = f(np.full(q.shape, self.lam_lo))
            else:
                _, vals = golden_section(f, np.full(q.shape, self.lam_lo), np.full(q.shape, self.lam_hi),
                                         maximize=True, tol=1e-12)
            best = float(np.max(vals))
            if best >= a:
                self._store_python(q, m)
                self.fs[1] = best
                return self._alarm("segment", best)
            keep = vals > 0
            qs, ms = list(q[keep]), list(m[keep])
        self._store_python(np.asarray(qs, dtype=float), np.asarray(ms, dtype=np.int64))
        return None

    def _store_python(self, q, m):
        count = q.size
        if count > self.cand_s.size:
            self.cand_s = np.zeros(2 * count)
            self.cand_n = np.zeros(2 * count, dtype=np.int64)
        self.fs[0] = 0.0
        self.cand_s[:count] = -q
        self.cand_n[:count] = self.n - m
        self.ns[0] = self.n
        self.ns[1] = count

    def _state_arrays(self):
        count = int(self.ns[1])
        return [self.cand_s[:count], self.cand_n[:count], self.fs, self.ns]


class THatStarDetector(Detector):
    """Optimizer-pair GLR detector with cycle restarts, a CUSUM fast path and per-length thresholds."""

    procedure = "t_hat_star_glr"

    def _setup(self):
        cfg = self.config
        fam = self.fam
        self.up = cfg.direction > 0
        p = cfg.pair.p
        self.v_coef = np.array(fam.llr_coefficients(cfg.lam_near(), cfg.theta_far()))
        self.w_shift = fam.phi(cfg.theta_near(), cfg.lam_near())
        self.w_stop, self.w_cont = fast_path_bounds(
            fam, cfg.theta_near(), cfg.lam_near(), cfg.lam_far(), cfg.theta, p, float(cfg.a)
        )
        self.table = ThresholdTable(fam, cfg.theta, cfg.lam, p, float(cfg.a), self.up)
        self.c_values = self.table.ensure(64)

    def _init_state(self):
        self.prefix = np.zeros(256)
        self.fs = np.zeros(2)
        self.ns = np.zeros(2, dtype=np.int64)

    def _advance(self, xs):
        start = 0
        while True:
            status, idx, extra = K.t_hat_star_kernel(
                xs, start, self.up, self.v_coef, self.w_shift, self.w_stop, self.w_cont,
                self.c_values, self.prefix, self.fs, self.ns,
            )
            self.n = int(self.ns[0])
            if status == K.NEED_SPACE:
                need = int(self.ns[1]) + 2
                if need >= self.prefix.size:
                    grown = np.zeros(2 * self.prefix.size)
                    grown[: self.prefix.size] = self.prefix
                    self.prefix = grown
                if need - 1 > self.c_values.size:
                    self.c_values = self.table.ensure(need)
                start = idx
                continue
            if status == K.ALARM:
                code, m = divmod(int(extra), 1_000_000_000)
                branch = "fast" if code == K.BRANCH_FAST else "segment"
                return self._alarm(branch, self._report_statistic(m if code != K.BRANCH_FAST else 0))
            return None

    def _report_statistic(self, m):
        if not self.diagnostics:
            return math.nan
        cfg = self.config
        cyc = int(self.ns[1])
        lengths = [m] if m > 0 else range(1, cyc + 1)
        total = self.prefix[cyc]
        best = -math.inf
        for length in lengths:
            q = total - self.prefix[cyc - length]
            val = pair_segment_statistic(self.fam, cfg.theta, cfg.lam, cfg.pair.p, q, length)
            best = max(best, val)
        return best

    def _state_arrays(self):
        return [self.prefix[: int(self.ns[1]) + 1], self.fs, self.ns]


class MixtureDetector(Detector):
    """Mixture-likelihood detector with pair-scaled boundaries, vectorised over start times."""

    procedure = "t_star_mixture"

    def _setup(self):
        cfg = self.config
        fam = self.fam
        if cfg.lam.is_point:
            lams = np.array([cfg.lam.lo])
        else:
            if cfg.eta_grid_n < 2:
                raise ConfigError("eta_grid_n must be at least 2")
            lams = np.linspace(cfg.lam.lo, cfg.lam.hi, cfg.eta_grid_n)
        self.xi_lam = np.asarray(fam.to_natural(lams), dtype=float)
        self.b_lam = np.asarray(fam._b(self.xi_lam, 0), dtype=float)
        self.log_j = math.log(self.xi_lam.size)
        th_lo, th_hi = sorted((float(fam.natural(cfg.theta.lo)), float(fam.natural(cfg.theta.hi))))
        self.th_range = (th_lo, th_hi)
        n_grid = 1 if th_lo == th_hi else max(int(cfg.theta_grid_n), 2)
        self.xi_th = np.linspace(th_lo, th_hi, n_grid)
        self.b_th = np.asarray(fam._b(self.xi_th, 0), dtype=float)
        self.p_th = np.asarray(cfg.pair.p(fam.from_natural(self.xi_th)), dtype=float)
        self.prune = np.array(fam.llr_coefficients(cfg.lam_near(), cfg.theta_far()))

    def _init_state(self):
        self.q = np.zeros(0)
        self.m = np.zeros(0)
        self.fs = np.zeros(1)
        self.ns = np.zeros(1, dtype=np.int64)

    def _mix(self, q, m):
        z = self.xi_lam[None, :] * q[:, None] - m[:, None] * self.b_lam[None, :]
        return logsumexp(z, axis=1) - self.log_j

    def statistics(self, q, m, a=None):
        """Pair-scaled mixture statistic for segments with sums ``q`` and lengths ``m``.

        With ``a`` given, only segments whose grid minimum reaches ``a`` are
        refined (the refinement can only lower the value).
        """
        q = np.asarray(q, dtype=float)
        m = np.asarray(m, dtype=float)
        mix = self._mix(q, m)
        vals = (mix[:, None] - (self.xi_th[None, :] * q[:, None] - m[:, None] * self.b_th[None, :])) / self.p_th[None, :]
        idx = np.argmin(vals, axis=1)
        out = vals[np.arange(q.size), idx]
        if self.xi_th.size == 1:
            return out
        todo = np.ones(q.size, dtype=bool) if a is None else out >= a
        if np.any(todo):
            sel = np.flatnonzero(todo)
            lo = self.xi_th[np.maximum(idx[sel] - 1, 0)]
            hi = self.xi_th[np.minimum(idx[sel] + 1, self.xi_th.size - 1)]
            qs, ms, mixs = q[sel], m[sel], mix[sel]
            fam = self.fam
            p = self.config.pair.p

            def f(xt):
                return (mixs - (xt * qs - ms * fam._b(xt, 0))) / np.asarray(p(fam.from_natural(xt)), dtype=float)

            _, refined = golden_section(f, lo, hi, tol=1e-12)
            out[sel] = np.minimum(out[sel], refined)
        return out

    def _advance(self, xs):
        a = float(self.config.a)
        alpha, beta = self.prune
        q, m = self.q, self.m
        for x in xs:
            q = np.append(q, 0.0) + x
            m = np.append(m, 0.0) + 1.0
            self.n += 1
            stats = self.statistics(q, m, a)
            best = float(np.max(stats))
            if best >= a:
                self.q, self.m = q, m
                self.fs[0] = best
                self.ns[0] = self.n
                return self._alarm("segment", best)
            keep = alpha * q - beta * m > 0.0
            q, m = q[keep], m[keep]
        self.q, self.m = q, m
        self.ns[0] = self.n
        return None

    def _state_arrays(self):
        return [self.q, self.m, self.fs, self.ns]


class TBetaStarDetector(Detector):
    """Normal-mean detector ``max_k (S_n - S_k)(n - k)^(beta - 1) >= a^beta``."""

    procedure = "t_beta_star"

    def _setup(self):
        self.beta = float(self.config.beta)
        self.bound = float(self.config.a) ** self.beta

    def _init_state(self):
        self.prefix = np.zeros(256)
        self.fs = np.zeros(1)
        self.ns = np.zeros(1, dtype=np.int64)

    def _advance(self, xs):
        start = 0
        while True:
            status, idx, _ = K.t_beta_star_kernel(xs, start, self.beta, self.bound, self.prefix, self.fs, self.ns)
            self.n = int(self.ns[0])
            if status == K.NEED_SPACE:
                grown = np.zeros(2 * self.prefix.size)
                grown[: self.prefix.size] = self.prefix
                self.prefix = grown
                start = idx
                continue
            if status == K.ALARM:
                return self._alarm("segment", self.fs[0])
            return None

    def _state_arrays(self):
        return [self.prefix[: self.n + 1], self.fs, self.ns]


class TZeroStarDetector(Detector):
    """Normal-mean detector ``S_n >= min_{k <= n - ceil(a)} S_k`` with O(1) work per step."""

    procedure = "t_zero_star"

    def _setup(self):
        self.c = max(int(math.ceil(self.config.a)), 1)

    def _init_state(self):
        self.ring = np.zeros(self.c)
        self.fs = np.array([0.0, math.inf])
        self.ns = np.zeros(1, dtype=np.int64)

    def _advance(self, xs):
        status, _, _ = K.t_zero_star_kernel(xs, 0, self.c, self.ring, self.fs, self.ns)
        self.n = int(self.ns[0])
        if status == K.ALARM:
            return self._alarm("segment", self.fs[0] - self.fs[1])
        return None

    def _state_arrays(self):
        return [self.ring, self.fs, self.ns]


_CLASSES = {
    cls.procedure: cls
    for cls in (
        CusumDetector,
        MStarDetector,
        MHatStarDetector,
        OpenMDetector,
        TauGlrDetector,
        THatStarDetector,
        MixtureDetector,
        TBetaStarDetector,
        TZeroStarDetector,
    )
}


def make_detector(config: DetectorConfig, diagnostics=True) -> Detector:
    return _CLASSES[config.procedure](config, diagnostics=diagnostics)


def run_detector(config, stream, max_steps=None, detector=None) -> AlarmReport:
    """Feed ``stream`` (array or iterable of floats) until alarm or ``max_steps``.

    Without an alarm the report is marked censored, with ``n_stop`` the number
    of observations read.
    """
    det = detector if detector is not None else make_detector(config)
    det.reset()
    if isinstance(stream, np.ndarray) or isinstance(stream, (list, tuple)):
        xs = _as_chunk(stream)
        if xs.size == 0:
            raise ConfigError("empty observation stream")
        if max_steps is not None:
            xs = xs[: int(max_steps)]
        report = det.feed(xs)
    elif isinstance(stream, Iterable):
        report = None
        seen = 0
        for x in stream:
            if max_steps is not None and seen >= max_steps:
                break
            seen += 1
            report = det.step(float(x))
            if report.stopped:
                break
        if report is None:
            raise ConfigError("empty observation stream")
    else:
        raise ConfigError("stream must be an array or an iterable of numbers")
    if report.stopped:
        return report
    return AlarmReport(False, det.n, censored=True, procedure=config.name)
