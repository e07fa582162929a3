"""Compiled per-chunk kernels for the streaming detectors.

Every kernel consumes ``xs[start:]`` and mutates the state arrays it is
given.  The return value is ``(status, index, extra)``:

* ``status == NO_ALARM``: every observation was consumed without an alarm;
* ``status == ALARM``: ``xs[index]`` triggered the alarm and was consumed;
* ``status == NEED_SPACE``: ``xs[index]`` was *not* consumed because a
  buffer is full (or a threshold table is too short); the caller grows it
  and resumes at ``index``.

``extra`` is a small integer with kernel-specific meaning (the branch that
fired, or the segment length).  Scalar state lives in ``fs`` (floats) and
``ns`` (integers) so that the Python side can snapshot and restore it.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

NO_ALARM = 0
ALARM = 1
NEED_SPACE = 2

BRANCH_WINDOW = 1
BRANCH_LAGGED = 2
BRANCH_FAST = 3
BRANCH_SEGMENT = 4

FAMILY_NORMAL = 0
FAMILY_EXPONENTIAL = 1


@njit(cache=True)
def cusum_kernel(xs, start, alpha, beta, a, fs, ns):
    """W <- max(W, 0) + alpha*x - beta; alarm when W >= a.  fs=[W], ns=[n]."""
    w = fs[0]
    n = ns[0]
    for i in range(start, xs.size):
        w = max(w, 0.0) + alpha * xs[i] - beta
        n += 1
        if w >= a:
            fs[0] = w
            ns[0] = n
            return ALARM, i, 0
    fs[0] = w
    ns[0] = n
    return NO_ALARM, xs.size, 0


@njit(cache=True)
def m_star_kernel(xs, start, far, near, bound_far, bound_near, b, far_ring, near_ring, w_ring, fs, ns):
    """Window branch on the far endpoint plus lagged CUSUM on the near endpoint.

    ``far``/``near`` are (alpha, beta) llr coefficients; rings have length b+1
    and are indexed by n mod (b+1).  fs=[W_n, last window max, last lagged
    value], ns=[n].
    """
    size = b + 1
    w = fs[0]
    n = ns[0]
    for i in range(start, xs.size):
        x = xs[i]
        n += 1
        pos = n % size
        lf = far[0] * x - far[1]
        ln = near[0] * x - near[1]
        far_ring[pos] = lf
        near_ring[pos] = ln
        w = max(w, 0.0) + ln
        # W_{n-b} sits where W_n is about to go only when b == 0
        if b > 0:
            w_lag = w_ring[(n - b) % size]
        else:
            w_lag = w
        w_ring[pos] = w

        best = -math.inf
        s = 0.0
        depth = b if n > b else n
        for j in range(depth):
            s += far_ring[(n - j) % size]
            if s > best:
                best = s
        hit_window = depth > 0 and best >= bound_far

        lagged = -math.inf
        hit_lagged = False
        if n > b:
            tail = 0.0
            for j in range(b):
                tail += near_ring[(n - j) % size]
            lagged = w_lag + tail
            hit_lagged = lagged >= bound_near

        if hit_window or hit_lagged:
            fs[0] = w
            fs[1] = best
            fs[2] = lagged
            ns[0] = n
            code = 0
            if hit_window:
                code += BRANCH_WINDOW
            if hit_lagged:
                code += BRANCH_LAGGED
            return ALARM, i, code
    fs[0] = w
    ns[0] = n
    return NO_ALARM, xs.size, 0


@njit(cache=True)
def m_hat_star_kernel(xs, start, near, bound, c, near_ring, w_ring, fs, ns):
    """Alarm iff n >= c and W_{n-c+1} + sum of the last c-1 near llr >= bound.

    Rings have length c and are indexed by n mod c.  fs=[W_n, last value],
    ns=[n].
    """
    w = fs[0]
    n = ns[0]
    for i in range(start, xs.size):
        n += 1
        pos = n % c
        ln = near[0] * xs[i] - near[1]
        near_ring[pos] = ln
        w = max(w, 0.0) + ln
        w_ring[pos] = w
        if n >= c:
            # W_{n-c+1} is the oldest value in the ring
            val = w_ring[(n - c + 1) % c]
            for j in range(c - 1):
                val += near_ring[(n - j) % c]
            if val >= bound:
                fs[0] = w
                fs[1] = val
                ns[0] = n
                return ALARM, i, 0
    fs[0] = w
    ns[0] = n
    return NO_ALARM, xs.size, 0


@njit(cache=True)
def open_m_kernel(xs, start, up, mean_lam, a, phi_near, phi_far, fs, ns):
    """One-shot boundary S_n vs b'(lam)a + max(n-a,0)phi_near + min(n-a,0)phi_far."""
    s = fs[0]
    n = ns[0]
    for i in range(start, xs.size):
        s += xs[i]
        n += 1
        d = n - a
        bound = mean_lam * a + (d * phi_near if d > 0 else d * phi_far)
        hit = s >= bound if up else s <= bound
        if hit:
            fs[0] = s
            fs[1] = bound
            ns[0] = n
            return ALARM, i, 0
    fs[0] = s
    ns[0] = n
    return NO_ALARM, xs.size, 0


@njit(cache=True)
def _b(code, xi):
    if code == FAMILY_NORMAL:
        return 0.5 * xi * xi
    return -math.log(-xi)


@njit(cache=True)
def _mean_to_natural(code, mu, hi):
    if code == FAMILY_NORMAL:
        return mu
    if mu <= 0.0:
        return hi
    return -1.0 / mu


@njit(cache=True)
def segment_sup(code, q, m, xt, lo, hi):
    """sup over natural xi in [lo, hi] of (xi - xt) q - m (b(xi) - b(xt))."""
    xi = _mean_to_natural(code, q / m, hi)
    if xi < lo:
        xi = lo
    elif xi > hi:
        xi = hi
    return (xi - xt) * q - m * (_b(code, xi) - _b(code, xt))


@njit(cache=True)
def tau_glr_kernel(xs, start, code, xt, lo, hi, a, cand_s, cand_n, fs, ns):
    """Segment GLR against a simple pre-change parameter, with pruning.

    ``cand_s[j]`` is the running sum just before candidate j starts and
    ``cand_n[j]`` the number of observations before it.  fs=[S, best], ns=[n,
    count].  A candidate whose sup statistic is <= 0 is dominated by every
    later start and is dropped.
    """
    s = fs[0]
    n = ns[0]
    count = ns[1]
    cap = cand_s.size
    for i in range(start, xs.size):
        if count >= cap:
            fs[0] = s
            ns[0] = n
            ns[1] = count
            return NEED_SPACE, i, 0
        cand_s[count] = s
        cand_n[count] = n
        count += 1
        s += xs[i]
        n += 1
        best = -math.inf
        keep = 0
        for j in range(count):
            m = n - cand_n[j]
            v = segment_sup(code, s - cand_s[j], m, xt, lo, hi)
            if v > best:
                best = v
            if v > 0.0:
                cand_s[keep] = cand_s[j]
                cand_n[keep] = cand_n[j]
                keep += 1
        if best >= a:
            fs[0] = s
            fs[1] = best
            ns[0] = n
            ns[1] = count
            return ALARM, i, 0
        count = keep
        if count == 0:
            # nothing left to subtract from: restart the running sum
            s = 0.0
    fs[0] = s
    ns[0] = n
    ns[1] = count
    return NO_ALARM, xs.size, 0


@njit(cache=True)
def t_hat_star_kernel(xs, start, up, v_coef, w_shift, w_stop, w_cont, c_table, prefix, fs, ns):
    """Cycle-based GLR detector with per-length thresholds ``c_table[m-1]``.

    fs=[V, W], ns=[n, cycle length].  ``prefix[j]`` holds the sum of the
    first j observations of the current cycle.  The W fast path stops when
    W >= w_stop and skips the segment test when W < w_cont.
    """
    v = fs[0]
    w = fs[1]
    n = ns[0]
    cyc = ns[1]
    sgn = 1.0 if up else -1.0
    for i in range(start, xs.size):
        x = xs[i]
        v_new = max(v + v_coef[0] * x - v_coef[1], 0.0)
        w_new = max(w + sgn * (x - w_shift), 0.0)
        cyc_new = cyc + 1
        middle = w_new < w_stop and w_new >= w_cont
        if cyc_new >= prefix.size or (middle and cyc_new > c_table.size):
            fs[0] = v
            fs[1] = w
            ns[0] = n
            ns[1] = cyc
            return NEED_SPACE, i, 0
        v = v_new
        w = w_new
        cyc = cyc_new
        n += 1
        total = prefix[cyc - 1] + x
        prefix[cyc] = total
        fired = 0
        code = 0
        if w >= w_stop:
            fired = 1
            code = BRANCH_FAST
        elif middle:
            for m in range(1, cyc + 1):
                q = total - prefix[cyc - m]
                hit = q >= c_table[m - 1] if up else q <= c_table[m - 1]
                if hit:
                    fired = m
                    code = BRANCH_SEGMENT
                    break
        if fired > 0:
            fs[0] = v
            fs[1] = w
            ns[0] = n
            ns[1] = cyc
            return ALARM, i, code * 1_000_000_000 + fired
        if v == 0.0:
            cyc = 0
            prefix[0] = 0.0
    fs[0] = v
    fs[1] = w
    ns[0] = n
    ns[1] = cyc
    return NO_ALARM, xs.size, 0


@njit(cache=True)
def t_beta_star_kernel(xs, start, beta, bound, prefix, fs, ns):
    """max_{0<=k<n} (S_n - S_k)(n-k)^(beta-1) >= bound, all prefix sums kept.

    prefix[j] = S_j; fs=[best], ns=[n].
    """
    n = ns[0]
    e = beta - 1.0
    for i in range(start, xs.size):
        if n + 1 >= prefix.size:
            ns[0] = n
            return NEED_SPACE, i, 0
        n += 1
        sn = prefix[n - 1] + xs[i]
        prefix[n] = sn
        best = -math.inf
        arg = 0
        for k in range(n):
            m = n - k
            val = (sn - prefix[k]) * (m ** e) if e != 0.0 else sn - prefix[k]
            if val > best:
                best = val
                arg = m
        if best >= bound:
            fs[0] = best
            ns[0] = n
            return ALARM, i, arg
    ns[0] = n
    return NO_ALARM, xs.size, 0


@njit(cache=True)
def t_zero_star_kernel(xs, start, c, ring, fs, ns):
    """n >= c and S_n >= min_{0<=k<=n-c} S_k.

    ``ring`` (length c) holds S_{n-c+1..n} indexed by j mod c and starts with
    S_0 = 0 at slot 0.  fs=[S_n, running min], ns=[n].
    """
    s = fs[0]
    run_min = fs[1]
    n = ns[0]
    for i in range(start, xs.size):
        n += 1
        pos = n % c
        if n >= c:
            old = ring[pos]  # S_{n-c}
            if old < run_min:
                run_min = old
        s += xs[i]
        ring[pos] = s
        if n >= c and s >= run_min:
            fs[0] = s
            fs[1] = run_min
            ns[0] = n
            return ALARM, i, 0
    fs[0] = s
    fs[1] = run_min
    ns[0] = n
    return NO_ALARM, xs.size, 0


def llr_terms(xs, alpha, beta):
    return alpha * np.asarray(xs, dtype=float) - beta
