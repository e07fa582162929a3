import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqcpd.errors import DomainError
from seqcpd.families import EXPONENTIAL, NORMAL, get_family

means = st.floats(-5, 5, allow_nan=False)
rates = st.floats(0.05, 20, allow_nan=False)


def test_cumulant_values():
    assert NORMAL.cumulant(0.7) == pytest.approx(0.245)
    assert EXPONENTIAL.cumulant(EXPONENTIAL.natural(1.0)) == pytest.approx(0.0)
    for xi in (-3.0, 0.0, 2.5):
        assert NORMAL.cumulant(xi, 2) == 1.0
    with pytest.raises(ValueError):
        NORMAL.cumulant(0.0, 3)


def test_exponential_parameterisation():
    assert EXPONENTIAL.natural(2.5) == -2.5
    assert EXPONENTIAL.cumulant(-2.5) == pytest.approx(-math.log(2.5))
    assert EXPONENTIAL.mean(4.0) == pytest.approx(0.25)
    with pytest.raises(DomainError):
        EXPONENTIAL.natural(0.0)
    with pytest.raises(DomainError):
        EXPONENTIAL.cumulant(0.5)


def test_kl_examples():
    assert NORMAL.kl(0.0, -0.5) == pytest.approx(0.125)
    assert EXPONENTIAL.kl(2.0, 1.0) == pytest.approx(0.5 - 1 - math.log(0.5), abs=1e-15)
    assert EXPONENTIAL.kl(2.0, 1.0) == pytest.approx(0.193147, abs=1e-6)
    assert NORMAL.kl(1.3, 1.3) == 0.0
    assert EXPONENTIAL.kl(0.7, 0.7) == 0.0


def test_phi_examples():
    assert NORMAL.phi(-1.0, 0.0) == pytest.approx(-0.5)
    assert NORMAL.phi(-0.5, 0.0) == pytest.approx(-0.25)
    assert EXPONENTIAL.phi(1.0, 2.0) == pytest.approx(math.log(2.0))
    with pytest.raises(DomainError):
        NORMAL.phi(0.3, 0.3)


def test_llr_examples():
    assert NORMAL.llr(0.0, -0.5, 0.25) == pytest.approx(0.25)
    assert EXPONENTIAL.llr(2.0, 1.0, 0.5) == pytest.approx(0.193147, abs=1e-6)
    assert NORMAL.llr(0.4, 0.4, 17.0) == 0.0
    assert EXPONENTIAL.llr(3.0, 3.0, 0.1) == 0.0


def test_get_family():
    assert get_family("normal") is NORMAL
    assert get_family("exponential") is EXPONENTIAL
    with pytest.raises(Exception):
        get_family("poisson")


@given(means, means)
def test_normal_kl_closed_form(lam, theta):
    assert NORMAL.kl(lam, theta) == pytest.approx((lam - theta) ** 2 / 2, abs=1e-12)


@given(rates, rates)
def test_exponential_kl_closed_form(lam, theta):
    r = theta / lam
    assert EXPONENTIAL.kl(lam, theta) == pytest.approx(r - 1 - math.log(r), rel=1e-9, abs=1e-12)


@given(rates, rates)
def test_kl_nonnegative(lam, theta):
    v = EXPONENTIAL.kl(lam, theta)
    assert v >= 0
    if abs(lam - theta) > 1e-3:
        assert v > 1e-12


@pytest.mark.parametrize("family,grid", [
    (NORMAL, np.linspace(-3, 2, 41)),
    (EXPONENTIAL, np.linspace(0.2, 4, 41)),
])
def test_cumulant_convex_and_phi_increasing(family, grid):
    xi = family.to_natural(grid)
    assert np.all(family.cumulant(xi, 2) > 0)
    lam = grid[-1] + 1.0
    phis = [family.phi(t, lam) for t in grid]
    # phi increases with theta in natural coordinates
    order = np.argsort(xi)
    assert np.all(np.diff(np.asarray(phis)[order]) > 0)


@pytest.mark.parametrize("family,theta", [(NORMAL, -1.0), (EXPONENTIAL, 1.0), (EXPONENTIAL, 2.5)])
def test_sample_mean_matches_cumulant(family, theta):
    rng = np.random.default_rng(3)
    xs = family.sample(theta, rng, 10**6)
    se = xs.std() / math.sqrt(xs.size)
    assert abs(xs.mean() - family.mean(theta)) < 4 * se
    assert abs(xs.mean() - family.mean(theta)) < 0.004 * max(1.0, abs(family.mean(theta)))


def test_sample_deterministic():
    a = NORMAL.sample(0.3, np.random.default_rng(11), 50)
    b = NORMAL.sample(0.3, np.random.default_rng(11), 50)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("family,lam,theta", [(NORMAL, 0.0, -0.5), (EXPONENTIAL, 2.0, 0.9)])
def test_mean_llr_is_kl(family, lam, theta):
    rng = np.random.default_rng(5)
    vals = np.asarray(family.llr(lam, theta, family.sample(lam, rng, 10**5)))
    se = vals.std() / math.sqrt(vals.size)
    assert abs(vals.mean() - family.kl(lam, theta)) < 4 * se


@settings(max_examples=50)
@given(st.floats(-4, 4))
def test_mean_to_natural_inverts(mu):
    assert NORMAL.mean_to_natural(mu) == pytest.approx(mu)
    m = math.exp(mu)
    assert EXPONENTIAL.cumulant(EXPONENTIAL.mean_to_natural(m), 1) == pytest.approx(m, rel=1e-10)
