import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from shearrg import brownian
from shearrg.errors import DivergenceError, UsageError
from shearrg.spectra import CovarianceKernel, CutoffWindow, Normalization, SpectralParams


def test_single_step_variance():
    vals = brownian.path_values(2.5, 1, 3, np.arange(10000))[:, -1]
    se = vals.var() * math.sqrt(2 / len(vals))
    assert abs(vals.var(ddof=1) - 2.5) < 3 * se


def test_deterministic():
    a = brownian.sample_path(1.0, 64, 5, index=7).values
    b = brownian.sample_path(1.0, 64, 5, index=7).values
    assert np.array_equal(a, b)
    assert a[0] == 0.0


def test_scaling_distribution():
    a = 3.0
    short = brownian.path_values(1.0, 16, 1, np.arange(4000))[:, -1] * a
    long = brownian.path_values(a * a, 16, 2, np.arange(4000))[:, -1]
    assert stats.ks_2samp(short, long).pvalue > 1e-3


def test_bridge_endpoints_and_moments():
    br = brownian.sample_bridge(1e-12, 8, 0.0, 0.0, 1)
    assert np.allclose(br.values, 0.0, atol=1e-5)
    mids = np.array([brownian.sample_bridge(2.0, 8, 1.0, 3.0, 4, index=i, variance_rate=0.5).values[4]
                     for i in range(6000)])
    se = mids.std() / math.sqrt(len(mids))
    assert abs(mids.mean() - 2.0) < 3 * se
    # bridge variance at the midpoint: nu0 t / 4
    assert abs(mids.var(ddof=1) - 0.5 * 2.0 / 4) < 3 * mids.var() * math.sqrt(2 / len(mids))
    b = brownian.sample_bridge(2.0, 8, 1.0, 3.0, 4)
    assert b.values[0] == 1.0 and b.values[-1] == pytest.approx(3.0, abs=1e-14)


def test_double_integral_constant_and_tau_squared():
    path = brownian.sample_path(1.7, 64, 0)
    r = brownian.double_time_integral(path, lambda dx, dt: np.full(np.shape(dx), 2.0))
    assert r.value == pytest.approx(2.0 * 1.7 ** 2, rel=1e-12)
    r = brownian.double_time_integral(path, lambda dx, dt: dt ** 2)
    assert r.value == pytest.approx(1.7 ** 4 / 6, rel=1e-3)


def test_double_integral_error_estimate_honest():
    kern = CovarianceKernel(SpectralParams(0.5), CutoffWindow(0.1, 1.0), Normalization.PHYSICAL)
    path = brownian.sample_path(1.0, 256, 3)
    fine = brownian.double_time_integral(path, lambda dx, dt: kern(dx))
    coarse = brownian.double_time_integral(path.coarsened(), lambda dx, dt: kern(dx))
    assert abs(fine.value - coarse.value) <= max(coarse.quadrature_error_estimate * 4, 1e-12)


def test_spectral_route_matches_direct():
    kern = CovarianceKernel(SpectralParams(1.2), CutoffWindow(0.05, 1.0), Normalization.PHYSICAL)
    path = brownian.sample_path(3.0, 300, 8)
    direct = brownian.double_time_integral(path, lambda dx, dt: kern(dx)).value
    assert brownian.spectral_double_integral(path, kern) == pytest.approx(direct, rel=1e-9)


def test_unsteady_spectral_route_matches_direct():
    p = SpectralParams(1.0, z=1.5, model="unsteady")
    kern = CovarianceKernel(p, CutoffWindow(0.1, 1.0), Normalization.PHYSICAL)
    path = brownian.sample_path(2.0, 128, 1)
    direct = brownian.double_time_integral(path, lambda dx, dt: kern(dx, dt)).value
    assert brownian.spectral_double_integral(path, kern) == pytest.approx(direct, rel=1e-9)


@given(st.integers(0, 10 ** 6), st.floats(0.2, 2.0))
def test_time_reversal_invariance(seed, eps):
    kern = CovarianceKernel(SpectralParams(eps), CutoffWindow(0.1, 1.0))
    path = brownian.sample_path(1.0, 32, seed)
    f = lambda dx, dt: kern(dx)
    a = brownian.double_time_integral(path, f).value
    b = brownian.double_time_integral(path.reversed(), f).value
    assert a == pytest.approx(b, rel=1e-12)


def test_nonlocal_constant_path_diverges():
    path = brownian.BrownianPath(1.0, 16, np.zeros(17))
    with pytest.raises(DivergenceError):
        brownian.nonlocal_functional(path, 1.0)


def test_nonlocal_argument_checks():
    path = brownian.sample_path(1.0, 64, 0)
    with pytest.raises(UsageError):
        brownian.nonlocal_functional(path, 2.5)
    with pytest.raises(UsageError):
        brownian.nonlocal_functional(brownian.sample_path(2.0, 64, 0), 1.0)


def test_nonlocal_mean_oracle_value():
    # independent route: (1/pi) int_0^inf E|Phi(q)|^2 dq with E|Phi|^2 = 2 g(q^2/2)
    ref = integrate.quad(lambda q: float(brownian._expected_phi_sq(q)), 0, np.inf, limit=400)[0] / math.pi
    assert brownian.nonlocal_mean_oracle(1.0) == pytest.approx(8 / (3 * math.sqrt(2 * math.pi)), rel=1e-10)
    assert ref == pytest.approx(8 / (3 * math.sqrt(2 * math.pi)), rel=1e-8)


def test_nonlocal_sample_mean():
    vals = np.array([brownian.nonlocal_functional(brownian.sample_path(1.0, 1024, 21, index=i), 1.0)
                     for i in range(1500)])
    assert np.all(vals >= 0)
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals.mean() - 8 / (3 * math.sqrt(2 * math.pi))) < 3 * se


@given(st.integers(0, 10 ** 6), st.floats(1.85, 1.99))
def test_closed_form_route_agrees(seed, eps):
    path = brownian.sample_path(1.0, 1024, seed)
    spec = brownian.nonlocal_functional(path, eps)
    closed = brownian.nonlocal_closed_form(path, eps)
    assert closed == pytest.approx(spec, rel=0.01)


def test_closed_form_route_unbiased_at_1p5():
    rel = [brownian.nonlocal_closed_form(p, 1.5) / brownian.nonlocal_functional(p, 1.5) - 1
           for p in (brownian.sample_path(1.0, 1024, 4, index=i) for i in range(40))]
    assert abs(np.mean(rel)) < 0.01


@pytest.mark.xfail(strict=True, reason="sub-grid part of F is ~n^-(eps-1)/2 of the total; "
                                       "per-path 1% needs far finer paths below eps~1.8")
@pytest.mark.parametrize("eps", [1.2, 1.5])
def test_closed_form_route_per_path_low_eps(eps):
    rel = []
    for i in range(20):
        path = brownian.sample_path(1.0, 1024, 99, index=i)
        spec = brownian.nonlocal_functional(path, eps)
        rel.append(abs(brownian.nonlocal_closed_form(path, eps) / spec - 1))
    assert max(rel) < 0.01
