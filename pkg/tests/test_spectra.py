import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from shearrg.errors import AdmissibilityError, UsageError
from shearrg.spectra import (CovarianceKernel, CutoffWindow, Normalization, SpectralParams,
                             ZeroField, covariance_closed_form, covariance_steady,
                             covariance_unsteady, spectral_density, synthesize_field)

STEADY0 = SpectralParams(0.0, delta=0.1)


def test_density_values():
    assert spectral_density(0.5, STEADY0, CutoffWindow(0.0, 1.0)) == pytest.approx(
        math.sqrt(2 * math.pi) * 0.5, rel=1e-14)
    assert spectral_density(2.0, STEADY0) == 0.0
    p = SpectralParams(0.0, z=1.0, model="unsteady")
    assert spectral_density(0.5, p, CutoffWindow(0.0, 1.0), omega=0.0) == pytest.approx(
        math.sqrt(2 * math.pi), rel=1e-14)


def test_density_argument_errors():
    with pytest.raises(UsageError):
        spectral_density(0.5, STEADY0, omega=1.0)
    with pytest.raises(UsageError):
        spectral_density(0.5, SpectralParams(0.0, z=1.0, model="unsteady"))


def test_admissibility():
    with pytest.raises(AdmissibilityError, match="epsilon must be < 4"):
        SpectralParams(4.0)


def test_window_validation():
    with pytest.raises(UsageError):
        CutoffWindow(0.5, 0.2)
    assert CutoffWindow(1.0, 1.0).empty
    assert CutoffWindow.low_band(SpectralParams(1.0, delta=0.1), 5.0).empty


def test_steady_covariance_at_zero():
    k = CovarianceKernel(STEADY0, CutoffWindow(0.1, 1.0))
    assert covariance_steady(0.0, k) == pytest.approx(0.495, rel=1e-12)
    l = 3.7
    k2 = CovarianceKernel(SpectralParams(2.0), CutoffWindow.high_band(l))
    assert covariance_steady(0.0, k2) == pytest.approx(l, rel=1e-12)


def test_physical_is_flow_over_pi():
    flow = CovarianceKernel(STEADY0, CutoffWindow(0.1, 1.0))
    phys = CovarianceKernel(STEADY0, CutoffWindow(0.1, 1.0), Normalization.PHYSICAL)
    x = np.linspace(0, 30, 7)
    np.testing.assert_allclose(phys(x), flow(x) / math.pi, rtol=1e-13, atol=1e-15)


def test_unsteady_covariance_values():
    p0 = SpectralParams(0.0, z=1.0, model="unsteady")
    k0 = CovarianceKernel(p0, CutoffWindow(0.1, 1.0))
    assert covariance_unsteady(0.0, 0.0, k0) == pytest.approx(math.pi * 0.495, rel=1e-12)
    p1 = SpectralParams(1.0, z=1.0, model="unsteady")
    k1 = CovarianceKernel(p1, CutoffWindow(0.1, 1.0))
    # pi (e^-0.1 - e^-1) = 1.686903...; the value 1.6873 quoted elsewhere is a rounding slip
    assert covariance_unsteady(0.0, 1.0, k1) == pytest.approx(
        math.pi * (math.exp(-0.1) - math.exp(-1.0)), rel=1e-12)
    assert abs(covariance_unsteady(0.0, 200.0, k1)) < 1e-9


@pytest.mark.parametrize("eps", [0.0, 2.0])
def test_closed_forms_match_quadrature(eps):
    k = CovarianceKernel(SpectralParams(eps), CutoffWindow(0.05, 1.0))
    x = np.array([0.0, 0.3, 1.0, 7.5, 40.0, 900.0])
    np.testing.assert_allclose(k(x), covariance_closed_form(x, k), rtol=1e-9, atol=1e-11)


@pytest.mark.parametrize("eps,x", [(1.3, 2.0), (-1.5, 17.0), (3.2, 250.0)])
def test_quadrature_against_scipy(eps, x):
    k = CovarianceKernel(SpectralParams(eps), CutoffWindow(0.01, 1.0))
    ref = integrate.quad(lambda q: math.cos(x * q) * q ** (1 - eps), 0.01, 1.0, limit=2000,
                         epsabs=0, epsrel=1e-12)[0]
    assert k(x) == pytest.approx(ref, rel=1e-9, abs=1e-12)


eps_st = st.floats(-2.0, 3.5)
x_st = st.floats(-1e3, 1e3)


@given(eps_st, x_st, st.floats(0.0, 5.0), st.floats(0.1, 3.0))
def test_covariance_bounded_and_even(eps, x, tau, z):
    p = SpectralParams(eps, z=z, model="unsteady")
    k = CovarianceKernel(p, CutoffWindow(0.05, 1.0))
    c0 = float(k(0.0, 0.0))
    c = float(k(x, tau))
    assert abs(c) <= c0 * (1 + 1e-10)
    assert float(k(-x, tau)) == pytest.approx(c, abs=1e-12 * c0)
    assert float(k(x, -tau)) == pytest.approx(c, abs=1e-12 * c0)


@given(eps_st, st.floats(0.01, 0.5), st.floats(0.5, 1.0))
def test_nesting_monotone(eps, a, b):
    p = SpectralParams(eps)
    inner = CovarianceKernel(p, CutoffWindow(a, b)).variance()
    outer = CovarianceKernel(p, CutoffWindow(a / 2, 1.0)).variance()
    assert outer >= inner


@given(eps_st, x_st)
def test_quadrature_converged(eps, x):
    from shearrg.spectra import band_nodes

    w = CutoffWindow(0.05, 1.0)
    k1, w1 = band_nodes(w, eps, x_scale=abs(x))
    k2, w2 = band_nodes(w, eps, x_scale=abs(x), panels_per_period=8)
    v1 = float(w1 @ np.cos(x * k1))
    v2 = float(w2 @ np.cos(x * k2))
    assert abs(v1 - v2) < 1e-8


def test_empty_window_synthesizes_zero():
    k = CovarianceKernel(STEADY0, CutoffWindow(1.0, 1.0))
    v = synthesize_field(k)
    assert isinstance(v, ZeroField)
    assert np.all(v(np.linspace(0, 5, 4)) == 0)


def test_synthesis_variance():
    k = CovarianceKernel(STEADY0, CutoffWindow(0.1, 1.0), Normalization.PHYSICAL)
    vals = np.array([synthesize_field(k, n_modes=64, seed=11, index=i)(0.0) for i in range(10000)])
    target = covariance_steady(0.0, k)
    se = vals.var(ddof=1) * math.sqrt(2.0 / (len(vals) - 1))
    assert abs(vals.var(ddof=1) - target) < 3 * se


def test_synthesis_space_time_covariance():
    p = SpectralParams(1.0, z=1.0, delta=0.1, model="unsteady")
    k = CovarianceKernel(p, CutoffWindow(0.1, 1.0), Normalization.PHYSICAL)
    xs = np.linspace(0, 4, 5)
    ts = np.linspace(0, 2, 5)
    n = 3000
    prod = np.empty((n, 5, 5))
    for i in range(n):
        v = synthesize_field(k, n_modes=64, horizon=2.0, seed=5, index=i)
        v00 = v(0.0, 0.0)
        prod[i] = np.array([[v00 * v(x, t) for x in xs] for t in ts])
    mean = prod.mean(axis=0)
    se = prod.std(axis=0, ddof=1) / math.sqrt(n)
    target = np.array([[k(x, t) for x in xs] for t in ts])
    # mode discretization (64 cells) is far below the Monte Carlo error here
    assert np.all(np.abs(mean - target) < 3 * se + 2e-3)


def test_single_mode_autocorrelation():
    p = SpectralParams(0.0, z=1.0, model="unsteady")
    k = CovarianceKernel(p, CutoffWindow(0.5, 0.52), Normalization.PHYSICAL)
    v = synthesize_field(k, n_modes=1, horizon=400.0, seed=2, n_times=40000)
    a = v.cos_coef[:, 0]
    kk = v.modes[0]
    lag = 0.8
    step = int(round(lag / (v.times[1] - v.times[0])))
    r = float(np.mean(a[:-step] * a[step:]) / np.mean(a * a))
    assert r == pytest.approx(math.exp(-kk * lag), abs=0.06)


def test_synthesis_deterministic():
    k = CovarianceKernel(STEADY0, CutoffWindow(0.1, 1.0))
    a = synthesize_field(k, n_modes=128, seed=9)(np.linspace(0, 3, 11))
    b = synthesize_field(k, n_modes=128, seed=9)(np.linspace(0, 3, 11))
    assert np.array_equal(a, b)


def test_periodic_snap():
    k = CovarianceKernel(STEADY0, CutoffWindow(0.1, 1.0))
    L = 2 * math.pi / 0.1 * 8
    v = synthesize_field(k, domain_length=L, n_modes=256, seed=1)
    x = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(v(x), v(x + L), atol=1e-9)
    assert v.snap_error >= 0
