"""Rescaled RG flow of the constant term V0: regimes, exponents and fixed points.

Normalization. The flow carries the net kernel (1/pi) int cos(kx) k^(1-eps)
phi(k, tau) dk with phi = 1 (steady) and phi = exp(-k^z |tau|)/2 (unsteady).
The half in the unsteady factor makes the B = 0 double time integral equal to
the closed form G(k, t; l) = t^2 g(k^z t e^{alpha l}) exactly. With this
choice the hyperscaling, regime II and regime IV constants come out as the
closed-form values; every fixed-point constant returned here is the
l -> infinity limit of this flow.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import brownian
from .errors import UsageError
from .spectra import (CovarianceKernel, CutoffWindow, Normalization, SpectralParams,
                      band_nodes, power_integral)


class Regime(str, enum.Enum):
    STEADY_MEAN_FIELD = "SteadyMeanField"
    STEADY_NONLOCAL = "SteadyNonlocal"
    STEADY_HYPERSCALING = "SteadyHyperscaling"
    I = "I"
    II = "II"
    III = "III"
    IV = "IV"
    V = "V"
    BOUNDARY = "Boundary"


class FixedPointKind(str, enum.Enum):
    LOCAL_DIFFUSIVE = "LocalDiffusive"
    LOCAL_TIME_DEPENDENT = "LocalTimeDependent"
    NONLOCAL = "Nonlocal"


_KIND = {
    Regime.STEADY_MEAN_FIELD: FixedPointKind.LOCAL_DIFFUSIVE,
    Regime.I: FixedPointKind.LOCAL_DIFFUSIVE,
    Regime.II: FixedPointKind.LOCAL_DIFFUSIVE,
    Regime.STEADY_HYPERSCALING: FixedPointKind.LOCAL_TIME_DEPENDENT,
    Regime.III: FixedPointKind.LOCAL_TIME_DEPENDENT,
    Regime.IV: FixedPointKind.LOCAL_TIME_DEPENDENT,
    Regime.STEADY_NONLOCAL: FixedPointKind.NONLOCAL,
    Regime.V: FixedPointKind.NONLOCAL,
}


@dataclass(frozen=True)
class RegimeReport:
    regime: Regime
    alpha: float
    v_dimension: float
    v1_eigenvalue: float
    fixed_point_kind: FixedPointKind

    def as_dict(self):
        return {"regime": self.regime.value, "alpha": self.alpha,
                "v_dimension": self.v_dimension, "v1_eigenvalue": self.v1_eigenvalue,
                "fixed_point_kind": None if self.fixed_point_kind is None
                else self.fixed_point_kind.value}


@dataclass(frozen=True)
class FlowState:
    l: float
    v0: float
    a: float = math.nan


@dataclass(frozen=True)
class FixedPointConstant:
    """V0* = coefficient * xi^xi_power * t^t_power."""

    coefficient: float
    t_power: float
    description: str = ""
    xi_power: int = 2
    error: float = 0.0

    def value(self, xi=1.0, t=1.0):
        return self.coefficient * xi ** self.xi_power * t ** self.t_power


# --- classification ----------------------------------------------------------


BOUNDARY_TOL = 1e-12


def _lt(a, b):
    """Strict inequality with a margin, so points on a boundary up to rounding are caught."""
    return a < b - BOUNDARY_TOL * max(1.0, abs(a), abs(b))


def unsteady_regime(eps, z):
    """Open-predicate regime of an unsteady point, or BOUNDARY.

    Regime III's first branch {4-2z < eps < 4, z < 2} contains all of regime IV
    as printed; IV is the more specific statement and takes precedence, so III
    keeps eps > 2 when 1 < z < 2 and eps = 2 there is a boundary.
    """
    if (_lt(eps, 0) and not _lt(z, 2)) or (_lt(eps, 2 - z) and _lt(0, z) and _lt(z, 2)):
        return Regime.I
    if _lt(2 - z, eps) and _lt(eps, 4 - 2 * z):
        return Regime.II
    if _lt(4 - 2 * z, eps) and _lt(eps, 2) and _lt(1, z) and _lt(z, 2):
        return Regime.IV
    if _lt(4 - 2 * z, eps) and _lt(eps, 4) and _lt(z, 2):
        if not _lt(1, z) or _lt(2, eps):
            return Regime.III
        return Regime.BOUNDARY
    if _lt(2, eps) and _lt(eps, 4) and not _lt(z, 2):
        return Regime.III
    if _lt(0, eps) and _lt(eps, 2) and _lt(2, z):
        return Regime.V
    return Regime.BOUNDARY


def steady_regime(eps):
    if _lt(eps, 0):
        return Regime.STEADY_MEAN_FIELD
    if _lt(0, eps) and _lt(eps, 2):
        return Regime.STEADY_NONLOCAL
    if _lt(2, eps) and _lt(eps, 4):
        return Regime.STEADY_HYPERSCALING
    return Regime.BOUNDARY


def regime_alpha(regime, eps, z=0.0):
    if regime in (Regime.STEADY_MEAN_FIELD, Regime.I):
        return 2.0
    if regime is Regime.II:
        return 4.0 - eps - z
    if regime in (Regime.III, Regime.STEADY_HYPERSCALING):
        return 2.0 - eps / 2.0
    if regime is Regime.IV:
        return 2.0 * z / (2.0 * z + eps - 2.0)
    if regime in (Regime.V, Regime.STEADY_NONLOCAL):
        return 2.0 / (1.0 + eps / 2.0)
    return math.nan


def classify(params):
    eps = params.epsilon
    if params.steady:
        regime = steady_regime(eps)
    else:
        regime = unsteady_regime(eps, params.z)
    alpha = regime_alpha(regime, eps, params.z)
    if regime is Regime.BOUNDARY:
        return RegimeReport(regime, alpha, math.nan, math.nan, None)
    vdim = math.nan if params.steady else v_dimension(params, alpha, regime)
    return RegimeReport(regime, alpha, vdim, v1_eigenvalue(params, alpha, regime), _KIND[regime])


def v_dimension(params, alpha, regime=None):
    """Scaling dimension [v] of the velocity (unsteady only)."""
    if params.steady:
        raise UsageError("v_dimension is defined for unsteady models")
    eps, z = params.epsilon, params.z
    regime = unsteady_regime(eps, z) if regime is None else regime
    if regime is Regime.II:
        return (eps + z - alpha - 2.0) / 2.0
    if z >= 2:
        return (eps - z) / 2.0
    return (eps + z) / 2.0 - 2.0


def v1_eigenvalue(params, alpha, regime=None):
    """Linear growth rate of V1 under the rescaled flow.

    Regime III's fixed point lives on the time-integrated field, whose scaling
    is the steady one, so it uses the steady rate (zero at alpha = 2 - eps/2).
    """
    eps = params.epsilon
    if params.steady:
        return alpha + eps / 2.0 - 2.0
    regime = unsteady_regime(eps, params.z) if regime is None else regime
    if regime is Regime.III:
        return alpha + eps / 2.0 - 2.0
    return alpha - 1.0 + v_dimension(params, alpha, regime)


# --- g and G -------------------------------------------------------------------

_G_TAYLOR = 1e-3


def g_function(u):
    """g(u) = 1/u - (1 - e^{-u})/u^2, with a Taylor branch near 0."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise UsageError("g_function needs u >= 0")
    small = u < _G_TAYLOR
    us = np.where(small, 1.0, u)
    val = (us + np.expm1(-us)) / us ** 2
    ut = np.where(small, u, 0.0)
    taylor = 0.5 - ut / 6.0 + ut * ut / 24.0 - ut ** 3 / 120.0
    out = np.where(small, taylor, val)
    return out if out.ndim else float(out)


def g_derivative(u):
    u = np.asarray(u, dtype=float)
    small = u < _G_TAYLOR
    us = np.where(small, 1.0, u)
    val = -1.0 / us ** 2 - 2.0 * np.expm1(-us) / us ** 3 - np.exp(-us) / us ** 2
    ut = np.where(small, u, 0.0)
    out = np.where(small, -1.0 / 6.0 + ut / 12.0 - ut * ut / 40.0, val)
    return out if out.ndim else float(out)


def G_factor(k, t, l, alpha, z):
    """G(k, t; l) = t^2 g(a) with a = |k|^z t e^{alpha l}."""
    k = np.abs(np.asarray(k, dtype=float))
    if np.any(k == 0) or not t > 0:
        raise UsageError("G_factor needs k != 0 and t > 0")
    a = k ** z * t * np.exp(alpha * l)
    return t * t * g_function(a)


def normalized_G(k, t, l, alpha, z):
    """|k|^z t^-1 e^{alpha l} G = a g(a) = 1 - (1 - e^{-a})/a, which tends to 1."""
    k = np.abs(np.asarray(k, dtype=float))
    a = k ** z * t * np.exp(alpha * l)
    small = a < _G_TAYLOR
    a_s = np.where(small, 1.0, a)
    out = np.where(small, a * g_function(np.where(small, a, 0.0)), 1.0 + np.expm1(-a_s) / a_s)
    return out if out.ndim else float(out)


# --- flows with the Brownian term suppressed -----------------------------------


def v0_b_suppressed(params, alpha, l, xi=1.0, t=1.0):
    """Closed-form V0(l) with B = 0 and the exact G (no asymptote replacement).

    V0(l) = -(1/pi) e^{(2 alpha - 2) l} xi^2 int_{e^-l}^1 k^(1-eps) G(k, t; l) dk.
    """
    l = float(l)
    if l == 0:
        return 0.0
    eps = params.epsilon
    pref = -math.exp((2 * alpha - 2) * l) * xi * xi / math.pi
    if params.steady:
        return pref * t * t * power_integral(math.exp(-l), 1.0, 1.0 - eps)
    k, w = band_nodes(CutoffWindow(math.exp(-l), 1.0), eps)
    return pref * float(w @ G_factor(k, t, l, alpha, params.z))


def v0_b_suppressed_ode(params, alpha, l_grid, xi=1.0, t=1.0, rtol=1e-10, atol=1e-13):
    """Integrate the B = 0 flow dV0/dl = (2a-2) V0 - (1/pi) e^{(2a-2)l} xi^2 dI/dl as an ODE.

    I(l) = int_{e^-l}^1 k^(1-eps) G(k, t; l) dk, so dI/dl is the moving-edge
    term plus the l-derivative of G under the integral. Cross-check for
    ``v0_b_suppressed``.
    """
    from scipy.integrate import solve_ivp

    eps, z = params.epsilon, params.z

    def d_integral(l):
        edge = math.exp(-l) ** (2 - eps)
        if params.steady:
            return edge * t * t
        edge *= float(G_factor(math.exp(-l), t, l, alpha, z))
        k, w = band_nodes(CutoffWindow(math.exp(-l), 1.0), eps)
        a = k ** z * t * math.exp(alpha * l)
        return edge + float(w @ (t * t * g_derivative(a) * a * alpha))

    def rhs(l, y):
        return [(2 * alpha - 2) * y[0] - math.exp((2 * alpha - 2) * l) * xi * xi * d_integral(l) / math.pi]

    l_grid = np.asarray(l_grid, dtype=float)
    sol = solve_ivp(rhs, (0.0, float(l_grid[-1])), [0.0], t_eval=l_grid, rtol=rtol, atol=atol,
                    method="DOP853")
    return sol.y[0]


# --- per-path trajectories -----------------------------------------------------

# resolution of a unit path with step du: space needs p^2 du <= 0.25 (bias
# about 0.1%), time needs b du <= 0.002 (the kinked e^{-b|du|} trapezoid bias is ~1e-8 there)
RESOLVED_SPACE = 0.25
RESOLVED_TIME = 0.002


def _net_scale(params):
    """Factor turning the PhysicalKernel into the flow's net kernel."""
    return 1.0 if params.steady else 0.5


def u0_trajectory(path, params, l_grid, xi=1.0):
    """U0(l) along one path on [0, t] (values carry sqrt(nu0)).

    U0(l) = -(nu0/2) xi^2 t - xi^2 * [net double time integral on window e^-l..1].
    """
    t = path.horizon
    base = -0.5 * params.nu0 * xi * xi * t
    out = []
    for l in np.asarray(l_grid, dtype=float):
        if l < 0:
            raise UsageError("l must be >= 0")
        kernel = CovarianceKernel(params, CutoffWindow(math.exp(-l), 1.0), Normalization.PHYSICAL)
        s = brownian.spectral_double_integral(path, kernel)
        out.append(base - xi * xi * _net_scale(params) * s)
    return np.array(out)


def expected_u0(params, l, t, xi=1.0):
    """Gaussian expectation of U0(l): E cos(k dX) = exp(-nu0 k^2 |tau| / 2)."""
    base = -0.5 * params.nu0 * xi * xi * t
    if l == 0:
        return base

    def f(k):
        c = params.nu0 * k * k / 2.0 + (0.0 if params.steady else k ** params.z)
        return k ** (1 - params.epsilon) * 2 * t * t * g_function(c * t)

    val = integrate.quad(f, math.exp(-l), 1.0, limit=200, epsabs=0, epsrel=1e-11)[0]
    return base - xi * xi * _net_scale(params) * val / math.pi


def _unsteady_J(values, p, b):
    """J(p, b) = (1/2) int int cos(p dW) e^{-b |du|} over the unit square, per node.

    Modes the path cannot resolve get the Gaussian expectation g(b + p^2/2).
    """
    n = len(values) - 1
    du = 1.0 / n
    J = g_function(b + p * p / 2.0)
    ok = (p * p * du <= RESOLVED_SPACE) & (b * du <= RESOLVED_TIME)
    if np.any(ok):
        tw = brownian.trapezoid_weights(n, 1.0)
        J = np.array(J, dtype=float, copy=True)
        J[ok] = 0.5 * brownian._decayed_sums(values, tw, du, p[ok], b[ok])
    return J


def v0_trajectory(path, params, alpha, l_grid, xi=1.0, t=1.0, suppress_brownian=False):
    """V0(l) along a unit-horizon path W, using Brownian scaling B_s = sqrt(T) W_{s/T}.

    With T = e^{alpha l} t,
    V0(l) = -(1/pi) e^{-2l} xi^2 T^2 int_{e^-l}^1 k^(1-eps) J(sqrt(nu0 T) k, k^z T) dk,
    J being the unit-square double integral of cos(p dW) phi. In the steady
    case J = |Phi_W(p)|^2 and the k-integral is done in p = sqrt(nu0 T) k.
    """
    l_grid = np.asarray(l_grid, dtype=float)
    if suppress_brownian:
        return np.array([v0_b_suppressed(params, alpha, l, xi, t) for l in l_grid])
    if abs(path.horizon - 1.0) > 1e-12 or path.variance_rate != 1.0:
        raise UsageError("v0_trajectory expects a standard unit-horizon path")
    eps, nu0 = params.epsilon, params.nu0
    out = []
    for l in l_grid:
        if l == 0:
            out.append(0.0)
            continue
        T = math.exp(alpha * l) * t
        root = math.sqrt(nu0 * T)
        if params.steady:
            # e^{-2l} T^2 (nu0 T)^{eps/2-1} int_{root e^-l}^{root} q^(1-eps) |Phi(q)|^2 dq
            log_pref = -2 * l + 2 * math.log(T) + (eps / 2 - 1) * math.log(nu0 * T)
            integral = brownian.unit_spectrum_integral(path.values, eps, root * math.exp(-l), root)
            out.append(-math.exp(log_pref) * xi * xi * integral / math.pi)
        else:
            k, w = band_nodes(CutoffWindow(math.exp(-l), 1.0), eps)
            J = _unsteady_J(path.values, root * k, k ** params.z * T)
            out.append(-math.exp(-2 * l) * T * T * xi * xi * float(w @ J) / math.pi)
    return np.array(out)


def nonlocal_limit(path, params, xi=1.0, t=1.0):
    """l -> infinity limit of V0 in the steady nonlocal regime: -xi^2 nu0^{eps/2-1} t^{1+eps/2} F(W)."""
    eps = params.epsilon
    F = brownian.nonlocal_functional(path, eps)
    return -xi * xi * params.nu0 ** (eps / 2 - 1) * t ** (1 + eps / 2) * F


def expected_v0(params, alpha, l, xi=1.0, t=1.0):
    """Gaussian expectation of v0_trajectory at one l (steady or unsteady)."""
    if l == 0:
        return 0.0
    T = math.exp(alpha * l) * t
    eps = params.epsilon

    def f(k):
        c = params.nu0 * T * k * k / 2.0 + (0.0 if params.steady else k ** params.z * T)
        scale = 2.0 if params.steady else 1.0
        return k ** (1 - eps) * scale * g_function(c)

    # integrate in log k, one unit of log k per call
    edges = np.unique(np.concatenate([-np.arange(0.0, l, 1.0), [-l]]))
    h = lambda x: f(math.exp(x)) * math.exp(x)
    val = sum(integrate.quad(h, a, b, epsabs=0, epsrel=1e-12)[0]
              for a, b in zip(edges[:-1], edges[1:]))
    return -math.exp(-2 * l) * T * T * xi * xi * val / math.pi


# --- fixed points ----------------------------------------------------------------


def _quad_regime_iv(eps, z):
    f = lambda k: k ** (1 - eps) * g_function(k ** z)
    a = integrate.quad(f, 0, 1, limit=400, epsabs=0, epsrel=1e-13)
    b = integrate.quad(f, 1, np.inf, limit=400, epsabs=0, epsrel=1e-13)
    return a[0] + b[0], a[1] + b[1]


def _panel_regime_iv(eps, z, decades=60):
    """Dyadic Gauss-Legendre panels with analytic end corrections."""
    lo, hi = 2.0 ** -decades, 2.0 ** decades
    x, w = np.polynomial.legendre.leggauss(24)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    edges = 2.0 ** np.arange(-decades, decades + 1)
    a, b = edges[:-1], edges[1:]
    k = (a[:, None] + (b - a)[:, None] * x).ravel()
    ww = ((b - a)[:, None] * w).ravel()
    total = float(np.sum(ww * k ** (1 - eps) * g_function(k ** z)))
    # k -> 0: g -> 1/2; k -> inf: g ~ k^-z
    total += 0.5 * lo ** (2 - eps) / (2 - eps)
    total += hi ** (2 - eps - z) / (eps + z - 2)
    return total


def regime_iv_constant(eps, z):
    """-(1/pi) int_0^inf k^(1-eps) g(k^z) dk by two schemes; returns (value, scheme gap)."""
    q, err = _quad_regime_iv(eps, z)
    p = _panel_regime_iv(eps, z)
    return -q / math.pi, abs(q - p) / math.pi + err / math.pi


def regime_i_coefficient(params):
    """Flow limit of V0/(xi^2 t) in regime I: -(1/pi) int_0^1 k^(1-eps) / (nu0 k^2/2 + k^z) dk.

    The closed-form effective diffusivity carries 2/pi instead; the factor two
    is the 1/2 in the flow's unsteady time factor.
    """
    eps, z, nu0 = params.epsilon, params.z, params.nu0
    f = lambda k: k ** (1 - eps) / (nu0 * k * k / 2 + k ** z)
    val = integrate.quad(f, 0, 1, limit=400, epsabs=0, epsrel=1e-12)[0]
    return -val / math.pi


def fixed_point_constant(report, params, regime3_form="hyperscaling"):
    regime = report.regime
    eps, z, nu0 = params.epsilon, params.z, params.nu0
    if regime is Regime.BOUNDARY:
        raise UsageError("no fixed-point constant on a regime boundary")
    if report.fixed_point_kind is FixedPointKind.NONLOCAL:
        raise UsageError("nonlocal fixed points are path-random; use effective.estimate_nu_alpha")
    if regime is Regime.STEADY_MEAN_FIELD:
        return FixedPointConstant(-4.0 / (math.pi * nu0 * abs(eps)), 1.0,
                                  "ergodic limit of the mean-field flow")
    if regime is Regime.STEADY_HYPERSCALING:
        return FixedPointConstant(-1.0 / (math.pi * (eps - 2)), 2.0, "hyperscaling")
    if regime is Regime.I:
        return FixedPointConstant(regime_i_coefficient(params), 1.0, "regime I ergodic limit")
    if regime is Regime.II:
        return FixedPointConstant(-1.0 / (math.pi * (eps + z - 2)), 1.0, "regime II")
    if regime is Regime.III:
        if regime3_form == "hyperscaling":
            return FixedPointConstant(-1.0 / (math.pi * (eps - 2)), 2.0,
                                      "regime III, steady hyperscaling form")
        if regime3_form == "effective":
            return FixedPointConstant(-1.0 / (2 * math.pi * (eps + z - 2)), 2.0,
                                      "regime III, from its effective equation")
        raise UsageError(f"unknown regime3_form {regime3_form!r}")
    if regime is Regime.IV:
        value, err = regime_iv_constant(eps, z)
        return FixedPointConstant(value, 2.0 + (eps - 2.0) / z, "regime IV", error=err)
    raise UsageError(f"unhandled regime {regime}")


def convergence_diagnostics(trajectory, fixed_point, xi=1.0, t=1.0):
    """a(l) = |V0(l) - V0*| along a trajectory (array of V0 or FlowStates)."""
    v = np.array([s.v0 if isinstance(s, FlowState) else s for s in trajectory], dtype=float)
    target = fixed_point.value(xi, t) if isinstance(fixed_point, FixedPointConstant) else fixed_point
    return np.abs(v - target)


def is_converged(a, tol=1e-3, tail=3):
    """Converged: the last ``tail`` distances are nonincreasing and the final one is below tol."""
    a = np.asarray(a, dtype=float)
    end = a[-tail:]
    return bool(np.all(np.diff(end) <= 1e-15) and end[-1] < tol)


def flow_states(l_grid, v0, fixed_point=None, xi=1.0, t=1.0):
    a = (convergence_diagnostics(v0, fixed_point, xi, t) if fixed_point is not None
         else np.full(len(v0), math.nan))
    return [FlowState(float(l), float(v), float(d)) for l, v, d in zip(l_grid, v0, a)]
