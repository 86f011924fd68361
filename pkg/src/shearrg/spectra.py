"""Velocity statistics of the random shear flow.

Spectral densities, band-limited covariance kernels in real space-time, and
Gaussian synthesis of explicit velocity realizations v(x) or v(x, t).

Two normalizations of the covariance are carried (see ``Normalization``):
``FLOW`` is the bare band integral used inside the RG flow, ``PHYSICAL`` is
the same integral with a 1/pi prefactor and is the covariance that the Monte
Carlo estimators and the synthesized fields actually realize.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import rng
from .errors import AdmissibilityError, UsageError

SQRT_2PI = math.sqrt(2.0 * math.pi)

GL_ORDER = 16
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_ORDER)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class Model(str, enum.Enum):
    STEADY = "steady"
    UNSTEADY = "unsteady"


class Normalization(str, enum.Enum):
    FLOW = "flow"
    PHYSICAL = "physical"


@dataclass(frozen=True)
class SpectralParams:
    """Parameters of the velocity spectrum.

    ``z`` is carried but ignored by every consumer when the model is steady.
    """

    epsilon: float
    z: float = 0.0
    nu0: float = 1.0
    delta: float = 0.1
    model: Model = Model.STEADY

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if not math.isfinite(self.epsilon) or self.epsilon >= 4:
            raise AdmissibilityError("epsilon must be < 4")
        if not self.z >= 0:
            raise UsageError("z must be >= 0")
        if not self.nu0 > 0:
            raise UsageError("nu0 must be > 0")
        if not 0 < self.delta <= 1:
            raise UsageError("delta must lie in (0, 1]")

    @property
    def steady(self):
        return self.model is Model.STEADY

    def replace(self, **changes):
        values = {"epsilon": self.epsilon, "z": self.z, "nu0": self.nu0,
                  "delta": self.delta, "model": self.model}
        values.update(changes)
        return SpectralParams(**values)


@dataclass(frozen=True)
class CutoffWindow:
    k_low: float
    k_high: float = 1.0

    def __post_init__(self):
        if not 0 <= self.k_low <= self.k_high <= 1:
            raise UsageError(f"need 0 <= k_low <= k_high <= 1, got [{self.k_low}, {self.k_high}]")

    @property
    def empty(self):
        return self.k_low == self.k_high

    @classmethod
    def full(cls, params):
        return cls(params.delta, 1.0)

    @classmethod
    def high_band(cls, l):
        """Shell averaged out after RG time l: e^{-l} <= |k| <= 1."""
        return cls(math.exp(-l), 1.0)

    @classmethod
    def low_band(cls, params, l):
        """Modes kept after RG time l: delta <= |k| <= e^{-l}."""
        return cls(params.delta, max(params.delta, math.exp(-l)))

    def contains(self, k):
        k = np.abs(np.asarray(k, dtype=float))
        return (k >= self.k_low) & (k <= self.k_high) & (self.k_high > self.k_low)


def power_integral(a, b, p):
    """Closed-form integral of k**p over [a, b]."""
    if b <= a:
        return 0.0
    if abs(p + 1.0) < 1e-14:
        return math.log(b / a)
    return (b ** (p + 1.0) - a ** (p + 1.0)) / (p + 1.0)


def spectral_density(k, params, window=None, omega=None):
    """Energy spectrum <|v_hat(k)|^2> (steady) or <|v_hat(k, omega)|^2> (unsteady)."""
    window = CutoffWindow.full(params) if window is None else window
    if params.steady and omega is not None:
        raise UsageError("omega given for a steady model")
    if not params.steady and omega is None:
        raise UsageError("unsteady density needs omega")
    k = np.abs(np.asarray(k, dtype=float))
    inside = window.contains(k)
    ks = np.where(inside, k, 1.0)
    dens = SQRT_2PI * ks ** (1.0 - params.epsilon)
    if not params.steady:
        kz = ks ** params.z
        dens = dens * kz / (np.asarray(omega, dtype=float) ** 2 + kz * kz)
    return np.where(inside, dens, 0.0)


def band_nodes(window, epsilon, x_scale=0.0, panels_per_period=4):
    """Quadrature nodes and weights for integrals of k**(1-epsilon) f(k) over a window.

    The returned weights already contain the factor k**(1-epsilon), so that
    ``sum(w * f(k))`` approximates the integral. Panels are geometric in k
    (ratio <= 2) and no wider than 1/panels_per_period of the oscillation period
    2*pi/x_scale. A window starting at 0 is handled by the substitution
    k = p u**(1/(2-epsilon)) on the first panel, which removes the power
    singularity (requires epsilon < 2).
    """
    a, b = window.k_low, window.k_high
    if b <= a:
        return np.empty(0), np.empty(0)
    max_width = np.inf if x_scale <= 0 else 2 * np.pi / (panels_per_period * x_scale)
    nodes, weights = [], []
    if a == 0:
        if epsilon >= 2:
            raise UsageError("band integral diverges at k=0 for epsilon >= 2")
        first = min(b, max_width, 2.0 ** -20)
        s = 2.0 - epsilon
        nodes.append(first * _GL_X ** (1.0 / s))
        weights.append(first ** s / s * _GL_W)
        a = first
    edges = [a]
    while edges[-1] < b:
        edges.append(min(b, 2.0 * edges[-1]))
    edges = np.array(edges)
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = 1 if not np.isfinite(max_width) else max(1, math.ceil((hi - lo) / max_width))
        sub = np.linspace(lo, hi, m + 1)
        widths = np.diff(sub)
        k = (sub[:-1, None] + widths[:, None] * _GL_X).ravel()
        w = (widths[:, None] * _GL_W).ravel()
        nodes.append(k)
        weights.append(w * k ** (1.0 - epsilon))
    return np.concatenate(nodes), np.concatenate(weights)


def _magnitude_groups(absx):
    """Split offsets into octave groups so each group gets its own panel layout."""
    key = np.ceil(np.log2(np.maximum(absx, 1.0))).astype(int)
    for g in np.unique(key):
        yield key == g, float(2.0 ** g)


@dataclass(frozen=True)
class CovarianceKernel:
    """Band-limited covariance of the velocity field.

    Calling the kernel evaluates it at spatial offsets ``x`` and (unsteady
    only) temporal offsets ``tau``; both broadcast. Evaluation is real
    (cosine convention) and even in both offsets.
    """

    params: SpectralParams
    window: CutoffWindow
    normalization: Normalization = Normalization.FLOW
    chunk: int = field(default=1 << 22, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "normalization", Normalization(self.normalization))

    @property
    def prefactor(self):
        base = 1.0 if self.params.steady else math.pi
        return base / math.pi if self.normalization is Normalization.PHYSICAL else base

    @property
    def empty(self):
        return self.window.empty

    def variance(self):
        """Value at zero offset, in closed form."""
        return self.prefactor * power_integral(self.window.k_low, self.window.k_high,
                                               1.0 - self.params.epsilon)

    def __call__(self, x, tau=0.0):
        if self.params.steady:
            return covariance_steady(x, self)
        return covariance_unsteady(x, tau, self)

    def spectral_weights(self, tau_abs=None):
        """Band nodes k and weights w with cov(x, tau) = sum w cos(k x) [exp(-k^z |tau|)]."""
        k, w = band_nodes(self.window, self.params.epsilon)
        return k, self.prefactor * w


def _band_cosine_integral(x, tau, kernel):
    x = np.asarray(x, dtype=float)
    tau = np.abs(np.asarray(tau, dtype=float))
    x, tau = np.broadcast_arrays(x, tau)
    out = np.zeros(x.shape)
    if kernel.empty:
        return out
    eps = kernel.params.epsilon
    steady = kernel.params.steady
    z = kernel.params.z
    flat_x, flat_t, flat_out = np.abs(x).ravel(), tau.ravel(), out.ravel()
    for mask, scale in _magnitude_groups(flat_x):
        k, w = band_nodes(kernel.window, eps, x_scale=scale)
        idx = np.nonzero(mask)[0]
        step = max(1, kernel.chunk // max(len(k), 1))
        for start in range(0, len(idx), step):
            sel = idx[start:start + step]
            phase = np.cos(np.outer(flat_x[sel], k))
            if not steady:
                phase *= np.exp(-np.outer(flat_t[sel], k ** z))
            flat_out[sel] = phase @ w
    return kernel.prefactor * flat_out.reshape(x.shape)


def covariance_steady(x_offset, kernel):
    """Integral of cos(x k) k^(1-eps) over the window, times 1/pi for the physical kernel."""
    if not kernel.params.steady:
        raise UsageError("covariance_steady needs a steady kernel")
    return _band_cosine_integral(x_offset, 0.0, kernel)


def covariance_unsteady(x_offset, tau, kernel):
    """pi times the integral of cos(x k) exp(-k^z |tau|) k^(1-eps) over the window.

    The frequency integral of the Lorentzian |k|^z / (omega^2 + |k|^2z) is done
    analytically; it contributes pi exp(-|k|^z |tau|).
    """
    if kernel.params.steady:
        raise UsageError("covariance_unsteady needs an unsteady kernel")
    return _band_cosine_integral(x_offset, tau, kernel)


def covariance_closed_form(x_offset, kernel):
    """Closed-form steady covariance for epsilon in {0, 2}; cross-check for the quadrature."""
    eps = kernel.params.epsilon
    a, b = kernel.window.k_low, kernel.window.k_high
    x = np.abs(np.asarray(x_offset, dtype=float))
    small = x < 1e-12
    xs = np.where(small, 1.0, x)
    if eps == 0:
        anti = lambda k: np.cos(xs * k) / xs ** 2 + k * np.sin(xs * k) / xs
        val = np.where(small, (b * b - a * a) / 2.0, anti(b) - anti(a))
    elif eps == 2:
        if a == 0:
            raise UsageError("log-divergent at k=0")
        val = np.where(small, math.log(b / a), special.sici(xs * b)[1] - special.sici(xs * a)[1])
    else:
        raise UsageError("closed form available only for epsilon in {0, 2}")
    return kernel.prefactor * val


# --- synthesis -------------------------------------------------------------


class ZeroField:
    """The identically-zero velocity field of an empty window."""

    modes = np.empty(0)
    snap_error = 0.0

    def __call__(self, x, t=None):
        return np.zeros(np.shape(x))

    def on_grid(self, x_grid, t_grid=None):
        return GridField(np.asarray(x_grid, float), None if t_grid is None else np.asarray(t_grid, float),
                         np.zeros(np.shape(x_grid)) if t_grid is None
                         else np.zeros((len(t_grid), len(x_grid))))


@dataclass
class SynthesizedField:
    """A Gaussian velocity realization as a finite sum of Fourier modes.

    Steady: v(x) = sum_j s_j (a_j cos k_j x + b_j sin k_j x) with a_j, b_j iid N(0,1).
    Unsteady: a_j(t), b_j(t) are stationary Ornstein-Uhlenbeck processes with
    correlation exp(-k_j^z |tau|), sampled exactly on ``times`` and linearly
    interpolated in between.
    """

    modes: np.ndarray
    amplitudes: np.ndarray
    cos_coef: np.ndarray
    sin_coef: np.ndarray
    times: np.ndarray = None
    snap_error: float = 0.0

    @property
    def steady(self):
        return self.times is None

    def _coefficients(self, t):
        if self.steady:
            return self.cos_coef, self.sin_coef
        t = float(t)
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise UsageError(f"t={t} outside the synthesized horizon")
        j = int(np.clip(np.searchsorted(self.times, t) - 1, 0, len(self.times) - 2))
        theta = (t - self.times[j]) / (self.times[j + 1] - self.times[j])
        a = (1 - theta) * self.cos_coef[j] + theta * self.cos_coef[j + 1]
        b = (1 - theta) * self.sin_coef[j] + theta * self.sin_coef[j + 1]
        return a, b

    def __call__(self, x, t=None):
        x = np.asarray(x, dtype=float)
        if not self.steady and t is None:
            raise UsageError("unsteady field needs a time argument")
        if self.steady or np.ndim(t) == 0:
            a, b = self._coefficients(t)
            ph = np.multiply.outer(x, self.modes)
            return (np.cos(ph) @ (self.amplitudes * a)) + (np.sin(ph) @ (self.amplitudes * b))
        x, t = np.broadcast_arrays(x, np.asarray(t, dtype=float))
        out = np.empty(x.shape)
        for tv in np.unique(t):
            m = t == tv
            out[m] = self(x[m], float(tv))
        return out

    def on_grid(self, x_grid, t_grid=None):
        """Tabulate on a grid (for fast interpolated evaluation inside estimators)."""
        x_grid = np.asarray(x_grid, dtype=float)
        if self.steady:
            return GridField(x_grid, None, self(x_grid))
        t_grid = self.times if t_grid is None else np.asarray(t_grid, dtype=float)
        values = np.stack([self(x_grid, float(t)) for t in t_grid])
        return GridField(x_grid, t_grid, values)


@dataclass
class GridField:
    """Tabulated field with linear (steady) or bilinear (unsteady) interpolation."""

    x_grid: np.ndarray
    t_grid: np.ndarray
    values: np.ndarray

    @property
    def steady(self):
        return self.t_grid is None

    def __call__(self, x, t=None):
        x = np.asarray(x, dtype=float)
        if self.steady:
            return np.interp(x, self.x_grid, self.values)
        t = np.broadcast_to(np.asarray(t, dtype=float), x.shape)
        xg, tg = self.x_grid, self.t_grid
        fx = np.clip((x - xg[0]) / (xg[1] - xg[0]), 0, len(xg) - 1 - 1e-9)
        ft = np.clip((t - tg[0]) / (tg[1] - tg[0]), 0, len(tg) - 1 - 1e-9)
        i, j = fx.astype(int), ft.astype(int)
        u, s = fx - i, ft - j
        v = self.values
        return ((1 - s) * ((1 - u) * v[j, i] + u * v[j, i + 1])
                + s * ((1 - u) * v[j + 1, i] + u * v[j + 1, i + 1]))


def mode_layout(window, n_modes, domain_length=None):
    """Mode wavenumbers and the cells they represent.

    With a periodic ``domain_length`` the spacing is snapped to a multiple of
    the fundamental 2*pi/L and the modes to multiples of that spacing; the
    largest shift of a mode relative to the unsnapped layout is returned.
    """
    a, b = window.k_low, window.k_high
    width = b - a
    dk = width / n_modes
    snap = 0.0
    if domain_length is None:
        k = a + (np.arange(n_modes) + 0.5) * dk
        edges = a + np.arange(n_modes + 1) * dk
        return k, edges, snap
    fundamental = 2 * np.pi / domain_length
    mult = max(1, math.ceil(dk / fundamental - 1e-9))
    dk = mult * fundamental
    first = math.ceil(a / dk - 0.5)
    last = math.floor(b / dk + 0.5)
    idx = np.arange(max(first, 1), last + 1)
    k = idx * dk
    k = k[(k >= a - 0.5 * dk) & (k <= b + 0.5 * dk)]
    if len(k) == 0:
        k = np.array([max(dk, round(0.5 * (a + b) / dk) * dk)])
    edges = np.concatenate([[a], 0.5 * (k[:-1] + k[1:]), [b]])
    unsnapped = a + (np.arange(len(k)) + 0.5) * (width / len(k))
    snap = float(np.max(np.abs(k - unsnapped)))
    return k, edges, snap


def synthesize_field(kernel, domain_length=None, n_modes=2048, horizon=None, seed=0,
                     n_times=None, index=0):
    """Draw one mean-zero Gaussian realization with the kernel's physical covariance.

    Each mode carries the exact spectral mass of its cell, so the variance at
    zero offset equals the physical kernel's variance. ``index`` selects the
    realization within the ensemble keyed by ``seed``.
    """
    if n_modes < 1:
        raise UsageError("n_modes must be >= 1")
    if kernel.empty:
        return ZeroField()
    params = kernel.params
    physical = CovarianceKernel(params, kernel.window, Normalization.PHYSICAL)
    k, edges, snap = mode_layout(kernel.window, n_modes, domain_length)
    p = 1.0 - params.epsilon
    mass = np.array([power_integral(lo, hi, p) for lo, hi in zip(edges[:-1], edges[1:])])
    amps = np.sqrt(physical.prefactor * np.maximum(mass, 0.0))
    gen = rng.generator(seed, index, rng.FIELD)
    if params.steady:
        a, b = gen.standard_normal(len(k)), gen.standard_normal(len(k))
        return SynthesizedField(k, amps, a, b, None, snap)
    if horizon is None or horizon <= 0:
        raise UsageError("unsteady synthesis needs a positive horizon")
    if n_times is None:
        n_times = max(64, math.ceil(horizon * 20 * max(k) ** params.z))
    times = np.linspace(0.0, horizon, n_times + 1)
    dt = times[1] - times[0]
    rho = np.exp(-k ** params.z * dt)
    innov = np.sqrt(1.0 - rho ** 2)
    a = np.empty((n_times + 1, len(k)))
    b = np.empty((n_times + 1, len(k)))
    a[0], b[0] = gen.standard_normal(len(k)), gen.standard_normal(len(k))
    noise = gen.standard_normal((2, n_times, len(k)))
    for j in range(n_times):
        a[j + 1] = rho * a[j] + innov * noise[0, j]
        b[j + 1] = rho * b[j] + innov * noise[1, j]
    return SynthesizedField(k, amps, a, b, times, snap)
