"""Feynman-Kac Monte Carlo for the Fourier-in-y passive scalar.

The Gaussian velocity average is done in closed form per Brownian path:
<exp(-i xi int v)> = exp(-(xi^2/2) S(B)) with S the double time integral of
the physical covariance, so Monte Carlo runs over Brownian paths only.
"""

import math
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy import integrate

from . import brownian, parallel
from .errors import UsageError
from .rgflow import g_function
from .spectra import CovarianceKernel, CutoffWindow, Normalization, band_nodes


@dataclass(frozen=True)
class MCEstimate:
    mean: complex
    stderr: float
    n_paths: int


class _Constant:
    def __init__(self, value=1.0):
        self.value = complex(value)

    def __call__(self, x, xi):
        return np.full(np.broadcast(np.asarray(x), np.asarray(xi)).shape, self.value)


class _Gaussian:
    """T0(x, y) = exp(-(x-c)^2 / 2a^2) exp(-y^2 / 2b^2); b = None drops the y factor."""

    def __init__(self, width_x, width_y=None, center=0.0):
        self.a, self.b, self.c = float(width_x), width_y, float(center)

    def __call__(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        val = np.exp(-(x - self.c) ** 2 / (2 * self.a ** 2))
        if self.b is not None:
            val = val * self.b * math.sqrt(2 * math.pi) * np.exp(-(self.b * xi) ** 2 / 2)
        return (val * np.ones_like(xi)).astype(complex)


@dataclass(frozen=True)
class InitialDatum:
    """T0_hat(x, xi); evaluators must be picklable for multi-worker runs."""

    evaluator: object
    description: str = ""

    def __call__(self, x, xi):
        return self.evaluator(x, xi)

    @classmethod
    def constant(cls, value=1.0):
        return cls(_Constant(value), f"constant {value}")

    @classmethod
    def gaussian(cls, width_x=2.0, width_y=None, center=0.0):
        return cls(_Gaussian(width_x, width_y, center), f"gaussian a={width_x} b={width_y}")


# --- per-path pieces ----------------------------------------------------------


def _s_block(values, kernel, dt):
    """S for a block of paths (rows of ``values``) with a shared node layout."""
    m, n1 = values.shape
    if kernel.empty:
        return np.zeros(m)
    span = float(np.max(np.ptp(values, axis=1)))
    k, w = band_nodes(kernel.window, kernel.params.epsilon, x_scale=max(span, 1e-12))
    w = kernel.prefactor * w
    tw = brownian.trapezoid_weights(n1 - 1, dt * (n1 - 1))
    out = np.zeros(m)
    if kernel.params.steady:
        for kk, ww in zip(k, w):
            phi = np.exp(1j * kk * values) @ tw
            out += ww * (phi.real ** 2 + phi.imag ** 2)
        return out
    rho = np.exp(-(k ** kernel.params.z) * dt)
    acc = np.zeros((m, len(k)), dtype=complex)
    for j in range(n1):
        e = tw[j] * np.exp(1j * np.outer(values[:, j], k))
        acc = rho * acc + e
        out += (2.0 * (np.conj(e) * acc).real - tw[j] ** 2) @ w
    return out


def _line_integral(values, x, t, v_low, dt):
    """int_0^t v(x + X_s, t - s) ds by the trapezoid rule, per path row."""
    n1 = values.shape[1]
    tw = brownian.trapezoid_weights(n1 - 1, dt * (n1 - 1))
    pos = x + values
    if getattr(v_low, "steady", True):
        vals = v_low(pos)
    else:
        times = t - dt * np.arange(n1)
        vals = v_low(pos, np.broadcast_to(times, pos.shape))
    return vals @ tw


def _tabulate(v_low, x, t, nu0, dx=0.01, reach=12.0):
    """Replace a mode-sum field by a fine grid interpolant around x."""
    if v_low is None or not hasattr(v_low, "on_grid") or len(getattr(v_low, "modes", [])) == 0:
        return v_low
    half = reach * math.sqrt(nu0 * t) + 1.0
    grid = np.arange(x - half, x + half + dx, dx)
    return v_low.on_grid(grid)


def _fk_block(pairs, *, x, xi, t, nu0, n_steps, seed, kernel, datum, v_low, antithetic):
    idx = pairs
    values = brownian.path_values(t, n_steps, seed, idx, nu0)
    dt = t / n_steps
    S = _s_block(values, kernel, dt)
    base = np.exp(-0.5 * nu0 * xi * xi * t - 0.5 * xi * xi * S)
    signs = (1.0, -1.0) if antithetic else (1.0,)
    acc = np.zeros(len(idx), dtype=complex)
    for sgn in signs:
        vals = sgn * values
        w = base * datum(x + vals[:, -1], xi)
        if v_low is not None:
            w = w * np.exp(-1j * xi * _line_integral(vals, x, t, v_low, dt))
        acc += w
    return acc / len(signs)


def _run(x, xi, t, params, kernel, datum, v_low, n_paths, n_steps, seed, antithetic):
    if n_paths < 1:
        raise UsageError("n_paths must be >= 1")
    if not t > 0:
        raise UsageError("t must be > 0")
    if antithetic and n_paths % 2:
        raise UsageError("antithetic sampling needs an even n_paths")
    n_items = n_paths // 2 if antithetic else n_paths
    func = partial(_fk_block, x=float(x), xi=float(xi), t=float(t), nu0=params.nu0,
                   n_steps=int(n_steps), seed=int(seed), kernel=kernel, datum=datum,
                   v_low=v_low, antithetic=antithetic)
    samples = parallel.map_blocks(func, n_items)
    mean, se = parallel.mean_and_stderr(samples)
    return MCEstimate(complex(mean), float(se), int(n_paths))


def estimate_That_averaged(x, xi, t, params, window, datum, n_paths, n_steps=None, seed=0,
                           antithetic=True):
    """<T_hat(x, xi, t)> over the velocity on ``window``, by Monte Carlo over paths."""
    n_steps = n_steps or max(2, math.ceil(brownian.STEPS_PER_UNIT * t))
    kernel = CovarianceKernel(params, window, Normalization.PHYSICAL)
    return _run(x, xi, t, params, kernel, datum, None, n_paths, n_steps, seed, antithetic)


def estimate_That_conditional(x, xi, t, params, low_window, high_window, v_low, datum, n_paths,
                              n_steps=None, seed=0, antithetic=True, tabulate=True):
    """T_bar(x, xi, t; v_low): only the high band is averaged analytically.

    ``v_low`` is a callable v(x) (steady) or v(x, t); None means zero.
    """
    if not low_window.empty and not high_window.empty:
        if abs(low_window.k_high - high_window.k_low) > 1e-12:
            raise UsageError("low and high windows must meet at e^-l")
    n_steps = n_steps or max(2, math.ceil(brownian.STEPS_PER_UNIT * t))
    kernel = CovarianceKernel(params, high_window, Normalization.PHYSICAL)
    field = _tabulate(v_low, x, t, params.nu0) if tabulate else v_low
    return _run(x, xi, t, params, kernel, datum, field, n_paths, n_steps, seed, antithetic)


# --- mean-square displacement ----------------------------------------------------


def _msd_block(indices, *, t_max, n_steps, nu0, seed, kernel, steps_at):
    values = brownian.path_values(t_max, n_steps, seed, indices, nu0)
    dt = t_max / n_steps
    out = np.zeros((len(indices), len(steps_at)))
    for r, row in enumerate(values):
        for c, m in enumerate(steps_at):
            if kernel.empty or m < 1:
                continue
            path = brownian.BrownianPath(m * dt, int(m), row[:m + 1], nu0)
            out[r, c] = brownian.spectral_double_integral(path, kernel)
    return out


def estimate_msd(t_grid, params, window, n_paths, n_steps, seed=0):
    """Rows (t, <Y_t^2>, stderr) with <Y^2> = nu0 t + E S(B; t).

    ``n_steps`` is the number of steps up to the last grid time; each grid time
    is rounded to the nearest step and the rounded time is reported.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0) or np.any(np.diff(t_grid) <= 0):
        raise UsageError("t_grid must be positive and increasing")
    if n_paths < 1:
        raise UsageError("n_paths must be >= 1")
    t_max = float(t_grid[-1])
    dt = t_max / n_steps
    steps_at = np.maximum(1, np.rint(t_grid / dt).astype(int))
    t_used = steps_at * dt
    kernel = CovarianceKernel(params, window, Normalization.PHYSICAL)
    if kernel.empty:
        return np.column_stack([t_used, params.nu0 * t_used, np.zeros(len(t_used))])
    func = partial(_msd_block, t_max=t_max, n_steps=int(n_steps), nu0=params.nu0,
                   seed=int(seed), kernel=kernel, steps_at=tuple(int(s) for s in steps_at))
    samples = parallel.map_blocks(func, n_paths, block_size=16)
    mean, se = parallel.mean_and_stderr(samples)
    return np.column_stack([t_used, params.nu0 * t_used + mean, se])


def expected_double_integral(kernel, t, nu0):
    """E S(B; t) for Brownian paths with variance rate nu0 (Gaussian expectation).

    E cos(k dX) e^{-k^z|tau|} = exp(-(nu0 k^2/2 + k^z)|tau|), and the double time
    integral of exp(-c|tau|) over [0, t]^2 is 2 t^2 g(c t).
    """
    if kernel.empty:
        return 0.0
    p = kernel.params

    def f(logk):
        k = math.exp(logk)
        c = nu0 * k * k / 2.0 + (0.0 if p.steady else k ** p.z)
        return k ** (2 - p.epsilon) * 2 * t * t * g_function(c * t)

    a, b = math.log(kernel.window.k_low), math.log(kernel.window.k_high)
    edges = np.linspace(a, b, max(2, math.ceil(b - a) + 1))
    val = sum(integrate.quad(f, lo, hi, epsabs=0, epsrel=1e-12)[0]
              for lo, hi in zip(edges[:-1], edges[1:]))
    return kernel.prefactor * val


def msd_oracle(t, params, window):
    """nu0 t + E S(t): the exact Gaussian-expectation mean-square displacement."""
    kernel = CovarianceKernel(params, window, Normalization.PHYSICAL)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return np.array([params.nu0 * tt + expected_double_integral(kernel, tt, params.nu0) for tt in t])


def ergodic_msd_rate(params, window):
    """Large-t slope of <Y^2>: nu0 + (4/(pi nu0)) int k^(-1-eps) dk over the window (steady)."""
    from .spectra import power_integral

    if not params.steady:
        raise UsageError("ergodic rate implemented for steady models")
    return params.nu0 + 4.0 / (math.pi * params.nu0) * power_integral(
        window.k_low, window.k_high, -1.0 - params.epsilon)
