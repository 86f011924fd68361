"""Deterministic solver of the Fourier-in-y equation for a frozen velocity.

dT/dt + i xi v(x, t) T = -(nu0/2) xi^2 T + (nu0/2) T_xx on a periodic x-domain.
The linear part is diagonal in x-Fourier space and is integrated exactly; the
advection term is stepped with Heun's method in the integrating-factor frame
(second order in dt).
"""

import math
from dataclasses import dataclass
from functools import partial

import numpy as np

from . import parallel
from .errors import StabilityError, UsageError
from .spectra import CovarianceKernel, Normalization, synthesize_field

# Heun's stability region along the imaginary axis is tiny; dt xi max|v| below
# this keeps the per-step amplification under 1 + (0.5)^4 / 4.
STABILITY_BOUND = 0.5


@dataclass(frozen=True)
class SolverGrid:
    x_domain: float
    n_x: int
    dt: float
    t_final: float
    center: float = 0.0

    def __post_init__(self):
        if self.n_x < 2 or self.n_x & (self.n_x - 1):
            raise UsageError("n_x must be a power of two")
        if not (self.x_domain > 0 and self.dt > 0 and self.t_final > 0):
            raise UsageError("x_domain, dt and t_final must be positive")

    @property
    def n_steps(self):
        return max(1, round(self.t_final / self.dt))

    @property
    def x(self):
        return self.center - self.x_domain / 2 + self.x_domain * np.arange(self.n_x) / self.n_x

    @property
    def wavenumbers(self):
        return 2 * np.pi * np.fft.fftfreq(self.n_x, d=self.x_domain / self.n_x)

    @classmethod
    def for_problem(cls, t_final, delta, nu0=1.0, dx=0.25, dt=None, center=0.0, factor=8.0):
        """L = factor * max(sqrt(nu0 t), 2 pi / delta), n_x the next power of two."""
        length = factor * max(math.sqrt(nu0 * t_final), 2 * math.pi / delta)
        n_x = 1 << max(1, math.ceil(math.log2(length / dx)))
        dt = dt or t_final / 256
        return cls(length, n_x, dt, t_final, center)


@dataclass(frozen=True)
class RefSolution:
    grid: SolverGrid
    values: np.ndarray

    def at(self, x):
        """Trigonometric interpolation of the periodic solution at points x."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        g = self.grid
        coef = np.fft.fft(self.values) / g.n_x
        k = g.wavenumbers
        ph = np.exp(1j * np.outer(x - g.x[0], k))
        return ph @ coef


def _velocity_on_grid(v, grid, t):
    if v is None:
        return np.zeros(grid.n_x)
    if callable(v):
        steady = getattr(v, "steady", True)
        return np.asarray(v(grid.x) if steady else v(grid.x, t), dtype=float) * np.ones(grid.n_x)
    return np.full(grid.n_x, float(v))


def solve_mode(v_realization, xi, grid, nu0, datum):
    """T_hat(x, xi, t_final) on the grid points. ``v_realization`` is a field,
    a constant, or None (zero)."""
    n = grid.n_steps
    dt = grid.t_final / n
    steady = not callable(v_realization) or getattr(v_realization, "steady", True)
    if steady:
        vmax = float(np.max(np.abs(_velocity_on_grid(v_realization, grid, 0.0))))
    else:
        vmax = max(float(np.max(np.abs(_velocity_on_grid(v_realization, grid, s))))
                   for s in np.linspace(0.0, grid.t_final, 33))
    courant = dt * abs(xi) * vmax
    if courant > STABILITY_BOUND:
        bound = STABILITY_BOUND / (abs(xi) * vmax)
        raise StabilityError(f"dt={dt:.3g} exceeds the stability bound {bound:.3g}", bound)
    k = grid.wavenumbers
    decay = np.exp(-0.5 * nu0 * (xi * xi + k * k) * dt)
    u = np.fft.fft(np.asarray(datum(grid.x, xi), dtype=complex) * np.ones(grid.n_x))
    v_now = _velocity_on_grid(v_realization, grid, 0.0)

    def advect(u_hat, v):
        return np.fft.fft(-1j * xi * v * np.fft.ifft(u_hat))

    for j in range(n):
        v_next = v_now if steady else _velocity_on_grid(v_realization, grid, (j + 1) * dt)
        n1 = advect(u, v_now)
        pred = decay * (u + dt * n1)
        u = decay * (u + 0.5 * dt * n1) + 0.5 * dt * advect(pred, v_next)
        v_now = v_next
    return np.fft.ifft(u)


def solve_at(v_realization, xi, grid, nu0, datum, probes):
    return RefSolution(grid, solve_mode(v_realization, xi, grid, nu0, datum)).at(probes)


def _ensemble_block(indices, *, params, window, xi, grid, datum, seed, probes, n_modes):
    kernel = CovarianceKernel(params, window, Normalization.PHYSICAL)
    out = np.empty((len(indices), len(probes)), dtype=complex)
    for r, i in enumerate(indices):
        v = synthesize_field(kernel, grid.x_domain, n_modes, horizon=grid.t_final, seed=seed,
                             index=int(i))
        out[r] = solve_at(v, xi, grid, params.nu0, datum, probes)
    return out


def ensemble_average(params, window, xi, grid, datum, n_realizations, seed=0, probes=(0.0,),
                     n_modes=512):
    """Mean of solve_mode over synthesized realizations, with standard errors per probe."""
    if window.empty:
        raise UsageError("ensemble_average needs a nonempty window")
    if n_realizations < 1:
        raise UsageError("n_realizations must be >= 1")
    func = partial(_ensemble_block, params=params, window=window, xi=float(xi), grid=grid,
                   datum=datum, seed=int(seed), probes=tuple(float(p) for p in probes),
                   n_modes=int(n_modes))
    samples = parallel.map_blocks(func, n_realizations, block_size=4)
    mean, se = parallel.mean_and_stderr(samples)
    return np.atleast_1d(mean), np.atleast_1d(se)
