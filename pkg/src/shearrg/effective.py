"""Effective (renormalized) transport models and the intermediate-scale kernel.

Local models are solved in closed form in Fourier-in-y variables. The
nonlocal mixture superposes local solutions over the law of the mixture
parameter a = -F(B). The kernel K_l and the residual check of the effective
equation are estimated by Monte Carlo over Brownian bridges.
"""

import enum
import math
from dataclasses import dataclass
from functools import partial

import numpy as np

from . import brownian, parallel, rng
from .errors import InconclusiveError, UsageError
from .feynkac import _line_integral, _s_block, _tabulate
from .spectra import CovarianceKernel, CutoffWindow, Normalization

GH_NODES = 24


class EffectiveKind(str, enum.Enum):
    LOCAL_CONST_D = "LocalConstD"
    LOCAL_POWER_LAW_D = "LocalPowerLawD"
    NONLOCAL_MIXTURE = "NonlocalMixture"


@dataclass(frozen=True)
class EffectiveModel:
    """dT/dt = D(t) d^2T/dy^2 with D(t) = c t^p (local) or a mixture over a (nonlocal).

    For the mixture, member a evolves with D_a(t) = -a c t^p, so every member
    damps (a <= 0).
    """

    kind: EffectiveKind
    coefficient: float
    t_power: float = 0.0
    include_bare_x_diffusion: bool = False
    nu0: float = 1.0
    mixture_samples: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EffectiveKind(self.kind))
        if not self.coefficient > 0:
            raise UsageError("coefficient must be > 0")
        if self.t_power < 0:
            raise UsageError("t_power must be >= 0")
        if self.kind is EffectiveKind.LOCAL_POWER_LAW_D and not self.t_power > 0:
            raise UsageError("LocalPowerLawD needs t_power > 0")
        if self.kind is EffectiveKind.LOCAL_CONST_D and self.t_power != 0:
            raise UsageError("LocalConstD has t_power 0")
        if self.kind is EffectiveKind.NONLOCAL_MIXTURE:
            s = None if self.mixture_samples is None else np.asarray(self.mixture_samples, float)
            if s is None or s.size == 0 or np.any(s > 0):
                raise UsageError("NonlocalMixture needs nonempty samples, all <= 0")
            object.__setattr__(self, "mixture_samples", s)

    def exponent(self, xi, t):
        """xi^2 int_0^t D(s) ds for the local part (per unit mixture parameter)."""
        p = self.t_power
        return xi * xi * self.coefficient * t ** (p + 1) / (p + 1)


def _heat_x(datum, x, xi, variance):
    """(e^{variance/2 d_x^2} T0)(x) by Gauss-Hermite quadrature."""
    if variance <= 0:
        return datum(x, xi)
    z, w = np.polynomial.hermite.hermgauss(GH_NODES)
    vals = datum(x + math.sqrt(2 * variance) * z, xi)
    return complex(np.sum(w * vals) / math.sqrt(math.pi))


def solve_effective(model, datum, x, xi, t):
    if not t > 0:
        raise UsageError("t must be > 0")
    base = (_heat_x(datum, x, xi, model.nu0 * t) if model.include_bare_x_diffusion
            else complex(np.asarray(datum(x, xi)).ravel()[0]))
    if model.include_bare_x_diffusion:
        base *= math.exp(-0.5 * model.nu0 * xi * xi * t)
    e = model.exponent(xi, t)
    if model.kind is EffectiveKind.NONLOCAL_MIXTURE:
        return complex(np.mean(np.exp(e * model.mixture_samples))) * base
    return math.exp(-e) * base


# --- mixture parameter ---------------------------------------------------------


@dataclass(frozen=True)
class NuAlpha:
    """Empirical law of the mixture parameter a = -F(B)."""

    epsilon: float
    samples: np.ndarray
    n_steps: int

    @property
    def mean(self):
        return float(np.mean(self.samples))

    @property
    def stderr(self):
        return float(np.std(self.samples, ddof=1) / math.sqrt(len(self.samples)))

    def cdf(self, a):
        s = np.sort(self.samples)
        return np.searchsorted(s, np.asarray(a, dtype=float), side="right") / len(s)


def _nu_block(indices, *, epsilon, n_steps, seed):
    vals = brownian.path_values(1.0, n_steps, seed, indices)
    return np.array([-brownian.nonlocal_functional(
        brownian.BrownianPath(1.0, n_steps, row), epsilon) for row in vals])


def estimate_nu_alpha(epsilon, n_paths, n_steps=brownian.STEPS_PER_UNIT, seed=0):
    if not 0 < epsilon < 2:
        raise UsageError("the mixture law is defined for 0 < epsilon < 2")
    if n_paths < 1:
        raise UsageError("n_paths must be >= 1")
    func = partial(_nu_block, epsilon=float(epsilon), n_steps=int(n_steps), seed=int(seed))
    return NuAlpha(float(epsilon), parallel.map_blocks(func, n_paths, block_size=256), int(n_steps))


def mixture_coefficient(epsilon, nu0):
    """D such that D a t^{eps/2} integrates to (1/2) nu0^{eps/2-1} a t^{1+eps/2}."""
    return 0.5 * (1 + epsilon / 2) * nu0 ** (epsilon / 2 - 1)


def mixture_model(params, samples):
    eps = params.epsilon
    s = samples.samples if isinstance(samples, NuAlpha) else samples
    return EffectiveModel(EffectiveKind.NONLOCAL_MIXTURE, mixture_coefficient(eps, params.nu0),
                          eps / 2, False, params.nu0, s)


def mixture_kernel(epsilon, params, xi, t, samples):
    """mean_i exp((1/2) xi^2 nu0^{eps/2-1} t^{1+eps/2} a_i), with its standard error."""
    s = samples.samples if isinstance(samples, NuAlpha) else np.asarray(samples, dtype=float)
    vals = np.exp(0.5 * xi * xi * params.nu0 ** (epsilon / 2 - 1) * t ** (1 + epsilon / 2) * s)
    mean, se = parallel.mean_and_stderr(vals)
    return float(mean), float(se)


@dataclass(frozen=True)
class RescaledEstimate:
    """Direct FK estimate of the rescaled mode at finite delta.

    ``corrected`` removes the exact bare x-damping factor and the first-cumulant
    effect of the spectral mass the finite band misses on either side.
    """

    raw: complex
    raw_stderr: float
    corrected: float
    stderr: float
    missing_mass: float
    delta: float


def truncated_mass(epsilon, q_lo, q_hi):
    """E of the part of F outside [q_lo, q_hi]: (1/pi) int q^(1-eps) E|Phi|^2 dq."""
    from scipy import integrate

    low = integrate.quad(lambda q: q ** (1 - epsilon) * float(brownian._expected_phi_sq(q)),
                         0.0, q_lo, limit=200)[0]
    return (low + brownian.expected_spectrum_integral(epsilon, q_hi)) / math.pi


def rescaled_fk_kernel(epsilon, delta, xi, t, n_paths, seed=0, nu0=1.0):
    """T_hat at (x=0, xi delta, t / delta^alpha) over the band [delta, 1], T0 = 1."""
    from .feynkac import InitialDatum, estimate_That_averaged
    from .spectra import SpectralParams

    if not 0 < epsilon < 2:
        raise UsageError("the rescaled comparison is for 0 < epsilon < 2")
    alpha = 2.0 / (1 + epsilon / 2)
    params = SpectralParams(epsilon, nu0=nu0, delta=delta)
    xp, tp = xi * delta, t / delta ** alpha
    n_steps = 1 << max(1, math.ceil(math.log2(4 * tp)))
    est = estimate_That_averaged(0.0, xp, tp, params, CutoffWindow.full(params),
                                 InitialDatum.constant(), n_paths, n_steps, seed)
    scale = math.sqrt(nu0 * tp)
    m = truncated_mass(epsilon, delta * scale, scale)
    coupling = 0.5 * xi * xi * nu0 ** (epsilon / 2 - 1) * t ** (1 + epsilon / 2)
    fix = math.exp(0.5 * nu0 * xp * xp * tp - coupling * m)
    return RescaledEstimate(est.mean, est.stderr, float(est.mean.real) * fix, est.stderr * fix,
                            m, delta)


# --- intermediate-scale kernel -------------------------------------------------


@dataclass(frozen=True)
class KernelEstimate:
    value: complex
    stderr: float
    x: float
    x_tilde: float
    xi: float
    t: float
    l: float


class _TabulatedR:
    """Steady physical covariance on a fine grid with linear interpolation (even in x)."""

    def __init__(self, kernel, reach, dx=0.005):
        self.grid = np.arange(0.0, reach + dx, dx)
        self.values = kernel(self.grid)

    def __call__(self, dx):
        return np.interp(np.abs(dx), self.grid, self.values)


def _bridge_block(indices, *, x, targets, t, xi, nu0, n_steps, seed, kernel, rtab, v_low,
                  anchor, weights, strides=(1,)):
    """Per-bridge samples of sum_j weights_j * [bridge weight * xi^2 int R] for targets x~_j.

    One column per entry of ``strides`` (the same bridges sampled every stride steps).
    """
    w = brownian.path_values(t, n_steps, seed, indices, nu0, stream=rng.BRIDGES)
    frac = np.linspace(0.0, 1.0, n_steps + 1)
    out = np.zeros((len(indices), len(strides)), dtype=complex)
    for xt, wt in zip(targets, weights):
        if wt == 0:
            continue
        full = x + w + frac * ((xt - x) - w[:, -1:])
        a = xt if anchor == "end" else x
        for c, stride in enumerate(strides):
            b = full[:, ::stride]
            dt = t * stride / n_steps
            tw = brownian.trapezoid_weights(b.shape[1] - 1, t)
            S = _s_block(b - x, kernel, dt)
            weight = np.exp(-0.5 * nu0 * xi * xi * t - 0.5 * xi * xi * S)
            if v_low is not None:
                weight = weight * np.exp(-1j * xi * _line_integral(b - x, x, t, v_low, dt))
            out[:, c] += wt * weight * xi * xi * (rtab(b - a) @ tw)
    return out if len(strides) > 1 else out[:, 0]


def _bridge_setup(params, l, t, x, targets, v_low):
    window = CutoffWindow.high_band(l)
    kernel = CovarianceKernel(params, window, Normalization.PHYSICAL)
    if not params.steady:
        raise UsageError("bridge estimators are implemented for steady models")
    reach = 12 * math.sqrt(params.nu0 * t) + float(np.max(np.abs(np.asarray(targets) - x))) + 1
    rtab = _TabulatedR(kernel, reach)
    field = _tabulate(v_low, x, t, params.nu0, reach=12.0 + reach / math.sqrt(params.nu0 * t))
    return kernel, rtab, field


def intermediate_kernel(x, x_tilde, xi, t, l, params, v_low, n_bridges, n_steps=None, seed=0,
                        anchor="end"):
    """K_l(x, x~, xi, t) by Monte Carlo over bridges from x to x~.

    ``anchor`` selects the point the line factor xi^2 int R(B~_s - anchor) ds is
    measured from: "end" (x~) as in the kernel's statement, or "start" (x).
    """
    if l < 0:
        raise UsageError("l must be >= 0")
    if n_bridges < 2:
        raise UsageError("n_bridges must be >= 2")
    if anchor not in ("end", "start"):
        raise UsageError("anchor must be 'end' or 'start'")
    if l == 0 or xi == 0:
        return KernelEstimate(0j, 0.0, x, x_tilde, xi, t, l)
    n_steps = n_steps or max(2, math.ceil(brownian.STEPS_PER_UNIT * t))
    kernel, rtab, field = _bridge_setup(params, l, t, x, [x_tilde], v_low)
    func = partial(_bridge_block, x=float(x), targets=(float(x_tilde),), t=float(t), xi=float(xi),
                   nu0=params.nu0, n_steps=int(n_steps), seed=int(seed), kernel=kernel, rtab=rtab,
                   v_low=field, anchor=anchor, weights=(1.0,))
    samples = parallel.map_blocks(func, n_bridges)
    mean, se = parallel.mean_and_stderr(samples)
    dens = math.exp(-(x - x_tilde) ** 2 / (2 * params.nu0 * t)) / math.sqrt(2 * math.pi * params.nu0 * t)
    return KernelEstimate(complex(mean) * dens, float(se) * dens, x, x_tilde, xi, t, l)


def kernel_against_datum(x, xi, t, l, params, v_low, datum, n_bridges, n_steps=None, seed=0,
                         anchor="end", return_samples=False, strides=(1,)):
    """int K_l(x, x~) T0(x~) dx~ by Gauss-Hermite in x~ (weight = the heat density)."""
    n_steps = n_steps or max(2, math.ceil(brownian.STEPS_PER_UNIT * t))
    z, w = np.polynomial.hermite.hermgauss(GH_NODES)
    targets = x + math.sqrt(2 * params.nu0 * t) * z
    weights = w / math.sqrt(math.pi) * np.asarray(datum(targets, xi))
    if l == 0 or xi == 0:
        shape = (n_bridges,) if len(strides) == 1 else (n_bridges, len(strides))
        samples = np.zeros(shape, dtype=complex)
    else:
        kernel, rtab, field = _bridge_setup(params, l, t, x, targets, v_low)
        func = partial(_bridge_block, x=float(x), targets=tuple(targets), t=float(t),
                       xi=float(xi), nu0=params.nu0, n_steps=int(n_steps), seed=int(seed),
                       kernel=kernel, rtab=rtab, v_low=field, anchor=anchor,
                       weights=tuple(weights), strides=tuple(strides))
        samples = parallel.map_blocks(func, n_bridges)
    if return_samples:
        return samples
    mean, se = parallel.mean_and_stderr(samples)
    return complex(mean), float(se)


# --- residual of the effective equation --------------------------------------------


@dataclass(frozen=True)
class SpdeResidual:
    """Relative residual of dT/dt + i xi v T - (nu0/2) T_xx + (nu0/2) xi^2 T + int K T0.

    All norms are RMS over the x grid divided by the largest term's RMS.
    """

    residual: float
    stderr: float
    discretization: float
    term_norms: dict
    status: str
    metadata: dict

    @property
    def passed(self):
        return self.status == "pass"


def _fk_grid_block(pairs, *, xs, ts, xi, nu0, n_steps, seed, kernel, datum, v_low, strides):
    """Antithetic-pair samples of T(x, t) on xs x ts with common random numbers.

    Paths for different t are the same normals rescaled, so samples are smooth in
    x and t. Returns shape (pairs, strides, xs, ts).
    """
    out = np.zeros((len(pairs), len(strides), len(xs), len(ts)), dtype=complex)
    for c, t in enumerate(ts):
        full = brownian.path_values(t, n_steps, seed, pairs, nu0)
        for si, stride in enumerate(strides):
            values = full[:, ::stride]
            dt = t * stride / n_steps
            S = _s_block(values, kernel, dt)
            base = np.exp(-0.5 * nu0 * xi * xi * t - 0.5 * xi * xi * S)
            for sgn in (1.0, -1.0):
                vals = sgn * values
                for r, x in enumerate(xs):
                    w = base * datum(x + vals[:, -1], xi)
                    if v_low is not None:
                        w = w * np.exp(-1j * xi * _line_integral(vals, x, t, v_low, dt))
                    out[:, si, r, c] += 0.5 * w
    return out


def _rms(a):
    return float(np.sqrt(np.mean(np.abs(a) ** 2)))


def spde_residual(x_grid, xi, t, l, params, v_low, datum, n_paths, n_bridges, n_steps=128,
                  seed=0, anchor="start", h_t=None, h_x=None, inconclusive_at=0.1):
    """Monte Carlo check that T_bar solves the effective equation at scale l (steady).

    Derivatives are central differences under common random numbers. The
    discretization estimate combines a Richardson step comparison (h vs 2h) with
    a time-step comparison (n_steps vs n_steps/2). ``anchor`` is passed to the
    kernel; "start" is the orientation that makes the identity exact when
    v_low is nonzero (see intermediate_kernel).
    """
    if not params.steady:
        raise UsageError("the residual check is implemented for steady models")
    if n_paths < 2 or n_paths % 2:
        raise UsageError("n_paths must be even and >= 2")
    if n_steps % 2:
        raise UsageError("n_steps must be even")
    x_grid = np.atleast_1d(np.asarray(x_grid, dtype=float))
    h_t = h_t or 0.05 * t
    h_x = h_x or 0.1 * math.sqrt(params.nu0 * t)
    nu0 = params.nu0
    high = CutoffWindow.high_band(l)
    kernel = CovarianceKernel(params, high, Normalization.PHYSICAL)
    span = float(np.ptp(x_grid)) + 4 * h_x
    center = float(np.mean(x_grid))
    field = _tabulate(v_low, center, t + 2 * h_t, nu0,
                      reach=12.0 + span / math.sqrt(nu0 * (t + 2 * h_t)))

    offsets_x = np.array([-2, -1, 0, 1, 2]) * h_x
    xs = (x_grid[:, None] + offsets_x[None, :]).ravel()
    ts = t + np.array([-2, -1, 0, 1, 2]) * h_t
    func = partial(_fk_grid_block, xs=tuple(xs), ts=tuple(ts), xi=float(xi), nu0=nu0,
                   n_steps=int(n_steps), seed=int(seed), kernel=kernel, datum=datum,
                   v_low=field, strides=(1, 2))
    fk = parallel.map_blocks(func, n_paths // 2, block_size=64)
    fk = fk.reshape(n_paths // 2, 2, len(x_grid), 5, 5)

    v = np.zeros(len(x_grid)) if field is None else np.asarray(field(x_grid), dtype=float)
    k_samples = np.stack([kernel_against_datum(x, xi, t, l, params, v_low, datum, n_bridges,
                                               n_steps, seed, anchor, True, strides=(1, 2))
                          for x in x_grid], axis=-1)
    if k_samples.ndim == 2:
        k_samples = k_samples[:, None, :].repeat(2, axis=1)

    def terms(samples, m):
        """Per-sample terms for stride column s and step multiplier m (1 or 2)."""
        c = samples[..., 2, 2]
        dt_ = (samples[..., 2, 2 + m] - samples[..., 2, 2 - m]) / (2 * m * h_t)
        dxx = (samples[..., 2 + m, 2] - 2 * c + samples[..., 2 - m, 2]) / (m * h_x) ** 2
        return {"dT/dt": dt_, "advection": 1j * xi * v * c, "x-diffusion": -0.5 * nu0 * dxx,
                "damping": 0.5 * nu0 * xi * xi * c}

    def residual(col, m):
        tm = terms(fk[:, col], m)
        fk_part = sum(tm.values())
        k_part = k_samples[:, col, :]
        r = fk_part.mean(axis=0) + k_part.mean(axis=0)
        se = np.sqrt(np.var(fk_part, axis=0, ddof=1) / fk_part.shape[0]
                     + np.var(k_part, axis=0, ddof=1) / k_part.shape[0])
        means = {name: val.mean(axis=0) for name, val in tm.items()}
        means["kernel"] = k_part.mean(axis=0)
        return r, se, means

    r, se, means = residual(0, 1)
    r_2h, _, _ = residual(0, 2)
    r_coarse, _, _ = residual(1, 1)
    norms = {name: _rms(val) for name, val in means.items()}
    scale = max(norms.values())
    rel = _rms(r) / scale
    rel_se = _rms(se) / scale
    disc = (_rms(r - r_2h) / 3 + _rms(r - r_coarse)) / scale
    if 3 * rel_se >= inconclusive_at:
        status = "inconclusive"
    elif rel <= max(3 * rel_se, 5 * disc):
        status = "pass"
    else:
        status = "fail"
    meta = {"xi": xi, "t": t, "l": l, "epsilon": params.epsilon, "delta": params.delta,
            "n_paths": n_paths, "n_bridges": n_bridges, "n_steps": n_steps, "seed": seed,
            "anchor": anchor, "h_t": h_t, "h_x": h_x, "x_grid": x_grid.tolist()}
    return SpdeResidual(rel, rel_se, disc, norms, status, meta)


def require_conclusive(result):
    if result.status == "inconclusive":
        raise InconclusiveError(
            f"residual {result.residual:.3g} dominated by Monte Carlo noise (stderr {result.stderr:.3g})")
    return result
