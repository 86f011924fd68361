"""Brownian paths and bridges, and the path functionals built on them."""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special
from scipy.interpolate import CubicSpline

from . import rng
from .errors import DivergenceError, UsageError
from .spectra import CutoffWindow, band_nodes

STEPS_PER_UNIT = 1 << 10


@dataclass(frozen=True)
class BrownianPath:
    """Discretized Brownian motion on [0, horizon].

    ``values`` already carry the variance rate, i.e. they sample sqrt(rate)*B.
    """

    horizon: float
    n_steps: int
    values: np.ndarray
    variance_rate: float = 1.0

    @property
    def dt(self):
        return self.horizon / self.n_steps

    @property
    def times(self):
        return np.linspace(0.0, self.horizon, self.n_steps + 1)

    def reversed(self):
        """Time reversal s -> t - s, shifted back to start at 0."""
        v = self.values[::-1] - self.values[-1]
        return BrownianPath(self.horizon, self.n_steps, v, self.variance_rate)

    def coarsened(self):
        """Every other point (requires an even step count)."""
        if self.n_steps % 2:
            raise UsageError("coarsening needs an even step count")
        return BrownianPath(self.horizon, self.n_steps // 2, self.values[::2], self.variance_rate)


@dataclass(frozen=True)
class BrownianBridge(BrownianPath):
    start: float = 0.0
    end: float = 0.0


@dataclass(frozen=True)
class PathFunctionalResult:
    value: float
    quadrature_error_estimate: float


def _check(horizon, n_steps):
    if not horizon > 0:
        raise UsageError("horizon must be > 0")
    if int(n_steps) != n_steps or n_steps < 1:
        raise UsageError("n_steps must be a positive integer")


def path_values(horizon, n_steps, seed, indices, variance_rate=1.0, stream=rng.PATHS):
    """Stacked path values, shape (len(indices), n_steps + 1)."""
    _check(horizon, n_steps)
    z = rng.normals(seed, indices, n_steps, stream)
    out = np.zeros((z.shape[0], n_steps + 1))
    np.cumsum(z * math.sqrt(variance_rate * horizon / n_steps), axis=1, out=out[:, 1:])
    return out


def sample_path(horizon, n_steps, seed, index=0, variance_rate=1.0):
    values = path_values(horizon, n_steps, seed, [index], variance_rate)[0]
    return BrownianPath(float(horizon), int(n_steps), values, float(variance_rate))


def bridge_values(horizon, n_steps, start, end, seed, indices, variance_rate=1.0):
    w = path_values(horizon, n_steps, seed, indices, variance_rate, stream=rng.BRIDGES)
    frac = np.linspace(0.0, 1.0, n_steps + 1)
    out = start + w + frac * ((end - start) - w[:, -1:])
    out[:, 0] = start
    out[:, -1] = end
    return out


def sample_bridge(horizon, n_steps, start, end, seed, index=0, variance_rate=1.0):
    """Brownian bridge from ``start`` at time 0 to ``end`` at ``horizon``."""
    values = bridge_values(horizon, n_steps, start, end, seed, [index], variance_rate)[0]
    return BrownianBridge(float(horizon), int(n_steps), values, float(variance_rate),
                          float(start), float(end))


def trapezoid_weights(n_steps, horizon):
    w = np.full(n_steps + 1, horizon / n_steps)
    w[0] = w[-1] = 0.5 * horizon / n_steps
    return w


# --- double time integrals --------------------------------------------------


def _double_trapezoid(values, times, kernel_eval, row_block=256):
    n1 = len(values)
    w = np.full(n1, times[1] - times[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    diag = np.asarray(kernel_eval(np.zeros(n1), np.zeros(n1)), dtype=float)
    total = float(np.dot(w * w, np.broadcast_to(diag, (n1,))))
    lower = 0.0
    for start in range(1, n1, row_block):
        rows = np.arange(start, min(start + row_block, n1))
        cols = np.arange(rows[-1])
        dx = values[rows, None] - values[None, cols]
        dtau = times[rows, None] - times[None, cols]
        vals = np.asarray(kernel_eval(dx, dtau), dtype=float)
        vals = np.where(cols[None, :] < rows[:, None], vals, 0.0)
        lower += float(w[rows] @ vals @ w[cols])
    return total + 2.0 * lower


def double_time_integral(path, kernel_eval):
    """Trapezoidal double integral of K(X_s - X_s', s - s') over [0, t]^2.

    ``kernel_eval(dx, dtau)`` must accept broadcastable arrays. The strict
    lower triangle is computed once and doubled. The error estimate is the
    Richardson difference against the half-resolution path, |I_n - I_{n/2}|/3.
    """
    if path.n_steps < 2:
        raise UsageError("need at least 2 steps")
    value = _double_trapezoid(path.values, path.times, kernel_eval)
    if path.n_steps % 2 == 0:
        coarse = path.coarsened()
        err = abs(value - _double_trapezoid(coarse.values, coarse.times, kernel_eval)) / 3.0
    else:
        err = float("nan")
    return PathFunctionalResult(value, err)


def _fourier_sums(values, weights, k, block=64):
    """Phi(k) = sum_i w_i exp(i k X_i), evaluated at each k."""
    out = np.empty(len(k), dtype=complex)
    for s in range(0, len(k), block):
        kk = k[s:s + block]
        out[s:s + block] = np.exp(1j * np.outer(kk, values)) @ weights
    return out


def _decayed_sums(values, weights, dt, k, decay, block=64, growth=5.0):
    """sum_{i,j} w_i w_j exp(i k (X_i - X_j)) exp(-decay |t_i - t_j|) for each k.

    The recursion A_i = e^{-decay dt} A_{i-1} + w_i e^{i k X_i} is unrolled in
    time chunks as a rescaled cumulative sum; chunks are short enough that the
    rescaling factor stays below e^growth.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    decay = np.broadcast_to(np.asarray(decay, dtype=float), k.shape)
    weights = np.asarray(weights, dtype=float)
    values = np.asarray(values, dtype=float)
    n = len(values)
    total = np.empty(len(k))
    for s in range(0, len(k), block):
        kk, dd = k[s:s + block, None], decay[s:s + block, None] * dt
        chunk = max(1, min(n, int(growth / max(float(dd.max()), 1e-300))))
        acc = np.zeros((len(kk), 1), dtype=complex)
        out = np.zeros(len(kk))
        for c in range(0, n, chunk):
            steps = np.arange(min(chunk, n - c))
            e = weights[c:c + len(steps)] * np.exp(1j * kk * values[c:c + len(steps)])
            up = np.exp(dd * steps)
            run = np.cumsum(e * up, axis=1) / up + np.exp(-dd * (steps + 1)) * acc
            out += np.sum(2.0 * (np.conj(e) * run).real, axis=1)
            acc = run[:, -1:]
        total[s:s + block] = out - np.sum(weights * weights)
    return total


def spectral_double_integral(path, kernel):
    """Same double integral as ``double_time_integral`` for a CovarianceKernel.

    Uses the band representation K(x, tau) = sum_k w_k cos(kx) e^{-k^z|tau|}:
    a steady kernel gives prefactor * int k^(1-eps) |Phi(k)|^2 dk, an unsteady
    one a decayed recursion over the path. Cost O(n * nodes) instead of O(n^2).
    """
    if kernel.empty:
        return 0.0
    span = float(np.ptp(path.values))
    k, w = band_nodes(kernel.window, kernel.params.epsilon, x_scale=max(span, 1e-12))
    tw = trapezoid_weights(path.n_steps, path.horizon)
    if kernel.params.steady:
        spec = _spectrum_at(path.values, tw, k, span)
    else:
        spec = _decayed_sums(path.values, tw, path.dt, k, k ** kernel.params.z)
    return kernel.prefactor * float(spec @ w)


def occupation_spectrum(values, weights, k, bin_width=0.1):
    """|Phi(k)|^2 from a cloud-in-cell occupation histogram and one FFT.

    Suited to long paths whose spatial range is large compared to 1/k_max.
    The CIC transfer function sinc^2 is divided out, so |Phi|^2 gets sinc^-4.
    The FFT grid oversamples |Phi|^2 fourfold before cubic interpolation.
    """
    lo = values.min() - 2 * bin_width
    span = values.max() - lo + 2 * bin_width
    n = 1 << max(4, math.ceil(math.log2(8.0 * span / bin_width)))
    pos = (values - lo) / bin_width
    i0 = np.floor(pos).astype(np.int64)
    frac = pos - i0
    grid = (np.bincount(i0, weights * (1 - frac), minlength=n)
            + np.bincount(i0 + 1, weights * frac, minlength=n))[:n]
    spec = np.fft.rfft(grid)
    kg = 2 * math.pi * np.arange(len(spec)) / (n * bin_width)
    power = (spec.real ** 2 + spec.imag ** 2) / np.sinc(kg * bin_width / (2 * math.pi)) ** 4
    if np.max(k) > kg[-1]:
        raise UsageError("bin width too coarse for the requested wavenumbers")
    return CubicSpline(kg, power)(k)


# --- nonlocal functional -----------------------------------------------------


def _expected_phi_sq_discrete(k, n_steps):
    """E|Phi_d(k)|^2 for a unit trapezoid path with n steps."""
    du = 1.0 / n_steps
    m = np.arange(1, n_steps + 1)
    c = du * du * (n_steps - m).astype(float)
    c[-1] = du * du / 4.0
    rho = np.exp(-np.outer(k * k, m) * du / 2.0)
    return du * du * (n_steps - 0.5) + 2.0 * rho @ c


def _expected_phi_sq(k):
    """E|Phi(k)|^2 for continuous unit Brownian motion."""
    k = np.asarray(k, dtype=float)
    a = k * k / 2.0
    small = a < 1e-4
    a_s = np.where(small, 1.0, a)
    val = 2.0 * (1.0 / a_s - (1.0 - np.exp(-a_s)) / a_s ** 2)
    return np.where(small, 1.0 - a / 3.0, val)


def expected_spectrum_integral(epsilon, a, b=math.inf):
    """int_a^b q^(1-eps) E|Phi(q)|^2 dq for continuous unit Brownian motion (a > 0).

    Uses E|Phi|^2 = 4/q^2 - 8/q^4 + 8 e^(-q^2/2)/q^4; the power parts are exact.
    """
    from scipy import integrate

    from .spectra import power_integral

    if b <= a:
        return 0.0

    def power(p):
        if math.isinf(b):
            if p >= -1:
                raise DivergenceError("tail integral diverges")
            return -a ** (p + 1) / (p + 1)
        return power_integral(a, b, p)

    expo = integrate.quad(lambda q: q ** (-3 - epsilon) * math.exp(-q * q / 2), a,
                          b if not math.isinf(b) else max(a, 40.0) + 40.0, limit=200)[0]
    return 4 * power(-1 - epsilon) - 8 * power(-3 - epsilon) + 8 * expo


@lru_cache(maxsize=256)
def _octave_model(epsilon, n_steps, k_cut):
    """int over [k_cut/2, k_cut] of k^(1-eps) E|Phi_d(k)|^2 for an n-step unit path."""
    k, w = band_nodes(CutoffWindow(0.5, 1.0), epsilon)
    return float(w @ _expected_phi_sq_discrete(k * k_cut, n_steps)) * k_cut ** (2 - epsilon)


def resolution_limit(n_steps):
    """Largest k at which a unit path with n steps still resolves |Phi(k)|^2."""
    return 0.5 * math.sqrt(n_steps)


DIRECT_BUDGET = 1 << 21


def _spectrum_at(values, weights, k, span):
    """|Phi(k)|^2 at nodes k, by direct sums or through the occupation FFT."""
    if len(values) * len(k) <= DIRECT_BUDGET:
        phi = _fourier_sums(values, weights, k)
        return phi.real ** 2 + phi.imag ** 2
    return occupation_spectrum(values, weights, k, bin_width=min(0.1, 0.25 / float(np.max(k))))


def _band_integral(values, weights, epsilon, lo, hi, span):
    """int_lo^hi q^(1-eps) |Phi(q)|^2 dq over resolved wavenumbers."""
    if hi <= lo:
        return 0.0
    k, w = band_nodes(CutoffWindow(lo / hi, 1.0), epsilon, x_scale=span * hi)
    k = k * hi
    w = w * hi ** (2 - epsilon)
    return float(_spectrum_at(values, weights, k, span) @ w)


def unit_spectrum_integral(values, epsilon, q_lo, q_hi):
    """int_{q_lo}^{q_hi} q^(1-eps) |Phi(q)|^2 dq for a unit-horizon path.

    Wavenumbers above the resolution limit get the Gaussian-expectation tail
    scaled by the amplitude observed on the last resolved octave.
    """
    values = np.asarray(values, dtype=float)
    n = len(values) - 1
    tw = trapezoid_weights(n, 1.0)
    span = max(float(np.ptp(values)), 1e-12)
    k_res = resolution_limit(n)
    total = _band_integral(values, tw, epsilon, q_lo, min(q_hi, k_res), span)
    if q_hi > k_res:
        observed = _band_integral(values, tw, epsilon, k_res / 2, k_res, span)
        amp = observed / _octave_model(float(epsilon), n, float(k_res))
        total += amp * expected_spectrum_integral(epsilon, max(q_lo, k_res), q_hi)
    return total


def nonlocal_functional(path, epsilon, rel_tol=1e-3, k_start=1.0):
    """F(B) = (1/pi) int_0^inf |int_0^1 e^{i B_s k} ds|^2 k^(1-eps) dk (>= 0).

    The k-range is extended by octaves until the last one adds less than
    ``rel_tol`` of the accumulated value, or until the path resolution limit.
    The remainder is a tail whose shape is the Gaussian expectation of
    |Phi|^2 and whose amplitude is fitted on the last octave.
    """
    if not 0 < epsilon < 2:
        raise UsageError("nonlocal functional needs 0 < epsilon < 2")
    if abs(path.horizon - 1.0) > 1e-12:
        raise UsageError("nonlocal functional is defined on unit-horizon paths")
    values = np.asarray(path.values, dtype=float)
    span = float(np.ptp(values))
    if span == 0.0:
        raise DivergenceError("constant path: the k-integral does not decay")
    tw = trapezoid_weights(path.n_steps, 1.0)
    k_res = resolution_limit(path.n_steps)
    hi = min(k_start, k_res)
    lo = 0.0
    total = last = _band_integral(values, tw, epsilon, lo, hi, span)
    while hi < k_res:
        lo, hi = hi, min(2 * hi, k_res)
        last = _band_integral(values, tw, epsilon, lo, hi, span)
        total += last
        if last < rel_tol * total:
            break
    # amplitude of the tail, fitted on the last full octave
    observed = last if lo == hi / 2 else _band_integral(values, tw, epsilon, hi / 2, hi, span)
    amp = observed / _octave_model(float(epsilon), int(path.n_steps), float(hi))
    total += amp * expected_spectrum_integral(epsilon, hi)
    return total / math.pi


def nonlocal_mean_oracle(epsilon):
    """E F(B) by Gaussian expectation: (1/pi) int k^(1-eps) E|Phi(k)|^2 dk."""
    from scipy import integrate

    f = lambda k: k ** (1 - epsilon) * float(_expected_phi_sq(k))
    a = integrate.quad(f, 0, 1, limit=200)[0]
    b = integrate.quad(f, 1, np.inf, limit=200)[0]
    return (a + b) / math.pi


def nonlocal_closed_form(path, epsilon, band=4):
    """Second route for 1 < eps < 2: the k-integral done in closed form.

    int_0^inf cos(kx) k^(1-eps) dk = Gamma(2-eps) (-cos(pi eps/2)) |x|^(eps-2),
    summed over trapezoid pairs at lag > ``band``. Pairs closer than that
    (where |dW|^(eps-2) has infinite variance for eps < 1.5) and the singular
    diagonal cells are replaced by their Gaussian expectation.
    """
    if not 1 < epsilon < 2:
        raise UsageError("closed-form route needs 1 < epsilon < 2")
    n = path.n_steps
    du = path.horizon / n
    p = epsilon - 2.0
    h = p / 2
    const = special.gamma(2 - epsilon) * (-math.cos(math.pi * epsilon / 2)) / math.pi
    c_p = 2 ** h * special.gamma((p + 1) / 2) / math.sqrt(math.pi)
    tw = trapezoid_weights(n, path.horizon)
    x = np.asarray(path.values, dtype=float)
    off = 0.0
    for start in range(band + 1, n + 1, 512):
        rows = np.arange(start, min(start + 512, n + 1))
        cols = np.arange(rows[-1] - band)
        d = np.abs(x[rows, None] - x[None, cols])
        mask = cols[None, :] < rows[:, None] - band
        vals = np.where(mask, np.maximum(d, 1e-300) ** p, 0.0)
        off += float(tw[rows] @ vals @ tw[cols])
    # expectation of the near-diagonal pairs and of the diagonal cells
    lags = np.arange(1, min(band, n) + 1)
    pair_w = np.array([float(tw[m:] @ tw[:-m]) for m in lags])
    near = float(pair_w @ (c_p * (lags * du) ** h))
    cell = c_p * 2 * du ** (2 + h) / ((h + 1) * (h + 2))
    return const * (2 * (off + near) + n * cell)
