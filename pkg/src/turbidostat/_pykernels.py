"""Pure-Python/numpy fallback for the compiled kernels in ``_ckernels.pyx``.

Scalar routines repeat the compiled arithmetic exactly; the batch
routines are vectorized and agree with it to rounding.
"""
import math

import numpy as np


def _rk4(x, rate, h):
    k1 = rate * x
    k2 = rate * (x + 0.5 * h * k1)
    k3 = rate * (x + 0.5 * h * k2)
    k4 = rate * (x + h * k3)
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_advance(x, rate, h, nsub):
    """Advance ``dx/dt = rate * x`` by ``nsub`` RK4 substeps of length ``h``."""
    x = float(x)
    rate = float(rate)
    for _ in range(nsub):
        x = _rk4(x, rate, h)
    return x


def rk4_advance_noisy(x, rate, h, xi):
    """Like ``rk4_advance`` but scales x by ``1 + xi[i]`` after substep i, floored at 0."""
    x = float(x)
    rate = float(rate)
    for e in np.asarray(xi, dtype=np.float64).tolist():
        x = _rk4(x, rate, h) * (1.0 + e)
        if x < 0.0:
            x = 0.0
    return x


def simulate_rates(x0, rates, h, nsub):
    """Noise-free trajectory under piecewise-constant rates; returns len(rates)+1 states.

    The state is linear in x, so each interval is a fixed growth factor;
    agrees with the compiled loop to rounding.
    """
    rates = np.asarray(rates, dtype=np.float64)
    f = np.ones_like(rates)
    for _ in range(nsub):
        f = _rk4(f, rates, h)
    out = np.empty(rates.size + 1)
    out[0] = float(x0)
    out[1:] = float(x0) * np.cumprod(f)
    return out


def mpc_costs(useq, x0, xbar, growth, tau, h, nsub, penalty, umin, umax):
    """Receding-horizon cost of each row of ``useq`` (one candidate plan per row).

    Vectorized across rows; sequential along the horizon.
    """
    useq = np.asarray(useq, dtype=np.float64)
    n_p, n_k = useq.shape
    x = np.full(n_p, float(x0))
    c = np.zeros(n_p)
    for k in range(n_k):
        u = useq[:, k]
        d = x - xbar
        c += np.where((u < umin) | (u > umax), penalty, d * d)
        rate = growth - u / tau
        for _ in range(nsub):
            x = _rk4(x, rate, h)
    d = x - xbar
    return c + d * d


def open_loop_sse(y, u, mu, tau, alpha, h, nsub, fit_x0):
    """Squared error between ``y`` and the clamped noise-free replay of ``u``.

    ``u[k]`` is held over interval k. The replay starts from ``y[0] / alpha``
    or, with ``fit_x0``, from the least-squares initial density over the
    unsaturated samples. Returns ``(sse, x0)``.
    """
    y = np.asarray(y, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    phi = alpha * simulate_rates(1.0, mu - u[: y.size - 1] / tau, h, nsub)
    if fit_x0:
        ok = (y > 0.0) & (y < 1.0)
        num = float(phi[ok] @ y[ok])
        den = float(phi[ok] @ phi[ok])
        x0 = num / den if den > 0.0 and num > 0.0 else 0.0
        r = np.clip(x0 * phi, 0.0, 1.0) - y
    else:
        x0 = y[0] / alpha
        r = np.clip(x0 * phi[1:], 0.0, 1.0) - y[1:]
    return float(r @ r), x0


def kalman_nll(y, u, mu, tau, alpha, h, nsub, q_var, r_var):
    """Gaussian negative log-likelihood of ``y`` from a scalar Kalman filter.

    The state is propagated by the noise-free interval factor; process
    variance is ``q_var * (predicted x)**2`` per interval, measurement
    variance ``r_var``. Saturated samples (y <= 0 or y >= 1) are skipped.
    """
    y = np.asarray(y, dtype=np.float64).tolist()
    u = np.asarray(u, dtype=np.float64).tolist()
    x = y[0] / alpha
    p = r_var / (alpha * alpha)
    total = 0.0
    for k in range(1, len(y)):
        f = 1.0
        rate = mu - u[k - 1] / tau
        for _ in range(nsub):
            f = _rk4(f, rate, h)
        x = f * x
        p = f * f * p + q_var * x * x
        if y[k] <= 0.0 or y[k] >= 1.0:
            continue
        s = alpha * alpha * p + r_var
        nu = y[k] - alpha * x
        total += nu * nu / s + math.log(s)
        gain = p * alpha / s
        x = x + gain * nu
        p = (1.0 - gain * alpha) * p
    return total
