# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for the growth model.

``_pykernels`` holds the numpy fallback with the same signatures.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log

cnp.import_array()


cdef inline double _rk4(double x, double rate, double h) nogil:
    cdef double k1 = rate * x
    cdef double k2 = rate * (x + 0.5 * h * k1)
    cdef double k3 = rate * (x + 0.5 * h * k2)
    cdef double k4 = rate * (x + h * k3)
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_advance(double x, double rate, double h, int nsub):
    """Advance ``dx/dt = rate * x`` by ``nsub`` RK4 substeps of length ``h``."""
    cdef int i
    for i in range(nsub):
        x = _rk4(x, rate, h)
    return x


def rk4_advance_noisy(double x, double rate, double h, double[::1] xi):
    """Like ``rk4_advance`` but scales x by ``1 + xi[i]`` after substep i, floored at 0."""
    cdef Py_ssize_t i
    for i in range(xi.shape[0]):
        x = _rk4(x, rate, h) * (1.0 + xi[i])
        if x < 0.0:
            x = 0.0
    return x


def simulate_rates(double x0, double[::1] rates, double h, int nsub):
    """Noise-free trajectory under piecewise-constant rates; returns len(rates)+1 states."""
    cdef Py_ssize_t k, n = rates.shape[0]
    cdef int i
    cdef double x = x0
    out = np.empty(n + 1, dtype=np.float64)
    cdef double[::1] o = out
    o[0] = x
    for k in range(n):
        for i in range(nsub):
            x = _rk4(x, rates[k], h)
        o[k + 1] = x
    return out


def mpc_costs(double[:, ::1] useq, double x0, double xbar, double growth,
              double tau, double h, int nsub, double penalty,
              double umin, double umax):
    """Receding-horizon cost of each row of ``useq`` (one candidate plan per row)."""
    cdef Py_ssize_t p, k, n_p = useq.shape[0], n_k = useq.shape[1]
    cdef int i
    cdef double x, u, rate, c, d
    out = np.empty(n_p, dtype=np.float64)
    cdef double[::1] o = out
    for p in range(n_p):
        x = x0
        c = 0.0
        for k in range(n_k):
            u = useq[p, k]
            if u < umin or u > umax:
                c += penalty
            else:
                d = x - xbar
                c += d * d
            rate = growth - u / tau
            for i in range(nsub):
                x = _rk4(x, rate, h)
        d = x - xbar
        o[p] = c + d * d
    return out


def open_loop_sse(double[::1] y, double[::1] u, double mu, double tau,
                  double alpha, double h, int nsub, bint fit_x0):
    """Squared error between ``y`` and the clamped noise-free replay of ``u``.

    ``u[k]`` is held over interval k. The replay starts from ``y[0] / alpha``
    or, with ``fit_x0``, from the least-squares initial density over the
    unsaturated samples. Returns ``(sse, x0)``.
    """
    cdef Py_ssize_t k, n = y.shape[0]
    cdef int i
    cdef double x, rate, yh, d, total = 0.0, num = 0.0, den = 0.0, x0
    phi_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] phi = phi_arr
    x = 1.0
    phi[0] = alpha
    for k in range(1, n):
        rate = mu - u[k - 1] / tau
        for i in range(nsub):
            x = _rk4(x, rate, h)
        phi[k] = alpha * x
    if fit_x0:
        for k in range(n):
            if 0.0 < y[k] < 1.0:
                num += phi[k] * y[k]
                den += phi[k] * phi[k]
        x0 = num / den if den > 0.0 and num > 0.0 else 0.0
    else:
        x0 = y[0] / alpha
    for k in range(n):
        if k == 0 and not fit_x0:
            continue
        yh = x0 * phi[k]
        if yh < 0.0:
            yh = 0.0
        elif yh > 1.0:
            yh = 1.0
        d = yh - y[k]
        total += d * d
    return total, x0


def kalman_nll(double[::1] y, double[::1] u, double mu, double tau,
               double alpha, double h, int nsub, double q_var, double r_var):
    """Gaussian negative log-likelihood of ``y`` from a scalar Kalman filter.

    The state is propagated by the noise-free interval factor; process
    variance is ``q_var * (predicted x)**2`` per interval, measurement
    variance ``r_var``. Saturated samples (y <= 0 or y >= 1) are skipped.
    """
    cdef Py_ssize_t k, n = y.shape[0]
    cdef int i
    cdef double f, x, p, s, nu, gain, total = 0.0
    x = y[0] / alpha
    p = r_var / (alpha * alpha)
    for k in range(1, n):
        f = 1.0
        for i in range(nsub):
            f = _rk4(f, mu - u[k - 1] / tau, h)
        x = f * x
        p = f * f * p + q_var * x * x
        if y[k] <= 0.0 or y[k] >= 1.0:
            continue
        s = alpha * alpha * p + r_var
        nu = y[k] - alpha * x
        total += nu * nu / s + log(s)
        gain = p * alpha / s
        x = x + gain * nu
        p = (1.0 - gain * alpha) * p
    return total
