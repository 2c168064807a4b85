"""The compiled and numpy kernels must agree; each is also checked against
a closed form where one exists."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from turbidostat import _pykernels

from conftest import _ckernels

needs_ext = pytest.mark.skipif(_ckernels is None, reason="extension not built")


def test_rk4_closed_form(backend):
    x = backend.rk4_advance(0.5, -0.01, 0.1, 10)
    assert x == pytest.approx(0.5 * math.exp(-0.01), rel=1e-12)


def test_noisy_zero_xi_matches_clean(backend):
    xi = np.zeros(10)
    assert backend.rk4_advance_noisy(0.5, 0.003, 0.1, xi) == backend.rk4_advance(0.5, 0.003, 0.1, 10)


def test_noisy_floors_at_zero(backend):
    xi = np.array([0.0, -2.0, 0.0])
    assert backend.rk4_advance_noisy(0.5, 0.003, 0.1, xi) == 0.0


def test_simulate_rates_length_and_values(backend):
    rates = np.array([0.01, -0.02, 0.0])
    out = backend.simulate_rates(0.3, rates, 0.1, 10)
    assert out.shape == (4,)
    assert out[-1] == pytest.approx(0.3 * math.exp(-0.01), rel=1e-10)


def test_mpc_costs_penalty_and_zero(backend):
    growth, tau = 0.0231, 0.4
    ueq = growth * tau
    useq = np.array([[ueq] * 5, [ueq, 0.03, ueq, ueq, ueq]])
    c = backend.mpc_costs(useq, 0.5, 0.5, growth, tau, 0.1, 10, 100.0, 0.0, 0.02)
    assert c[0] == pytest.approx(0.0, abs=1e-12)
    assert c[1] >= 100.0


@needs_ext
@settings(max_examples=40, deadline=None)
@given(x=st.floats(0.0, 1.5), rate=st.floats(-0.05, 0.05), n=st.integers(1, 20))
def test_parity_scalar(x, rate, n):
    assert _ckernels.rk4_advance(x, rate, 0.1, n) == _pykernels.rk4_advance(x, rate, 0.1, n)


@needs_ext
@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_parity_noisy(seed):
    xi = np.random.default_rng(seed).normal(0, 0.01, 10)
    assert _ckernels.rk4_advance_noisy(0.4, 0.002, 0.1, xi) == _pykernels.rk4_advance_noisy(0.4, 0.002, 0.1, xi)


@needs_ext
@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_parity_batch(seed):
    r = np.random.default_rng(seed)
    rates = r.uniform(-0.03, 0.03, 50)
    np.testing.assert_allclose(_ckernels.simulate_rates(0.3, rates, 0.1, 10),
                               _pykernels.simulate_rates(0.3, rates, 0.1, 10), rtol=1e-12)
    useq = r.uniform(-0.005, 0.025, (30, 5))
    args = (0.6, 0.5, 0.0231, 0.4, 0.1, 10, 100.0, 0.0, 0.02)
    np.testing.assert_allclose(_ckernels.mpc_costs(useq, *args), _pykernels.mpc_costs(useq, *args),
                               rtol=1e-12, atol=1e-15)


@needs_ext
@pytest.mark.parametrize("fit_x0", [False, True])
def test_parity_fit_objectives(fit_x0):
    r = np.random.default_rng(3)
    u = np.repeat(r.uniform(0, 0.02, 10), 30)
    x = _pykernels.simulate_rates(0.3, 0.0231 - u / 0.4, 0.1, 10)
    y = np.clip(x + r.normal(0, 0.005, x.size), 0, 1)
    uu = np.append(u, u[-1])
    a = _ckernels.open_loop_sse(y, uu, 0.02, 0.45, 1.0, 0.1, 10, fit_x0)
    b = _pykernels.open_loop_sse(y, uu, 0.02, 0.45, 1.0, 0.1, 10, fit_x0)
    assert a[0] == pytest.approx(b[0], rel=1e-10) and a[1] == pytest.approx(b[1], rel=1e-10)
    ka = _ckernels.kalman_nll(y, uu, 0.02, 0.45, 1.0, 0.1, 10, 4e-5, 2.5e-5)
    kb = _pykernels.kalman_nll(y, uu, 0.02, 0.45, 1.0, 0.1, 10, 4e-5, 2.5e-5)
    assert ka == pytest.approx(kb, rel=1e-10)


def test_open_loop_sse_zero_at_truth(backend):
    u = np.repeat([0.0, 0.02, 0.005, 0.015], 25)
    x = _pykernels.simulate_rates(0.3, 0.0231 - u / 0.4, 0.1, 10)
    uu = np.append(u, u[-1])
    sse, x0 = backend.open_loop_sse(x, uu, 0.0231, 0.4, 1.0, 0.1, 10, True)
    assert sse == pytest.approx(0.0, abs=1e-20)
    assert x0 == pytest.approx(0.3, rel=1e-12)


def test_backend_selection_env(monkeypatch):
    import importlib

    import turbidostat.kernels as k
    monkeypatch.setenv("TURBIDOSTAT_PURE_PYTHON", "1")
    try:
        importlib.reload(k)
        assert k.BACKEND == "python"
    finally:
        monkeypatch.delenv("TURBIDOSTAT_PURE_PYTHON")
        importlib.reload(k)
    assert k.BACKEND == ("cython" if _ckernels is not None else "python")
