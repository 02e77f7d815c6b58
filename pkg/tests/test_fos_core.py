import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import binom

from fosmpc.fos_core import (FosModel, MvarModel, ICTAL_A, ICTAL_ALPHA, SimulationTrace,
                             draw_noise, fos_to_mvar, gl_coefficients, ictal_model,
                             simulate_fos, simulate_mvar)


def test_gl_base_case():
    assert gl_coefficients([0.5], 0).psi[0, 0] == 1.0


def test_gl_integer_order():
    np.testing.assert_array_equal(gl_coefficients([1.0], 3).psi[0], [1, -1, 0, 0])


def test_gl_half_order_lag_two():
    expected = (-1) ** 2 * binom(0.5, 2)
    assert expected == pytest.approx(-0.125)
    assert gl_coefficients([0.5], 2).psi[0, 2] == pytest.approx(expected, abs=1e-15)


@given(st.lists(st.floats(0.01, 2.0), min_size=1, max_size=5), st.integers(0, 300))
@settings(max_examples=50, deadline=None)
def test_gl_recursion_and_binomial_identity(alpha, max_lag):
    g = gl_coefficients(alpha, max_lag)
    a = np.array(alpha)
    assert np.all(g.psi[:, 0] == 1.0)
    for j in range(1, max_lag + 1):
        np.testing.assert_array_equal(g.psi[:, j], g.psi[:, j - 1] * (j - 1 - a) / j)
    js = np.arange(min(max_lag, 40) + 1)
    ref = (-1.0) ** js * binom(a[:, None], js[None, :])
    np.testing.assert_allclose(g.psi[:, :js.size], ref, rtol=1e-10, atol=1e-14)


@pytest.mark.parametrize("alpha", [[0.0], [-0.3], [np.nan], [np.inf]])
def test_gl_rejects_bad_alpha(alpha):
    with pytest.raises(ValueError):
        gl_coefficients(alpha, 3)


def test_model_invariants():
    with pytest.raises(ValueError):
        FosModel(np.zeros((2, 2)), [0.5], 0.1)
    with pytest.raises(ValueError):
        FosModel(np.zeros((2, 3)), [0.5, 0.5], 0.1)
    with pytest.raises(ValueError):
        FosModel(np.zeros((1, 1)), [2.5], 0.1)
    with pytest.raises(ValueError):
        FosModel(np.zeros((1, 1)), [1.0], -0.1)
    m = ictal_model()
    assert m.n == 4 and m.sigma_w2 == 0.2
    with pytest.raises(ValueError):
        m.A[0, 0] = 1.0


def test_mvar_integer_order_is_lti():
    A = np.array([[0.1, -0.2], [0.3, 0.05]])
    mv = fos_to_mvar(FosModel(A, [1.0, 1.0]), 1)
    assert mv.p == 1
    np.testing.assert_array_equal(mv.lag_matrices[0], A + np.eye(2))


def test_mvar_ictal_lag_zero():
    mv = fos_to_mvar(ictal_model(), 2)
    np.testing.assert_allclose(mv.lag_matrices[0],
                               ICTAL_A + np.diag([0.6606, 0.7973, 1.0670, 0.6977]), atol=1e-15)
    np.testing.assert_allclose(np.diag(mv.lag_matrices[1]), -binom(ICTAL_ALPHA, 2))


def test_mvar_half_order_series():
    # A_j = -(-1)^(j+1) binom(0.5, j+1) for j >= 1, A_0 = alpha
    oracle = [0.5] + [-((-1) ** (j + 1)) * binom(0.5, j + 1) for j in (1, 2)]
    np.testing.assert_allclose(oracle, [0.5, 0.125, 0.0625])
    mv = fos_to_mvar(FosModel([[0.0]], [0.5]), 3)
    np.testing.assert_allclose(mv.lag_matrices[:, 0, 0], oracle, atol=1e-15)


def test_fos_to_mvar_rejects_p0():
    with pytest.raises(ValueError):
        fos_to_mvar(ictal_model(), 0)


def test_unforced_zero_trace():
    m = FosModel(ICTAL_A, ICTAL_ALPHA, 0.0)
    tr = simulate_fos(m, np.ones((4, 1)), T=200, seed=3)
    assert not np.any(tr.states)


def test_unit_accumulation():
    m = FosModel([[0.0]], [1.0], 0.0)
    tr = simulate_fos(m, [[1.0]], lambda k: np.array([1.0]), T=50)
    np.testing.assert_array_equal(tr.states[:, 0], np.arange(50))


def test_simulation_matches_direct_gl_equation():
    # oracle: the defining difference equation with binomial weights, full history
    m = ictal_model()
    B = np.ones((4, 1))
    T = 120
    u = np.sin(np.arange(T))[:, None]
    d = np.random.default_rng(1).normal(size=(T, 4)) * 0.1
    tr = simulate_fos(m, B, u, d, T=T, seed=9)
    w = draw_noise(m.sigma_w2, T, 4, 9)
    x = tr.states
    for k in range(T - 1):
        js = np.arange(k + 2)
        lhs = sum(((-1.0) ** j) * binom(m.alpha, j) * x[k + 1 - j] for j in js)
        rhs = m.A @ x[k] + B @ u[k] + w[k] + d[k]
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9 * (1 + np.abs(x[k + 1]).max()))


def test_integer_order_equals_lti_any_cap():
    rng = np.random.default_rng(0)
    A = rng.normal(scale=0.2, size=(3, 3))
    B = rng.normal(size=(3, 2))
    m = FosModel(A, np.ones(3), 0.3)
    U = rng.normal(size=(60, 2))
    w = draw_noise(0.3, 60, 3, 11)
    x = np.zeros(3)
    ref = [x]
    for k in range(59):
        x = (A + np.eye(3)) @ x + B @ U[k] + w[k]
        ref.append(x)
    for cap in (None, 1, 2, 7):
        tr = simulate_fos(m, B, U, T=60, seed=11, memory_cap=cap)
        np.testing.assert_array_equal(tr.states, np.array(ref))


def test_determinism():
    m = ictal_model()
    a = simulate_fos(m, np.ones((4, 1)), T=300, seed=42)
    b = simulate_fos(m, np.ones((4, 1)), T=300, seed=42)
    assert a.states.tobytes() == b.states.tobytes()
    c = simulate_fos(m, np.ones((4, 1)), T=300, seed=43)
    assert not np.array_equal(a.states, c.states)


def test_dimension_errors():
    m = ictal_model()
    with pytest.raises(ValueError):
        simulate_fos(m, np.ones((3, 1)), T=10)
    with pytest.raises(ValueError):
        simulate_fos(m, np.ones((4, 1)), lambda k: np.ones(2), T=10)
    with pytest.raises(ValueError):
        simulate_fos(m, np.ones((4, 1)), disturbance=np.zeros((10, 3)), T=10)
    with pytest.raises(ValueError):
        SimulationTrace(0.1, np.zeros((5, 2)), np.zeros((4, 1)), np.zeros((5, 2)))


def test_full_cap_equals_unbounded():
    m = ictal_model()
    ref = simulate_fos(m, np.ones((4, 1)), T=400, seed=5)
    capped = simulate_fos(m, np.ones((4, 1)), T=400, seed=5, memory_cap=400)
    np.testing.assert_array_equal(ref.states, capped.states)


@pytest.mark.xfail(strict=True, reason="ictal model is open-loop unstable: states reach ~1e10 "
                                       "within 10 s, so any truncation deviates by far more than 1e-3")
def test_cap64_close_to_unbounded_over_10s():
    m = ictal_model()
    ref = simulate_fos(m, np.ones((4, 1)), T=1600, seed=0)
    capped = simulate_fos(m, np.ones((4, 1)), T=1600, seed=0, memory_cap=64)
    assert np.abs(ref.states - capped.states).max() < 1e-3


@pytest.mark.xfail(strict=True, reason="terminal deviation is not monotone in the cap "
                                       "(cap 32 deviates more than cap 16 on seed 0)")
def test_truncation_deviation_monotone_in_cap():
    m = ictal_model()
    ref = simulate_fos(m, np.ones((4, 1)), T=1600, seed=0).states[-1]
    devs = [np.abs(simulate_fos(m, np.ones((4, 1)), T=1600, seed=0, memory_cap=c).states[-1] - ref).max()
            for c in (1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 1600)]
    assert all(b <= a for a, b in zip(devs, devs[1:]))


def test_long_caps_beat_short_caps():
    m = ictal_model()
    ref = simulate_fos(m, np.ones((4, 1)), T=1600, seed=0).states[-1]
    dev = {c: np.abs(simulate_fos(m, np.ones((4, 1)), T=1600, seed=0, memory_cap=c).states[-1] - ref).max()
           for c in (2, 1024)}
    assert dev[1024] < 1e-6 * dev[2]


def test_simulate_mvar_zero_padding():
    mv = MvarModel(np.array([[[0.5]], [[0.25]]]))
    out = simulate_mvar(mv, [[0.0]], np.zeros((3, 1)), x_hist=[[1.0]])
    np.testing.assert_allclose(out[:, 0], [0.5, 0.5, 0.375])
