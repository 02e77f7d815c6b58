import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fosmpc.fos_core import FosModel, MvarModel, fos_to_mvar, ictal_model, simulate_fos, simulate_mvar
from fosmpc.lti_augment import augment, augmented_state, prediction_matrices


def random_mvar(rng, n, p, scale=0.3):
    return MvarModel(rng.normal(scale=scale / p, size=(p, n, n)))


def test_p1_no_augmentation():
    A0 = np.array([[0.2, 0.1], [0.0, -0.4]])
    B = np.array([[1.0], [2.0]])
    aug = augment(MvarModel(A0[None]), B)
    np.testing.assert_array_equal(aug.A_tilde, A0)
    np.testing.assert_array_equal(aug.B_tilde, B)
    np.testing.assert_array_equal(aug.Bw_tilde, np.eye(2))


def test_p2_block_layout():
    A0 = np.array([[1.0, 2.0], [3.0, 4.0]])
    A1 = np.array([[5.0, 6.0], [7.0, 8.0]])
    aug = augment(MvarModel(np.stack([A0, A1])), np.ones((2, 1)))
    expected = np.block([[A0, A1], [np.eye(2), np.zeros((2, 2))]])
    np.testing.assert_array_equal(aug.A_tilde, expected)
    np.testing.assert_array_equal(aug.Bw_tilde, np.vstack([np.eye(2), np.zeros((2, 2))]))


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        augment(MvarModel(np.zeros((2, 3, 3))), np.ones((2, 1)))


@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 4), st.integers(1, 2))
@settings(max_examples=40, deadline=None)
def test_augmented_iteration_matches_mvar(seed, n, p, n_u):
    rng = np.random.default_rng(seed)
    mv = random_mvar(rng, n, p)
    B = rng.normal(size=(n, n_u))
    U = rng.normal(size=(50, n_u))
    hist = rng.normal(size=(p, n))
    direct = simulate_mvar(mv, B, U, x_hist=hist)
    aug = augment(mv, B)
    xt = augmented_state(hist, n, p)
    for k in range(50):
        xt_next = aug.A_tilde @ xt + aug.B_tilde @ U[k]
        # shift structure
        np.testing.assert_array_equal(xt_next[n:], xt[:(p - 1) * n])
        xt = xt_next
        np.testing.assert_allclose(xt[:n], direct[k], atol=1e-12 * (1 + np.abs(direct[k]).max()))


def test_random_mvar3_zero_noise():
    rng = np.random.default_rng(7)
    mv = random_mvar(rng, 3, 3)
    B = rng.normal(size=(3, 1))
    U = rng.normal(size=(50, 1))
    direct = simulate_mvar(mv, B, U, x_hist=[np.ones(3)])
    aug = augment(mv, B)
    xt = augmented_state([np.ones(3)], 3, 3)
    out = []
    for k in range(50):
        xt = aug.A_tilde @ xt + aug.B_tilde @ U[k]
        out.append(xt[:3])
    np.testing.assert_allclose(out, direct, atol=1e-12)


def test_prediction_one_step():
    rng = np.random.default_rng(1)
    aug = augment(random_mvar(rng, 2, 3), rng.normal(size=(2, 1)))
    pm = prediction_matrices(aug, 1)
    S = aug.selector
    np.testing.assert_array_equal(pm.Phi, S @ aug.A_tilde)
    np.testing.assert_array_equal(pm.Gamma, S @ aug.B_tilde)


def test_prediction_scalar_hand_iteration():
    pm = prediction_matrices(augment(MvarModel([[[0.5]]]), [[1.0]]), 3)
    X = pm.Phi @ np.array([1.0]) + pm.Gamma @ np.zeros(3)
    np.testing.assert_allclose(X, [0.5, 0.25, 0.125])


def test_prediction_matches_truncated_fos_simulation():
    m = ictal_model()
    B = np.ones((4, 1))
    x0 = np.array([0.3, -0.2, 0.5, 0.1])
    ref = simulate_fos(FosModel(m.A, m.alpha, 0.0), B, T=33, memory_cap=4, x0=x0).states[1:]
    pm = prediction_matrices(augment(fos_to_mvar(m, 4), B), 32)
    X = pm.Phi @ augmented_state([x0], 4, 4)
    assert np.abs(X - ref.ravel()).max() < 1e-12


@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 3), st.integers(1, 6))
@settings(max_examples=30, deadline=None)
def test_prediction_exact_and_causal(seed, n, p, P):
    rng = np.random.default_rng(seed)
    mv = random_mvar(rng, n, p)
    B = rng.normal(size=(n, 2))
    pm = prediction_matrices(augment(mv, B), P)
    hist = rng.normal(size=(p, n))
    U = rng.normal(size=(P, 2))
    X = pm.Phi @ augmented_state(hist, n, p) + pm.Gamma @ U.ravel()
    np.testing.assert_allclose(X, simulate_mvar(mv, B, U, x_hist=hist).ravel(), atol=1e-10)
    for i in range(P):
        for j in range(i + 1, P):
            assert not np.any(pm.Gamma[i * n:(i + 1) * n, j * 2:(j + 1) * 2])
        np.testing.assert_allclose(pm.Gamma[i * n:(i + 1) * n, i * 2:(i + 1) * 2], B)


def test_time_varying_sequence():
    rng = np.random.default_rng(3)
    B = rng.normal(size=(2, 1))
    models = [random_mvar(rng, 2, 2) for _ in range(4)]
    augs = [augment(m, B) for m in models]
    pm = prediction_matrices(augs, 4)
    xt = rng.normal(size=4)
    U = rng.normal(size=4)
    x = xt.copy()
    out = []
    for k in range(4):
        x = augs[k].A_tilde @ x + augs[k].B_tilde @ U[k:k + 1]
        out.append(x[:2])
    np.testing.assert_allclose(pm.Phi @ xt + pm.Gamma @ U, np.ravel(out), atol=1e-12)
    with pytest.raises(ValueError):
        prediction_matrices(augs, 3)
