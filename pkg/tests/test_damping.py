import numpy as np
import pytest
from scipy import linalg

from feslkit.damping import (RepeatedEigenvalueError, damping_ratio, frequency_sensitivity,
                             natural_modes, rayleigh_coefficient_sensitivity,
                             rayleigh_coefficients, rayleigh_damping)
from feslkit.models import assemble, assemble_sensitivity, shear_frame_model


def _random_spd(rng, n=2):
    a = rng.normal(size=(n, n))
    return a @ a.T + n * np.eye(n)


def test_coefficients_example():
    am, ak = rayleigh_coefficients(2.0, 8.0, 0.05)
    assert am == pytest.approx(0.16)
    assert ak == pytest.approx(0.01)


def test_target_ratio_recovered_at_both_frequencies():
    rng = np.random.default_rng(1)
    for _ in range(10):
        m, k = _random_spd(rng, 3), _random_spd(rng, 3)
        ray = rayleigh_damping(m, k, 0.05)
        for w in ray.omega[:2]:
            assert damping_ratio(ray.alpha_m, ray.alpha_k, w) == pytest.approx(0.05)


def test_two_dof_eigenvalues_closed_form():
    m = np.diag([2.0, 1.0])
    k = np.array([[3.0, -1.0], [-1.0, 1.0]])
    # det(K - lam M) = 2 lam^2 - 5 lam + 2
    omega, modes = natural_modes(m, k)
    np.testing.assert_allclose(omega**2, [0.5, 2.0])
    np.testing.assert_allclose(modes.T @ m @ modes, np.eye(2), atol=1e-12)


def test_zero_derivatives_give_zero():
    m, k = np.diag([1.0, 2.0]), np.array([[4.0, -1.0], [-1.0, 3.0]])
    ray = rayleigh_damping(m, k, 0.05)
    z = np.zeros((2, 2))
    out = rayleigh_coefficient_sensitivity(m, k, z, z, ray.omega, ray.modes, 0.05)
    assert out.dalpha_m == 0.0 and out.dalpha_k == 0.0
    assert np.all(out.ddamping == 0.0)


def test_shear_frame_coefficient_derivative_fd():
    model = shear_frame_model()
    x = np.array([0.3, 0.3])
    mats = assemble(model, x)
    ray = rayleigh_damping(mats.mass, mats.stiffness, 0.05)
    for i in range(2):
        s = assemble_sensitivity(model, x, i)
        exact = rayleigh_coefficient_sensitivity(mats.mass, mats.stiffness, s.dmass,
                                                 s.dstiffness, ray.omega, ray.modes, 0.05)
        h = 1e-6
        e = np.zeros(2)
        e[i] = h
        rp = rayleigh_damping(assemble(model, x + e).mass, assemble(model, x + e).stiffness, 0.05)
        rm = rayleigh_damping(assemble(model, x - e).mass, assemble(model, x - e).stiffness, 0.05)
        assert exact.dalpha_m == pytest.approx((rp.alpha_m - rm.alpha_m) / (2 * h), rel=1e-5)
        assert exact.dalpha_k == pytest.approx((rp.alpha_k - rm.alpha_k) / (2 * h), rel=1e-5)


def test_frequency_derivative_random_pairs():
    rng = np.random.default_rng(7)
    for _ in range(20):
        m, k = _random_spd(rng), _random_spd(rng)
        dm, dk = _random_spd(rng), _random_spd(rng)
        omega, modes = natural_modes(m, k)
        exact = frequency_sensitivity(omega, modes, dm, dk)
        h = 1e-6
        wp = np.sqrt(linalg.eigh(k + h * dk, m + h * dm, eigvals_only=True))
        wm = np.sqrt(linalg.eigh(k - h * dk, m - h * dm, eigvals_only=True))
        np.testing.assert_allclose(exact, (wp - wm) / (2 * h), rtol=1e-5)


def test_repeated_eigenvalues_rejected():
    m, k = np.eye(2), 3.0 * np.eye(2)
    omega, modes = natural_modes(m, k)
    with pytest.raises(RepeatedEigenvalueError):
        rayleigh_coefficient_sensitivity(m, k, np.eye(2), np.eye(2), omega, modes, 0.05)


def test_invalid_matrices():
    with pytest.raises(ValueError):
        natural_modes(np.eye(2), -np.eye(2))
    with pytest.raises(ValueError):
        rayleigh_damping(np.eye(1), np.eye(1), 0.05)
