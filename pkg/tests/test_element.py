import numpy as np
import pytest

import voxtop as vt

from oracles import gauss_stiffness, rigid_body_modes


@pytest.mark.parametrize("nu", [0.0, 0.2, 0.3, 0.45])
def test_unit_stiffness_matches_quadrature_oracle(nu):
    K = vt.unit_stiffness(nu, 1.0).matrix
    K_ref = gauss_stiffness(nu, 1.0)
    assert np.abs(K - K_ref).max() <= 1e-10 * np.abs(K_ref).max()


def test_unit_stiffness_scales_linearly_in_h():
    K1 = vt.unit_stiffness(0.3, 1.0).matrix
    K2 = vt.unit_stiffness(0.3, 2.0).matrix
    assert np.array_equal(K2, 2.0 * K1)


def test_unit_stiffness_symmetric():
    K = vt.unit_stiffness(0.3, 1.0).matrix
    assert np.abs(K - K.T).max() <= 1e-12 * np.abs(K).max()


def test_rigid_body_nullspace():
    for nu in (0.0, 0.3, 0.4):
        K = vt.unit_stiffness(nu, 1.5).matrix
        modes = rigid_body_modes(1.5)
        assert np.abs(K @ modes).max() <= 1e-12 * np.abs(K).max()


def test_eigenvalue_structure():
    K = vt.unit_stiffness(0.3, 1.0).matrix
    w = np.linalg.eigvalsh(K)
    tol = 1e-9 * w.max()
    assert (np.abs(w) <= tol).sum() == 6
    assert (w > tol).sum() == 18


def test_unit_stiffness_rejects_bad_inputs():
    with pytest.raises(ValueError):
        vt.unit_stiffness(0.5, 1.0)
    with pytest.raises(ValueError):
        vt.unit_stiffness(-0.1, 1.0)
    with pytest.raises(ValueError):
        vt.unit_stiffness(0.3, 0.0)


# SIMP interpolation ---------------------------------------------------------


def test_simp_scale_endpoints():
    m = vt.MaterialModel(p=3.0, kmin_frac=1e-9)
    assert vt.simp_scale(1.0, m) == 1.0
    assert vt.simp_scale(0.0, m) == 1e-9
    expected = 0.125 * (1 - 1e-9) + 1e-9
    assert abs(vt.simp_scale(0.5, m) - expected) < 1e-16


def test_simp_scale_monotone():
    m = vt.MaterialModel(p=3.0)
    rho = np.linspace(0, 1, 101)
    s = vt.simp_scale(rho, m)
    assert np.all(np.diff(s) > 0)


def test_simp_scale_rejects_out_of_range():
    m = vt.MaterialModel()
    with pytest.raises(ValueError):
        vt.simp_scale(1.5, m)
    with pytest.raises(ValueError):
        vt.simp_scale(np.array([0.2, -0.1]), m)


def test_simp_derivative_endpoints():
    m = vt.MaterialModel(p=3.0, kmin_frac=1e-9)
    assert abs(vt.simp_scale_derivative(1.0, m) - 3 * (1 - 1e-9)) < 1e-14
    assert vt.simp_scale_derivative(0.0, m) == 0.0


def test_simp_derivative_matches_finite_difference():
    m = vt.MaterialModel(p=3.0, kmin_frac=1e-9)
    delta = 1e-6
    fd = (vt.simp_scale(0.7 + delta, m) - vt.simp_scale(0.7 - delta, m)) / (2 * delta)
    d = vt.simp_scale_derivative(0.7, m)
    assert abs(d - fd) <= 1e-6 * abs(fd)


def test_p_equal_one_derivative():
    m = vt.MaterialModel(p=1.0, kmin_frac=1e-9)
    assert vt.simp_scale_derivative(0.0, m) == pytest.approx(1 - 1e-9)


def test_material_model_validation():
    with pytest.raises(ValueError):
        vt.MaterialModel(p=0.5)
    with pytest.raises(ValueError):
        vt.MaterialModel(kmin_frac=0.0)
    with pytest.raises(ValueError):
        vt.MaterialModel(E=-1.0)


# gravity load ---------------------------------------------------------------


def test_gravity_load_zero_density():
    assert np.array_equal(vt.element_gravity_load(0.0, 9.81, 2.0, 5.0), np.zeros(24))


def test_gravity_load_unit_case():
    f = vt.element_gravity_load(1.0, 1.0, 1.0, 1.0)
    assert np.allclose(f[2::3], -0.125)
    assert np.all(f[0::3] == 0) and np.all(f[1::3] == 0)


def test_gravity_load_linear_in_density():
    f1 = vt.element_gravity_load(1.0, 2.0, 1.5, 3.0)
    fh = vt.element_gravity_load(0.5, 2.0, 1.5, 3.0)
    assert np.array_equal(fh, 0.5 * f1)


def test_gravity_load_total_weight():
    rho, g, h, uw = 0.73, 9.81, 1.25, 2.0
    f = vt.element_gravity_load(rho, g, h, uw)
    assert f[2::3].sum() == pytest.approx(-rho * uw * g * h**3, rel=1e-15)


def test_gravity_load_axis():
    f = vt.element_gravity_load(1.0, 1.0, 1.0, 1.0, axis=0)
    assert np.allclose(f[0::3], -0.125)
    assert np.all(f[2::3] == 0)
