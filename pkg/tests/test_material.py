import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hyperfree.material import (
    Kinematics,
    NeoHookeanParams,
    NonPositiveJacobian,
    kinematics_from_displacement_gradient,
    kirchhoff_stress,
    material_tangent_full,
    pack_strain_voigt,
    pack_sym,
    pack_voigt_matrix,
    push_forward_rank2,
    push_forward_rank4,
    second_pk_stress,
    strain_energy,
    strain_energy_hessian,
    tangent_action_closed_form,
    unpack_sym,
    unpack_voigt_matrix,
    voigt_contract,
)

from oracles import fd_tensor_derivative, random_spd_near_identity

MU, LAM = 2.0, 3.0


def test_params_validation_and_conversion():
    with pytest.raises(ValueError):
        NeoHookeanParams(mu=-1.0, lam=1.0)
    p = NeoHookeanParams.from_shear_and_poisson(0.4225e6, 0.3)
    assert p.lam == pytest.approx(0.63375e6)
    assert p.scaled(100.0).mu == pytest.approx(42.25e6)


# ------------------------------------------------------------------ kinematics


def test_kinematics_zero_gradient():
    kin = kinematics_from_displacement_gradient(np.zeros((3, 3)))
    assert np.allclose(kin.F, np.eye(3))
    assert kin.J == pytest.approx(1.0)
    assert np.allclose(kin.b, np.eye(3))
    assert np.allclose(kin.C, np.eye(3))
    assert np.abs(kin.E).max() == 0.0


def test_kinematics_uniaxial():
    kin = kinematics_from_displacement_gradient(np.diag([1.0, 0.0, 0.0]))
    assert np.allclose(kin.F, np.diag([2.0, 1.0, 1.0]))
    assert kin.J == pytest.approx(2.0)
    assert np.allclose(kin.b, np.diag([4.0, 1.0, 1.0]))


def test_kinematics_simple_shear():
    gamma = 0.5
    kin = kinematics_from_displacement_gradient(np.array([[0.0, gamma], [0.0, 0.0]]))
    assert kin.J == pytest.approx(1.0)
    assert np.allclose(kin.b, np.array([[1.25, 0.5], [0.5, 1.0]]))


def test_kinematics_rejects_inversion():
    with pytest.raises(NonPositiveJacobian):
        kinematics_from_displacement_gradient(np.diag([-2.0, 0.0, 0.0]))


@given(
    g=arrays(np.float64, (3, 3), elements=st.floats(-0.3, 0.3)),
)
@settings(max_examples=50, deadline=None)
def test_kinematics_invariants(g):
    f = np.eye(3) + g
    if np.linalg.det(f) <= 0.05:
        return
    kin = kinematics_from_displacement_gradient(g)
    assert abs(kin.J**2 - np.linalg.det(kin.C)) <= 1e-12 * max(kin.J**2, 1.0)
    assert np.abs(kin.C - kin.C.T).max() == 0.0
    assert np.abs(kin.b - kin.b.T).max() == 0.0
    tau = kirchhoff_stress(kin, MU, LAM)
    s = second_pk_stress(kin.C, MU, LAM)
    push = push_forward_rank2(kin.F, s)
    assert np.abs(push - tau).max() <= 1e-12 * max(np.abs(tau).max(), 1.0)


# ---------------------------------------------------------------------- energy


def test_energy_zero_at_identity():
    assert strain_energy(np.eye(3), MU, LAM) == pytest.approx(0.0, abs=1e-15)
    assert strain_energy(np.eye(2), MU, LAM) == pytest.approx(0.0, abs=1e-15)


def test_energy_hand_value():
    c = np.diag([4.0, 1.0, 1.0])
    expected = 3.0 - 2.0 * np.log(2.0) + 3.0 * np.log(2.0) ** 2
    assert strain_energy(c, MU, LAM) == pytest.approx(expected, rel=1e-14)


def test_energy_nonnegative_near_identity():
    rng = np.random.default_rng(0)
    for _ in range(20):
        c = random_spd_near_identity(rng, 3, spread=0.1)
        assert strain_energy(c, MU, LAM) >= -1e-14


def test_energy_fd_matches_stress():
    rng = np.random.default_rng(1)
    for _ in range(5):
        c = random_spd_near_identity(rng, 3)
        fd = fd_tensor_derivative(lambda cc: strain_energy(cc, MU, LAM), c, 1e-6)
        s = second_pk_stress(c, MU, LAM)
        assert np.abs(2.0 * fd - s).max() <= 1e-7 * np.abs(s).max()


# -------------------------------------------------------------------- stresses


def test_kirchhoff_zero_at_identity():
    kin = kinematics_from_displacement_gradient(np.zeros((3, 3)))
    assert np.abs(kirchhoff_stress(kin, MU, LAM)).max() <= 1e-15


def test_kirchhoff_hand_value():
    kin = kinematics_from_displacement_gradient(np.diag([1.0, 0.0, 0.0]))
    tau = kirchhoff_stress(kin, MU, LAM)
    ln2 = np.log(2.0)
    assert np.allclose(tau, np.diag([6.0 + 6.0 * ln2, 6.0 * ln2, 6.0 * ln2]), rtol=1e-14)


def test_second_pk_zero_at_identity():
    assert np.abs(second_pk_stress(np.eye(3), MU, LAM)).max() <= 1e-15


def test_second_pk_hand_value():
    s = second_pk_stress(np.diag([4.0, 1.0, 1.0]), MU, LAM)
    ln4 = np.log(4.0)
    assert np.allclose(s, np.diag([1.5 + 0.75 * ln4, 3.0 * ln4, 3.0 * ln4]), rtol=1e-14)


def test_second_pk_fd_oracle():
    rng = np.random.default_rng(2)
    for _ in range(5):
        c = random_spd_near_identity(rng, 3)
        fd = fd_tensor_derivative(lambda cc: strain_energy(cc, MU, LAM), c, 1e-6)
        s = second_pk_stress(c, MU, LAM)
        assert np.abs(s - 2.0 * fd).max() <= 1e-7 * np.abs(s).max()


# ------------------------------------------------------------- tangent action


def test_closed_form_at_identity_is_linear_elasticity():
    rng = np.random.default_rng(3)
    g = rng.standard_normal((3, 3))
    g = 0.5 * (g + g.T)
    out = tangent_action_closed_form(g, np.asarray(1.0), MU, LAM)
    expected = 2.0 * MU * g + 2.0 * LAM * np.trace(g) * np.eye(3)
    assert np.allclose(out, expected, rtol=1e-14)


def test_closed_form_traceless():
    g = np.array([[1.0, 2.0, 0.0], [2.0, -1.0, 0.5], [0.0, 0.5, 0.0]])
    assert np.trace(g) == 0.0
    j = 1.7
    out = tangent_action_closed_form(g, np.asarray(j), MU, LAM)
    assert np.allclose(out, 2.0 * (MU - 2.0 * LAM * np.log(j)) * g, rtol=1e-14)


@given(seed=st.integers(0, 1000), j=st.floats(0.5, 2.0))
@settings(max_examples=30, deadline=None)
def test_closed_form_matches_full_tensor(seed, j):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((3, 3))
    g = 0.5 * (g + g.T)
    closed = tangent_action_closed_form(g, np.asarray(j), MU, LAM)
    full = voigt_contract(material_tangent_full(np.asarray(j), MU, LAM, 3), g)
    assert np.abs(closed - full).max() <= 1e-13 * np.abs(closed).max()


def test_voigt_matrix_reference_entries():
    m = material_tangent_full(np.asarray(1.0), 1.0, 1e-30 + 0.0, 3)  # lam ~ 0
    # 2*S in the engineering-shear convention: normal diag 2, shear diag 1
    assert np.allclose(np.diag(m), [2.0, 2.0, 2.0, 1.0, 1.0, 1.0], atol=1e-12)


def test_voigt_contraction_with_identity():
    for dim in (2, 3):
        j = np.asarray(1.4)
        m = material_tangent_full(j, MU, LAM, dim)
        out = voigt_contract(m, np.eye(dim))
        coef = 2.0 * (MU - 2.0 * LAM * np.log(j)) + 2.0 * LAM * dim
        assert np.allclose(out, coef * np.eye(dim), rtol=1e-13)


def test_voigt_matrix_psd_at_identity():
    for dim in (2, 3):
        m = material_tangent_full(np.asarray(1.0), MU, LAM, dim)
        # energy metric: g:C:g = gamma^T M gamma with engineering strains
        w = np.linalg.eigvalsh(m)
        assert w.min() >= -1e-12
    rng = np.random.default_rng(4)
    for _ in range(10):
        g = rng.standard_normal((3, 3))
        g = 0.5 * (g + g.T)
        gamma = pack_strain_voigt(g)
        m = material_tangent_full(np.asarray(1.0), MU, LAM, 3)
        assert gamma @ m @ gamma >= -1e-12


def test_major_symmetry():
    for dim in (2, 3):
        m = material_tangent_full(np.asarray(1.3), MU, LAM, dim)
        assert np.abs(m - np.swapaxes(m, -1, -2)).max() == 0.0


def test_pack_unpack_roundtrip():
    rng = np.random.default_rng(5)
    for dim in (2, 3):
        t = rng.standard_normal((4, dim, dim))
        t = 0.5 * (t + np.swapaxes(t, -1, -2))
        assert np.allclose(unpack_sym(pack_sym(t), dim), t)
        nv = dim * (dim + 1) // 2
        m = rng.standard_normal((4, nv, nv))
        m = 0.5 * (m + np.swapaxes(m, -1, -2))
        assert np.allclose(unpack_voigt_matrix(pack_voigt_matrix(m), nv), m)


# --------------------------------------------------- push-forward consistency


def test_hessian_fd_consistency():
    rng = np.random.default_rng(6)
    c = random_spd_near_identity(rng, 3)
    hess = strain_energy_hessian(c, MU, LAM)
    # FD of S = 2 dpsi/dC gives 2 * d2psi/dC2 contracted appropriately
    h = 1e-5
    for k in range(3):
        for l in range(3):
            cp, cm = c.copy(), c.copy()
            if k == l:
                cp[k, k] += h
                cm[k, k] -= h
            else:
                cp[k, l] += 0.5 * h
                cp[l, k] += 0.5 * h
                cm[k, l] -= 0.5 * h
                cm[l, k] -= 0.5 * h
            fd = (second_pk_stress(cp, MU, LAM) - second_pk_stress(cm, MU, LAM)) / (2 * h)
            assert np.abs(fd - 2.0 * hess[:, :, k, l]).max() <= 1e-6 * max(np.abs(hess).max(), 1.0)


def test_pushforward_of_hessian_matches_closed_form():
    rng = np.random.default_rng(7)
    for _ in range(5):
        grad_u = 0.25 * rng.standard_normal((3, 3))
        if np.linalg.det(np.eye(3) + grad_u) <= 0.5:
            continue
        kin = kinematics_from_displacement_gradient(grad_u)
        if not 0.5 <= kin.J <= 2.0:
            continue
        spatial = push_forward_rank4(kin.F, 4.0 * strain_energy_hessian(kin.C, MU, LAM))
        g = rng.standard_normal((3, 3))
        g = 0.5 * (g + g.T)
        via_tensor = np.einsum("ijkl,kl->ij", spatial, g)
        closed = tangent_action_closed_form(g, kin.J, MU, LAM)
        assert np.abs(via_tensor - closed).max() <= 1e-10 * np.abs(closed).max()


def test_plane_strain_identity_zero():
    kin = kinematics_from_displacement_gradient(np.zeros((2, 2)))
    assert strain_energy(kin.C, MU, LAM) == pytest.approx(0.0, abs=1e-15)
    assert np.abs(kirchhoff_stress(kin, MU, LAM)).max() <= 1e-15
