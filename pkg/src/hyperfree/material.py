"""Compressible Neo-Hookean model: kinematics, stresses and the spatial material tangent.

Strain energy (per unit reference volume):

    psi(C) = mu/2 * [tr(C) - tr(I) - 2 ln J] + lam * ln(J)^2,   J = sqrt(det C)

with derived quantities

    S   = mu (I - C^-1) + 2 lam ln(J) C^-1          (second Piola-Kirchhoff)
    tau = mu b - [mu - 2 lam ln(J)] I               (Kirchhoff, tau = F S F^T)

and the spatial material tangent acting on a symmetric rank-2 tensor

    JC : g = 2 [mu - 2 lam ln(J)] g + 2 lam tr(g) I.

In 2D everything is interpreted as plane strain with the in-plane determinant.
All functions broadcast over arbitrary leading batch axes, and ``mu``/``lam``
may be scalars or broadcastable arrays (heterogeneous materials).

Symmetric rank-2 tensors are packed in the order (11, 22, 12) in 2D and
(11, 22, 33, 23, 13, 12) in 3D.  The Voigt matrix of the tangent uses the
same slot order with engineering (factor 2) shear strains, so that
``stress_voigt = M @ strain_voigt`` and ``g : JC : g = strain_voigt @ M @
strain_voigt``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NonPositiveJacobian(RuntimeError):
    """Deformation state with det F <= 0 (element inversion)."""

    def __init__(self, message: str, element: int | None = None, level: int | None = None):
        super().__init__(message)
        self.element = element
        self.level = level


@dataclass(frozen=True)
class NeoHookeanParams:
    """Shear modulus and Lame parameter in N/mm^2."""

    mu: float
    lam: float

    def __post_init__(self):
        if self.mu <= 0.0 or self.lam <= 0.0:
            raise ValueError("mu and lam must be positive")

    @staticmethod
    def from_shear_and_poisson(mu: float, nu: float) -> "NeoHookeanParams":
        return NeoHookeanParams(mu=mu, lam=2.0 * mu * nu / (1.0 - 2.0 * nu))

    def scaled(self, factor: float) -> "NeoHookeanParams":
        return NeoHookeanParams(mu=self.mu * factor, lam=self.lam * factor)


@dataclass(frozen=True)
class Kinematics:
    """Point-wise deformation measures derived from F = I + Grad u."""

    F: np.ndarray
    J: np.ndarray
    b: np.ndarray  # F F^T
    C: np.ndarray  # F^T F
    E: np.ndarray  # (C - I)/2
    Finv: np.ndarray


def _eye_like(a: np.ndarray) -> np.ndarray:
    dim = a.shape[-1]
    return np.broadcast_to(np.eye(dim), a.shape)


def kinematics_from_displacement_gradient(grad_u: np.ndarray) -> Kinematics:
    grad_u = np.asarray(grad_u, dtype=float)
    F = grad_u + np.eye(grad_u.shape[-1])
    J = np.linalg.det(F)
    if np.any(J <= 0.0):
        idx = int(np.argmin(J))
        raise NonPositiveJacobian(f"det F = {J.reshape(-1)[idx]:.3e} <= 0 at batch entry {idx}")
    C = np.swapaxes(F, -1, -2) @ F
    return Kinematics(
        F=F,
        J=J,
        b=F @ np.swapaxes(F, -1, -2),
        C=C,
        E=0.5 * (C - _eye_like(C)),
        Finv=np.linalg.inv(F),
    )


def strain_energy(C: np.ndarray, mu, lam) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    dim = C.shape[-1]
    det = np.linalg.det(C)
    if np.any(det <= 0.0):
        raise NonPositiveJacobian("det C <= 0")
    ln_j = 0.5 * np.log(det)
    tr = np.trace(C, axis1=-2, axis2=-1)
    return 0.5 * mu * (tr - dim - 2.0 * ln_j) + lam * ln_j**2


def second_pk_stress(C: np.ndarray, mu, lam) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    ln_j = 0.5 * np.log(np.linalg.det(C))
    c_inv = np.linalg.inv(C)
    mu = np.asarray(mu)[..., None, None]
    coef = mu - 2.0 * np.asarray(lam)[..., None, None] * ln_j[..., None, None]
    return mu * _eye_like(C) - coef * c_inv


def kirchhoff_stress(kin: Kinematics, mu, lam) -> np.ndarray:
    return kirchhoff_stress_from_b(kin.b, kin.J, mu, lam)


def kirchhoff_stress_from_b(b: np.ndarray, J: np.ndarray, mu, lam) -> np.ndarray:
    mu = np.asarray(mu)[..., None, None]
    c1 = mu - 2.0 * np.asarray(lam)[..., None, None] * np.log(J)[..., None, None]
    return mu * b - c1 * _eye_like(b)


def tangent_action_closed_form(g_s: np.ndarray, J, mu, lam) -> np.ndarray:
    """JC : g for symmetric g, using the Neo-Hookean closed form."""
    g_s = np.asarray(g_s, dtype=float)
    lam = np.asarray(lam)[..., None, None]
    c1 = np.asarray(mu)[..., None, None] - 2.0 * lam * np.log(J)[..., None, None]
    tr = np.trace(g_s, axis1=-2, axis2=-1)[..., None, None]
    return 2.0 * c1 * g_s + 2.0 * lam * tr * _eye_like(g_s)


def strain_energy_hessian(C: np.ndarray, mu, lam) -> np.ndarray:
    """d^2 psi / dC dC as a full rank-4 tensor (minor and major symmetric)."""
    C = np.asarray(C, dtype=float)
    ln_j = 0.5 * np.log(np.linalg.det(C))
    ci = np.linalg.inv(C)
    c1 = np.asarray(mu) - 2.0 * np.asarray(lam) * ln_j
    dcinv = -0.5 * (np.einsum("...ik,...jl->...ijkl", ci, ci) + np.einsum("...il,...jk->...ijkl", ci, ci))
    outer = np.einsum("...ij,...kl->...ijkl", ci, ci)
    return 0.5 * c1[..., None, None, None, None] * (-dcinv) + 0.5 * np.asarray(lam)[
        ..., None, None, None, None
    ] * outer


def push_forward_rank2(F: np.ndarray, a: np.ndarray) -> np.ndarray:
    return F @ a @ np.swapaxes(F, -1, -2)


def push_forward_rank4(F: np.ndarray, a4: np.ndarray) -> np.ndarray:
    return np.einsum("...iA,...jB,...ABCD,...kC,...lD->...ijkl", F, F, a4, F, F)


# ---------------------------------------------------------------------------
# symmetric packing and the Voigt tangent matrix
# ---------------------------------------------------------------------------

SYM_PAIRS = {
    2: ((0, 0), (1, 1), (0, 1)),
    3: ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)),
}


def n_sym(dim: int) -> int:
    return dim * (dim + 1) // 2


def pack_sym(t: np.ndarray) -> np.ndarray:
    """Independent components of a symmetric tensor (no shear factor)."""
    dim = t.shape[-1]
    pairs = SYM_PAIRS[dim]
    return np.stack([t[..., i, j] for i, j in pairs], axis=-1)


def unpack_sym(v: np.ndarray, dim: int) -> np.ndarray:
    pairs = SYM_PAIRS[dim]
    out = np.zeros(v.shape[:-1] + (dim, dim))
    for k, (i, j) in enumerate(pairs):
        out[..., i, j] = v[..., k]
        out[..., j, i] = v[..., k]
    return out


def pack_strain_voigt(g_s: np.ndarray) -> np.ndarray:
    """Engineering Voigt strain vector: shear slots carry twice the component."""
    dim = g_s.shape[-1]
    v = pack_sym(g_s)
    v[..., dim:] *= 2.0
    return v


def material_tangent_full(J, mu, lam, dim: int) -> np.ndarray:
    """Voigt matrix of JC = 2[mu - 2 lam ln J] S + 2 lam I x I, shape (..., nv, nv)."""
    J = np.asarray(J, dtype=float)
    c1 = np.broadcast_to(np.asarray(mu) - 2.0 * np.asarray(lam) * np.log(J), J.shape)
    lam_b = np.broadcast_to(np.asarray(lam), J.shape)
    nv = n_sym(dim)
    m = np.zeros(J.shape + (nv, nv))
    for a in range(dim):
        for b in range(dim):
            m[..., a, b] = 2.0 * lam_b
        m[..., a, a] += 2.0 * c1
    for s in range(dim, nv):
        m[..., s, s] = c1
    return m


def voigt_contract(m: np.ndarray, g_s: np.ndarray) -> np.ndarray:
    """Contract a Voigt tangent matrix with a symmetric tensor."""
    dim = g_s.shape[-1]
    sig = np.einsum("...kl,...l->...k", m, pack_strain_voigt(g_s))
    return unpack_sym(sig, dim)


def pack_voigt_matrix(m: np.ndarray) -> np.ndarray:
    """Upper triangle of a symmetric Voigt matrix (21 scalars in 3D, 6 in 2D)."""
    nv = m.shape[-1]
    iu = np.triu_indices(nv)
    return m[..., iu[0], iu[1]]


def unpack_voigt_matrix(packed: np.ndarray, nv: int) -> np.ndarray:
    iu = np.triu_indices(nv)
    full = np.zeros(packed.shape[:-1] + (nv, nv))
    full[..., iu[0], iu[1]] = packed
    full[..., iu[1], iu[0]] = packed
    return full
