"""Independent reference implementations used to check the package kernels.

Everything here deliberately avoids the sum-factorization code paths: basis
tables are expanded to full (node, qpoint) matrices and contracted by plain
matrix products, derivatives are taken by central differences, and small
spectral questions go through dense scipy routines in the tests themselves.
"""

import numpy as np

from hyperfree.mesh import lex_grid_indices


def full_shape_matrix(basis, dim):
    """N[node, qpoint] for the tensor-product basis, built by explicit products."""
    n1, q1 = basis.n_nodes_1d, basis.quadrature.n_points
    nodes = lex_grid_indices((n1,) * dim)
    qpts = lex_grid_indices((q1,) * dim)
    out = np.ones((n1**dim, q1**dim))
    for k in range(dim):
        out *= basis.values[nodes[:, k][:, None], qpts[:, k][None, :]]
    return out


def full_gradient_matrix(basis, dim):
    """dN[node, qpoint, direction] for the tensor-product basis."""
    n1, q1 = basis.n_nodes_1d, basis.quadrature.n_points
    nodes = lex_grid_indices((n1,) * dim)
    qpts = lex_grid_indices((q1,) * dim)
    out = np.ones((n1**dim, q1**dim, dim))
    for a in range(dim):
        for k in range(dim):
            table = basis.derivatives if k == a else basis.values
            out[:, :, a] *= table[nodes[:, k][:, None], qpts[:, k][None, :]]
    return out


def naive_evaluate_values(basis, x_loc, dim):
    """Plain O(n^{2d}) evaluation: full shape matrix times coefficients."""
    n = full_shape_matrix(basis, dim)
    return np.einsum("nq,enc->eqc", n, x_loc)


def naive_evaluate_gradients(basis, x_loc, dim):
    g = full_gradient_matrix(basis, dim)
    return np.einsum("nqa,enc->eqca", g, x_loc)


def naive_integrate(basis, jxw, dim, values=None, gradients=None):
    out = None
    if values is not None:
        n = full_shape_matrix(basis, dim)
        out = np.einsum("nq,eqc,eq->enc", n, values, jxw)
    if gradients is not None:
        g = full_gradient_matrix(basis, dim)
        part = np.einsum("nqa,eqca,eq->enc", g, gradients, jxw)
        out = part if out is None else out + part
    return out


def central_difference_gradient(f, x, h):
    """Componentwise central-difference gradient of a scalar function."""
    grad = np.zeros_like(x)
    for i in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (f(xp) - f(xm)) / (2.0 * h)
    return grad


def fd_tensor_derivative(f, c, h):
    """Central-difference derivative of scalar f wrt a symmetric matrix argument.

    Perturbs (i, j) and (j, i) together so the result is the symmetric
    derivative d f / d C_ij of f restricted to symmetric arguments.
    """
    dim = c.shape[-1]
    out = np.zeros((dim, dim))
    for i in range(dim):
        for j in range(dim):
            cp, cm = c.copy(), c.copy()
            if i == j:
                cp[i, i] += h
                cm[i, i] -= h
            else:
                cp[i, j] += 0.5 * h
                cp[j, i] += 0.5 * h
                cm[i, j] -= 0.5 * h
                cm[j, i] -= 0.5 * h
            out[i, j] = (f(cp) - f(cm)) / (2.0 * h)
    return out


def random_spd_near_identity(rng, dim, spread=0.3):
    a = spread * rng.standard_normal((dim, dim))
    f = np.eye(dim) + a
    while np.linalg.det(f) <= 0.3:
        a *= 0.5
        f = np.eye(dim) + a
    return f.T @ f
