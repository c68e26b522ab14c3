import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperfree.fespace import (
    Basis1D,
    bottom_constraints,
    build_dof_map,
    distribute_local_to_global,
    evaluate_at_qpoints,
    evaluate_gradients,
    evaluate_values,
    gather_local,
    gauss_legendre,
    integrate_testfunctions,
    lagrange_basis,
    node_coordinates,
)
from hyperfree.flops import FLOPS, counting, measure
from hyperfree.mesh import build_benchmark_mesh

from oracles import naive_evaluate_gradients, naive_evaluate_values, naive_integrate


# ----------------------------------------------------------------- quadrature


def test_gauss_midpoint():
    q = gauss_legendre(1)
    assert q.points == pytest.approx([0.5])
    assert q.weights == pytest.approx([1.0])


def test_gauss_two_point():
    q = gauss_legendre(2)
    a = 1.0 / (2.0 * np.sqrt(3.0))
    assert np.allclose(np.sort(q.points), [0.5 - a, 0.5 + a])
    assert np.allclose(q.weights, [0.5, 0.5])


def test_gauss_cubic_exact():
    q = gauss_legendre(2)
    assert np.sum(q.weights * q.points**3) == pytest.approx(0.25, abs=1e-15)


@pytest.mark.parametrize("n", range(1, 17))
def test_gauss_weights_sum_and_symmetry(n):
    q = gauss_legendre(n)
    assert q.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all((q.points > 0) & (q.points < 1))
    assert np.allclose(np.sort(q.points) + np.sort(q.points)[::-1], 1.0)


@pytest.mark.parametrize("n", [0, 17, -3])
def test_gauss_rejects_out_of_range(n):
    with pytest.raises(ValueError):
        gauss_legendre(n)


# ----------------------------------------------------------------------- basis


@pytest.mark.parametrize("p", range(1, 9))
def test_basis_partition_of_unity(p):
    basis = lagrange_basis(p, gauss_legendre(p + 1))
    assert np.abs(basis.values.sum(axis=0) - 1.0).max() <= 1e-13
    assert np.abs(basis.derivatives.sum(axis=0)).max() <= 1e-12


@pytest.mark.parametrize("p", range(1, 9))
def test_basis_kronecker(p):
    quad = gauss_legendre(p + 1)
    basis = lagrange_basis(p, quad)
    from hyperfree.fespace import _lagrange_values

    at_nodes = _lagrange_values(basis.nodes, basis.nodes)
    assert np.allclose(at_nodes, np.eye(p + 1), atol=1e-12)


def test_gauss_lobatto_alternative():
    basis = lagrange_basis(3, gauss_legendre(4), nodes="gauss_lobatto")
    assert basis.nodes[0] == 0.0 and basis.nodes[-1] == 1.0
    assert np.abs(basis.values.sum(axis=0) - 1.0).max() <= 1e-13


# --------------------------------------------------------------------- dof map


def test_dof_counts_2d_p1():
    mesh = build_benchmark_mesh(2, 2, [])
    dm = build_dof_map(mesh, 1, components=2)
    assert dm.n_dofs == 18


def test_dof_counts_2d_p2():
    mesh = build_benchmark_mesh(2, 4, [])
    dm = build_dof_map(mesh, 2, components=2)
    assert dm.n_dofs == 162


def test_dof_counts_3d_p1():
    mesh = build_benchmark_mesh(3, 2, [])
    dm = build_dof_map(mesh, 1, components=3)
    assert dm.n_dofs == 81


def test_shared_nodes_are_shared():
    mesh = build_benchmark_mesh(2, 2, [])
    dm = build_dof_map(mesh, 2, components=2)
    # right edge of element 0 coincides with left edge of element 1
    grid0 = dm.cell_nodes[0].reshape(3, 3)
    grid1 = dm.cell_nodes[1].reshape(3, 3)
    assert np.array_equal(grid0[:, -1], grid1[:, 0])
    assert len(np.unique(dm.cell_nodes)) == dm.n_nodes


def test_bottom_constraints_cover_bottom_nodes():
    mesh = build_benchmark_mesh(2, 4, [])
    dm = build_dof_map(mesh, 2, components=2)
    cs = bottom_constraints(mesh, dm)
    coords = node_coordinates(mesh, dm)
    on_bottom = np.flatnonzero(np.abs(coords[:, 1]) < 1e-15)
    expected = sorted((on_bottom[:, None] * 2 + np.arange(2)).reshape(-1))
    assert sorted(cs.dofs) == expected


# ------------------------------------------------------------------- kernels


@pytest.mark.parametrize("dim,p", [(2, 1), (2, 3), (2, 8), (3, 2), (3, 4)])
def test_evaluate_matches_naive(dim, p):
    basis = lagrange_basis(p, gauss_legendre(p + 1))
    rng = np.random.default_rng(p * 10 + dim)
    x = rng.standard_normal((4, (p + 1) ** dim, dim))
    vals = evaluate_values(basis, x, dim)
    grads = evaluate_gradients(basis, x, dim)
    ref_v = naive_evaluate_values(basis, x, dim)
    ref_g = naive_evaluate_gradients(basis, x, dim)
    scale = np.abs(ref_v).max()
    assert np.abs(vals - ref_v).max() <= 1e-13 * scale
    assert np.abs(grads - ref_g).max() <= 1e-13 * np.abs(ref_g).max()


def test_constant_field_reproduced():
    basis = lagrange_basis(3, gauss_legendre(4))
    x = np.full((1, 16, 2), 7.5)
    vals = evaluate_at_qpoints(basis, x, 2, mode="values")
    grads = evaluate_at_qpoints(basis, x, 2, mode="reference_gradients")
    assert np.allclose(vals, 7.5, atol=1e-13)
    assert np.abs(grads).max() <= 1e-12


def test_linear_field_exact():
    p, dim = 3, 2
    basis = lagrange_basis(p, gauss_legendre(p + 1))
    from hyperfree.mesh import lex_grid_points

    nodes = lex_grid_points([basis.nodes] * dim)  # (nloc, dim)
    a = np.array([2.0, -1.5])
    x = (nodes @ a)[None, :, None]  # scalar field a.xi
    vals = evaluate_values(basis, x, dim)
    grads = evaluate_gradients(basis, x, dim)
    qpts = lex_grid_points([basis.quadrature.points] * dim)
    assert np.allclose(vals[0, :, 0], qpts @ a, atol=1e-13)
    assert np.allclose(grads[0, :, 0, :], a[None, :], atol=1e-12)


@given(seed=st.integers(0, 10_000), p=st.integers(1, 4))
@settings(max_examples=25, deadline=None)
def test_integrate_matches_naive_and_adjoint(seed, p):
    dim = 2
    basis = lagrange_basis(p, gauss_legendre(p + 1))
    rng = np.random.default_rng(seed)
    n_el, nloc, nq = 3, (p + 1) ** dim, (p + 1) ** dim
    jxw = rng.random((n_el, nq)) + 0.5
    v = rng.standard_normal((n_el, nq, 2))
    g = rng.standard_normal((n_el, nq, 2, dim))
    out = integrate_testfunctions(basis, jxw, dim, values=v, gradients=g)
    ref = naive_integrate(basis, jxw, dim, values=v, gradients=g)
    assert np.abs(out - ref).max() <= 1e-13 * max(np.abs(ref).max(), 1.0)

    # adjointness: <evaluate(x), y>_JxW == <x, integrate(y)>
    x = rng.standard_normal((n_el, nloc, 2))
    ex = evaluate_values(basis, x, dim)
    lhs = np.sum(ex * v * jxw[:, :, None])
    rhs = np.sum(x * integrate_testfunctions(basis, jxw, dim, values=v))
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_integrate_partition_of_unity():
    p, dim = 2, 2
    mesh = build_benchmark_mesh(2, 2, [], side=1.0)
    basis = lagrange_basis(p, gauss_legendre(p + 1))
    from hyperfree.mesh import compute_geometry_cache

    geo = compute_geometry_cache(mesh, basis.quadrature)
    ones = np.ones((mesh.n_elements, (p + 1) ** dim, 1))
    local = integrate_testfunctions(basis, geo.jxw, dim, values=np.ones((4, 9, 1)))
    # sum over all test functions re-assembles the measure
    assert local.sum() == pytest.approx(1.0, rel=1e-13)
    del ones


def test_integrate_requires_data():
    basis = lagrange_basis(1, gauss_legendre(2))
    with pytest.raises(ValueError):
        integrate_testfunctions(basis, np.ones((1, 4)), 2)


# --------------------------------------------------------- local-global scatter


def test_distribute_zero_is_zero():
    mesh = build_benchmark_mesh(2, 2, [])
    dm = build_dof_map(mesh, 1, components=2)
    cs = bottom_constraints(mesh, dm)
    out = distribute_local_to_global(np.zeros((4, 4, 2)), dm, cs)
    assert np.all(out == 0.0)


def test_distribute_single_element_identity():
    mesh = build_benchmark_mesh(2, 2, [])
    dm = build_dof_map(mesh, 1, components=2)
    from hyperfree.fespace import ConstraintSet

    cs = ConstraintSet.from_dofs(dm.n_dofs, np.array([], dtype=int))
    local = np.zeros((4, 4, 2))
    local[0] = np.arange(8).reshape(4, 2)
    out = distribute_local_to_global(local, dm, cs)
    got = out.reshape(dm.n_nodes, 2)[dm.cell_nodes[0]]
    assert np.array_equal(got, local[0])


def test_distribute_shared_face_sums():
    mesh = build_benchmark_mesh(2, 2, [])
    dm = build_dof_map(mesh, 1, components=2)
    from hyperfree.fespace import ConstraintSet

    cs = ConstraintSet.from_dofs(dm.n_dofs, np.array([], dtype=int))
    local = np.zeros((4, 4, 2))
    local[0, :, 0] = 1.0  # element 0 contributes 1 at each of its nodes
    local[1, :, 0] = 2.0
    out = distribute_local_to_global(local, dm, cs).reshape(dm.n_nodes, 2)
    shared = np.intersect1d(dm.cell_nodes[0], dm.cell_nodes[1])
    assert np.allclose(out[shared, 0], 3.0)
    only0 = np.setdiff1d(dm.cell_nodes[0], dm.cell_nodes[1])
    assert np.allclose(out[only0, 0], 1.0)


def test_distribute_drops_constrained_rows():
    mesh = build_benchmark_mesh(2, 2, [])
    dm = build_dof_map(mesh, 1, components=2)
    cs = bottom_constraints(mesh, dm)
    local = np.ones((4, 4, 2))
    out = distribute_local_to_global(local, dm, cs)
    assert np.all(out[cs.mask] == 0.0)
    assert np.any(out[~cs.mask] != 0.0)


def test_gather_roundtrip():
    mesh = build_benchmark_mesh(2, 2, [])
    dm = build_dof_map(mesh, 2, components=2)
    rng = np.random.default_rng(0)
    u = rng.standard_normal(dm.n_dofs)
    loc = gather_local(u, dm)
    assert loc.shape == (4, 9, 2)
    assert np.array_equal(loc[2, 4], u.reshape(-1, 2)[dm.cell_nodes[2, 4]])


# -------------------------------------------------------------- FLOP accounting


def test_flop_count_deterministic():
    basis = lagrange_basis(3, gauss_legendre(4))
    rng = np.random.default_rng(0)
    x = rng.standard_normal((5, 16, 2))
    f1 = measure(evaluate_gradients, basis, x, 2)
    f2 = measure(evaluate_gradients, basis, x, 2)
    assert f1 == f2 > 0
    FLOPS.reset()
    evaluate_gradients(basis, x, 2)  # counting disabled
    assert FLOPS.count == 0


def test_evaluate_flop_exponent_2d():
    degrees = [1, 2, 4, 6, 8]
    flops = []
    for p in degrees:
        basis = lagrange_basis(p, gauss_legendre(p + 1))
        x = np.zeros((1, (p + 1) ** 2, 2))
        flops.append(measure(evaluate_gradients, basis, x, 2))
    slope = np.polyfit(np.log([p + 1 for p in degrees]), np.log(flops), 1)[0]
    assert abs(slope - 3.0) <= 0.3


def test_evaluate_flop_exponent_3d():
    degrees = [1, 2, 3, 4]
    flops = []
    for p in degrees:
        basis = lagrange_basis(p, gauss_legendre(p + 1))
        x = np.zeros((1, (p + 1) ** 3, 3))
        flops.append(measure(evaluate_gradients, basis, x, 3))
    slope = np.polyfit(np.log([p + 1 for p in degrees]), np.log(flops), 1)[0]
    assert abs(slope - 4.0) <= 0.3
