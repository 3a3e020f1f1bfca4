import numpy as np
import pytest

from oldroyd_cq.core import ModelParams, ScalarField, bubble_field, case_c, half_indicator_field
from oldroyd_cq.fem import (MissingGradientError, _assemble_cached, assemble, assemble_full,
                            element_data, evaluate, field_l2_norm, h1_distance_to_field, initial_vector, interpolate, interpolated_load,
                            l2_distance_to_field, l2_project, load_vector, ritz_project,
                            system_for)
from oldroyd_cq.mesh import build_uniform, nested_inject


def eoc(errors):
    e = np.asarray(errors)
    return np.log2(e[:-1] / e[1:])


def dense_five_point(m):
    n = m - 1
    T = 2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    return np.kron(np.eye(n), T) + np.kron(T, np.eye(n))


@pytest.mark.parametrize("m", [2, 4, 9])
def test_stiffness_is_five_point_stencil(m):
    K = system_for(m).K.toarray()
    assert np.max(np.abs(K - dense_five_point(m))) < 1e-14


def test_center_row_m4():
    s = system_for(4)
    center = s.mesh.interior_index[2 + 2 * 5]
    row = s.K.getrow(center)
    assert row.nnz == 5
    assert row[0, center] == 4.0
    assert sorted(row.data.tolist()) == [-1.0, -1.0, -1.0, -1.0, 4.0]


def test_mass_row_sums_and_total():
    s = system_for(4)
    center = s.mesh.interior_index[2 + 2 * 5]
    assert s.M.getrow(center).sum() == pytest.approx(1 / 16, abs=1e-15)
    Mf, Kf = assemble_full(build_uniform(6))
    assert Mf.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.max(np.abs(np.asarray(Kf.sum(axis=1)).ravel())) < 1e-13
    rows = np.asarray(system_for(8).M.sum(axis=1)).ravel()
    full_support = np.all((system_for(8).mesh.dof_points > 1.5 / 8)
                          & (system_for(8).mesh.dof_points < 6.5 / 8), axis=1)
    assert np.allclose(rows[full_support], 1 / 64, atol=1e-15)


@pytest.mark.parametrize("m", [3, 8])
def test_symmetric_positive_definite(m):
    s = system_for(m)
    for A in (s.M, s.K):
        assert abs(A - A.T).max() <= 1e-14
        assert np.linalg.eigvalsh(A.toarray()).min() > 0
    x = np.random.default_rng(0).standard_normal(s.n_dofs)
    assert x @ (s.K @ x) > 0


def test_load_vector_constants():
    s = system_for(4)
    assert np.all(load_vector(s.mesh, lambda x, y: np.zeros_like(x)) == 0)
    b = load_vector(s.mesh, lambda x, y: np.ones_like(x))
    center = s.mesh.interior_index[2 + 2 * 5]
    assert b[center] == pytest.approx(1 / 16, abs=1e-15)
    assert np.allclose(b, 1 / 16)


def test_load_vector_of_case_c_against_seven_point_rule():
    c = case_c(ModelParams(0.25, 0.75))
    mesh = build_uniform(16)
    b = load_vector(mesh, c.source, 0.5)
    ref = load_vector(mesh, c.source, 0.5, rule="seven")
    assert np.linalg.norm(b - ref) <= 1e-4 * np.linalg.norm(b)


def test_load_vector_exact_for_half_indicator_on_even_meshes():
    # the jump line is a mesh line, so the integrand is linear on every triangle
    mesh = build_uniform(8)
    f = half_indicator_field()
    assert np.allclose(load_vector(mesh, f), load_vector(mesh, f, rule="seven"), atol=1e-15)


def test_l2_project_identity_on_fe_space():
    s = system_for(8)
    c = np.random.default_rng(3).standard_normal(s.n_dofs)
    fh = ScalarField(lambda x, y: evaluate(s.mesh, c, np.column_stack([np.ravel(x), np.ravel(y)])
                                           ).reshape(np.shape(x)))
    assert np.max(np.abs(l2_project(s, fh, rule="seven") - c)) < 1e-10


def test_ritz_project_identity_on_fe_space():
    s = system_for(6)
    mesh = s.mesh
    c = np.random.default_rng(4).standard_normal(s.n_dofs)

    def value(x, y):
        pts = np.column_stack([np.ravel(x), np.ravel(y)])
        return evaluate(mesh, c, pts).reshape(np.shape(x))

    def gradient(x, y):
        # piecewise-constant gradient of the P1 function, sampled per triangle
        g = np.einsum("tk,tkd->td", mesh.to_full(c)[mesh.triangles], element_data(mesh).grads)
        return g[:, None, 0] * np.ones_like(x), g[:, None, 1] * np.ones_like(y)

    fh = ScalarField(value, gradient)
    assert np.max(np.abs(ritz_project(s, fh) - c)) < 1e-10


def test_l2_projection_is_idempotent():
    s = system_for(8)
    mesh = s.mesh
    c = l2_project(s, bubble_field(), rule="seven")
    fh = ScalarField(lambda x, y: evaluate(mesh, c, np.column_stack(
        [np.ravel(x), np.ravel(y)])).reshape(np.shape(x)))
    assert np.max(np.abs(l2_project(s, fh, rule="seven") - c)) < 1e-12


def test_half_indicator_projection_oscillates_near_jump():
    s = system_for(16)
    c = l2_project(s, half_indicator_field())
    p = s.mesh.dof_points
    row = c[np.isclose(p[:, 1], 0.5)]
    right = row[p[np.isclose(p[:, 1], 0.5), 0] > 0.5]
    assert right[0] < 0 < right[1]  # sign change next to the jump
    assert np.sum(np.diff(np.sign(right[:6])) != 0) >= 4
    assert row.max() > 1


def test_ritz_needs_gradient():
    with pytest.raises(MissingGradientError, match="l2_project"):
        ritz_project(system_for(4), half_indicator_field())


def test_projection_rates():
    v = bubble_field()
    pl2, rl2, rh1 = [], [], []
    for m in (8, 16, 32, 64):
        s = system_for(m)
        pl2.append(l2_distance_to_field(s.mesh, l2_project(s, v), v))
        r = ritz_project(s, v)
        rl2.append(l2_distance_to_field(s.mesh, r, v))
        rh1.append(h1_distance_to_field(s.mesh, r, v.gradient))
    for rates in (eoc(pl2), eoc(rl2)):
        assert np.all((rates >= 1.85) & (rates <= 2.15))
    assert np.all((eoc(rh1) >= 0.85) & (eoc(rh1) <= 1.15))


def test_evaluate():
    s = system_for(4)
    c = interpolate(s.mesh, bubble_field())
    assert np.allclose(evaluate(s.mesh, c, s.mesh.dof_points), c)
    tri = s.mesh.triangles[5]
    full = s.mesh.to_full(c)
    centroid = s.mesh.nodes[tri].mean(axis=0)
    assert evaluate(s.mesh, c, centroid[None])[0] == pytest.approx(full[tri].mean(), abs=1e-15)
    assert evaluate(s.mesh, c, [[0.0, 0.3]])[0] == 0.0
    fine = build_uniform(16)
    assert np.max(np.abs(evaluate(s.mesh, c, fine.dof_points)
                         - nested_inject(s.mesh, fine, c))) < 1e-14
    with pytest.raises(ValueError):
        evaluate(s.mesh, c, [[-0.5, 0.5]])


def test_initial_vector_choices():
    s = system_for(8)
    v = bubble_field()
    assert np.all(initial_vector(s, None) == 0)
    assert np.allclose(initial_vector(s, v), l2_project(s, v))
    assert np.allclose(initial_vector(s, v, "ritz"), ritz_project(s, v))
    assert np.allclose(initial_vector(s, v, "auto"), ritz_project(s, v))
    assert np.allclose(initial_vector(s, half_indicator_field(), "auto"),
                       l2_project(s, half_indicator_field()))
    assert np.allclose(initial_vector(s, v, "interpolate"), interpolate(s.mesh, v))
    with pytest.raises(ValueError):
        initial_vector(s, v, "nodal")


def test_interpolated_load_and_field_norm():
    s = system_for(8)
    one = lambda x, y: np.ones_like(x)  # noqa: E731
    assert np.allclose(interpolated_load(s, one), s.M @ np.ones(s.n_dofs))
    assert field_l2_norm(bubble_field()) == pytest.approx(1 / 30, rel=1e-10)
    assert field_l2_norm(half_indicator_field()) == pytest.approx(np.sqrt(0.5), rel=1e-12)


def test_assembly_is_bit_reproducible():
    s1 = assemble(build_uniform(8))
    s2 = _assemble_cached.__wrapped__(build_uniform.__wrapped__(8))
    assert (s1.M != s2.M).nnz == 0 and (s1.K != s2.K).nnz == 0
