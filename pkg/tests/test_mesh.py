import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bhfreg.errors import ObtuseDegenerate, SingularFace, TopologyError, ValidationError
from bhfreg.mesh import (DISK, PlanarEmbedding, TriMesh, derivative_matrices, discrete_curvatures,
                         face_gradient, signed_areas, vertex_area, vertex_derivatives)
from bhfreg.synthetic import disk_mesh, icosphere


def tri_embed(coords, surface=None):
    z = np.asarray(coords, complex)
    X = np.column_stack([z.real, z.imag, np.zeros(len(z))]) if surface is None else surface
    mesh = TriMesh(X, [[0, 1, 2]])
    return PlanarEmbedding(mesh, z, DISK, validate=False)


def test_tetrahedron_is_closed_genus0():
    V = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]
    F = [[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]
    m = TriMesh(V, F)
    assert m.is_closed and m.n_faces == 4 and len(m.edges) == 6


def test_rejects_bad_topology():
    V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [0.5, 0.5, 1]], float)
    with pytest.raises(TopologyError, match="out of range"):
        TriMesh(V, [[0, 1, 7]])
    with pytest.raises(TopologyError, match="repeats"):
        TriMesh(V, [[0, 1, 1]])
    with pytest.raises(TopologyError, match="zero area"):
        TriMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
    with pytest.raises(TopologyError, match="non-manifold edge") as exc:
        TriMesh(V, [[0, 1, 2], [1, 0, 3], [0, 1, 4]])
    assert exc.value.element == (0, 1)
    with pytest.raises(TopologyError, match="orientation"):
        TriMesh(V[:4], [[0, 1, 2], [0, 1, 3]])


def test_rejects_annulus():
    # strip closed into a ring: two boundary loops
    n = 8
    t = 2 * np.pi * np.arange(n) / n
    V = np.concatenate([np.column_stack([np.cos(t), np.sin(t), 0 * t]),
                        np.column_stack([2 * np.cos(t), 2 * np.sin(t), 0 * t])])
    F = []
    for i in range(n):
        j = (i + 1) % n
        F += [[i, n + i, n + j], [i, n + j, j]]
    with pytest.raises(TopologyError, match="boundary loops"):
        TriMesh(V, F)


def test_face_gradient_single_triangle():
    e = tri_embed([0, 1, 1j])
    np.testing.assert_allclose(face_gradient(e, np.array([0.0, 1.0, 4.0]))[0], [1, 4], atol=1e-15)


def test_face_gradient_collinear_image_raises():
    e = tri_embed([0, 1, 2], surface=[[0, 0, 0], [1, 0, 0], [0, 1, 0]])
    with pytest.raises(SingularFace):
        face_gradient(e, np.zeros(3))


def test_constant_and_linear_fields(disk300):
    z = disk300.coords
    np.testing.assert_allclose(face_gradient(disk300, np.full(len(z), 2.5)), 0, atol=1e-12)
    d = vertex_derivatives(disk300, 3 * z.real - 2 * z.imag)
    np.testing.assert_allclose(d, np.tile([3.0, -2.0], (len(z), 1)), atol=1e-10)


def test_vertex_derivative_is_one_ring_mean(disk300):
    z = disk300.coords
    f = z.real ** 2
    d = vertex_derivatives(disk300, f)
    F = disk300.mesh.faces
    for v in [0, 17, 120, len(z) - 1]:
        ring = np.flatnonzero((F == v).any(1))
        g = []
        for a, b, c in F[ring]:
            A = np.array([[z[b].real - z[a].real, z[b].imag - z[a].imag],
                          [z[c].real - z[a].real, z[c].imag - z[a].imag]])
            g.append(np.linalg.solve(A, [f[b] - f[a], f[c] - f[a]]))
        np.testing.assert_allclose(d[v], np.mean(g, axis=0), atol=1e-12)


def test_derivative_matrices_match(disk300):
    rng = np.random.default_rng(0)
    f = rng.standard_normal(disk300.n_vertices)
    Dx, Dy = derivative_matrices(disk300)
    d = vertex_derivatives(disk300, f)
    np.testing.assert_allclose(Dx @ f, d[:, 0], atol=1e-12)
    np.testing.assert_allclose(Dy @ f, d[:, 1], atol=1e-12)


def test_vertex_area_examples():
    e = tri_embed([0, 2, 1j])
    np.testing.assert_allclose(vertex_area(e), [1 / 3] * 3)
    z = np.array([0, 1, 1j, -0.5j])
    mesh = TriMesh(np.column_stack([z.real, z.imag, 0 * z.real]), [[0, 1, 2], [0, 3, 1]])
    e = PlanarEmbedding(mesh, z, DISK, validate=False)
    assert vertex_area(e)[0] == pytest.approx((0.5 + 0.25) / 3)


def test_vertex_area_sum(disk300):
    total = np.sum(np.abs(signed_areas(disk300.coords, disk300.mesh.faces)))
    assert abs(vertex_area(disk300).sum() - total) <= 1e-10 * total


def test_embedding_invariants():
    e = disk_mesh(200)
    with pytest.raises(ValidationError, match="outside the unit disk"):
        e.with_coords(e.coords * 1.01)
    z = e.coords.copy()
    bnd = e.mesh.boundary_loops[0]
    z[bnd[0]] *= 0.999
    with pytest.raises(ValidationError, match="unit circle"):
        e.with_coords(z)
    with pytest.raises(ValidationError, match="flipped"):
        e.with_coords(np.conj(e.coords))


def _curvature_error(sub):
    m = icosphere(sub, radius=2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ObtuseDegenerate)
        H, K = discrete_curvatures(m)
    return np.mean(np.abs(H - 0.5) / 0.5), np.mean(np.abs(K - 0.25) / 0.25)


def test_icosphere_curvature_converges():
    h3, k3 = _curvature_error(3)
    h4, k4 = _curvature_error(4)
    assert h4 < h3 and k4 < k3
    assert h4 < 0.05 and k4 < 0.05


def test_planar_patch_curvature():
    e = disk_mesh(300, jitter=0.1, seed=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ObtuseDegenerate)
        H, K = discrete_curvatures(e.mesh)
    assert np.abs(H).max() < 1e-10 and np.abs(K).max() < 1e-10


def test_half_cylinder_curvature():
    r, nu, nv = 0.5, 40, 30
    u, v = np.meshgrid(np.linspace(0, np.pi, nu), np.linspace(0, 2, nv))
    X = np.column_stack([r * np.cos(u.ravel()), r * np.sin(u.ravel()), v.ravel()])
    F = []
    for j in range(nv - 1):
        for i in range(nu - 1):
            a, b, c, d = j * nu + i, j * nu + i + 1, (j + 1) * nu + i, (j + 1) * nu + i + 1
            F += [[a, c, b], [b, c, d]]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ObtuseDegenerate)
        H, K = discrete_curvatures(TriMesh(X, F))
    inner = ~TriMesh(X, F).boundary_mask
    assert np.median(np.abs(H[inner])) == pytest.approx(1 / (2 * r), rel=1e-2)
    assert np.abs(K[inner]).max() < 1e-8


@settings(max_examples=15, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), c=st.floats(-5, 5), seed=st.integers(0, 50))
def test_affine_exactness_property(a, b, c, seed):
    e = disk_mesh(120, jitter=0.2, seed=seed)
    z = e.coords
    d = vertex_derivatives(e, a * z.real + b * z.imag + c)
    np.testing.assert_allclose(d[:, 0], a, atol=1e-9)
    np.testing.assert_allclose(d[:, 1], b, atol=1e-9)
