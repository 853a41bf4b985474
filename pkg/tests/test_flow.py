import numpy as np
import pytest

from bhfreg.beltrami import DiscreteMap, compute_bc
from bhfreg.errors import FoldDetected
from bhfreg.flow import FlowSchedule, KernelMatrices, kernel_row, reconstruct, variation
from bhfreg.mesh import vertex_area
from bhfreg.synthetic import disk_mesh, origin_vertex, sphere_pair, unit_vertex


@pytest.fixture(scope="module")
def smooth(disk300):
    z = disk300.coords
    mu = 0.2 * (0.5 + 0.5 * np.abs(z) ** 2) * np.exp(1j * z.real)
    nu = (1 + z ** 2) * np.exp(-np.abs(z) ** 2) + 0.3j * np.conj(z)
    return mu, nu


def test_schedule_validation():
    assert FlowSchedule(20).fraction == 0.05
    with pytest.raises(ValueError):
        FlowSchedule(0)


def test_kernel_row_vanishes_at_gauge_vertices(disk300, smooth):
    f = DiscreteMap.identity(disk300)
    _, nu = smooth
    for w in (origin_vertex(disk300), unit_vertex(disk300)):
        row = kernel_row(f, nu, w)
        assert np.all(row.values == 0)


def test_kernel_row_single_vertex(disk300):
    f = DiscreteMap.identity(disk300)
    z = disk300.coords
    z0 = 57
    nu = np.zeros(len(z), complex)
    nu[z0] = 0.3 - 0.1j
    for w in (12, 140, 250):
        row = kernel_row(f, nu, w)
        a, b = z[z0], z[w]
        want = -b * (b - 1) / np.pi * (nu[z0] / (a * (a - 1) * (a - b))
                                       + np.conj(nu[z0]) / (np.conj(a) * (1 - np.conj(a)) * (1 - np.conj(a) * b)))
        # f_z = 1 up to rounding for the identity
        assert row.values[z0] == pytest.approx(want, rel=1e-12)
        assert np.count_nonzero(row.values) == 1


def test_kernel_real_decomposition(disk300, smooth):
    mu, nu = smooth
    f = reconstruct(mu, disk300, FlowSchedule(5))
    row = kernel_row(f, nu, 77)
    G1, G2, G3, G4 = row.g
    np.testing.assert_allclose(row.values.real, G1 * nu.real + G2 * nu.imag, atol=1e-12)
    np.testing.assert_allclose(row.values.imag, G3 * nu.real + G4 * nu.imag, atol=1e-12)


def test_lumped_variation_is_row_sum(disk300, smooth):
    mu, nu = smooth
    f = reconstruct(mu, disk300, FlowSchedule(5))
    V = variation(f, nu, quadrature="lumped")
    A = vertex_area(disk300)
    for w in (3, 99, 201):
        assert V[w] == pytest.approx(np.sum(kernel_row(f, nu, w).values * A), rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("quadrature", ["lumped", "corrected"])
def test_variation_linearity_and_gauge(disk300, smooth, quadrature):
    mu, nu = smooth
    f = reconstruct(mu, disk300, FlowSchedule(5))
    K = KernelMatrices(f, quadrature)
    assert np.all(K.apply(np.zeros_like(nu)) == 0)
    np.testing.assert_allclose(K.apply(2.5 * nu), 2.5 * K.apply(nu), rtol=1e-12, atol=1e-14)
    V = K.apply(nu)
    assert V[origin_vertex(disk300)] == 0 and V[unit_vertex(disk300)] == 0


@pytest.mark.parametrize("quadrature", ["lumped", "corrected"])
def test_adjoint_identity(disk300, smooth, quadrature):
    mu, nu = smooth
    f = reconstruct(mu, disk300, FlowSchedule(5))
    K = KernelMatrices(f, quadrature)
    rng = np.random.default_rng(0)
    c = rng.standard_normal(len(nu)) + 1j * rng.standard_normal(len(nu))
    A = vertex_area(disk300)
    lhs = np.sum(A * np.real(np.conj(c) * K.apply(nu)))
    rhs = np.sum(A * np.real(np.conj(K.adjoint(c)) * nu))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_reconstruct_zero_is_identity(disk300):
    f = reconstruct(np.zeros(disk300.n_vertices), disk300)
    assert np.array_equal(f.values, disk300.coords)


def test_reconstruct_keeps_gauge_and_is_deterministic(disk300, smooth):
    mu, _ = smooth
    f = reconstruct(mu, disk300)
    g = reconstruct(mu, disk300)
    assert np.array_equal(f.values, g.values)
    assert abs(f.values[origin_vertex(disk300)]) <= 1e-8
    assert abs(f.values[unit_vertex(disk300)] - 1) <= 1e-8
    bnd = disk300.mesh.boundary_mask
    np.testing.assert_allclose(np.abs(f.values[bnd]), 1, atol=1e-14)
    assert len(f.flipped_faces()) == 0


def test_reconstruct_fold_detected():
    e = disk_mesh(300)
    z = e.coords
    mu = 0.97 * np.exp(8j * z.real)
    with pytest.raises(FoldDetected):
        reconstruct(mu, e, FlowSchedule(1), quadrature="lumped")


def test_self_consistency_disk(disk1k):
    z = disk1k.coords
    mu = 0.3 * np.exp(-np.abs(z) ** 2) * np.exp(2j * z.imag)
    f = reconstruct(mu, disk1k)
    got = compute_bc(f).values
    assert np.mean(np.abs(got - mu)) <= 0.05


def test_self_consistency_sphere():
    a, _ = sphere_pair(3)
    w = a.coords
    act = a.active_vertices
    mu = np.zeros(a.n_vertices, complex)
    mu[act] = 0.2 * np.exp(-np.abs(w[act] - 0.5) ** 2)
    f = reconstruct(mu, a)
    assert np.isinf(f.values[a.pole])
    assert f.values[np.argmin(np.abs(w))] == pytest.approx(0, abs=1e-8)
    assert f.values[np.argmin(np.abs(w - 1))] == pytest.approx(1, abs=1e-8)
    got = compute_bc(f).values
    assert np.mean(np.abs(got - mu)[act]) <= 0.05
    assert len(f.flipped_faces()) == 0
