import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from bhfreg.beltrami import (BeltramiCoefficient, DiscreteMap, compose_bc, compute_bc, dilation,
                             map_derivatives, project_admissible, reflect_coefficient)
from bhfreg.errors import DegenerateJacobian, NotAdmissible
from bhfreg.flow import disk_kernel, reconstruct, sphere_kernel
from bhfreg.param import PointLocator
from bhfreg.synthetic import disk_mesh


def test_identity_has_zero_bc(disk300):
    assert np.abs(compute_bc(DiscreteMap.identity(disk300)).values).max() < 1e-14


@pytest.mark.parametrize("k", [0.0, 0.2, 0.5, 0.3 - 0.4j])
def test_affine_map_bc(disk300, k):
    z = disk300.coords
    mu = compute_bc(DiscreteMap(z + k * np.conj(z), disk300))
    np.testing.assert_allclose(mu.values, k, atol=1e-10)
    np.testing.assert_allclose(dilation(mu), (1 + abs(k)) / (1 - abs(k)), atol=1e-9)


def test_dilation_values():
    np.testing.assert_allclose(dilation(np.array([0, 0.5j, -0.9])), [1, 3, 19])


def test_holomorphic_bc_vanishes_under_refinement():
    err = []
    for n in (300, 1200):
        e = disk_mesh(n)
        mu = compute_bc(DiscreteMap((e.coords + 2) ** 2, e))
        err.append(np.abs(mu.values[~e.mesh.boundary_mask]).max())
    assert err[1] < err[0] < 0.05


def test_affine_postcomposition_invariance(disk300):
    rng = np.random.default_rng(3)
    z = disk300.coords
    f = z + 0.2 * np.conj(z) ** 2 + 0.1 * z ** 2
    mu = compute_bc(DiscreteMap(f, disk300), strict=False).values
    for _ in range(5):
        a, b = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        got = compute_bc(DiscreteMap(a * f + b, disk300), strict=False).values
        np.testing.assert_allclose(got, mu, atol=1e-10)


def test_bc_errors(disk300):
    z = disk300.coords
    with pytest.raises(DegenerateJacobian):
        compute_bc(DiscreteMap(np.conj(z), disk300))
    with pytest.raises(NotAdmissible) as exc:
        compute_bc(DiscreteMap(z + 1.5 * np.conj(z), disk300))
    assert len(exc.value.vertices) == disk300.n_vertices
    with pytest.raises(NotAdmissible):
        BeltramiCoefficient(np.array([0.5, 1.0]))


def test_project_admissible_examples():
    v = np.array([0.4, 0.1j, -0.2])
    np.testing.assert_array_equal(project_admissible(v, 0.01).values, v)
    got = project_admissible(np.array([1.5 * np.exp(1j * np.pi / 3)]), 0.05).values[0]
    assert got == pytest.approx(0.95 * np.exp(1j * np.pi / 3), abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6), scale=st.floats(0.1, 10), delta=st.floats(0.001, 0.5))
def test_project_admissible_property(seed, scale, delta):
    rng = np.random.default_rng(seed)
    v = scale * (rng.standard_normal(500) + 1j * rng.standard_normal(500))
    p = project_admissible(v, delta)
    assert p.sup_norm <= 1 - delta
    keep = np.abs(v) > 0
    np.testing.assert_allclose(np.angle(p.values[keep]), np.angle(v[keep]), atol=1e-12)


def test_compose_same_coefficient_is_identity(disk1k):
    mu = np.full(disk1k.n_vertices, 0.15 + 0.05j)
    f = reconstruct(mu, disk1k)
    tau = compose_bc(mu, mu, f)
    assert np.abs(tau.values).max() < 1e-14


def test_compose_identity_special_case(disk1k):
    z = disk1k.coords
    mu = 0.1 * (1 + z.real) * np.exp(1j * z.imag)
    f = reconstruct(mu, disk1k)
    tau = compose_bc(mu, np.zeros_like(mu), f)
    p, _ = map_derivatives(f)
    special = -mu * p / np.conj(p)
    want = PointLocator(disk1k, coords=f.values).interpolate(z, special)
    np.testing.assert_allclose(tau.values, want, atol=1e-14)


def test_reflection_property():
    """Disk kernel integrated over the disk equals the sphere kernel of the
    reflected coefficient integrated over the plane (identity map, f_z = 1)."""
    w = 0.3 + 0.2j

    def nu(z):
        return 0.2 * z * (1 - z) * (1 + 0.3 * np.conj(z) + 0.2 * z ** 2)

    nut = reflect_coefficient(nu)

    def polar_int(fn, r0, r1):
        re = integrate.dblquad(lambda r, t: (fn(r, t)).real, 0, 2 * np.pi, r0, r1, epsabs=1e-9)[0]
        im = integrate.dblquad(lambda r, t: (fn(r, t)).imag, 0, 2 * np.pi, r0, r1, epsabs=1e-9)[0]
        return re + 1j * im

    def radius_to_circle(t):
        # |w + r e^{it}| = 1
        d = np.exp(1j * t)
        b = (np.conj(w) * d).real
        return -b + np.sqrt(b * b - abs(w) ** 2 + 1)

    def around_w(fn):
        # polar coordinates centered at the kernel's pole w cancel its 1/|z-w| singularity
        g = lambda r, t: fn(np.array([w + r * np.exp(1j * t)]))[0] * r
        re = integrate.dblquad(lambda r, t: g(r, t).real, 0, 2 * np.pi, 0, radius_to_circle, epsabs=1e-9)[0]
        im = integrate.dblquad(lambda r, t: g(r, t).imag, 0, 2 * np.pi, 0, radius_to_circle, epsabs=1e-9)[0]
        return re + 1j * im

    one = np.ones(1)
    lhs = around_w(lambda z: disk_kernel(z, one, nu(z), w))
    inner = around_w(lambda z: sphere_kernel(z, one, nu(z), w))

    def outer(s, t):
        # |z| = 1 / s, dA = ds dt / s^3
        z = np.array([np.exp(1j * t) / s])
        return sphere_kernel(z, one, nut(z), w)[0] / s ** 3

    rhs = inner + polar_int(outer, 0, 1)
    assert abs(lhs - rhs) < 1e-3
    assert abs(lhs) > 1e-2
