import numpy as np
import pytest

from bhfreg.beltrami import BeltramiCoefficient, DiscreteMap, compute_bc
from bhfreg.errors import ConfigError, IndexOutOfRange, ValidationError
from bhfreg.flow import FlowSchedule, KernelMatrices, reconstruct
from bhfreg.mesh import vertex_area
from bhfreg.registration import (EnergyParams, LandmarkSet, _FeatureObjective, _ShapeObjective, delta_mask,
                                 descent_density, feature_energy, landmark_energy, landmark_initial_map,
                                 masked_descent, register_features, register_geometry, register_landmarks,
                                 shape_energy, surface_curvatures)
from bhfreg.synthetic import disk_mesh, feature_fixture, landmark_fixture, sphere_pair

rng = np.random.default_rng(5)


@pytest.mark.parametrize("kw", [dict(dt=0), dict(epsilon=-1), dict(alpha=0, beta=0, gamma=0),
                                dict(beta=-1), dict(delta_margin=1.0), dict(max_iters=-1)])
def test_energy_params_validation(kw):
    with pytest.raises(ConfigError):
        EnergyParams(**kw)


def test_energy_params_defaults():
    p = EnergyParams()
    assert (p.alpha, p.beta, p.gamma, p.dt, p.epsilon, p.max_iters) == (1, 2, 2, 0.1, 1e-6, 500)


def test_feature_energy_closed_form(disk300):
    f = DiscreteMap.identity(disk300)
    z = disk300.coords
    area = vertex_area(disk300).sum()
    F2 = 2 * z.real - z.imag
    E, comps = feature_energy(f, np.zeros(len(z)), F2 + 0.5, F2)
    assert comps["data"] == pytest.approx(0.25 * area, rel=1e-12)
    assert comps["conformality"] == 0 and E == comps["data"]
    E, comps = feature_energy(f, np.full(len(z), 0.3j), F2, F2)
    assert comps["data"] == pytest.approx(0, abs=1e-20)
    assert E == pytest.approx(0.09 * area, rel=1e-12)


def test_shape_energy_closed_form():
    a, _ = sphere_pair(2)
    f = DiscreteMap.identity(a)
    A = vertex_area(a)[a.active_vertices].sum()
    H, K = surface_curvatures(a.mesh)
    mu = np.zeros(a.n_vertices)
    E, _ = shape_energy(f, mu, H, K, H, K, EnergyParams())
    assert E == 0
    E, comps = shape_energy(f, mu, H + 0.1, K, H, K, EnergyParams(beta=3))
    assert comps["mean_curvature"] == pytest.approx(3 * 0.01 * A, rel=1e-9)
    assert comps["gauss_curvature"] == 0


def test_landmark_energy_is_mu_norm(disk300):
    f = DiscreteMap.identity(disk300)
    E, _ = landmark_energy(f, np.full(disk300.n_vertices, 0.2))
    assert E == pytest.approx(0.04 * vertex_area(disk300).sum())


def test_features_fixed_point(disk300):
    F = disk300.coords.real ** 2
    run = register_features(disk300, disk300, F, F)
    assert run.termination == "converged" and run.iteration == 0 and run.energies[-1] < 1e-30


def test_geometry_identical_terminates():
    a, _ = sphere_pair(2)
    run = register_geometry(a, a)
    assert run.termination == "converged" and run.iteration == 0 and run.energies[-1] == 0


def test_geometry_domain_mismatch(disk300):
    a, _ = sphere_pair(1)
    with pytest.raises(ConfigError):
        register_geometry(disk300, a)


def test_landmark_set_errors(disk300):
    with pytest.raises(ValidationError):
        LandmarkSet([([1, 2, 3], [0.1, 0.2])])
    with pytest.raises(IndexOutOfRange):
        LandmarkSet([([1, disk300.n_vertices], [0.1, 0.2])]).validate(disk300)
    with pytest.raises(ValidationError):
        LandmarkSet([([1], [1.5])]).validate(disk300)
    assert len(LandmarkSet()) == 0 and len(LandmarkSet().indices) == 0


def test_landmark_initial_map_cases(disk1k):
    z = disk1k.coords
    assert np.array_equal(landmark_initial_map(disk1k, LandmarkSet()).values, z)
    curves = landmark_fixture(disk1k, 1)
    still = LandmarkSet([(i, z[i]) for i, _ in curves])
    np.testing.assert_allclose(landmark_initial_map(disk1k, still).values, z, atol=1e-10)
    L = LandmarkSet(curves)
    f = landmark_initial_map(disk1k, L)
    i, t = L.curves[0]
    assert np.array_equal(f.values[i], t)
    assert len(f.flipped_faces()) == 0
    assert f.values[np.flatnonzero(z == 0)[0]] == 0


def test_no_landmarks_is_identity(disk300):
    run = register_landmarks(disk300, LandmarkSet())
    assert run.iteration == 0 and run.energies[-1] == pytest.approx(0, abs=1e-25)


def test_delta_mask_profile(disk1k):
    L = LandmarkSet(landmark_fixture(disk1k, 1))
    w = delta_mask(disk1k, L, radius=0.2)
    d = np.abs(disk1k.coords[:, None] - disk1k.coords[L.indices][None]).min(1)
    assert np.all(w[d <= 0.1] == 0) and np.all(w[d >= 0.2] == 1)
    assert np.all((w >= 0) & (w <= 1))


def test_landmark_pins_never_move():
    e = disk_mesh(400)
    L = LandmarkSet(landmark_fixture(e, 1))
    seen = []
    run = register_landmarks(e, L, EnergyParams(max_iters=10),
                             callback=lambda r: seen.append(r.map.values[L.indices].copy()))
    assert seen
    for v in seen:
        assert np.array_equal(v, L.curves[0][1])


# directional derivatives: the predicted change -sum A Re(conj(d) nu) must match
# a central difference of the energy along nu

def _directional_errors(energy, d, area, n, pick, t=1e-5):
    out = []
    for v in pick:
        nu = np.zeros(n, complex)
        nu[v] = np.exp(2j * np.pi * rng.uniform())
        pred = -np.sum(area * np.real(np.conj(d) * nu))
        fd = (energy(t * nu) - energy(-t * nu)) / (2 * t)
        out.append((pred, fd))
    return np.array(out)


def _moved(f, K, mu):
    def energy_of(obj):
        return lambda dn: obj.energy(f.with_values(f.values + K.apply(dn)), mu + dn)[0]
    return energy_of


def test_feature_descent_matches_finite_difference():
    a, b, F1, F2 = feature_fixture(300, 320)
    z = a.coords
    mu = 0.1 * np.exp(-np.abs(z) ** 2) * np.exp(1j * z.real)
    f = reconstruct(mu, a, FlowSchedule(10), target=b, quadrature="lumped")
    obj = _FeatureObjective(b, F1, F2)
    K = KernelMatrices(f, "lumped")
    d = descent_density(f, mu, obj, K)
    pick = rng.choice(np.flatnonzero(~a.mesh.boundary_mask), 8, replace=False)
    r = _directional_errors(_moved(f, K, mu)(obj), d, vertex_area(a), a.n_vertices, pick)
    assert np.all(np.abs(r[:, 0] - r[:, 1]) <= 5e-2 * np.abs(r[:, 1]))


def test_shape_descent_matches_finite_difference():
    a, b = sphere_pair(2)
    w = a.coords
    act = a.active_vertices
    mu = np.zeros(a.n_vertices, complex)
    mu[act] = 0.1 * np.exp(-np.abs(w[act]) ** 2)
    f = reconstruct(mu, a, FlowSchedule(10), target=b, quadrature="lumped")
    H1, K1 = surface_curvatures(a.mesh)
    H2, K2 = surface_curvatures(b.mesh)
    obj = _ShapeObjective(b, H1, K1, H2, K2, EnergyParams())
    K = KernelMatrices(f, "lumped")
    d = descent_density(f, mu, obj, K)
    pick = rng.choice(np.flatnonzero(act & (np.abs(w) < 3)), 8, replace=False)
    r = _directional_errors(_moved(f, K, mu)(obj), d, vertex_area(a), a.n_vertices, pick)
    assert np.all(np.sign(r[:, 0]) == np.sign(r[:, 1]))
    assert np.all(np.abs(r[:, 0] - r[:, 1]) <= 0.1 * np.abs(r[:, 1]))


def test_landmark_descent_matches_finite_difference():
    e = disk_mesh(500)
    L = LandmarkSet(landmark_fixture(e, 1))
    f = landmark_initial_map(e, L)
    mu = compute_bc(f)
    delta = delta_mask(e, L)
    K = KernelMatrices(f, "lumped")
    d = masked_descent(f, mu, delta, K)

    def energy(dn):
        v = f.values + delta * K.apply(dn)
        v[L.indices] = f.values[L.indices]
        g = f.with_values(v)
        return landmark_energy(g, compute_bc(g, strict=False))[0]

    pick = rng.choice(np.flatnonzero(~e.mesh.boundary_mask), 8, replace=False)
    r = _directional_errors(energy, d, vertex_area(e), e.n_vertices, pick)
    assert np.all(np.sign(r[:, 0]) == np.sign(r[:, 1]))
    assert np.all(np.abs(r[:, 0] - r[:, 1]) <= 0.1 * np.abs(r[:, 1]))


def test_feature_run_trace_records():
    a, b, F1, F2 = feature_fixture(300, 320)
    run = register_features(a, b, F1, F2, EnergyParams(max_iters=5))
    E = run.energies
    assert run.iteration == len(run.trace) - 1 <= 5
    assert np.all(np.diff(E) <= 0)
    for row in run.trace:
        assert {"total", "data", "conformality", "dt", "sup_mu", "flipped"} <= set(row)
    assert isinstance(run.mu, BeltramiCoefficient)
