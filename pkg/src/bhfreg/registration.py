"""Variational registration over Beltrami coefficients.

Three optimizers share one backtracking engine:

* feature matching: E = sum A [(F1 - F2(f))^2 + |mu|^2]
* landmark matching: E = sum A |mu|^2 with landmark vertices pinned
* geometric matching: E = alpha |mu|^2 + beta (H1 - H2(f))^2 + gamma (K1 - K2(f))^2

Feature and geometric matching carry mu as state: mu moves along the descent
density, is projected to sup |mu| <= 1 - delta_margin, and the map follows by
the first-order flow V(f, mu_new - mu) with a periodic full reconstruction.
Landmark matching reads mu back from the map.  A step is accepted only if the
energy does not increase and no face flips; otherwise dt is halved.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .beltrami import BeltramiCoefficient, DiscreteMap, compute_bc, map_derivatives, project_admissible
from .errors import ConfigError, FoldDetected, IndexOutOfRange, StepFailed, ValidationError
from .flow import FlowSchedule, KernelMatrices, reconstruct, snap_to_domain
from .mesh import DISK, PlanarEmbedding, TriMesh, derivative_matrices, discrete_curvatures, vertex_area
from .param import PointLocator, _mean_value_weights, harmonic_fill

log = logging.getLogger(__name__)


@dataclass
class EnergyParams:
    alpha: float = 1.0
    beta: float = 2.0
    gamma: float = 2.0
    dt: float = 0.1
    epsilon: float = 1e-6
    max_iters: int = 500
    delta_margin: float = 0.02
    max_halvings: int = 8
    mask_radius: float | None = None
    quadrature: str = "lumped"
    n_steps: int = 20
    resync_every: int = 25

    def __post_init__(self):
        if self.dt <= 0 or self.epsilon <= 0:
            raise ConfigError("dt and epsilon must be positive")
        if min(self.alpha, self.beta, self.gamma) < 0 or max(self.alpha, self.beta, self.gamma) == 0:
            raise ConfigError("weights must be non-negative with at least one positive")
        if not 0 < self.delta_margin < 1:
            raise ConfigError("delta_margin must lie in (0, 1)")
        if self.max_iters < 0 or self.max_halvings < 0:
            raise ConfigError("iteration caps must be non-negative")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class LandmarkSet:
    """Landmark polylines: source vertex indices with target positions."""

    curves: list = field(default_factory=list)
    mask_radius: float | None = None

    def __post_init__(self):
        self.curves = [(np.asarray(i, dtype=np.int64), np.asarray(t, dtype=complex))
                       for i, t in self.curves]
        for i, t in self.curves:
            if i.shape != t.shape or i.ndim != 1:
                raise ValidationError("each curve needs one target per vertex index")

    def __len__(self):
        return len(self.curves)

    def validate(self, embed: PlanarEmbedding):
        n = embed.n_vertices
        for i, t in self.curves:
            if len(i) and (i.min() < 0 or i.max() >= n):
                raise IndexOutOfRange("landmark index outside the mesh", i[(i < 0) | (i >= n)])
            if embed.domain == DISK and np.any(np.abs(t) > 1 + 1e-9):
                raise ValidationError("landmark target outside the unit disk", i[np.abs(t) > 1 + 1e-9])

    @property
    def indices(self) -> np.ndarray:
        if not self.curves:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([i for i, _ in self.curves])


@dataclass
class RegistrationRun:
    map: DiscreteMap
    mu: BeltramiCoefficient
    params: EnergyParams
    trace: list = field(default_factory=list)
    iteration: int = 0
    termination: str = ""
    wall_time: float = 0.0

    @property
    def energies(self) -> np.ndarray:
        return np.array([r["total"] for r in self.trace])


# ---------------------------------------------------------------- energies

def _sample(locator: PointLocator, query: np.ndarray, field_: np.ndarray) -> np.ndarray:
    out = np.zeros(len(query), dtype=np.asarray(field_).dtype)
    ok = np.isfinite(query)
    out[ok] = locator.interpolate(query[ok], field_)
    return out


def feature_energy(f: DiscreteMap, mu, F1, F2, locator: PointLocator | None = None):
    """Lumped sum of (F1 - F2(f))^2 + |mu|^2; returns (total, components)."""
    loc = locator or PointLocator(f.target)
    A = vertex_area(f.source)
    r = np.asarray(F1, float) - _sample(loc, f.values, np.asarray(F2, float))
    m = np.abs(_vals(mu)) ** 2
    data = float(np.sum(A * r ** 2))
    conf = float(np.sum(A * m))
    return data + conf, {"data": data, "conformality": conf}


def shape_energy(f: DiscreteMap, mu, H1, K1, H2, K2, params: EnergyParams,
                 locator: PointLocator | None = None):
    """Weighted shape index; returns (total, components)."""
    loc = locator or PointLocator(f.target)
    A = vertex_area(f.source)
    act = f.source.active_vertices
    rH = np.where(act, H1 - _sample(loc, f.values, np.asarray(H2, float)), 0)
    rK = np.where(act, K1 - _sample(loc, f.values, np.asarray(K2, float)), 0)
    comps = {
        "conformality": params.alpha * float(np.sum(A * np.abs(_vals(mu)) ** 2)),
        "mean_curvature": params.beta * float(np.sum(A * rH ** 2)),
        "gauss_curvature": params.gamma * float(np.sum(A * rK ** 2)),
    }
    return sum(comps.values()), comps


def landmark_energy(f: DiscreteMap, mu):
    A = vertex_area(f.source)
    e = float(np.sum(A * np.abs(_vals(mu)) ** 2))
    return e, {"conformality": e}


def _sample_gradient(locator: PointLocator, query: np.ndarray, field_: np.ndarray) -> np.ndarray:
    # exact derivative of the interpolant, so c matches the energy actually evaluated
    out = np.zeros(len(query), dtype=complex)
    ok = np.isfinite(query)
    out[ok] = locator.gradient(query[ok], field_)
    return out


# ---------------------------------------------------------------- engine

class _Objective:
    """Energy of a map plus the data vector c of its first variation.

    The data term changes by -sum_w A_w Re(conj(c(w)) df(w)) under df.
    """

    alpha = 1.0

    def energy(self, f, mu):
        raise NotImplementedError

    def data_vector(self, f):
        raise NotImplementedError


class _FeatureObjective(_Objective):
    def __init__(self, target: PlanarEmbedding, F1, F2):
        self.F1 = np.asarray(F1, float)
        self.F2 = np.asarray(F2, float)
        self.loc = PointLocator(target)

    def energy(self, f, mu):
        return feature_energy(f, mu, self.F1, self.F2, self.loc)

    def data_vector(self, f):
        r = self.F1 - _sample(self.loc, f.values, self.F2)
        return 2 * r * _sample_gradient(self.loc, f.values, self.F2)


class _ShapeObjective(_Objective):
    def __init__(self, target: PlanarEmbedding, H1, K1, H2, K2, params: EnergyParams):
        self.H1, self.K1 = np.asarray(H1, float), np.asarray(K1, float)
        self.H2, self.K2 = np.asarray(H2, float), np.asarray(K2, float)
        self.params = params
        self.alpha = params.alpha
        self.loc = PointLocator(target)

    def energy(self, f, mu):
        return shape_energy(f, mu, self.H1, self.K1, self.H2, self.K2, self.params, self.loc)

    def data_vector(self, f):
        p = self.params
        act = f.source.active_vertices
        rH = self.H1 - _sample(self.loc, f.values, self.H2)
        rK = self.K1 - _sample(self.loc, f.values, self.K2)
        c = 2 * (p.beta * rH * _sample_gradient(self.loc, f.values, self.H2)
                 + p.gamma * rK * _sample_gradient(self.loc, f.values, self.K2))
        return np.where(act, c, 0)


def descent_density(f: DiscreteMap, mu, objective: _Objective, kernel: KernelMatrices):
    """Steepest-descent density for mu: adjoint kernel sum of c minus 2 alpha mu."""
    return kernel.adjoint(objective.data_vector(f)) - 2 * objective.alpha * _vals(mu)


def _try_map(values, mu_new, f: DiscreteMap, params: EnergyParams):
    """Snap and check a candidate; returns (map, mu) or None.

    With ``mu_new`` None the coefficient is read back from the map and must
    respect the margin; otherwise ``mu_new`` (already projected) is the state
    and the map only has to stay fold-free with |bc| < 1.
    """
    cand = f.with_values(snap_to_domain(values, f.source))
    if len(cand.flipped_faces()):
        return None
    bc = compute_bc(cand, strict=False)
    if mu_new is None:
        if not bc.sup_norm <= 1 - params.delta_margin:
            return None
        return cand, bc
    if not bc.sup_norm < 1:
        return None
    return cand, mu_new


def _record(run: RegistrationRun, total, comps, dt, extra=None):
    row = {"iteration": run.iteration, "total": total, **comps, "dt": dt,
           "sup_mu": run.mu.sup_norm, "flipped": int(len(run.map.flipped_faces()))}
    if extra:
        row.update(extra)
    run.trace.append(row)


def _step(run: RegistrationRun, propose, energy, E, dt, extra=None):
    """One accepted iteration with backtracking; returns (energy, dt used).

    ``propose(kernel, dt)`` returns candidate map values for step size dt and
    the new coefficient state (None to read it back from the map).
    """
    p = run.params
    kernel = KernelMatrices(run.map, p.quadrature)
    for _ in range(p.max_halvings + 1):
        got = _try_map(*propose(kernel, dt), run.map, p)
        if got is not None:
            E_new, comps = energy(*got)
            if E_new <= E:
                run.map, run.mu = got
                run.iteration += 1
                _record(run, E_new, comps, dt, extra(run.map) if extra else None)
                return E_new, dt
        dt *= 0.5
    raise StepFailed(f"no admissible decrease after {p.max_halvings} halvings")


def _resync(run: RegistrationRun, energy, E, extra=None):
    """Replace the map by a full reconstruction from the coefficient state,
    keeping it only if it is fold-free and does not raise the energy."""
    p = run.params
    try:
        f = reconstruct(run.mu, run.map.source, FlowSchedule(p.n_steps), run.map.target, p.quadrature)
    except FoldDetected:
        return E
    f.pins = run.map.pins
    E_new, comps = energy(f, run.mu)
    if E_new > E or not compute_bc(f, strict=False).sup_norm < 1:
        return E
    run.map = f
    run.trace.pop()
    _record(run, E_new, comps, run.trace[-1]["dt"] if run.trace else 0.0, extra(f) if extra else None)
    return E_new


def _optimize(run: RegistrationRun, propose, energy, extra=None, callback=None, resync=False):
    p = run.params
    t0 = time.perf_counter()
    E, comps = energy(run.map, run.mu)
    _record(run, E, comps, 0.0, extra(run.map) if extra else None)
    # energies are non-negative, so no step could decrease E by epsilon or more
    if E < p.epsilon:
        run.termination = "converged"
    dt = p.dt
    while not run.termination:
        if run.iteration >= p.max_iters:
            run.termination = "max_iters"
            break
        try:
            E_new, dt = _step(run, propose, energy, E, dt, extra)
        except (StepFailed, FoldDetected) as exc:
            log.info("iteration %d stopped: %s", run.iteration, exc)
            run.termination = "step_failed"
            break
        if resync and p.resync_every and run.iteration % p.resync_every == 0:
            E_new = _resync(run, energy, E_new, extra)
        if callback:
            callback(run)
        if abs(E - E_new) < p.epsilon:
            run.termination = "converged"
        E = E_new
        dt = min(p.dt, 2 * dt)
    run.wall_time = time.perf_counter() - t0
    return run


def _mu_step(objective: _Objective, params: EnergyParams, run: RegistrationRun):
    cache = {}

    def propose(kernel, dt):
        f, mu = run.map, run.mu
        if cache.get("kernel") is not kernel:
            cache["kernel"] = kernel
            cache["d"] = descent_density(f, mu, objective, kernel)
        new = project_admissible(mu.values + dt * cache["d"], params.delta_margin)
        v = f.values.copy()
        act = f.source.active_vertices
        v[act] += kernel.apply(new.values - mu.values)[act]
        return v, new
    return propose


def _start(initial: DiscreteMap, params: EnergyParams, mu=None) -> RegistrationRun:
    if mu is None:
        mu = compute_bc(initial, strict=False)
    if len(initial.flipped_faces()) or not mu.sup_norm <= 1 - params.delta_margin:
        raise ValidationError("initial map is folded or not admissible")
    return RegistrationRun(initial, mu, params)


# ---------------------------------------------------------------- features

def feature_descent_step(run: RegistrationRun, F1, F2, params: EnergyParams | None = None):
    """One accepted feature-matching iteration; raises StepFailed if none is found."""
    if params is not None:
        run.params = params
    obj = _FeatureObjective(run.map.target, F1, F2)
    E, comps = obj.energy(run.map, run.mu)
    if not run.trace:
        _record(run, E, comps, 0.0)
    _step(run, _mu_step(obj, run.params, run), obj.energy, E, run.params.dt)
    return run


def register_features(source: PlanarEmbedding, target: PlanarEmbedding, F1, F2,
                      params: EnergyParams | None = None, initial: DiscreteMap | None = None,
                      callback=None) -> RegistrationRun:
    """Minimize sum A [(F1 - F2(f))^2 + |mu|^2] starting from the identity."""
    params = params or EnergyParams()
    if initial is None:
        initial = DiscreteMap.identity(source, target)
        run = _start(initial, params, BeltramiCoefficient(np.zeros(source.n_vertices, complex)))
    else:
        run = _start(initial, params)
    obj = _FeatureObjective(target, F1, F2)
    return _optimize(run, _mu_step(obj, params, run), obj.energy, callback=callback, resync=True)


# ---------------------------------------------------------------- landmarks

def default_mask_radius(embed: PlanarEmbedding) -> float:
    e = embed.mesh.edges
    return 3.0 * float(np.abs(embed.coords[e[:, 0]] - embed.coords[e[:, 1]]).mean())


def delta_mask(embed: PlanarEmbedding, landmarks: LandmarkSet, radius: float | None = None) -> np.ndarray:
    """Smoothstep weight: 0 within radius/2 of a landmark vertex, 1 beyond radius."""
    radius = radius or landmarks.mask_radius or default_mask_radius(embed)
    idx = landmarks.indices
    if len(idx) == 0:
        return np.ones(embed.n_vertices)
    z = embed.coords
    d = np.abs(z[:, None] - z[idx][None, :]).min(1)
    s = np.clip((d - radius / 2) / (radius / 2), 0, 1)
    w = s * s * (3 - 2 * s)
    w[idx] = 0.0
    return w


def landmark_initial_map(source: PlanarEmbedding, landmarks: LandmarkSet) -> DiscreteMap:
    """Harmonic map pinning landmarks to their target curves and the boundary to itself."""
    landmarks.validate(source)
    if len(landmarks) == 0:
        return DiscreteMap.identity(source)
    z = source.coords
    fixed = source.mesh.boundary_mask.copy()
    values = z.copy()
    # keep the gauge point 0 -> 0; a drifted f(0) puts a near-pole in the kernel
    origin = np.flatnonzero(z == 0)
    fixed[origin] = True
    for i, t in landmarks.curves:
        fixed[i] = True
        values[i] = t
    W = _mean_value_weights(np.column_stack([z.real, z.imag]), source.mesh.faces, source.n_vertices)
    out = harmonic_fill(W, fixed, values[fixed])
    f = DiscreteMap(out, source, pins=landmarks.indices)
    bad = f.flipped_faces()
    if len(bad):
        raise FoldDetected("landmark layout produces folded initial map", bad)
    return f


def masked_descent(f: DiscreteMap, mu, delta: np.ndarray, kernel: KernelMatrices) -> np.ndarray:
    """Descent density for sum A |bc(f)|^2 when the map moves by delta * V(f, nu).

    The coefficient responds to a map change df by (Dzb - mu Dz) df / f_z;
    chaining that through the mask and the kernel adjoint gives the exact
    gradient in nu.  Where delta is 1 it reduces to -2 mu up to discretization.
    """
    Dx, Dy = derivative_matrices(f.source)
    m = _vals(mu)
    fz, _ = map_derivatives(f)
    A = vertex_area(f.source)
    ok = f.source.active_vertices & (np.abs(fz) > 1e-12) & (A > 0)
    u = np.where(ok, A * m / np.where(ok, np.conj(fz), 1), 0)
    # adjoints of Dz = (Dx - i Dy) / 2 and Dzb = (Dx + i Dy) / 2
    h = 0.5 * (Dx.T @ u - 1j * (Dy.T @ u)) - 0.5 * (Dx.T @ (np.conj(m) * u) + 1j * (Dy.T @ (np.conj(m) * u)))
    c = np.where(ok, -2 * delta * h / np.where(ok, A, 1), 0)
    return kernel.adjoint(c)


def register_landmarks(source: PlanarEmbedding, landmarks: LandmarkSet,
                       params: EnergyParams | None = None, callback=None) -> RegistrationRun:
    """Least-distortion map matching the landmark curves."""
    params = params or EnergyParams()
    f0 = landmark_initial_map(source, landmarks)
    run = _start(f0, params)
    delta = delta_mask(source, landmarks, params.mask_radius)
    pins = landmarks.indices
    goal = f0.values[pins]

    cache = {}

    def propose(kernel, dt):
        f, mu = run.map, run.mu
        if cache.get("kernel") is not kernel:
            cache["kernel"] = kernel
            d = masked_descent(f, mu, delta, kernel)
            # same sup norm as the unmasked direction -2 mu so dt keeps its meaning
            dmax = np.abs(d).max()
            if dmax > 0:
                d *= 2 * mu.sup_norm / dmax
            cache["v"] = delta * kernel.apply(d)
        v = f.values + dt * cache["v"]
        v[pins] = f.values[pins]
        return v, None

    def extra(f):
        err = float(np.abs(f.values[pins] - goal).max()) if len(pins) else 0.0
        return {"landmark_err": err}

    return _optimize(run, propose, landmark_energy, extra, callback)


# ---------------------------------------------------------------- geometry

def surface_curvatures(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    return discrete_curvatures(mesh)


def register_geometry(source: PlanarEmbedding, target: PlanarEmbedding,
                      params: EnergyParams | None = None, curvatures=None,
                      callback=None) -> RegistrationRun:
    """Minimize the shape index between two surfaces given their parameterizations.

    ``curvatures`` may pass precomputed (H1, K1, H2, K2); otherwise they are
    estimated on the 3D meshes carried by the embeddings.
    """
    params = params or EnergyParams()
    if source.domain != target.domain:
        raise ConfigError("source and target must share a parameter domain")
    if curvatures is None:
        H1, K1 = discrete_curvatures(source.mesh)
        H2, K2 = discrete_curvatures(target.mesh)
    else:
        H1, K1, H2, K2 = curvatures
    obj = _ShapeObjective(target, H1, K1, H2, K2, params)
    run = _start(DiscreteMap.identity(source, target), params,
                 BeltramiCoefficient(np.zeros(source.n_vertices, complex)))
    return _optimize(run, _mu_step(obj, params, run), obj.energy, callback=callback, resync=True)


def _vals(mu) -> np.ndarray:
    return mu.values if isinstance(mu, BeltramiCoefficient) else np.asarray(mu, dtype=complex)
