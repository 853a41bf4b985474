"""Beltrami coefficients of discrete maps: extraction, dilation,
composition, admissibility projection and the disk reflection rule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateJacobian, NotAdmissible, ValidationError
from .mesh import DISK, PlanarEmbedding, signed_areas, vertex_derivatives
from .param import PointLocator


@dataclass(eq=False)
class BeltramiCoefficient:
    """Per-vertex complex coefficient with sup norm strictly below one."""

    values: np.ndarray
    embed: PlanarEmbedding | None = None
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.check and not self.sup_norm < 1:
            bad = np.flatnonzero(np.abs(self.values) >= 1)
            raise NotAdmissible(f"|mu| >= 1 at {len(bad)} vertices", bad)

    @property
    def sup_norm(self) -> float:
        v = self.values
        return float(np.abs(v).max()) if v.size else 0.0

    def __len__(self):
        return len(self.values)


@dataclass(eq=False)
class DiscreteMap:
    """Map between parameter domains, stored as vertex images f(v_i).

    ``source`` is the embedding the map is defined on; ``target`` the
    parameter mesh of the second surface (defaults to ``source``).  ``pins``
    lists vertices whose images are prescribed (landmarks, gauge points).
    """

    values: np.ndarray
    source: PlanarEmbedding
    target: PlanarEmbedding | None = None
    pins: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.array(self.values, dtype=complex)
        if self.values.shape != (self.source.n_vertices,):
            raise ValidationError("map values must have one entry per source vertex")
        if self.target is None:
            self.target = self.source

    @classmethod
    def identity(cls, source: PlanarEmbedding, target: PlanarEmbedding | None = None) -> "DiscreteMap":
        return cls(source.coords.copy(), source, target)

    @property
    def domain(self) -> str:
        return self.source.domain

    def with_values(self, values) -> "DiscreteMap":
        return DiscreteMap(values, self.source, self.target, self.pins)

    def flipped_faces(self) -> np.ndarray:
        """Faces whose image has non-positive signed area (cap faces in the 1/z chart)."""
        F = self.source.mesh.faces
        fa = self.source.active_faces
        bad = [fa[signed_areas(self.values, F[fa]) <= 0]]
        if self.source.pole is not None:
            fp = self.source.pole_faces
            with np.errstate(divide="ignore", invalid="ignore"):
                inv = 1.0 / self.values
            inv[self.source.pole] = 0.0
            bad.append(fp[signed_areas(inv, F[fp]) <= 0])
        return np.concatenate(bad)


def map_derivatives(f: DiscreteMap) -> tuple[np.ndarray, np.ndarray]:
    """Per-vertex (f_z, f_zbar) from averaged face gradients on the source mesh."""
    vals = np.where(f.source.active_vertices, f.values, 0)
    d = vertex_derivatives(f.source, vals)
    fx, fy = d[:, 0], d[:, 1]
    return 0.5 * (fx - 1j * fy), 0.5 * (fx + 1j * fy)


def compute_bc(f: DiscreteMap, strict: bool = True) -> BeltramiCoefficient:
    """Per-vertex Beltrami coefficient f_zbar / f_z of a discrete map.

    With ``strict`` a vanishing f_z raises ``DegenerateJacobian`` and
    ``|mu| >= 1`` raises ``NotAdmissible``; otherwise the raw quotient is
    returned (infinite where f_z vanishes).
    """
    fz, fzb = map_derivatives(f)
    act = f.source.active_vertices
    small = act & (np.abs(fz) < 1e-12)
    if strict and small.any():
        raise DegenerateJacobian(f"f_z vanishes at {int(small.sum())} vertices", np.flatnonzero(small))
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(small, complex(np.inf), fzb / np.where(small, 1, fz))
    mu[~act] = 0
    return BeltramiCoefficient(mu, f.source, check=strict)


def dilation(mu) -> np.ndarray:
    """Maximal dilation K = (1 + |mu|) / (1 - |mu|) per vertex."""
    m = np.abs(_values(mu))
    return (1 + m) / (1 - m)


def project_admissible(mu, delta: float = 0.02) -> BeltramiCoefficient:
    """Radially clamp |mu| to at most 1 - delta, keeping the phase."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    v = np.array(_values(mu), dtype=complex)
    cap = 1 - delta
    m = np.abs(v)
    over = m > cap
    v[over] *= cap / m[over]
    # rounding can leave |v| one ulp above the cap
    still = np.abs(v) > cap
    while still.any():
        v[still] *= 1 - 2 ** -52
        still = np.abs(v) > cap
    return BeltramiCoefficient(v, getattr(mu, "embed", None))


def compose_bc(mu, sigma, f_mu: DiscreteMap, at: np.ndarray | None = None) -> BeltramiCoefficient:
    """Beltrami coefficient of f^sigma o (f^mu)^-1.

    The factor ((sigma - mu) / (1 - conj(mu) sigma)) * p / conj(p), with
    p = (f^mu)_z, is formed on the source vertices and pulled through the
    inverse of ``f_mu`` by point location in its image triangulation.  The
    result is sampled at ``at`` (default: the target embedding's vertices).
    """
    m, s = _values(mu), _values(sigma)
    p, _ = map_derivatives(f_mu)
    act = f_mu.source.active_vertices
    small = act & (np.abs(p) < 1e-12)
    if small.any():
        raise DegenerateJacobian(f"(f^mu)_z vanishes at {int(small.sum())} vertices", np.flatnonzero(small))
    with np.errstate(divide="ignore", invalid="ignore"):
        field = (s - m) / (1 - np.conj(m) * s) * (p / np.conj(p))
    field[~act] = 0
    if at is None:
        at = f_mu.target.coords
    at = np.asarray(at, dtype=complex)
    finite = np.isfinite(at)
    loc = PointLocator(f_mu.source, coords=f_mu.values)
    tau = np.zeros(len(at), dtype=complex)
    tau[finite] = loc.interpolate(at[finite], field)
    return BeltramiCoefficient(tau, f_mu.target)


def reflect_coefficient(mu_fn):
    """Extend a coefficient on the unit disk to the plane by reflection:
    mu(z) inside, (z^2 / conj(z)^2) * conj(mu(1 / conj(z))) outside."""

    def extended(z):
        z = np.asarray(z, dtype=complex)
        inside = np.abs(z) <= 1
        out = np.empty_like(z)
        out[inside] = mu_fn(z[inside])
        zo = z[~inside]
        out[~inside] = zo ** 2 / np.conj(zo) ** 2 * np.conj(mu_fn(1 / np.conj(zo)))
        return out

    return extended


def _values(mu) -> np.ndarray:
    return mu.values if isinstance(mu, BeltramiCoefficient) else np.asarray(mu, dtype=complex)


def is_disk(f: DiscreteMap) -> bool:
    return f.domain == DISK
