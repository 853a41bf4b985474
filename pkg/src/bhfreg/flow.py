"""Beltrami holomorphic flow: the first-order variation V(f, nu) of a
normalized quasiconformal map and the iterative reconstruction of a map
from its Beltrami coefficient.

For a target vertex w and source vertex z the kernel is

    K(z, w) = P(z, w) nu(z) + Q(z, w) conj(nu(z))

    P = -fw (fw - 1) / pi * fz(z)^2 / (f(z) (f(z) - 1) (f(z) - fw))
    Q = -fw (fw - 1) / pi * conj(fz(z))^2 / (conj(f) (1 - conj(f)) (1 - conj(f) fw))

with Q present only on the disk.  V(w) = sum_z K(z, w) A_z.  Terms with a
vanishing denominator are set to zero and the sphere pole never enters
either sum.

``quadrature="lumped"`` is that sum as is.  Its error is O(h) because the
omitted pole cells do not cancel (the pole at 1 sits on the boundary and
only sees half a cell).  ``"corrected"`` (disk default) adds a singularity
subtraction at the poles; the sphere always uses the lumped sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beltrami import BeltramiCoefficient, DiscreteMap, map_derivatives
from .errors import FoldDetected
from .mesh import DISK, PlanarEmbedding, vertex_area

SINGULAR_TOL = 1e-12
QUADRATURES = ("lumped", "corrected")
DEFAULT_QUADRATURE = "corrected"
_CHUNK = 512


@dataclass(frozen=True)
class FlowSchedule:
    n_steps: int = 20

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be a positive integer")

    @property
    def fraction(self) -> float:
        return 1.0 / self.n_steps


@dataclass
class BhfKernelTerms:
    """Kernel values K(z, w) for one target vertex ``w`` over all source vertices.

    ``g`` holds the real decomposition (G1, G2, G3, G4) so that
    Re K = G1 nu1 + G2 nu2 and Im K = G3 nu1 + G4 nu2.
    """

    w: int
    values: np.ndarray
    g: np.ndarray


def kernel_parts(f_src, fz, fw, disk: bool):
    """Coefficients (P, Q) of nu and conj(nu) for sources ``f_src`` and targets ``fw``.

    Broadcasts ``fw[:, None]`` against the source arrays; Q is None on the sphere.
    """
    fw = np.asarray(fw, dtype=complex)
    f_src = np.asarray(f_src, dtype=complex)
    fz = np.asarray(fz, dtype=complex)
    pre = (-fw * (fw - 1) / np.pi)[..., None]
    d0 = f_src * (f_src - 1)
    d1 = f_src - fw[..., None]
    ok = (np.abs(d0) > SINGULAR_TOL) & (np.abs(d1) > SINGULAR_TOL)
    with np.errstate(divide="ignore", invalid="ignore"):
        P = np.where(ok, pre * fz ** 2 / (d0 * d1), 0)
    if not disk:
        return P, None
    fc = np.conj(f_src)
    e0 = fc * (1 - fc)
    e1 = 1 - fc * fw[..., None]
    ok = (np.abs(e0) > SINGULAR_TOL) & (np.abs(e1) > SINGULAR_TOL)
    with np.errstate(divide="ignore", invalid="ignore"):
        Q = np.where(ok, pre * np.conj(fz) ** 2 / (e0 * e1), 0)
    return P, Q


def disk_kernel(z, fz, nu, fw, f=None):
    """Pointwise disk integrand K(z, w); ``f`` defaults to ``z`` (identity)."""
    P, Q = kernel_parts(z if f is None else f, fz, np.atleast_1d(fw), True)
    return (P * nu + Q * np.conj(nu))[0] if np.ndim(fw) == 0 else P * nu + Q * np.conj(nu)


def sphere_kernel(z, fz, nu, fw, f=None):
    """Pointwise sphere integrand K(z, w); ``f`` defaults to ``z`` (identity)."""
    P, _ = kernel_parts(z if f is None else f, fz, np.atleast_1d(fw), False)
    return (P * nu)[0] if np.ndim(fw) == 0 else P * nu


class KernelMatrices:
    """Dense kernel of a discrete map, reused for forward and adjoint sums.

    Rows are target vertices, columns source vertices, both restricted to
    non-pole vertices.  Memory is O(V^2).
    """

    def __init__(self, f: DiscreteMap, quadrature: str = DEFAULT_QUADRATURE):
        if quadrature not in QUADRATURES:
            raise ValueError(f"quadrature must be one of {QUADRATURES}")
        self.map = f
        self.disk = f.domain == DISK
        src = f.source
        self.idx = np.flatnonzero(src.active_vertices)
        self.area = vertex_area(src)[self.idx]
        fz, _ = map_derivatives(f)
        vals = f.values[self.idx]
        n = len(self.idx)
        self.P = np.empty((n, n), dtype=complex)
        self.Q = np.empty((n, n), dtype=complex) if self.disk else None
        for s in range(0, n, _CHUNK):
            P, Q = kernel_parts(vals, fz[self.idx], vals[s:s + _CHUNK], self.disk)
            self.P[s:s + _CHUNK] = P
            if self.disk:
                self.Q[s:s + _CHUNK] = Q
        if quadrature == "corrected" and self.disk:
            self._subtract_poles(fz[self.idx], vals)

    def _subtract_poles(self, fz, f):
        """Singularity subtraction at u = 0, 1, f(w) (and their reflections).

        In image coordinates u = f(z) the kernel is a smooth factor times a
        rational function with simple poles.  The lumped sum of each pole
        term, weighted by the smooth factor frozen at the pole, is replaced by
        its exact disk integral.  The correction only touches the pole
        columns, so it is added to P and Q in place.
        """
        n = len(f)
        fzb = map_derivatives(self.map)[1][self.idx]
        J = np.abs(fz) ** 2 - np.abs(fzb) ** 2
        aj = self.area * J
        gp = fz ** 2 / J
        gq = np.conj(fz) ** 2 / J
        i0 = np.flatnonzero(np.abs(f) < SINGULAR_TOL)
        i1 = np.flatnonzero(np.abs(f - 1) < SINGULAR_TOL)
        fc = np.conj(f)
        rows = np.arange(n)
        for s in range(0, n, _CHUNK):
            r = rows[s:s + _CHUNK]
            fw = f[r]
            live = np.abs(fw * (fw - 1)) > SINGULAR_TOL
            mp = self.P[r] != 0
            mq = self.Q[r] != 0
            with np.errstate(divide="ignore", invalid="ignore"):
                S0 = np.where(mp, aj / f, 0).sum(1)
                S1 = np.where(mp, aj / (f - 1), 0).sum(1)
                Sw = np.where(mp, aj / (f - fw[:, None]), 0).sum(1)
                T0 = np.where(mq, aj / fc, 0).sum(1)
                T1 = np.where(mq, aj / (1 - fc), 0).sum(1)
                Tw = np.where(mq, aj / (1 - fc * fw[:, None]), 0).sum(1)
            cw_p = -(-np.pi * np.conj(fw) - Sw) / np.pi
            cw_q = -fw ** 3 * (np.pi - Tw) / np.pi
            self.P[r, r] += np.where(live, cw_p * gp[r] / self.area[r], 0)
            self.Q[r, r] += np.where(live, cw_q * gq[r] / self.area[r], 0)
            if len(i0):
                j = i0[0]
                self.P[r, j] += np.where(live, (fw - 1) * S0 / np.pi * gp[j] / self.area[j], 0)
                self.Q[r, j] += np.where(live, fw * (fw - 1) * T0 / np.pi * gq[j] / self.area[j], 0)
            if len(i1):
                j = i1[0]
                self.P[r, j] += np.where(live, fw * (-np.pi - S1) / np.pi * gp[j] / self.area[j], 0)
                self.Q[r, j] += np.where(live, fw * (np.pi - T1) / np.pi * gq[j] / self.area[j], 0)

    def apply(self, nu) -> np.ndarray:
        """V(w) = sum_z (P nu + Q conj(nu)) A_z at every vertex (0 at the pole)."""
        nu = _values(nu)[self.idx]
        an = self.area * nu
        v = self.P @ an
        if self.disk:
            v += self.Q @ np.conj(an)
        out = np.zeros(self.map.source.n_vertices, dtype=complex)
        out[self.idx] = v
        return out

    def adjoint(self, c) -> np.ndarray:
        """Density d(z) = sum_w A_w [c(w) conj(P(z,w)) + conj(c(w)) Q(z,w)].

        If a data energy changes by -sum_w A_w Re(conj(c) dV) under dV, then
        -sum_z A_z Re(conj(d) nu) is its change under nu, so d is the
        steepest-descent density for the coefficient.
        """
        ac = self.area * np.asarray(c, dtype=complex)[self.idx]
        d = np.conj(self.P).T @ ac
        if self.disk:
            d += self.Q.T @ np.conj(ac)
        out = np.zeros(self.map.source.n_vertices, dtype=complex)
        out[self.idx] = d
        return out


def kernel_row(f: DiscreteMap, nu, w: int) -> BhfKernelTerms:
    """Kernel values K(z, w) over all source vertices z (0 at the pole)."""
    disk = f.domain == DISK
    fz, _ = map_derivatives(f)
    n = f.source.n_vertices
    act = f.source.active_vertices
    vals = np.where(act, f.values, 0)
    P, Q = kernel_parts(vals, fz, np.array([f.values[w]]), disk)
    P = np.where(act, P[0], 0)
    Q = np.where(act, Q[0], 0) if disk else np.zeros(n, complex)
    if not act[w]:
        P[:] = 0
        Q[:] = 0
    nu = _values(nu)
    g = np.stack([(P + Q).real, -(P - Q).imag, (P + Q).imag, (P - Q).real])
    return BhfKernelTerms(int(w), P * nu + Q * np.conj(nu), g)


def variation(f: DiscreteMap, nu, kernel: KernelMatrices | None = None,
              quadrature: str = DEFAULT_QUADRATURE) -> np.ndarray:
    """First-order change V(f, nu) of the normalized map per vertex."""
    return (kernel or KernelMatrices(f, quadrature)).apply(nu)


def variation_adjoint(f: DiscreteMap, c, kernel: KernelMatrices | None = None,
                      quadrature: str = DEFAULT_QUADRATURE) -> np.ndarray:
    return (kernel or KernelMatrices(f, quadrature)).adjoint(c)


def snap_to_domain(values: np.ndarray, source: PlanarEmbedding) -> np.ndarray:
    """Disk: boundary vertices onto the circle, others clipped to |f| <= 1.
    Sphere: pole pinned at infinity."""
    v = np.array(values, dtype=complex)
    if source.domain == DISK:
        b = source.mesh.boundary_mask
        v[b] /= np.abs(v[b])
        m = np.abs(v)
        over = ~b & (m > 1)
        v[over] /= m[over]
    elif source.pole is not None:
        v[source.pole] = np.inf
    return v


def check_folds(f: DiscreteMap):
    bad = f.flipped_faces()
    if len(bad):
        raise FoldDetected(f"{len(bad)} flipped faces", bad)


def reconstruct(mu, source: PlanarEmbedding, schedule: FlowSchedule | None = None,
                target: PlanarEmbedding | None = None, quadrature: str = DEFAULT_QUADRATURE) -> DiscreteMap:
    """Flow the identity to the normalized map with coefficient ``mu``.

    N forward Euler steps f_{k+1} = f_k + V(f_k, mu / N), each followed by
    domain snapping and a fold check.
    """
    schedule = schedule or FlowSchedule()
    m = _values(mu)
    f = DiscreteMap.identity(source, target)
    if not np.any(m[source.active_vertices]):
        return f
    step = m * schedule.fraction
    for _ in range(schedule.n_steps):
        act = source.active_vertices
        v = f.values.copy()
        v[act] += variation(f, step, quadrature=quadrature)[act]
        f = f.with_values(snap_to_domain(v, source))
        check_folds(f)
    return f


def _values(mu) -> np.ndarray:
    return mu.values if isinstance(mu, BeltramiCoefficient) else np.asarray(mu, dtype=complex)
