"""Parameterizations: Möbius gauge normalization, a convex-combination disk
embedding, stereographic sphere charts, and point location / barycentric
interpolation on planar triangulations.
"""

from __future__ import annotations

import cmath
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from .errors import DegenerateTriple, InvalidPoints, OutsideDomain, SolveFailure, ValidationError
from .mesh import DISK, SPHERE, PlanarEmbedding, TriMesh, signed_areas

SNAP_TOL = 1e-7
INF = complex(np.inf, 0.0)


def _is_inf(z) -> bool:
    return z is None or cmath.isinf(complex(z))


@dataclass(frozen=True)
class MobiusTransform:
    """z -> (a z + b) / (c z + d), normalized so that ad - bc = 1."""

    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self):
        det = self.a * self.d - self.b * self.c
        if abs(det) <= 1e-12:
            raise DegenerateTriple(f"Möbius determinant {det} is zero")
        s = cmath.sqrt(det)
        if abs(s - 1) > 1e-15:
            for name in "abcd":
                object.__setattr__(self, name, complex(getattr(self, name)) / s)

    @classmethod
    def identity(cls):
        return cls(1, 0, 0, 1)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        scalar = z.ndim == 0
        z = np.atleast_1d(z)
        out = np.empty_like(z)
        inf = np.isinf(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            num = self.a * z[~inf] + self.b
            den = self.c * z[~inf] + self.d
            zero = den == 0
            res = np.where(zero, INF, num / np.where(zero, 1, den))
        out[~inf] = res
        out[inf] = INF if self.c == 0 else self.a / self.c
        return complex(out[0]) if scalar else out

    def __matmul__(self, other: "MobiusTransform") -> "MobiusTransform":
        """Composition: (self @ other)(z) == self(other(z))."""
        m = np.array([[self.a, self.b], [self.c, self.d]]) @ np.array([[other.a, other.b], [other.c, other.d]])
        return MobiusTransform(m[0, 0], m[0, 1], m[1, 0], m[1, 1])

    def inverse(self) -> "MobiusTransform":
        return MobiusTransform(self.d, -self.b, -self.c, self.a)


def mobius_to_standard_triple(a, b, c) -> MobiusTransform:
    """The Möbius map sending a, b, c to 0, 1, infinity (``c`` may be infinite)."""
    a, b = complex(a), complex(b)
    if _is_inf(a) or _is_inf(b):
        raise DegenerateTriple("only the third point may be infinite")
    if abs(a - b) <= 1e-12:
        raise DegenerateTriple(f"points {a} and {b} coincide")
    if _is_inf(c):
        return MobiusTransform(1.0, -a, 0.0, b - a)
    c = complex(c)
    if abs(a - c) <= 1e-12 or abs(b - c) <= 1e-12:
        raise DegenerateTriple(f"third point {c} coincides with another")
    # (z - a)(b - c) / ((z - c)(b - a))
    return MobiusTransform(b - c, -a * (b - c), b - a, -c * (b - a))


def disk_automorphism_two_point(a, b) -> MobiusTransform:
    """Disk automorphism with a -> 0 (|a| < 1) and b -> 1 (|b| = 1)."""
    a, b = complex(a), complex(b)
    if not abs(a) < 1 or abs(abs(b) - 1) > 1e-9:
        raise InvalidPoints(f"need |a| < 1 and |b| = 1, got |a|={abs(a)}, |b|={abs(b)}")
    blaschke = MobiusTransform(1.0, -a, -a.conjugate(), 1.0)
    w = blaschke(b)
    rot = w.conjugate() / abs(w)
    return MobiusTransform(rot, 0, 0, 1) @ blaschke


def normalize_disk(embed: PlanarEmbedding, center: int, anchor: int) -> PlanarEmbedding:
    """Move vertex ``center`` to 0 and boundary vertex ``anchor`` to 1."""
    T = disk_automorphism_two_point(embed.coords[center], embed.coords[anchor])
    z = T(embed.coords)
    z[center] = 0.0
    z[anchor] = 1.0
    bnd = embed.mesh.boundary_loops[0]
    z[bnd] /= np.abs(z[bnd])
    return embed.with_coords(z)


def _mean_value_weights(points: np.ndarray, faces: np.ndarray, n: int) -> sparse.csr_matrix:
    """Floater mean-value weights, w_ij = (tan(a/2) + tan(b/2)) / |x_i - x_j|."""
    rows, cols, vals = [], [], []
    P = points[faces]
    for k in range(3):
        i, j, l = k, (k + 1) % 3, (k + 2) % 3
        u = P[:, j] - P[:, i]
        v = P[:, l] - P[:, i]
        nu = np.linalg.norm(u, axis=-1)
        nv = np.linalg.norm(v, axis=-1)
        cos = np.einsum("ij,ij->i", u, v) / (nu * nv)
        th = np.arccos(np.clip(cos, -1, 1))
        t = np.tan(th / 2)
        rows += [faces[:, i], faces[:, i]]
        cols += [faces[:, j], faces[:, l]]
        vals += [t / nu, t / nv]
    return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, n))


def harmonic_fill(weights: sparse.csr_matrix, fixed: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Solve sum_j w_ij (u_i - u_j) = 0 at free vertices with u fixed elsewhere."""
    n = weights.shape[0]
    is_fixed = np.zeros(n, bool)
    is_fixed[fixed] = True
    free = np.flatnonzero(~is_fixed)
    u = np.zeros(n, dtype=complex)
    u[fixed] = values
    if len(free) == 0:
        return u
    W = weights.tocsr()
    deg = np.asarray(W.sum(axis=1)).ravel()
    L = (sparse.diags(deg) - W).tocsr()
    A = L[free][:, free].tocsc()
    rhs = -(L[free][:, np.flatnonzero(is_fixed)] @ u[is_fixed])
    try:
        with np.errstate(all="raise"), warnings.catch_warnings():
            warnings.simplefilter("error", MatrixRankWarning)
            x = spsolve(A, rhs)
    except (RuntimeError, FloatingPointError, MatrixRankWarning) as exc:
        raise SolveFailure(f"convex-combination system is singular: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolveFailure("convex-combination system is singular")
    u[free] = x
    return u


def fallback_disk_embed(mesh: TriMesh) -> PlanarEmbedding:
    """Mean-value (Floater) embedding of a disk-topology mesh.

    The boundary goes to the unit circle by arc-length proportion starting
    at the first vertex of the boundary loop (angle 0).
    """
    if mesh.is_closed or len(mesh.boundary_loops) != 1:
        raise ValidationError("fallback disk embedding needs a disk-topology mesh")
    loop = mesh.boundary_loops[0]
    X = mesh.vertices
    seg = np.linalg.norm(X[np.roll(loop, -1)] - X[loop], axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)[:-1]]) / seg.sum()
    circle = np.exp(2j * np.pi * s)
    W = _mean_value_weights(X, mesh.faces, mesh.n_vertices)
    z = harmonic_fill(W, loop, circle)
    z[loop] = circle
    return PlanarEmbedding(mesh, z, DISK)


def stereographic_embed(mesh: TriMesh, pole: int) -> PlanarEmbedding:
    """Sphere chart from a closed mesh: project radially onto the unit sphere
    about the centroid, rotate ``pole`` to the north pole, then project
    stereographically from it.
    """
    if not mesh.is_closed:
        raise ValidationError("sphere embedding needs a closed mesh")
    X = mesh.vertices - mesh.vertices.mean(axis=0)
    X = X / np.linalg.norm(X, axis=1, keepdims=True)
    R = _rotation_to_north(X[pole])
    Y = X @ R.T
    with np.errstate(divide="ignore", invalid="ignore"):
        # conjugated so that outward-CCW faces stay CCW in the chart
        z = (Y[:, 0] - 1j * Y[:, 1]) / (1.0 - Y[:, 2])
    z[pole] = INF
    return PlanarEmbedding(mesh, z, SPHERE, pole)


def _rotation_to_north(p: np.ndarray) -> np.ndarray:
    p = p / np.linalg.norm(p)
    n = np.array([0.0, 0.0, 1.0])
    v = np.cross(p, n)
    s, c = np.linalg.norm(v), float(p @ n)
    if s < 1e-15:
        return np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx * ((1 - c) / s ** 2)


def sphere_embed_normalize(embed: PlanarEmbedding, p1: int, p2: int, p3: int) -> PlanarEmbedding:
    """Post-compose a sphere chart with the Möbius map sending p1, p2, p3 to 0, 1, inf."""
    if embed.domain != SPHERE:
        raise ValidationError("sphere_embed_normalize needs a sphere embedding")
    if len({p1, p2, p3}) != 3:
        raise DegenerateTriple("gauge vertices must be distinct")
    c = embed.coords
    T = mobius_to_standard_triple(c[p1], c[p2], c[p3])
    z = T(c)
    z[p1], z[p2] = 0.0, 1.0
    return PlanarEmbedding(embed.mesh, z, SPHERE, p3)


class _Grid:
    """Uniform bucket grid over triangle bounding boxes."""

    def __init__(self, coords: np.ndarray, faces: np.ndarray, face_ids: np.ndarray):
        self.faces = faces
        self.face_ids = face_ids
        tri = coords[faces]
        self.tri = tri
        lo = np.min(np.stack([tri.real.min(1), tri.imag.min(1)], 1), 0)
        hi = np.max(np.stack([tri.real.max(1), tri.imag.max(1)], 1), 0)
        span = np.maximum(hi - lo, 1e-12)
        self.lo = lo - 1e-9 * span
        n = max(1, int(np.sqrt(len(faces))))
        self.n = n
        self.size = span * (1 + 2e-9) / n
        fx0, fx1 = self._cell(tri.real.min(1), 0), self._cell(tri.real.max(1), 0)
        fy0, fy1 = self._cell(tri.imag.min(1), 1), self._cell(tri.imag.max(1), 1)
        cells, owners = [], []
        for f in range(len(faces)):
            xs = np.arange(fx0[f], fx1[f] + 1)
            ys = np.arange(fy0[f], fy1[f] + 1)
            c = (xs[:, None] * n + ys[None, :]).ravel()
            cells.append(c)
            owners.append(np.full(len(c), f))
        cells = np.concatenate(cells)
        owners = np.concatenate(owners)
        order = np.argsort(cells, kind="stable")
        self.cell_faces = owners[order]
        self.indptr = np.searchsorted(cells[order], np.arange(n * n + 1))
        # single-use edges bound the triangulated region
        half = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
        owner = np.tile(np.arange(len(faces)), 3)
        key = np.sort(half, 1)
        _, inv, cnt = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        once = cnt[inv.ravel()] == 1
        self.bnd_edges = half[once]
        self.bnd_owner = owner[once]
        self.coords = coords

    def _cell(self, v, axis):
        return np.clip(((v - self.lo[axis]) / self.size[axis]).astype(np.int64), 0, self.n - 1)

    def locate(self, q: np.ndarray, eps: float = 1e-12):
        """Local face index and barycentrics per query; -1 where not found."""
        Q = len(q)
        face = np.full(Q, -1, dtype=np.int64)
        bary = np.zeros((Q, 3))
        if Q == 0:
            return face, bary
        inside = ((q.real >= self.lo[0]) & (q.imag >= self.lo[1])
                  & (q.real <= self.lo[0] + self.size[0] * self.n)
                  & (q.imag <= self.lo[1] + self.size[1] * self.n) & np.isfinite(q))
        idx = np.flatnonzero(inside)
        if len(idx) == 0:
            return face, bary
        qq = q[idx]
        cell = self._cell(qq.real, 0) * self.n + self._cell(qq.imag, 1)
        start = self.indptr[cell]
        cnt = self.indptr[cell + 1] - start
        M = int(cnt.max()) if len(cnt) else 0
        if M == 0:
            return face, bary
        slot = start[:, None] + np.arange(M)[None, :]
        valid = np.arange(M)[None, :] < cnt[:, None]
        cand = self.cell_faces[np.where(valid, slot, 0)]
        t = self.tri[cand]
        b = _barycentric(t, qq[:, None])
        ok = valid & (b >= -eps).all(-1)
        hit = ok.any(1)
        first = np.argmax(ok, axis=1)
        rows = np.flatnonzero(hit)
        face[idx[rows]] = cand[rows, first[rows]]
        bb = b[rows, first[rows]]
        bb = np.clip(bb, 0, None)
        bary[idx[rows]] = bb / bb.sum(1, keepdims=True)
        return face, bary

    def nearest_boundary(self, q: np.ndarray):
        """Closest point on the region boundary: (distance, local face, barycentrics)."""
        a = self.coords[self.bnd_edges[:, 0]]
        b = self.coords[self.bnd_edges[:, 1]]
        d = b - a
        t = np.real((q[:, None] - a[None]) * np.conj(d[None])) / np.abs(d[None]) ** 2
        t = np.clip(t, 0, 1)
        p = a[None] + t * d[None]
        dist = np.abs(q[:, None] - p)
        k = np.argmin(dist, axis=1)
        tk = t[np.arange(len(q)), k]
        faces = self.bnd_owner[k]
        bary = np.zeros((len(q), 3))
        for r in range(len(q)):
            fv = list(self.faces[faces[r]])
            e0, e1 = self.bnd_edges[k[r]]
            bary[r, fv.index(e0)] = 1 - tk[r]
            bary[r, fv.index(e1)] = tk[r]
        return dist[np.arange(len(q)), k], faces, bary


def _barycentric(tri: np.ndarray, q: np.ndarray) -> np.ndarray:
    a, b, c = tri[..., 0], tri[..., 1], tri[..., 2]
    det = np.imag(np.conj(b - a) * (c - a))
    lb = np.imag(np.conj(q - a) * (c - a)) / det
    lc = np.imag(np.conj(b - a) * (q - a)) / det
    return np.stack([1 - lb - lc, lb, lc], -1)


class PointLocator:
    """Point location in a planar triangulation of the parameter domain.

    ``coords`` defaults to the embedding's coordinates; pass the values of a
    map to locate in its image triangulation instead.  Disk queries with
    ``|q| <= 1 + tol`` that fall outside the inscribed polygon are snapped to
    the nearest boundary point.  Sphere queries outside the finite chart are
    resolved in the inverted chart ``1/z`` covering the pole's faces, and
    points in neither chart snap to the pole ring.
    """

    def __init__(self, embed: PlanarEmbedding, coords: np.ndarray | None = None, tol: float = SNAP_TOL):
        self.embed = embed
        self.tol = tol
        coords = embed.coords if coords is None else np.asarray(coords, dtype=complex)
        self.coords = coords
        F = embed.mesh.faces
        fa = embed.active_faces
        self.main = _Grid(coords, F[fa], fa)
        self.cap = None
        if embed.domain == SPHERE:
            fp = embed.pole_faces
            with np.errstate(divide="ignore", invalid="ignore"):
                inv = 1.0 / coords
            inv[embed.pole] = 0.0
            self.cap = _Grid(inv, F[fp], fp)

    def locate(self, query) -> tuple[np.ndarray, np.ndarray]:
        """Global face indices and barycentric coordinates for each query."""
        q = np.atleast_1d(np.asarray(query, dtype=complex))
        face_l, bary = self.main.locate(q)
        face = np.where(face_l >= 0, self.main.face_ids[np.maximum(face_l, 0)], -1)
        miss = np.flatnonzero(face_l < 0)
        if len(miss) and self.cap is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                qi = np.where(np.isinf(q[miss]), 0, 1.0 / q[miss])
            fl, bl = self.cap.locate(qi)
            got = fl >= 0
            face[miss[got]] = self.cap.face_ids[fl[got]]
            bary[miss[got]] = bl[got]
            miss = miss[~got]
        if len(miss):
            dist, fl, bl = self.main.nearest_boundary(q[miss])
            allowed = dist <= self.tol
            if self.embed.domain == DISK:
                allowed |= np.abs(q[miss]) <= 1 + self.tol
            else:
                # the two charts leave thin gaps along the pole ring's edges
                allowed[:] = True
            if not allowed.all():
                bad = miss[~allowed]
                raise OutsideDomain(f"{len(bad)} queries outside the domain, e.g. {q[bad[0]]}", bad)
            face[miss] = self.main.face_ids[fl]
            bary[miss] = bl
        return face, bary

    def interpolate(self, query, field: np.ndarray) -> np.ndarray:
        face, bary = self.locate(query)
        vals = np.asarray(field)[self.embed.mesh.faces[face]]
        if vals.ndim == 3:
            return np.einsum("qk,qkd->qd", bary, vals)
        return np.einsum("qk,qk->q", bary, vals)

    def gradient(self, query, field: np.ndarray) -> np.ndarray:
        """Complex gradient d/dx + i d/dy of the piecewise-linear interpolant of a
        real field, taken on the face containing each query.  Pole faces are
        differentiated in the 1/z chart; the gradient at infinity is 0."""
        q = np.atleast_1d(np.asarray(query, dtype=complex))
        face, _ = self.locate(q)
        F = self.embed.mesh.faces[face]
        u = self.coords[F]
        cap = np.zeros(len(q), bool)
        if self.embed.pole is not None:
            cap = (F == self.embed.pole).any(1)
            with np.errstate(divide="ignore", invalid="ignore"):
                u[cap] = np.where(np.isinf(u[cap]), 0, 1.0 / u[cap])
        v = np.asarray(field, float)[F]
        e1, e2 = u[:, 1] - u[:, 0], u[:, 2] - u[:, 0]
        d1, d2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
        det = e1.real * e2.imag - e1.imag * e2.real
        g = ((d1 * e2.imag - d2 * e1.imag) + 1j * (d2 * e1.real - d1 * e2.real)) / det
        # chain rule through u = 1/z
        with np.errstate(divide="ignore", invalid="ignore"):
            g[cap] = np.where(np.isinf(q[cap]), 0, -g[cap] / np.conj(q[cap]) ** 2)
        return g


def locate_and_interpolate(embed: PlanarEmbedding, query, field: np.ndarray, locator: PointLocator | None = None):
    """Barycentric interpolation of a vertex field at query points of the domain."""
    loc = locator if locator is not None else PointLocator(embed)
    out = loc.interpolate(query, field)
    if np.ndim(query) == 0:
        return out[0]
    return out
