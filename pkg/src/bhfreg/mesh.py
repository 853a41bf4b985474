"""Triangle meshes, planar embeddings and the per-face / per-vertex
differential operators used throughout the package.

Per-vertex data ("vertex fields") are plain numpy arrays of length V;
complex arrays carry maps and Beltrami coefficients.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import ObtuseDegenerate, SingularFace, TopologyError, ValidationError

DISK = "disk"
SPHERE = "sphere"

BOUNDARY_TOL = 1e-9


@dataclass(eq=False)
class TriMesh:
    """Oriented triangle mesh of genus 0, either closed or with one boundary loop.

    Construction validates indices, degeneracy, manifoldness, orientation and
    topology (Euler characteristic 2 or 1) and raises ``TopologyError``
    otherwise.
    """

    vertices: np.ndarray
    faces: np.ndarray
    boundary_loops: list = field(init=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] not in (2, 3):
            raise TopologyError(f"vertices must have shape (V, 3), got {self.vertices.shape}")
        if self.vertices.shape[1] == 2:
            self.vertices = np.column_stack([self.vertices, np.zeros(len(self.vertices))])
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise TopologyError(f"faces must have shape (F, 3), got {self.faces.shape}")
        self._validate()
        self.boundary_loops = self._trace_boundary()
        chi = self.n_vertices - len(self.edges) + self.n_faces
        if len(self.boundary_loops) == 0 and chi != 2:
            raise TopologyError(f"closed mesh has Euler characteristic {chi}, expected 2 (genus 0)")
        if len(self.boundary_loops) > 0 and (chi != 1 or len(self.boundary_loops) != 1):
            raise TopologyError(
                f"open mesh has Euler characteristic {chi} and {len(self.boundary_loops)} "
                "boundary loops, expected disk topology"
            )

    def _validate(self):
        V, F = self.n_vertices, self.faces
        if F.size == 0:
            raise TopologyError("mesh has no faces")
        if F.min() < 0 or F.max() >= V:
            bad = np.flatnonzero((F < 0).any(1) | (F >= V).any(1))
            raise TopologyError(f"face indices out of range in faces {bad[:10].tolist()}", element=int(bad[0]))
        rep = (F[:, 0] == F[:, 1]) | (F[:, 1] == F[:, 2]) | (F[:, 0] == F[:, 2])
        if rep.any():
            raise TopologyError(f"face {int(np.flatnonzero(rep)[0])} repeats a vertex index",
                                element=int(np.flatnonzero(rep)[0]))
        areas = self.face_areas
        scale = max(np.ptp(self.vertices, axis=0).max(), 1e-300) ** 2
        zero = areas <= 1e-14 * scale
        if zero.any():
            raise TopologyError(f"face {int(np.flatnonzero(zero)[0])} has zero area",
                                element=int(np.flatnonzero(zero)[0]))
        used = np.zeros(V, bool)
        used[F.ravel()] = True
        if not used.all():
            raise TopologyError(f"vertex {int(np.flatnonzero(~used)[0])} is not referenced by any face",
                                element=int(np.flatnonzero(~used)[0]))

        half = self.half_edges
        und = np.sort(half, axis=1)
        uniq, counts = np.unique(und, axis=0, return_counts=True)
        if (counts > 2).any():
            e = uniq[np.argmax(counts > 2)]
            raise TopologyError(f"non-manifold edge ({e[0]}, {e[1]}) shared by more than two faces",
                                element=(int(e[0]), int(e[1])))
        _, dcounts = np.unique(half, axis=0, return_counts=True)
        if (dcounts > 1).any():
            raise TopologyError("inconsistent face orientation: a directed edge appears twice")
        ncomp, _ = connected_components(self.adjacency, directed=False)
        if ncomp != 1:
            raise TopologyError(f"mesh has {ncomp} connected components")

    def _trace_boundary(self):
        half = self.half_edges
        key = half[:, 0] * self.n_vertices + half[:, 1]
        rkey = half[:, 1] * self.n_vertices + half[:, 0]
        bnd = half[~np.isin(key, rkey)]
        if len(bnd) == 0:
            return []
        nxt = {}
        for a, b in bnd:
            if a in nxt:
                raise TopologyError(f"non-manifold boundary vertex {a}", element=int(a))
            nxt[int(a)] = int(b)
        loops, seen = [], set()
        for start in sorted(nxt):
            if start in seen:
                continue
            loop, v = [], start
            while v not in seen:
                seen.add(v)
                loop.append(v)
                v = nxt[v]
            loops.append(np.array(loop, dtype=np.int64))
        return loops

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def is_closed(self) -> bool:
        return not self.boundary_loops

    @cached_property
    def half_edges(self) -> np.ndarray:
        F = self.faces
        return np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]])

    @cached_property
    def edges(self) -> np.ndarray:
        return np.unique(np.sort(self.half_edges, axis=1), axis=0)

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        e = self.edges
        n = self.n_vertices
        A = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        return (A + A.T).tocsr()

    @cached_property
    def incidence(self) -> sparse.csr_matrix:
        """Vertex-by-face incidence matrix (V x F)."""
        F = self.faces
        rows = F.ravel()
        cols = np.repeat(np.arange(len(F)), 3)
        return sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n_vertices, len(F)))

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.n_vertices, bool)
        for loop in self.boundary_loops:
            m[loop] = True
        return m

    @cached_property
    def face_areas(self) -> np.ndarray:
        X = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]), axis=1)

    @property
    def mean_edge_length(self) -> float:
        e = self.edges
        return float(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1).mean())


def signed_areas(coords: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Signed area of each planar triangle with complex vertex coordinates."""
    a, b, c = coords[faces[:, 0]], coords[faces[:, 1]], coords[faces[:, 2]]
    return 0.5 * np.imag(np.conj(b - a) * (c - a))


@dataclass(eq=False)
class PlanarEmbedding:
    """Per-vertex complex parameter coordinates of a mesh.

    ``domain`` is ``"disk"`` (unit disk) or ``"sphere"`` (extended plane via
    stereographic chart).  On the sphere exactly one ``pole`` vertex sits at
    infinity; faces touching it are excluded from every planar computation.
    """

    mesh: TriMesh
    coords: np.ndarray
    domain: str = DISK
    pole: int | None = None
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.coords = np.array(self.coords, dtype=complex)
        if self.coords.shape != (self.mesh.n_vertices,):
            raise ValidationError(
                f"embedding has {self.coords.shape[0] if self.coords.ndim else 0} coordinates "
                f"for a mesh with {self.mesh.n_vertices} vertices"
            )
        if self.domain not in (DISK, SPHERE):
            raise ValidationError(f"unknown domain kind {self.domain!r}")
        if self.domain == SPHERE:
            if self.pole is None:
                raise ValidationError("sphere embedding requires a pole vertex")
            self.coords[self.pole] = complex(np.inf, 0.0)
        elif self.pole is not None:
            raise ValidationError("disk embeddings have no pole vertex")
        if self.validate:
            self.check()

    def check(self):
        c = self.coords
        act = self.active_vertices
        if not np.all(np.isfinite(c[act])):
            bad = np.flatnonzero(act & ~np.isfinite(c))
            raise ValidationError(f"non-finite coordinates at vertices {bad[:10].tolist()}", bad)
        if self.domain == DISK:
            if not self.mesh.boundary_loops:
                raise ValidationError("disk embedding requires a mesh with a boundary")
            out = np.flatnonzero(np.abs(c) > 1 + BOUNDARY_TOL)
            if len(out):
                raise ValidationError(f"coordinates outside the unit disk at vertices {out[:10].tolist()}", out)
            bnd = self.mesh.boundary_loops[0]
            off = bnd[np.abs(np.abs(c[bnd]) - 1) > BOUNDARY_TOL]
            if len(off):
                raise ValidationError(f"boundary vertices not on the unit circle: {off[:10].tolist()}", off)
        elif not self.mesh.is_closed:
            raise ValidationError("sphere embedding requires a closed mesh")
        fi = self.active_faces
        sa = signed_areas(c, self.mesh.faces[fi])
        flipped = fi[sa <= 0]
        if len(flipped):
            raise ValidationError(f"flipped or degenerate faces in embedding: {flipped[:10].tolist()}", flipped)

    @cached_property
    def active_vertices(self) -> np.ndarray:
        m = np.ones(self.mesh.n_vertices, bool)
        if self.pole is not None:
            m[self.pole] = False
        return m

    @cached_property
    def active_faces(self) -> np.ndarray:
        """Indices of faces not incident to the pole."""
        F = self.mesh.faces
        if self.pole is None:
            return np.arange(len(F))
        return np.flatnonzero(~(F == self.pole).any(axis=1))

    @cached_property
    def pole_faces(self) -> np.ndarray:
        F = self.mesh.faces
        if self.pole is None:
            return np.zeros(0, dtype=np.int64)
        return np.flatnonzero((F == self.pole).any(axis=1))

    @property
    def n_vertices(self) -> int:
        return self.mesh.n_vertices

    def with_coords(self, coords, validate=True) -> "PlanarEmbedding":
        return PlanarEmbedding(self.mesh, coords, self.domain, self.pole, validate=validate)

    @cached_property
    def _gradient_operator(self):
        # x/y derivative weights per active face: g = sum_k w_k f_k (exact for affine f)
        fi = self.active_faces
        F = self.mesh.faces[fi]
        z = self.coords[F]
        e1 = z[:, 1] - z[:, 0]
        e2 = z[:, 2] - z[:, 0]
        det = e1.real * e2.imag - e1.imag * e2.real
        scale = np.abs(e1) * np.abs(e2)
        sing = np.abs(det) <= 1e-12 * scale
        if sing.any():
            bad = fi[sing]
            raise SingularFace(f"collinear face images (flipped or degenerate parameterization): "
                               f"{bad[:10].tolist()}", bad)
        # [e1x e1y; e2x e2y] g = [f1-f0; f2-f0]
        wx1, wx2 = e2.imag / det, -e1.imag / det
        wy1, wy2 = -e2.real / det, e1.real / det
        return fi, F, (wx1, wx2), (wy1, wy2)


def face_gradient(embed: PlanarEmbedding, field: np.ndarray) -> np.ndarray:
    """Per-face gradient (d/dx, d/dy) of a piecewise-linear vertex field.

    Solves the 2x2 edge system on each face; rows of faces incident to the
    sphere pole are NaN.  Complex fields are differentiated componentwise, so
    the result of a map ``f = f1 + i f2`` is ``(f_x, f_y)`` as complex numbers.
    """
    field = np.asarray(field)
    fi, F, (wx1, wx2), (wy1, wy2) = embed._gradient_operator
    d1 = field[F[:, 1]] - field[F[:, 0]]
    d2 = field[F[:, 2]] - field[F[:, 0]]
    out = np.full((embed.mesh.n_faces, 2), np.nan, dtype=np.result_type(field.dtype, float))
    out[fi, 0] = wx1 * d1 + wx2 * d2
    out[fi, 1] = wy1 * d1 + wy2 * d2
    return out


def _active_incidence(embed: PlanarEmbedding):
    key = "_active_incidence_cache"
    cached = embed.__dict__.get(key)
    if cached is None:
        inc = embed.mesh.incidence[:, embed.active_faces]
        counts = np.asarray(inc.sum(axis=1)).ravel()
        cached = (inc.tocsr(), counts)
        embed.__dict__[key] = cached
    return cached


def vertex_derivatives(embed: PlanarEmbedding, field: np.ndarray) -> np.ndarray:
    """Per-vertex (Dx, Dy): unweighted mean of the incident face gradients.

    Boundary vertices average over their (partial) one-ring.  The pole of a
    sphere embedding gets zeros.
    """
    g = face_gradient(embed, field)[embed.active_faces]
    inc, counts = _active_incidence(embed)
    safe = np.where(counts > 0, counts, 1)
    out = np.empty((embed.n_vertices, 2), dtype=g.dtype)
    out[:, 0] = inc @ g[:, 0] / safe
    out[:, 1] = inc @ g[:, 1] / safe
    out[counts == 0] = 0
    return out


def derivative_matrices(embed: PlanarEmbedding) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """Sparse (Dx, Dy) with ``Dx @ f == vertex_derivatives(embed, f)[:, 0]``."""
    key = "_derivative_matrix_cache"
    cached = embed.__dict__.get(key)
    if cached is None:
        fi, F, (wx1, wx2), (wy1, wy2) = embed._gradient_operator
        nf, n = len(fi), embed.n_vertices
        rows = np.repeat(np.arange(nf), 3)
        cols = F.ravel()
        inc, counts = _active_incidence(embed)
        avg = sparse.diags(np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0)) @ inc
        mats = []
        for w1, w2 in ((wx1, wx2), (wy1, wy2)):
            vals = np.column_stack([-(w1 + w2), w1, w2]).ravel()
            G = sparse.csr_matrix((vals, (rows, cols)), shape=(nf, n))
            mats.append((avg @ G).tocsr())
        cached = tuple(mats)
        embed.__dict__[key] = cached
    return cached


def vertex_area(embed: PlanarEmbedding) -> np.ndarray:
    """Lumped planar area per vertex: sum of incident face areas over 3."""
    key = "_vertex_area_cache"
    cached = embed.__dict__.get(key)
    if cached is None:
        fi = embed.active_faces
        a = np.abs(signed_areas(embed.coords, embed.mesh.faces[fi]))
        inc, _ = _active_incidence(embed)
        cached = np.asarray(inc @ (a / 3.0)).ravel()
        cached.setflags(write=False)
        embed.__dict__[key] = cached
    return cached


def _vertex_normals(mesh: TriMesh) -> np.ndarray:
    X = mesh.vertices[mesh.faces]
    fn = np.cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0])
    n = mesh.incidence @ fn
    return n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)


def discrete_curvatures(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    """Mean and Gaussian curvature per vertex.

    Mean curvature comes from the cotangent Laplacian of the coordinates,
    signed positive where the curvature normal agrees with the orientation
    normal (outward on a CCW-oriented closed surface).  Gaussian curvature is
    the angle deficit.  Both are divided by the mixed Voronoi area; boundary
    vertices copy the value of their nearest interior neighbour.
    """
    X, F = mesh.vertices, mesh.faces
    P = X[F]
    # edge opposite vertex k
    e = [P[:, 2] - P[:, 1], P[:, 0] - P[:, 2], P[:, 1] - P[:, 0]]
    l2 = [np.einsum("ij,ij->i", ek, ek) for ek in e]
    dblA = np.linalg.norm(np.cross(e[0], e[1]), axis=1)
    # cot of the angle at vertex k, between the two edges meeting there
    cot, ang = [], []
    for k in range(3):
        u = -e[(k + 2) % 3]
        v = e[(k + 1) % 3]
        dot = np.einsum("ij,ij->i", u, v)
        cot.append(dot / dblA)
        ang.append(np.arctan2(dblA, dot))
    cot = np.stack(cot, 1)
    ang = np.stack(ang, 1)

    obtuse = ang > np.pi / 2
    area = np.zeros((len(F), 3))
    acute = ~obtuse.any(1)
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        # Voronoi share of vertex k: edges k->i (opposite j) and k->j (opposite i)
        area[acute, k] = (l2[j][acute] * cot[acute, j] + l2[i][acute] * cot[acute, i]) / 8.0
    if obtuse.any():
        warnings.warn(f"{int(obtuse.any(1).sum())} obtuse triangles: using mixed-area fallback",
                      ObtuseDegenerate, stacklevel=2)
        ob = ~acute
        half = dblA[ob] / 2.0
        area[ob] = np.where(obtuse[ob], half[:, None] / 2.0, half[:, None] / 4.0)

    n = mesh.n_vertices
    A = np.bincount(F.ravel(), weights=area.ravel(), minlength=n)
    Lx = np.zeros((n, 3))
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        w = cot[:, k][:, None] * (X[F[:, i]] - X[F[:, j]])
        np.add.at(Lx, F[:, i], w)
        np.add.at(Lx, F[:, j], -w)
    Hn = Lx / (2.0 * A[:, None])
    H = 0.5 * np.einsum("ij,ij->i", Hn, _vertex_normals(mesh))
    angle_sum = np.bincount(F.ravel(), weights=ang.ravel(), minlength=n)
    K = (2.0 * np.pi - angle_sum) / A

    bnd = mesh.boundary_mask
    if bnd.any():
        src = _nearest_interior(mesh, bnd)
        H = np.where(bnd, H[src], H)
        K = np.where(bnd, K[src], K)
    return H, K


def _nearest_interior(mesh: TriMesh, bnd: np.ndarray) -> np.ndarray:
    """For each vertex, an interior vertex reached through the closest neighbour."""
    n = mesh.n_vertices
    src = np.where(bnd, -1, np.arange(n))
    if bnd.all():
        raise TopologyError("mesh has no interior vertices")
    adj = mesh.adjacency.tolil().rows
    X = mesh.vertices
    pending = list(np.flatnonzero(bnd))
    while pending:
        left = []
        for v in pending:
            cand = [u for u in adj[v] if src[u] >= 0]
            if not cand:
                left.append(v)
                continue
            best = min(cand, key=lambda u: np.linalg.norm(X[u] - X[v]))
            src[v] = src[best]
        if len(left) == len(pending):
            raise TopologyError("boundary vertices disconnected from the interior")
        pending = left
    return src
