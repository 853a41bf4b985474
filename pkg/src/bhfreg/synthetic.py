"""Synthetic meshes and registration fixtures (icospheres, disk meshes,
bumped spheres, landmark layouts).  All randomness goes through a seeded
``numpy.random.Generator``.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse.csgraph import shortest_path
from scipy.spatial import Delaunay

from .mesh import DISK, PlanarEmbedding, TriMesh


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriMesh:
    """Loop-subdivided icosahedron projected to a sphere.

    Vertex counts for 0..4 subdivisions: 12, 42, 162, 642, 2562.
    """
    t = (1.0 + 5 ** 0.5) / 2.0
    V = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
         (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
         (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    F = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
         (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
         (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
         (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in V]
    faces = F
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        nf = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = nf
    return TriMesh(radius * np.array(verts), np.array(faces))


def disk_points(n_vertices: int, jitter: float = 0.0, seed: int | None = 0) -> np.ndarray:
    """Roughly uniform points in the closed unit disk as complex numbers.

    The first point is 0 and the first boundary point is 1, so the disk
    gauge points exist as vertices.
    """
    rng = np.random.default_rng(seed)
    h = np.sqrt(np.pi / n_vertices) * 1.05
    nb = max(3, int(round(2 * np.pi / h)))
    ni = max(1, n_vertices - nb)
    k = np.arange(ni)
    golden = np.pi * (3 - np.sqrt(5))
    r = np.sqrt(k / ni) * (1 - 0.45 * h)
    z = r * np.exp(1j * golden * k)
    if jitter:
        z[1:] += jitter * h * (rng.standard_normal(ni - 1) + 1j * rng.standard_normal(ni - 1))
        over = np.abs(z) > 1 - 0.3 * h
        z[over] *= (1 - 0.3 * h) / np.abs(z[over])
    bnd = np.exp(2j * np.pi * np.arange(nb) / nb)
    return np.concatenate([z, bnd])


def planar_delaunay(z: np.ndarray) -> np.ndarray:
    tri = Delaunay(np.column_stack([z.real, z.imag])).simplices
    a, b, c = z[tri[:, 0]], z[tri[:, 1]], z[tri[:, 2]]
    neg = np.imag(np.conj(b - a) * (c - a)) < 0
    tri[neg] = tri[neg][:, [0, 2, 1]]
    return tri


def disk_mesh(n_vertices: int = 1000, jitter: float = 0.0, seed: int | None = 0) -> PlanarEmbedding:
    """Delaunay triangulation of the unit disk, returned as its identity embedding.

    Vertex 0 sits at the origin; the boundary vertex at 1 is the first
    boundary vertex.
    """
    z = disk_points(n_vertices, jitter, seed)
    mesh = TriMesh(np.column_stack([z.real, z.imag, np.zeros(len(z))]), planar_delaunay(z))
    return PlanarEmbedding(mesh, z, DISK)


def unit_vertex(embed: PlanarEmbedding) -> int:
    return int(np.argmin(np.abs(embed.coords - 1)))


def origin_vertex(embed: PlanarEmbedding) -> int:
    return int(np.argmin(np.abs(embed.coords)))


def height_surface(embed: PlanarEmbedding, kind: str = "folds", amplitude: float = 0.15,
                   seed: int = 0) -> TriMesh:
    """3D surface over a planar disk mesh: z = h(x, y).

    ``kind="folds"`` gives a wrinkled, cortex-like sheet; ``"dome"`` a smooth cap.
    """
    rng = np.random.default_rng(seed)
    x, y = embed.coords.real, embed.coords.imag
    if kind == "folds":
        h = np.zeros_like(x)
        for _ in range(4):
            k = rng.uniform(2.0, 5.0, 2)
            ph = rng.uniform(0, 2 * np.pi)
            h += np.sin(k[0] * x + ph) * np.cos(k[1] * y - ph)
        h *= amplitude / 2
    elif kind == "dome":
        h = amplitude * (1 - x ** 2 - y ** 2)
    else:
        raise ValueError(f"unknown surface kind {kind!r}")
    return TriMesh(np.column_stack([x, y, h]), embed.mesh.faces)


def bumped_sphere(mesh: TriMesh, center=(0.0, 0.0, -1.0), height: float = 0.25,
                  width: float = 0.45) -> TriMesh:
    """Radially displace a unit-sphere mesh by a Gaussian bump around ``center``."""
    X = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1, keepdims=True)
    c = np.asarray(center, float)
    c = c / np.linalg.norm(c)
    ang = np.arccos(np.clip(X @ c, -1, 1))
    r = 1.0 + height * np.exp(-(ang / width) ** 2)
    return TriMesh(X * r[:, None], mesh.faces)


def vertex_path(embed: PlanarEmbedding, start: int, end: int) -> np.ndarray:
    """Shortest edge path between two vertices (planar edge lengths)."""
    mesh = embed.mesh
    e = mesh.edges
    w = np.abs(embed.coords[e[:, 0]] - embed.coords[e[:, 1]])
    from scipy import sparse

    G = sparse.coo_matrix((w, (e[:, 0], e[:, 1])), shape=(mesh.n_vertices,) * 2).tocsr()
    _, pred = shortest_path(G, directed=False, indices=start, return_predecessors=True)
    path = [end]
    while path[-1] != start:
        path.append(pred[path[-1]])
        if path[-1] < 0:
            raise ValueError("vertices are not connected")
    return np.array(path[::-1], dtype=np.int64)


def nearest_vertex(embed: PlanarEmbedding, z: complex) -> int:
    return int(np.argmin(np.abs(embed.coords - z)))


def landmark_fixture(embed: PlanarEmbedding, n_curves: int = 1, shift: float = 0.08,
                     seed: int = 0):
    """Landmark curves on a disk mesh with smoothly displaced targets.

    Each curve is a vertex path between two interior points; its target is the
    same polyline bent by a bump-shaped displacement of magnitude ``shift``.
    Returns a list of ``(vertex_indices, target_positions)`` pairs.
    """
    rng = np.random.default_rng(seed)
    if n_curves == 1:
        layouts = [(-0.35 + 0.3j, 0.35 + 0.3j)]
    else:
        layouts = []
        for k in range(n_curves):
            th = 2 * np.pi * k / n_curves + 0.3
            c = 0.55 * np.exp(1j * th)
            d = 0.14 * np.exp(1j * (th + np.pi / 2))
            layouts.append((c - d, c + d))
    curves = []
    for a, b in layouts:
        path = vertex_path(embed, nearest_vertex(embed, a), nearest_vertex(embed, b))
        z = embed.coords[path]
        s = np.linspace(0, 1, len(path))
        normal = 1j * (b - a) / abs(b - a)
        bend = shift * np.sin(np.pi * s) * (1 + 0.1 * rng.standard_normal())
        curves.append((path, z + bend * normal))
    return curves


def folded_disk_param(n_vertices: int = 800, seed: int = 1, jitter: float = 0.1,
                      amplitude: float = 0.15) -> PlanarEmbedding:
    """Wrinkled sheet over a disk mesh with its mean-value disk parameterization,
    normalized so the origin and unit vertices of the planar mesh map to 0 and 1."""
    from .param import fallback_disk_embed, normalize_disk

    e = disk_mesh(n_vertices, jitter=jitter, seed=seed)
    surf = height_surface(e, "folds", amplitude=amplitude, seed=seed)
    return normalize_disk(fallback_disk_embed(surf), origin_vertex(e), unit_vertex(e))


def feature_fixture(n_a: int = 800, n_b: int = 900, jitter: float = 0.1, amplitude: float = 0.15):
    """Two parameterized sheets with F1 = 5.2 x^2 + 3.3 y^2 on the first and
    F2 = 6.8 x^2 + 2.8 y on the second (x, y parameter coordinates)."""
    a = folded_disk_param(n_a, 1, jitter, amplitude)
    b = folded_disk_param(n_b, 2, jitter, amplitude)
    x, y = a.coords.real, a.coords.imag
    F1 = 5.2 * x ** 2 + 3.3 * y ** 2
    x, y = b.coords.real, b.coords.imag
    F2 = 6.8 * x ** 2 + 2.8 * y
    return a, b, F1, F2


def sphere_gauge(mesh: TriMesh) -> tuple[int, int, int]:
    """Gauge vertices (p1, p2, pole): two equatorial vertices at chord
    distance > 1 and the northernmost vertex."""
    X = mesh.vertices - mesh.vertices.mean(axis=0)
    north = int(np.argmax(X[:, 2]))
    eq = np.argsort(np.abs(X[:, 2]))
    p1 = int(eq[0])
    r = np.linalg.norm(X[p1])
    p2 = int(next(i for i in eq[1:] if np.linalg.norm(X[i] - X[p1]) > r))
    return p1, p2, north


def sphere_chart(mesh: TriMesh, gauge: tuple[int, int, int]) -> PlanarEmbedding:
    from .param import sphere_embed_normalize, stereographic_embed

    p1, p2, pole = gauge
    return sphere_embed_normalize(stereographic_embed(mesh, pole), p1, p2, pole)


def sphere_pair(subdivisions: int = 3, height: float = 0.25):
    """Unit icosphere and the same mesh with a southern bump, charted with one gauge."""
    s = icosphere(subdivisions)
    b = bumped_sphere(s, height=height)
    g = sphere_gauge(s)
    return sphere_chart(s, g), sphere_chart(b, g)
