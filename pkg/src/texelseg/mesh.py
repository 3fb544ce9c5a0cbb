"""Closed triangle meshes: validation, adjacency, normals, scale balls and
closest-point queries."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import numba
from numba import njit, prange
from scipy import sparse
from scipy.spatial import cKDTree

from .errors import DegenerateGeometryError, TopologyError

logger = logging.getLogger(__name__)

# prefer OpenMP / workqueue; the bundled TBB is too old and only warns
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed, closed, consistently oriented triangle mesh.

    Parameters
    ----------
    vertices : (n, 3) float array
    faces : (m, 3) int array, counter-clockwise seen from outside

    Adjacency is computed lazily and cached; instances are never mutated, so
    they can be shared between workers.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        f = np.ascontiguousarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must have shape (n, 3)")
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError("faces must have shape (m, 3)")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @classmethod
    def from_arrays(cls, vertices, faces, validate: bool = True) -> "TriangleMesh":
        mesh = cls(np.asarray(vertices, dtype=np.float64), np.asarray(faces, dtype=np.int64))
        if validate:
            mesh.validate()
        return mesh

    def with_vertices(self, vertices) -> "TriangleMesh":
        """Same connectivity, new positions (adjacency is recomputed lazily)."""
        return TriangleMesh(np.asarray(vertices, dtype=np.float64), self.faces)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    # ------------------------------------------------------------------ topology

    def validate(self) -> None:
        """Raise TopologyError unless the mesh is closed, edge-manifold and
        consistently oriented."""
        n, f = self.n_vertices, self.faces
        if len(f) == 0:
            raise TopologyError("mesh has no faces")
        if f.min() < 0 or f.max() >= n:
            raise TopologyError("face references a vertex index out of range")
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise TopologyError("face with repeated vertex index")
        keys = self._halfedge_keys
        uniq, counts = np.unique(keys, return_counts=True)
        if np.any(counts > 1):
            raise TopologyError("edge used twice in the same direction "
                                "(non-manifold edge or inconsistent orientation)")
        src, dst = self._halfedges
        twins = dst * n + src
        if not np.all(np.isin(twins, uniq, assume_unique=False)):
            raise TopologyError("open boundary: some edge borders a single face")
        used = np.zeros(n, dtype=bool)
        used[f.ravel()] = True
        if not used.all():
            raise TopologyError(f"{int((~used).sum())} isolated vertices")

    @cached_property
    def _halfedges(self):
        f = self.faces
        return f.ravel(), f[:, [1, 2, 0]].ravel()

    @cached_property
    def _halfedge_keys(self):
        src, dst = self._halfedges
        return src * self.n_vertices + dst

    @cached_property
    def edges(self) -> np.ndarray:
        """(E, 2) undirected edges, each listed once with i < j."""
        src, dst = self._halfedges
        keep = src < dst
        e = np.stack([src[keep], dst[keep]], axis=1)
        order = np.lexsort((e[:, 1], e[:, 0]))
        return e[order]

    @cached_property
    def face_neighbors(self) -> np.ndarray:
        """(m, 3) index of the face across edge (f[k], f[k+1])."""
        keys = self._halfedge_keys
        order = np.argsort(keys, kind="stable")
        src, dst = self._halfedges
        twins = dst * self.n_vertices + src
        pos = np.searchsorted(keys[order], twins)
        pos = np.clip(pos, 0, len(keys) - 1)
        he = order[pos]
        if not np.array_equal(keys[he], twins):
            raise TopologyError("open boundary: some edge borders a single face")
        return (he // 3).reshape(-1, 3)

    @cached_property
    def vertex_adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR (indptr, indices) of the vertex graph, neighbors sorted by id."""
        e = self.edges
        n = self.n_vertices
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        a = sparse.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
        a.sort_indices()
        return a.indptr.astype(np.int64), a.indices.astype(np.int64)

    @cached_property
    def vertex_faces(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR (indptr, indices) mapping each vertex to its incident faces."""
        m = self.n_faces
        rows = self.faces.ravel()
        cols = np.repeat(np.arange(m), 3)
        a = sparse.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)),
                              shape=(self.n_vertices, m))
        a.sort_indices()
        return a.indptr.astype(np.int64), a.indices.astype(np.int64)

    def neighbors(self, v: int) -> np.ndarray:
        indptr, indices = self.vertex_adjacency
        return indices[indptr[v]:indptr[v + 1]]

    def incident_faces(self, v: int) -> np.ndarray:
        indptr, indices = self.vertex_faces
        return indices[indptr[v]:indptr[v + 1]]

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges) + self.n_faces

    @cached_property
    def n_components(self) -> int:
        e = self.edges
        n = self.n_vertices
        g = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        return int(sparse.csgraph.connected_components(g, directed=False)[0])

    @property
    def genus(self) -> int:
        """Total genus, summed over connected components."""
        twice = 2 * self.n_components - self.euler_characteristic
        if twice % 2:
            raise TopologyError("odd Euler characteristic on a closed mesh")
        return twice // 2

    # ------------------------------------------------------------------ geometry

    @cached_property
    def face_normals_raw(self) -> np.ndarray:
        """Unnormalized face normals (length = twice the face area)."""
        p = self.vertices[self.faces]
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @cached_property
    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_normals_raw, axis=1)

    @cached_property
    def face_barycenters(self) -> np.ndarray:
        return self.vertices[self.faces].mean(axis=1)

    @property
    def bbox_extent(self) -> float:
        """Largest side of the axis-aligned bounding box."""
        return float(np.ptp(self.vertices, axis=0).max())

    def normalized(self) -> tuple["TriangleMesh", "Normalization"]:
        """Center on the bounding box and scale to unit maximum extent."""
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        center = 0.5 * (lo + hi)
        extent = float((hi - lo).max())
        if extent <= 0:
            raise DegenerateGeometryError("mesh has zero bounding box extent")
        norm = Normalization(center=center, scale=extent)
        return self.with_vertices(norm.apply(self.vertices)), norm


@dataclass(frozen=True)
class Normalization:
    """Affine map x -> (x - center) / scale used to reach unit bounding box."""

    center: np.ndarray
    scale: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) / self.scale

    def invert(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) * self.scale + self.center


def vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    """Area-weighted vertex normals, shape (n, 3), unit length.

    A vertex whose weighted sum cancels out takes the normal of its first
    nondegenerate incident face; a star made only of degenerate faces raises
    DegenerateGeometryError.
    """
    fn = mesh.face_normals_raw
    acc = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(acc, mesh.faces[:, k], fn)
    length = np.linalg.norm(acc, axis=1)
    scale_ref = max(float(np.abs(fn).max(initial=0.0)), 1e-300)
    bad = np.flatnonzero(length <= 1e-14 * scale_ref)
    if len(bad):
        face_len = np.linalg.norm(fn, axis=1)
        for v in bad:
            faces = mesh.incident_faces(v)
            good = faces[face_len[faces] > 1e-14 * scale_ref]
            if len(good) == 0:
                raise DegenerateGeometryError(f"vertex {v}: every incident face is degenerate")
            acc[v] = fn[good[0]]
            length[v] = face_len[good[0]]
    return acc / length[:, None]


# ---------------------------------------------------------------------- balls


@njit(cache=True)
def _ball_bfs(indptr, indices, pos, center, r2, mark, stamp, queue):
    """Euclidean-radius-bounded BFS; fills queue[:count] with members."""
    queue[0] = center
    mark[center] = stamp
    head = 0
    tail = 1
    cx, cy, cz = pos[center, 0], pos[center, 1], pos[center, 2]
    while head < tail:
        u = queue[head]
        head += 1
        for k in range(indptr[u], indptr[u + 1]):
            w = indices[k]
            if mark[w] == stamp:
                continue
            dx = pos[w, 0] - cx
            dy = pos[w, 1] - cy
            dz = pos[w, 2] - cz
            if dx * dx + dy * dy + dz * dz <= r2:
                mark[w] = stamp
                queue[tail] = w
                tail += 1
    return tail


@njit(cache=True)
def _ball_members(indptr, indices, pos, center, r2):
    n = pos.shape[0]
    mark = np.zeros(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    count = _ball_bfs(indptr, indices, pos, center, r2, mark, 1, queue)
    return np.sort(queue[:count])


def _chunks(n, nchunks):
    bounds = np.linspace(0, n, nchunks + 1).astype(np.int64)
    return bounds


@njit(cache=True, parallel=True)
def _ball_sums(indptr, indices, pos, r2, bounds):
    n = pos.shape[0]
    sums = np.zeros((n, 3))
    counts = np.zeros(n, dtype=np.int64)
    for c in prange(len(bounds) - 1):
        mark = np.zeros(n, dtype=np.int64)
        queue = np.empty(n, dtype=np.int64)
        for v in range(bounds[c], bounds[c + 1]):
            count = _ball_bfs(indptr, indices, pos, v, r2, mark, v + 1, queue)
            sx = 0.0
            sy = 0.0
            sz = 0.0
            for k in range(count):
                w = queue[k]
                sx += pos[w, 0]
                sy += pos[w, 1]
                sz += pos[w, 2]
            sums[v, 0] = sx
            sums[v, 1] = sy
            sums[v, 2] = sz
            counts[v] = count
    return sums, counts


@njit(cache=True, parallel=True)
def _ball_strict_max(indptr, indices, pos, r2, values, tol, bounds):
    n = pos.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    for c in prange(len(bounds) - 1):
        mark = np.zeros(n, dtype=np.int64)
        queue = np.empty(n, dtype=np.int64)
        for v in range(bounds[c], bounds[c + 1]):
            count = _ball_bfs(indptr, indices, pos, v, r2, mark, v + 1, queue)
            ok = True
            dv = values[v]
            for k in range(1, count):
                w = queue[k]
                dw = values[w]
                if dw > dv + tol:
                    ok = False
                    break
                if dw >= dv - tol and w < v:
                    ok = False
                    break
            out[v] = ok
    return out


def _bounds(n: int) -> np.ndarray:
    return _chunks(n, max(1, min(n, 4 * numba.get_num_threads())))


@dataclass(frozen=True)
class GeodesicBall:
    center: int
    radius: float
    members: np.ndarray


def geodesic_ball(mesh: TriangleMesh, center: int, radius: float) -> GeodesicBall:
    """Vertices reachable from ``center`` through vertices that all lie within
    Euclidean distance ``radius`` of it."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    indptr, indices = mesh.vertex_adjacency
    members = _ball_members(indptr, indices, mesh.vertices, int(center), float(radius) ** 2)
    return GeodesicBall(int(center), float(radius), members)


def ball_means(mesh: TriangleMesh, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Barycenter and member count of every vertex's geodesic ball."""
    indptr, indices = mesh.vertex_adjacency
    sums, counts = _ball_sums(indptr, indices, mesh.vertices, float(radius) ** 2,
                              _bounds(mesh.n_vertices))
    return sums / counts[:, None], counts


def ball_local_maxima(mesh: TriangleMesh, radius: float, values: np.ndarray,
                      tol: float = 1e-12) -> np.ndarray:
    """Boolean mask of vertices whose value beats every other ball member.

    Values equal within ``tol`` count as ties, which the lowest vertex id wins.
    """
    indptr, indices = mesh.vertex_adjacency
    return _ball_strict_max(indptr, indices, mesh.vertices, float(radius) ** 2,
                            np.ascontiguousarray(values, dtype=np.float64), float(tol),
                            _bounds(mesh.n_vertices))


# ------------------------------------------------------------ closest points


def closest_points_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray,
                                c: np.ndarray) -> np.ndarray:
    """Row-wise closest point to p[i] on triangle (a[i], b[i], c[i])."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        out = a + ab * v[:, None] + ac * w[:, None]

        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        out[m] = b[m] + (c[m] - b[m]) * t_bc[m, None]

        t_ac = d2 / (d2 - d6)
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        out[m] = a[m] + ac[m] * t_ac[m, None]

        m = (d6 >= 0) & (d5 <= d6)
        out[m] = c[m]

        t_ab = d1 / (d1 - d3)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        out[m] = a[m] + ab[m] * t_ab[m, None]

        m = (d3 >= 0) & (d4 <= d3)
        out[m] = b[m]

        m = (d1 <= 0) & (d2 <= 0)
        out[m] = a[m]

    bad = ~np.all(np.isfinite(out), axis=1)
    if bad.any():
        out[bad] = _closest_on_degenerate(p[bad], a[bad], b[bad], c[bad])
    return out


def _closest_on_segments(p, a, b):
    ab = b - a
    den = np.einsum("ij,ij->i", ab, ab)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.einsum("ij,ij->i", p - a, ab) / den
    t = np.where(den > 0, np.clip(t, 0.0, 1.0), 0.0)
    return a + ab * t[:, None]


def _closest_on_degenerate(p, a, b, c):
    cands = np.stack([_closest_on_segments(p, a, b), _closest_on_segments(p, b, c),
                      _closest_on_segments(p, c, a)], axis=1)
    d = np.linalg.norm(cands - p[:, None], axis=2)
    return cands[np.arange(len(p)), d.argmin(axis=1)]


class NearestPointIndex:
    """Closest-point queries against the triangles of a mesh.

    Triangles are indexed by centroid in a k-d tree.  For a query q the
    distance to the nearest vertex is an upper bound ``u`` on the surface
    distance, and every triangle holding a point within ``u`` of q has its
    centroid within ``u + R`` where ``R`` is the largest centroid-to-corner
    distance.  Only those candidates are tested exactly.
    """

    def __init__(self, vertices: np.ndarray, faces: np.ndarray):
        vertices = np.asarray(vertices, dtype=np.float64)
        faces = np.asarray(faces, dtype=np.int64)
        if len(faces) == 0:
            raise ValueError("cannot index an empty mesh")
        tri = vertices[faces]
        self._a = np.ascontiguousarray(tri[:, 0])
        self._b = np.ascontiguousarray(tri[:, 1])
        self._c = np.ascontiguousarray(tri[:, 2])
        centroids = tri.mean(axis=1)
        self._reach = float(np.linalg.norm(tri - centroids[:, None], axis=2).max())
        self._centroid_tree = cKDTree(centroids)
        self._vertex_tree = cKDTree(vertices[np.unique(faces)])

    @classmethod
    def from_mesh(cls, mesh: TriangleMesh) -> "NearestPointIndex":
        return cls(mesh.vertices, mesh.faces)

    def query(self, points, batch: int = 65536) -> tuple[np.ndarray, np.ndarray]:
        """Closest surface points and distances for an (k, 3) array."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        closest = np.empty_like(pts)
        dist = np.empty(len(pts))
        for s in range(0, len(pts), batch):
            sl = slice(s, s + batch)
            closest[sl], dist[sl] = self._query_batch(pts[sl])
        return closest, dist

    def _query_batch(self, q):
        upper, _ = self._vertex_tree.query(q)
        radii = upper * (1 + 1e-12) + self._reach + 1e-15
        cand = self._centroid_tree.query_ball_point(q, radii)
        lens = np.fromiter((len(c) for c in cand), dtype=np.int64, count=len(cand))
        tri = np.fromiter((t for c in cand for t in c), dtype=np.int64, count=int(lens.sum()))
        owner = np.repeat(np.arange(len(q)), lens)
        cp = closest_points_on_triangles(q[owner], self._a[tri], self._b[tri], self._c[tri])
        d = np.linalg.norm(cp - q[owner], axis=1)
        # pick per-query minimum; ties resolve to the lowest triangle id
        order = np.lexsort((tri, d, owner))
        starts = np.concatenate([[0], np.cumsum(lens)[:-1]])
        best = order[starts]
        return cp[best], d[best]


def nearest_point(index: NearestPointIndex, q) -> tuple[np.ndarray, float]:
    """Closest point on the indexed surface to a single 3D point."""
    cp, d = index.query(np.asarray(q, dtype=np.float64)[None, :])
    return cp[0], float(d[0])
