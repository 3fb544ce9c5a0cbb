"""Quadric error metric edge-collapse simplification of closed meshes.

Collapses are accepted only when the link condition holds (so the result stays
a closed 2-manifold) and no surrounding face flips its orientation.
"""

from __future__ import annotations

import heapq
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CollapseStallWarning
from .mesh import TriangleMesh

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecimationReport:
    collapses: int
    max_error: float  # largest quadric error of an accepted collapse (squared length)
    stalled: bool


def _face_quadrics(vertices, faces):
    p = vertices[faces]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    area2 = np.linalg.norm(n, axis=1)
    safe = np.where(area2 > 0, area2, 1.0)
    unit = n / safe[:, None]
    d = -np.einsum("ij,ij->i", unit, p[:, 0])
    plane = np.concatenate([unit, d[:, None]], axis=1)
    # area weighting keeps tiny faces from dominating
    return 0.5 * area2[:, None, None] * plane[:, :, None] * plane[:, None, :]


class _Collapser:
    def __init__(self, mesh: TriangleMesh):
        self.pos = mesh.vertices.copy()
        self.faces = mesh.faces.copy()
        self.face_alive = np.ones(len(self.faces), dtype=bool)
        self.n_alive = len(self.faces)
        self.vf = [set() for _ in range(len(self.pos))]
        for f, tri in enumerate(self.faces.tolist()):
            for v in tri:
                self.vf[v].add(f)
        fq = _face_quadrics(self.pos, self.faces)
        self.q = np.zeros((len(self.pos), 4, 4))
        for k in range(3):
            np.add.at(self.q, self.faces[:, k], fq)
        self.stamp = np.zeros(len(self.pos), dtype=np.int64)
        self.vertex_alive = np.ones(len(self.pos), dtype=bool)
        self.heap = []
        self.rejected: dict[int, set] = {}
        self.max_error = 0.0
        self.collapses = 0

    def ring(self, v):
        out = set()
        for f in self.vf[v]:
            out.update(self.faces[f].tolist())
        out.discard(v)
        return out

    def cost(self, u, v):
        q = self.q[u] + self.q[v]
        a = q[:3, :3]
        b = -q[:3, 3]
        cands = [self.pos[u], self.pos[v], 0.5 * (self.pos[u] + self.pos[v])]
        if abs(np.linalg.det(a)) > 1e-12 * max(1.0, float(np.abs(a).max()) ** 3):
            opt = np.linalg.solve(a, b)
            # keep the optimum only when it stays near the edge
            span = np.linalg.norm(self.pos[u] - self.pos[v])
            if np.linalg.norm(opt - cands[2]) <= 2.0 * span:
                cands.insert(0, opt)
        best, best_err = None, np.inf
        for p in cands:
            h = np.append(p, 1.0)
            err = float(h @ q @ h)
            if err < best_err:
                best, best_err = p, err
        return max(best_err, 0.0), best

    def push(self, u, v):
        if u > v:
            u, v = v, u
        err, _ = self.cost(u, v)
        heapq.heappush(self.heap, (err, u, v, int(self.stamp[u]), int(self.stamp[v])))

    def valid(self, u, v, p):
        shared = self.vf[u] & self.vf[v]
        if len(shared) != 2:
            return False
        opposite = set()
        for f in shared:
            opposite.update(self.faces[f].tolist())
        opposite -= {u, v}
        if self.ring(u) & self.ring(v) != opposite:
            return False
        if self.n_alive - 2 < 4:
            return False
        for w in (u, v):
            for f in self.vf[w] - shared:
                tri = self.pos[self.faces[f]]
                n_old = np.cross(tri[1] - tri[0], tri[2] - tri[0])
                k = int(np.flatnonzero(self.faces[f] == w)[0])
                tri = tri.copy()
                tri[k] = p
                n_new = np.cross(tri[1] - tri[0], tri[2] - tri[0])
                if float(n_old @ n_new) <= 0.0:
                    return False
        return True

    def collapse(self, u, v, p, err):
        shared = self.vf[u] & self.vf[v]
        for f in shared:
            self.face_alive[f] = False
            for w in self.faces[f].tolist():
                self.vf[w].discard(f)
        self.n_alive -= len(shared)
        for f in self.vf[v]:
            tri = self.faces[f]
            tri[tri == v] = u
            self.vf[u].add(f)
        self.vf[v] = set()
        self.vertex_alive[v] = False
        self.pos[u] = p
        self.q[u] += self.q[v]
        self.stamp[u] += 1
        self.stamp[v] += 1
        self.max_error = max(self.max_error, err)
        self.collapses += 1
        ring = self.ring(u)
        for w in ring:
            self.push(u, w)
        for w in ring | {u}:
            for a, b in self.rejected.pop(w, ()):
                if self.vertex_alive[a] and self.vertex_alive[b]:
                    self.push(a, b)

    def run(self, target_faces):
        edges = set()
        for tri in self.faces.tolist():
            for k in range(3):
                a, b = tri[k], tri[(k + 1) % 3]
                edges.add((min(a, b), max(a, b)))
        for u, v in sorted(edges):
            self.push(u, v)
        while self.n_alive > target_faces and self.heap:
            err, u, v, su, sv = heapq.heappop(self.heap)
            if not (self.vertex_alive[u] and self.vertex_alive[v]):
                continue
            if self.stamp[u] != su or self.stamp[v] != sv:
                continue
            err, p = self.cost(u, v)
            if not self.valid(u, v, p):
                self.rejected.setdefault(u, set()).add((u, v))
                self.rejected.setdefault(v, set()).add((u, v))
                continue
            self.collapse(u, v, p, err)
        return self.n_alive <= target_faces

    def result(self) -> TriangleMesh:
        keep = np.flatnonzero(self.vertex_alive)
        remap = np.full(len(self.pos), -1, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        faces = remap[self.faces[self.face_alive]]
        return TriangleMesh.from_arrays(self.pos[keep], faces)


def quadric_decimate(mesh: TriangleMesh, target_faces: int, return_report: bool = False):
    """Collapse edges by increasing quadric error until at most
    ``target_faces`` faces remain."""
    if target_faces < 4:
        raise ValueError("target_faces must be >= 4")
    if target_faces >= mesh.n_faces:
        report = DecimationReport(0, 0.0, False)
        return (mesh, report) if return_report else mesh
    c = _Collapser(mesh)
    reached = c.run(target_faces)
    if not reached:
        warnings.warn(f"decimation stalled at {c.n_alive} faces (target {target_faces})",
                      CollapseStallWarning, stacklevel=2)
    out = c.result()
    report = DecimationReport(c.collapses, c.max_error, not reached)
    logger.debug("decimated %d -> %d faces, max quadric error %.3g", mesh.n_faces,
                 out.n_faces, c.max_error)
    return (out, report) if return_report else out
