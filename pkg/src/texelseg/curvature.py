"""Discrete curvature: angle-deficit Gaussian curvature and quadric-fit
principal curvatures, with Koenderink's shape index and curvedness.

Sign convention: principal curvatures are positive on convex regions (a
sphere with outward normals has k1 = k2 = 1/R).  The shape index is
``(2/pi) * arctan((k2 + k1) / (k2 - k1))`` with ``k1 >= k2``, so convex caps
sit near -1, cylinders near -0.5, saddles near 0 and cups near +1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .mesh import TriangleMesh, vertex_normals


@dataclass(frozen=True)
class CurvatureField:
    k1: np.ndarray
    k2: np.ndarray
    gaussian: np.ndarray
    shape_index: np.ndarray
    curvedness: np.ndarray
    area: np.ndarray  # mixed Voronoi area per vertex


def corner_angles(mesh: TriangleMesh) -> np.ndarray:
    """(m, 3) interior angle at each corner."""
    p = mesh.vertices[mesh.faces]
    out = np.empty((mesh.n_faces, 3))
    for k in range(3):
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        out[:, k] = np.arctan2(cross, np.einsum("ij,ij->i", a, b))
    return out


def mixed_voronoi_area(mesh: TriangleMesh, angles: np.ndarray | None = None) -> np.ndarray:
    """Voronoi area clipped to the triangle for obtuse corners; sums to the
    total surface area."""
    if angles is None:
        angles = corner_angles(mesh)
    p = mesh.vertices[mesh.faces]
    area = mesh.face_areas
    obtuse = angles > np.pi / 2
    any_obtuse = obtuse.any(axis=1)
    out = np.zeros(mesh.n_vertices)
    with np.errstate(divide="ignore", invalid="ignore"):
        cot = 1.0 / np.tan(angles)
    for k in range(3):
        i, j, l = k, (k + 1) % 3, (k + 2) % 3
        eij = np.sum((p[:, j] - p[:, i]) ** 2, axis=1)
        eil = np.sum((p[:, l] - p[:, i]) ** 2, axis=1)
        voronoi = (eij * cot[:, l] + eil * cot[:, j]) / 8.0
        contrib = np.where(any_obtuse, np.where(obtuse[:, i], area / 2, area / 4), voronoi)
        np.add.at(out, mesh.faces[:, i], contrib)
    return out


def angle_deficit(mesh: TriangleMesh, angles: np.ndarray | None = None) -> np.ndarray:
    if angles is None:
        angles = corner_angles(mesh)
    total = np.zeros(mesh.n_vertices)
    for k in range(3):
        np.add.at(total, mesh.faces[:, k], angles[:, k])
    return 2 * np.pi - total


@njit(cache=True)
def _fit_vertex(pos, v, nbrs, normal):
    n = normal
    # tangent frame
    if abs(n[0]) < 0.9:
        t1 = np.array([0.0, n[2], -n[1]])
    else:
        t1 = np.array([-n[2], 0.0, n[0]])
    t1 /= np.sqrt(np.sum(t1 * t1))
    t2 = np.array([n[1] * t1[2] - n[2] * t1[1], n[2] * t1[0] - n[0] * t1[2],
                   n[0] * t1[1] - n[1] * t1[0]])
    k = len(nbrs)
    a = np.empty((k, 5))
    b = np.empty(k)
    s = 0.0
    for i in range(k):
        d = pos[nbrs[i]] - pos[v]
        s += np.sqrt(np.sum(d * d))
    s /= k
    for i in range(k):
        d = (pos[nbrs[i]] - pos[v]) / s
        x = np.sum(d * t1)
        y = np.sum(d * t2)
        a[i, 0] = x * x
        a[i, 1] = x * y
        a[i, 2] = y * y
        a[i, 3] = x
        a[i, 4] = y
        b[i] = np.sum(d * n)
    coef, _, rank, _ = np.linalg.lstsq(a, b)
    if rank < 5:
        return np.nan, np.nan
    # derivatives of the height function in original units
    hxx = 2.0 * coef[0] / s
    hxy = coef[1] / s
    hyy = 2.0 * coef[2] / s
    hx = coef[3]
    hy = coef[4]
    e_ = 1.0 + hx * hx
    f_ = hx * hy
    g_ = 1.0 + hy * hy
    w = np.sqrt(1.0 + hx * hx + hy * hy)
    l_ = hxx / w
    m_ = hxy / w
    n_ = hyy / w
    det = e_ * g_ - f_ * f_
    gauss = (l_ * n_ - m_ * m_) / det
    mean = (e_ * n_ - 2.0 * f_ * m_ + g_ * l_) / (2.0 * det)
    disc = max(mean * mean - gauss, 0.0)
    root = np.sqrt(disc)
    # the height grows along the outward normal, so convexity is -h''
    return -(mean - root), -(mean + root)


@njit(cache=True)
def _fit_all(pos, normals, indptr, indices):
    nv = pos.shape[0]
    k1 = np.full(nv, np.nan)
    k2 = np.full(nv, np.nan)
    mark = np.zeros(nv, dtype=np.int64)
    buf = np.empty(nv, dtype=np.int64)
    for v in range(nv):
        ring = indices[indptr[v]:indptr[v + 1]]
        c1, c2 = np.nan, np.nan
        if len(ring) >= 5:
            c1, c2 = _fit_vertex(pos, v, ring, normals[v])
        if np.isnan(c1):
            # two-ring fallback
            stamp = v + 1
            mark[v] = stamp
            cnt = 0
            for u in ring:
                if mark[u] != stamp:
                    mark[u] = stamp
                    buf[cnt] = u
                    cnt += 1
            first = cnt
            for i in range(first):
                u = buf[i]
                for w in indices[indptr[u]:indptr[u + 1]]:
                    if mark[w] != stamp:
                        mark[w] = stamp
                        buf[cnt] = w
                        cnt += 1
            if cnt >= 5:
                c1, c2 = _fit_vertex(pos, v, buf[:cnt].copy(), normals[v])
        k1[v] = c1
        k2[v] = c2
    return k1, k2


def principal_curvatures(mesh: TriangleMesh, normals: np.ndarray | None = None):
    """Per-vertex (k1, k2), k1 >= k2, from a least-squares quadric height fit
    over the one-ring (two-ring when the one-ring is rank deficient)."""
    if normals is None:
        normals = vertex_normals(mesh)
    indptr, indices = mesh.vertex_adjacency
    k1, k2 = _fit_all(mesh.vertices, np.ascontiguousarray(normals), indptr, indices)
    bad = np.flatnonzero(np.isnan(k1))
    for v in bad:
        nb = mesh.neighbors(v)
        nb = nb[~np.isnan(k1[nb])]
        k1[v] = k1[nb].mean() if len(nb) else 0.0
        k2[v] = k2[nb].mean() if len(nb) else 0.0
    return k1, k2


def shape_index(k1: np.ndarray, k2: np.ndarray) -> np.ndarray:
    """Koenderink shape index in [-1, 1]; 0 at umbilics (k1 == k2)."""
    k1 = np.asarray(k1, dtype=np.float64)
    k2 = np.asarray(k2, dtype=np.float64)
    diff = k2 - k1
    out = np.zeros_like(k1)
    ok = np.abs(diff) > 1e-12
    out[ok] = (2.0 / np.pi) * np.arctan((k2[ok] + k1[ok]) / diff[ok])
    return out


def curvedness(k1: np.ndarray, k2: np.ndarray) -> np.ndarray:
    return np.sqrt((np.asarray(k1) ** 2 + np.asarray(k2) ** 2) / 2.0)


def curvature_field(mesh: TriangleMesh, normals: np.ndarray | None = None) -> CurvatureField:
    angles = corner_angles(mesh)
    area = mixed_voronoi_area(mesh, angles)
    gauss = angle_deficit(mesh, angles) / area
    k1, k2 = principal_curvatures(mesh, normals)
    return CurvatureField(k1=k1, k2=k2, gaussian=gauss, shape_index=shape_index(k1, k2),
                          curvedness=curvedness(k1, k2), area=area)
