"""Per-texel descriptors: contour, appearance and local-aspect features.

Every texel is summarized by 18 scalars, always stored in the order of
``FEATURE_NAMES``.  Area, bounding-sphere radius and the local-diameter
statistics are normalized across all texels of a mesh; the other features
keep their raw values so absolute dictionary bands apply to them.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .curvature import CurvatureField, curvature_field
from .depth import DepthField
from .errors import (DegenerateTexelError, NoIntersectionWarning, TexelError,
                     ZeroAreaError)
from .mesh import TriangleMesh, vertex_normals

logger = logging.getLogger(__name__)

FEATURE_NAMES = (
    "perimeter_length",
    "contour_sphericity",
    "local_diameter_mean",
    "local_diameter_std",
    "area",
    "bounding_sphere_radius",
    "perimeter2_area_ratio",
    "pca_var_1",
    "pca_var_2",
    "pca_var_3",
    "depth_mean",
    "depth_std",
    "gauss_curv_mean",
    "gauss_curv_std",
    "shape_index_mean",
    "shape_index_std",
    "curv_index_mean",
    "curv_index_std",
)
N_FEATURES = len(FEATURE_NAMES)
INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}


@dataclass(frozen=True)
class Contour:
    """Boundary loops of a facet set, longest first.

    ``loops`` hold vertex ids, ``positions`` the raw coordinates and
    ``smoothed`` the coordinates after one pass of the 1-2-1 filter.  Loops
    are oriented so the region lies to the left when seen from outside.
    """

    loops: list
    positions: list
    smoothed: list
    normal: np.ndarray  # area-weighted mean normal of the region

    @property
    def outer(self) -> np.ndarray:
        return self.smoothed[0]


def _facet_array(mesh: TriangleMesh, texel) -> np.ndarray:
    facets = getattr(texel, "facets", texel)
    facets = np.unique(np.asarray(facets, dtype=np.int64))
    if facets.size == 0:
        raise ValueError("texel has no facets")
    return facets


def smooth_loop(points: np.ndarray) -> np.ndarray:
    """One pass of v'_i = (v_{i-1} + 2 v_i + v_{i+1}) / 4 on a closed polygon."""
    points = np.asarray(points, dtype=np.float64)
    return (np.roll(points, 1, axis=0) + 2 * points + np.roll(points, -1, axis=0)) / 4.0


def loop_length(points: np.ndarray) -> float:
    return float(np.linalg.norm(np.roll(points, -1, axis=0) - points, axis=1).sum())


def _boundary_loops(mesh: TriangleMesh, facets: np.ndarray) -> list:
    inside = np.zeros(mesh.n_faces, dtype=bool)
    inside[facets] = True
    faces = mesh.faces
    nbr = mesh.face_neighbors
    # boundary half-edges (f, k): edge faces[f,k] -> faces[f,k+1] with outside twin
    f_idx, k_idx = np.nonzero(~inside[nbr[facets]])
    f_idx = facets[f_idx]
    if f_idx.size == 0:
        return []
    pending = {(int(f), int(k)) for f, k in zip(f_idx, k_idx)}
    loops = []
    for start in sorted(pending):
        if start not in pending:
            continue
        loop = []
        f, k = start
        while (f, k) in pending:
            pending.discard((f, k))
            loop.append(int(faces[f, k]))
            # pivot around the end vertex b through inside faces until the
            # next boundary half-edge leaving b
            b = faces[f, (k + 1) % 3]
            kk = (k + 1) % 3
            while inside[nbr[f, kk]]:
                g = nbr[f, kk]
                f = g
                kk = int(np.flatnonzero(faces[g] == b)[0])
            k = kk
        loops.append(np.asarray(loop, dtype=np.int64))
    return loops


def extract_contour(mesh: TriangleMesh, texel) -> Contour:
    """Boundary loops of a texel's facet set with one smoothing pass.

    Raises ``DegenerateTexelError`` when the facet set has no boundary.
    """
    facets = _facet_array(mesh, texel)
    loops = _boundary_loops(mesh, facets)
    if not loops:
        raise DegenerateTexelError("texel covers a closed component and has no contour")
    pos = [mesh.vertices[loop] for loop in loops]
    lengths = [loop_length(p) for p in pos]
    order = sorted(range(len(loops)), key=lambda i: (-lengths[i], int(loops[i].min())))
    loops = [loops[i] for i in order]
    pos = [pos[i] for i in order]
    normal = mesh.face_normals_raw[facets].sum(axis=0)
    nn = np.linalg.norm(normal)
    normal = normal / nn if nn > 0 else np.array([0.0, 0.0, 1.0])
    return Contour(loops, pos, [smooth_loop(p) for p in pos], normal)


def local_diameters(points: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Thickness at every edge midpoint of a closed, counter-clockwise loop.

    The cut plane at a midpoint contains ``normal`` and is perpendicular to
    the edge; the diameter is the distance to the nearest crossing with
    another edge on the inner side.  Edges without a crossing give NaN.
    """
    p = np.asarray(points, dtype=np.float64)
    n = len(p)
    e = np.roll(p, -1, axis=0) - p
    mid = p + e / 2
    pn = e - np.outer(e @ normal, normal)
    pn_len = np.linalg.norm(pn, axis=1)
    inward = np.cross(normal, e)
    out = np.full(n, np.nan)
    ok = pn_len > 1e-300
    pn[ok] /= pn_len[ok, None]
    idx = np.flatnonzero(ok)
    for lo in range(0, len(idx), 512):
        rows = idx[lo:lo + 512]
        s = np.einsum("rjk,rk->rj", p[None, :, :] - mid[rows, None, :], pn[rows])
        sb = np.roll(s, -1, axis=1)
        hit = (s * sb <= 0) & ~((s == 0) & (sb == 0))
        hit[np.arange(len(rows)), rows] = False
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(hit, s / (s - sb), 0.0)
        x = p[None, :, :] + t[:, :, None] * e[None, :, :]
        rel = x - mid[rows, None, :]
        side = np.einsum("rjk,rk->rj", rel, inward[rows])
        dist = np.linalg.norm(rel, axis=2)
        hit &= (side > 0) & (dist > 1e-12)
        dist = np.where(hit, dist, np.inf)
        best = dist.min(axis=1)
        out[rows] = np.where(np.isfinite(best), best, np.nan)
    return out


def contour_features(contour: Contour, region_vertices: np.ndarray) -> tuple:
    """(perimeter, sphericity, local diameter mean, std, max) of the outer loop.

    Local diameters are returned unnormalized together with their maximum;
    ``assemble_features`` rescales them across texels.
    """
    outer = contour.outer
    if len(outer) < 3:
        raise DegenerateTexelError("outer contour has fewer than 3 vertices")
    perimeter = loop_length(outer)
    center = np.asarray(region_vertices, dtype=np.float64).mean(axis=0)
    d = np.linalg.norm(outer - center, axis=1)
    radius = d.mean()
    sphericity = float(d.std() / radius) if radius > 0 else 0.0
    diam = local_diameters(outer, contour.normal)
    diam = diam[np.isfinite(diam)]
    if diam.size == 0:
        warnings.warn("no cut plane met the contour; local diameters set to 0",
                      NoIntersectionWarning, stacklevel=2)
        return perimeter, sphericity, 0.0, 0.0, 0.0
    return perimeter, sphericity, float(diam.mean()), float(diam.std()), float(diam.max())


def appearance_features(mesh: TriangleMesh, texel, contour: Contour) -> tuple:
    """(area, bounding-sphere radius, perimeter^2/area, pca_1, pca_2, pca_3).

    Area and radius are raw here; the cross-texel min-max rescaling happens
    in ``assemble_features``.
    """
    facets = _facet_array(mesh, texel)
    area = float(mesh.face_areas[facets].sum())
    if not area > 1e-300:
        raise ZeroAreaError("texel facets have zero total area")
    verts = mesh.vertices[np.unique(mesh.faces[facets])]
    center = verts.mean(axis=0)
    radius = float(np.linalg.norm(verts - center, axis=1).max())
    perimeter = loop_length(contour.outer)
    cov = np.cov(verts, rowvar=False, bias=True)
    ev = np.clip(np.sort(np.linalg.eigvalsh(cov))[::-1], 0.0, None)
    total = ev.sum()
    pca = ev / total if total > 0 else np.array([1.0, 0.0, 0.0])
    return (area, radius, perimeter ** 2 / area, float(pca[0]), float(pca[1]), float(pca[2]))


def local_aspect_features(vertices: np.ndarray, depth01: np.ndarray,
                          curvature: CurvatureField) -> tuple:
    """Mean and std of depth (already rescaled to [0, 1] mesh-wide), Gaussian
    curvature, shape index and curvedness over a texel's vertices."""
    v = np.asarray(vertices, dtype=np.int64)
    out = []
    for field_ in (depth01, curvature.gaussian, curvature.shape_index, curvature.curvedness):
        x = field_[v]
        out += [float(x.mean()), float(x.std())]
    return tuple(out)


@dataclass
class FeatureTable:
    """Feature rows in texel-id order; invalid texels carry NaN rows."""

    texel_ids: np.ndarray
    values: np.ndarray
    valid: np.ndarray
    errors: list = field(default_factory=list)
    names: tuple = FEATURE_NAMES

    def __len__(self) -> int:
        return len(self.texel_ids)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, INDEX[name]]

    def row(self, texel_id: int) -> dict:
        i = int(np.flatnonzero(self.texel_ids == texel_id)[0])
        return dict(zip(self.names, self.values[i].tolist()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("texel_id",) + tuple(self.names))
            for tid, row in zip(self.texel_ids, self.values):
                w.writerow([int(tid)] + [repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path) -> "FeatureTable":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        names = tuple(header[1:])
        ids = np.array([int(r[0]) for r in body], dtype=np.int64)
        values = np.array([[float(x) for x in r[1:]] for r in body], dtype=np.float64)
        values = values.reshape(len(body), len(names))
        valid = np.all(np.isfinite(values), axis=1)
        return cls(ids, values, valid, [""] * len(ids), names)


def _minmax(x: np.ndarray) -> np.ndarray:
    lo, hi = np.nanmin(x), np.nanmax(x)
    if not hi > lo:
        return np.where(np.isfinite(x), 0.0, np.nan)
    return (x - lo) / (hi - lo)


def assemble_features(segmentation, mesh: TriangleMesh, depth: DepthField,
                      normals: np.ndarray | None = None,
                      curvature: CurvatureField | None = None) -> FeatureTable:
    """Compute the 18 features of every texel with all cross-texel
    normalizations applied.

    Texels whose contour or area is degenerate are kept with NaN values and
    ``valid = False``; the error class name is recorded in ``errors``.
    """
    texels = sorted(segmentation.texels, key=lambda t: t.id)
    n = len(texels)
    values = np.full((n, N_FEATURES), np.nan)
    valid = np.zeros(n, dtype=bool)
    errors = [""] * n
    diam_max = np.zeros(n)
    if n:
        if curvature is None:
            curvature = curvature_field(mesh, normals if normals is not None
                                        else vertex_normals(mesh))
        vd = depth.vertex_depth
        span = vd.max() - vd.min()
        depth01 = (vd - vd.min()) / span if span > 0 else np.zeros_like(vd)
    for i, t in enumerate(texels):
        try:
            contour = extract_contour(mesh, t)
            verts = np.unique(mesh.faces[t.facets])
            per, sph, dmean, dstd, dmax = contour_features(contour, mesh.vertices[verts])
            app = appearance_features(mesh, t, contour)
            loc = local_aspect_features(verts, depth01, curvature)
        except TexelError as exc:
            errors[i] = type(exc).__name__
            logger.warning("texel %d excluded: %s", t.id, exc)
            continue
        values[i] = (per, sph, dmean, dstd) + app + loc
        diam_max[i] = dmax
        valid[i] = True
    if valid.any():
        v = values[valid]
        for name in ("area", "bounding_sphere_radius"):
            v[:, INDEX[name]] = _minmax(v[:, INDEX[name]])
        top = diam_max[valid].max()
        if top > 0:
            v[:, INDEX["local_diameter_mean"]] /= top
            v[:, INDEX["local_diameter_std"]] /= top
        values[valid] = v
    ids = np.array([t.id for t in texels], dtype=np.int64)
    return FeatureTable(ids, values, valid, errors)
