"""Ground-truth-labelled synthetic meshes: icospheres displaced by grayscale
maps, normal-direction noise and decimation with label transfer."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .decimation import quadric_decimate
from .errors import ParseError
from .mesh import TriangleMesh, vertex_normals

GROUND_TRUTH_THRESHOLD = 128.0

_T = (1.0 + 5.0 ** 0.5) / 2.0
_ICO_VERTICES = np.array([
    (-1, _T, 0), (1, _T, 0), (-1, -_T, 0), (1, -_T, 0),
    (0, -1, _T), (0, 1, _T), (0, -1, -_T), (0, 1, -_T),
    (_T, 0, -1), (_T, 0, 1), (-_T, 0, -1), (-_T, 0, 1),
], dtype=np.float64)
_ICO_FACES = np.array([
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
], dtype=np.int64)


def icosphere(subdivisions: int) -> TriangleMesh:
    """Unit sphere from a subdivided icosahedron: 20 * 4**subdivisions faces."""
    if subdivisions < 0:
        raise ValueError("subdivisions must be >= 0")
    v = _ICO_VERTICES / np.linalg.norm(_ICO_VERTICES, axis=1, keepdims=True)
    f = _ICO_FACES
    for _ in range(subdivisions):
        e = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(e, axis=0, return_inverse=True)
        inv = inv.ravel()
        mid = v[uniq[:, 0]] + v[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        base = len(v)
        m = len(f)
        ab, bc, ca = inv[:m] + base, inv[m:2 * m] + base, inv[2 * m:] + base
        a, b, c = f[:, 0], f[:, 1], f[:, 2]
        f = np.concatenate([
            np.stack([a, ab, ca], 1), np.stack([b, bc, ab], 1),
            np.stack([c, ca, bc], 1), np.stack([ab, bc, ca], 1)])
        v = np.concatenate([v, mid])
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return TriangleMesh(v, f)


def flat_sheet(cells: int = 40, size: float = 1.0) -> TriangleMesh:
    """Zero-thickness square: two coincident grids glued along their rim.

    The result is closed and consistently oriented (top faces point +z,
    bottom faces -z) while every point lies in the plane z = 0, so it stands
    in for a flat plane wherever a closed mesh is required.
    """
    if cells < 2:
        raise ValueError("cells must be >= 2")
    n = cells
    g = np.linspace(-size / 2, size / 2, n + 1)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    top = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)])
    idx = np.arange(len(top)).reshape(n + 1, n + 1)
    interior = np.zeros(idx.shape, dtype=bool)
    interior[1:-1, 1:-1] = True
    bottom = idx.copy()
    bottom[interior] = len(top) + np.arange(int(interior.sum()))
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    # a diagonal joining two rim vertices would be shared by both sheets
    alt = (((i == n - 1) & (j == 0)) | ((i == 0) & (j == n - 1))).ravel()[:, None]
    faces = []
    for ids, flip in ((idx, False), (bottom, True)):
        a, b = ids[:-1, :-1].ravel(), ids[1:, :-1].ravel()
        c, d = ids[1:, 1:].ravel(), ids[:-1, 1:].ravel()
        t1 = np.where(alt, np.column_stack([a, b, d]), np.column_stack([a, b, c]))
        t2 = np.where(alt, np.column_stack([b, c, d]), np.column_stack([a, c, d]))
        f = np.vstack([t1, t2])
        faces.append(f[:, ::-1] if flip else f)
    return TriangleMesh.from_arrays(np.vstack([top, top[idx[interior]]]), np.vstack(faces))


@dataclass(frozen=True)
class DisplacementMap:
    """Grayscale raster (rows = latitude from the north pole, columns =
    longitude) with values in [0, 255]."""

    raster: np.ndarray
    max_displacement: float = 0.02  # fraction of the sphere radius

    def __post_init__(self):
        r = np.asarray(self.raster, dtype=np.float64)
        if r.ndim != 2 or r.size == 0:
            raise ValueError("raster must be a nonempty 2D array")
        if r.min() < 0 or r.max() > 255:
            raise ValueError("raster values must lie in [0, 255]")
        object.__setattr__(self, "raster", r)


@dataclass(frozen=True)
class GroundTruth:
    vertex_gray: np.ndarray
    facet_foreground: np.ndarray

    @classmethod
    def from_gray(cls, mesh: TriangleMesh, gray: np.ndarray) -> "GroundTruth":
        gray = np.asarray(gray, dtype=np.float64)
        fg = gray[mesh.faces].mean(axis=1) > GROUND_TRUTH_THRESHOLD
        return cls(gray, fg)

    @property
    def foreground(self) -> np.ndarray:
        return np.flatnonzero(self.facet_foreground)


def read_displacement_map(path, max_displacement: float = 0.02) -> DisplacementMap:
    """Load a PGM (P2/P5) or PNG raster as 8-bit grayscale."""
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(Path(path)) as img:
            raster = np.asarray(img.convert("L"), dtype=np.float64)
    except (OSError, UnidentifiedImageError) as exc:
        raise ParseError(f"{path}: cannot read raster ({exc})") from exc
    return DisplacementMap(raster, max_displacement)


def write_pgm(path, raster: np.ndarray) -> None:
    """Binary 8-bit PGM."""
    r = np.clip(np.rint(raster), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{r.shape[1]} {r.shape[0]}\n255\n".encode())
        fh.write(r.tobytes())


def spherical_uv(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = points / np.linalg.norm(points, axis=1, keepdims=True)
    u = (np.arctan2(p[:, 1], p[:, 0]) + np.pi) / (2 * np.pi)
    v = np.arccos(np.clip(p[:, 2], -1.0, 1.0)) / np.pi
    return u, v


def sample_bilinear(raster: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear lookup at pixel centers; longitude wraps, latitude clamps."""
    h, w = raster.shape
    x = u * w - 0.5
    y = v * h - 0.5
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    x1 = (x0 + 1) % w
    x0 = x0 % w
    y1 = np.clip(y0 + 1, 0, h - 1)
    y0 = np.clip(y0, 0, h - 1)
    top = raster[y0, x0] * (1 - fx) + raster[y0, x1] * fx
    bottom = raster[y1, x0] * (1 - fx) + raster[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def displace(mesh: TriangleMesh, dmap: DisplacementMap) -> tuple[TriangleMesh, GroundTruth]:
    """Push vertices radially by (gray / 255) * max_displacement * radius."""
    p = mesh.vertices
    norms = np.linalg.norm(p, axis=1)
    radius = float(norms.mean())
    u, v = spherical_uv(p)
    gray = np.clip(sample_bilinear(dmap.raster, u, v), 0.0, 255.0)
    offset = gray / 255.0 * dmap.max_displacement * radius
    moved = p + (p / norms[:, None]) * offset[:, None]
    out = mesh.with_vertices(moved)
    return out, GroundTruth.from_gray(out, gray)


def add_noise(mesh: TriangleMesh, intensity: float, seed: int | None = None,
              radius: float | None = None) -> TriangleMesh:
    """Move each vertex along its normal by U(-I, I) * radius / 100."""
    if intensity < 0:
        raise ValueError("intensity must be >= 0")
    if intensity == 0:
        return mesh
    if radius is None:
        radius = 0.5 * mesh.bbox_extent
    rng = np.random.default_rng(seed)
    amount = rng.uniform(-1.0, 1.0, mesh.n_vertices) * intensity * radius / 100.0
    return mesh.with_vertices(mesh.vertices + vertex_normals(mesh) * amount[:, None])


def transfer_gray(source: TriangleMesh, truth: GroundTruth, target: TriangleMesh) -> GroundTruth:
    """Gray value of the nearest source vertex, labels re-derived."""
    _, idx = cKDTree(source.vertices).query(target.vertices)
    return GroundTruth.from_gray(target, truth.vertex_gray[idx])


def decimate(mesh: TriangleMesh, target_faces: int,
             source_truth: GroundTruth | None = None):
    """Quadric edge-collapse simplification with ground-truth transfer.

    Returns ``(mesh, truth)`` (``truth`` is None when none was given)."""
    if target_faces >= mesh.n_faces:
        return mesh, source_truth
    simplified = quadric_decimate(mesh, target_faces)
    truth = None if source_truth is None else transfer_gray(mesh, source_truth, simplified)
    return simplified, truth


def save_truth(truth: GroundTruth, vertex_path, facet_path) -> None:
    """CSV pair: ``vertex_id,gray`` and ``facet_id,label`` (1 = foreground)."""
    with open(vertex_path, "w") as fh:
        fh.write("vertex_id,gray\n")
        fh.writelines(f"{i},{float(g)!r}\n" for i, g in enumerate(truth.vertex_gray))
    with open(facet_path, "w") as fh:
        fh.write("facet_id,label\n")
        fh.writelines(f"{i},{int(b)}\n" for i, b in enumerate(truth.facet_foreground))


def load_truth(mesh: TriangleMesh, vertex_path) -> GroundTruth:
    """Ground truth from a ``vertex_id,gray`` CSV; facet labels re-derived."""
    try:
        data = np.loadtxt(vertex_path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ParseError(f"{vertex_path}: cannot read ground truth ({exc})") from exc
    if data.shape != (mesh.n_vertices, 2) or not np.array_equal(data[:, 0], np.arange(mesh.n_vertices)):
        raise ParseError(f"{vertex_path}: expected one gray value per vertex id 0..{mesh.n_vertices - 1}")
    return GroundTruth.from_gray(mesh, data[:, 1])
