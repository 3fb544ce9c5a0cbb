"""Scale-dependent smoothing and one-sided (oriented) depth maps."""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ScaleTooSmallWarning
from .mesh import NearestPointIndex, TriangleMesh, ball_means, vertex_normals

logger = logging.getLogger(__name__)


class Orientation(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class SmoothedMesh:
    positions: np.ndarray
    scale: float
    ball_sizes: np.ndarray


@dataclass(frozen=True)
class OrientedSmoothedMesh:
    positions: np.ndarray
    orientation: Orientation
    moved: np.ndarray  # True where the smoothed position was taken


@dataclass(frozen=True)
class DepthField:
    vertex_depth: np.ndarray
    facet_depth: np.ndarray
    scale: float
    orientation: Orientation


def laplacian_smooth(mesh: TriangleMesh, scale: float) -> SmoothedMesh:
    """Replace each vertex by the barycenter of its geodesic ball of radius
    ``scale`` (the vertex itself included).  Single pass."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    means, counts = ball_means(mesh, scale)
    singletons = float(np.mean(counts == 1))
    if singletons > 0.5:
        warnings.warn(f"{singletons:.0%} of scale balls hold a single vertex; "
                      "smoothing is close to the identity", ScaleTooSmallWarning, stacklevel=2)
    return SmoothedMesh(positions=means, scale=float(scale), ball_sizes=counts)


def orient_smooth(mesh: TriangleMesh, smoothed: SmoothedMesh, normals: np.ndarray,
                  orientation: Orientation | str = Orientation.POSITIVE) -> OrientedSmoothedMesh:
    """Keep the smoothed position only where the vertex sticks out (positive)
    or sinks in (negative) along its normal; ties keep the original."""
    orientation = Orientation(orientation)
    offset = np.einsum("ij,ij->i", mesh.vertices - smoothed.positions, normals)
    moved = offset > 0 if orientation is Orientation.POSITIVE else offset < 0
    positions = np.where(moved[:, None], smoothed.positions, mesh.vertices)
    return OrientedSmoothedMesh(positions=positions, orientation=orientation, moved=moved)


def facet_depth(mesh: TriangleMesh, vertex_depth: np.ndarray) -> np.ndarray:
    return vertex_depth[mesh.faces].mean(axis=1)


def compute_depth(mesh: TriangleMesh, oriented: OrientedSmoothedMesh, scale: float = float("nan"),
                  index: NearestPointIndex | None = None) -> DepthField:
    """Distance from each original vertex to the closest point of the oriented
    smoothed surface, and per-facet means of it."""
    if index is None:
        index = NearestPointIndex(oriented.positions, mesh.faces)
    _, dist = index.query(mesh.vertices)
    return DepthField(vertex_depth=dist, facet_depth=facet_depth(mesh, dist),
                      scale=float(scale), orientation=oriented.orientation)


def depth_map(mesh: TriangleMesh, scale: float,
              orientation: Orientation | str = Orientation.POSITIVE,
              normals: np.ndarray | None = None) -> DepthField:
    """Full depth computation at one scale."""
    if normals is None:
        normals = vertex_normals(mesh)
    smoothed = laplacian_smooth(mesh, scale)
    oriented = orient_smooth(mesh, smoothed, normals, orientation)
    depth = compute_depth(mesh, oriented, scale)
    logger.debug("depth at r=%g: %d/%d vertices moved, max depth %.3g", scale,
                 int(oriented.moved.sum()), mesh.n_vertices, depth.vertex_depth.max())
    return depth
