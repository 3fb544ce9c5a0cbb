"""End-to-end pipeline: depth map, texels, features, textures, annotations."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .depth import DepthField, Orientation, depth_map
from .mesh import Normalization, TriangleMesh, vertex_normals
from .segmentation import Segmentation, segment

logger = logging.getLogger(__name__)


@dataclass
class SegmentResult:
    mesh: TriangleMesh  # normalized to unit bounding box
    normalization: Normalization
    normals: np.ndarray
    depth: DepthField
    segmentation: Segmentation
    scale: float  # in normalized model units


@dataclass
class ClassifyResult(SegmentResult):
    features: object = None
    clustering: object = None


@dataclass
class AnnotateResult(ClassifyResult):
    annotations: list = None
    dictionary: object = None


def set_workers(workers: int) -> None:
    import numba

    if workers > 0:
        numba.set_num_threads(min(workers, numba.config.NUMBA_NUM_THREADS))


def segment_mesh(mesh: TriangleMesh, config: PipelineConfig | None = None) -> SegmentResult:
    config = (config or PipelineConfig()).validate()
    set_workers(config.workers)
    norm_mesh, norm = mesh.normalized()
    # the bounding box of a normalized mesh has unit largest side
    scale = config.scale
    normals = vertex_normals(norm_mesh)
    depth = depth_map(norm_mesh, scale, Orientation(config.orientation), normals)
    seg = segment(norm_mesh, depth, scale, bins=config.otsu_bins, tau=config.merge_tau,
                  min_depth=config.min_seed_depth * scale)
    logger.info("%d texels at scale %g", len(seg.texels), config.scale)
    return SegmentResult(norm_mesh, norm, normals, depth, seg, scale)


def classify_mesh(mesh: TriangleMesh, config: PipelineConfig | None = None) -> ClassifyResult:
    from .clustering import cluster_features
    from .features import assemble_features

    config = (config or PipelineConfig()).validate()
    base = segment_mesh(mesh, config)
    table = assemble_features(base.segmentation, base.mesh, base.depth, normals=base.normals)
    clustering = cluster_features(table, neighbor_rank=config.neighbor_rank, k_max=config.k_max,
                                  cost_tolerance=config.cost_tolerance,
                                  zscore=config.zscore_features)
    return ClassifyResult(**vars(base), features=table, clustering=clustering)


def annotate_mesh(mesh: TriangleMesh, config: PipelineConfig | None = None) -> AnnotateResult:
    from .annotation import annotate_all, load_dictionary

    config = (config or PipelineConfig()).validate()
    dictionary = load_dictionary(config.dictionary or None)
    base = classify_mesh(mesh, config)
    annotations = annotate_all(base.features, base.clustering, dictionary, config.n_select)
    return AnnotateResult(**vars(base), annotations=annotations, dictionary=dictionary)
