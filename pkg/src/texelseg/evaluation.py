"""Segmentation quality: surfacic Hausdorff distance and robustness sweeps."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .errors import EmptySetError, TexelError
from .mesh import TriangleMesh
from .segmentation import Segmentation
from .synthetic import GroundTruth, add_noise, decimate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HausdorffReport:
    d_h: float
    forward: float  # max over S0 of the distance to S1 (unnormalized)
    backward: float  # max over S1 of the distance to S0 (unnormalized)
    bbox_norm: float


def _directed(src: np.ndarray, dst: np.ndarray) -> float:
    d, _ = cKDTree(dst).query(src)
    return float(d.max())


def hausdorff(mesh: TriangleMesh, s0, s1) -> HausdorffReport:
    """Max-min distance between facet barycenters of two facet sets, divided
    by the largest bounding-box side of the mesh."""
    s0 = np.unique(np.asarray(s0, dtype=np.int64))
    s1 = np.unique(np.asarray(s1, dtype=np.int64))
    if len(s0) == 0 or len(s1) == 0:
        raise EmptySetError("hausdorff distance needs two nonempty facet sets")
    bc = mesh.face_barycenters
    fwd = _directed(bc[s0], bc[s1])
    bwd = _directed(bc[s1], bc[s0])
    b = mesh.bbox_extent
    return HausdorffReport(max(fwd, bwd) / b, fwd, bwd, b)


def mean_adjacent_spacing(mesh: TriangleMesh) -> float:
    """Mean barycenter distance over face-adjacent pairs, divided by the
    bounding-box size so it compares directly with ``hausdorff``."""
    nbr = mesh.face_neighbors
    f = np.repeat(np.arange(mesh.n_faces), 3)
    g = nbr.ravel()
    keep = f < g
    bc = mesh.face_barycenters
    d = np.linalg.norm(bc[f[keep]] - bc[g[keep]], axis=1)
    return float(d.mean()) / mesh.bbox_extent


def truth_regions(mesh: TriangleMesh, truth: GroundTruth) -> np.ndarray:
    """Connected-component id of each foreground facet, -1 for background."""
    fg = truth.facet_foreground
    f = np.repeat(np.arange(mesh.n_faces), 3)
    g = mesh.face_neighbors.ravel()
    keep = fg[f] & fg[g]
    a = sparse.coo_matrix((np.ones(int(keep.sum())), (f[keep], g[keep])),
                          shape=(mesh.n_faces, mesh.n_faces))
    _, comp = sparse.csgraph.connected_components(a, directed=False)
    labels = np.full(mesh.n_faces, -1, dtype=np.int64)
    ids = np.unique(comp[fg])
    labels[fg] = np.searchsorted(ids, comp[fg])
    return labels


def matched_texels(mesh: TriangleMesh, segmentation: Segmentation, truth: GroundTruth,
                   min_overlap: float = 0.5) -> list:
    """Texels with at least ``min_overlap`` of their area on ground truth."""
    area = mesh.face_areas
    fg = truth.facet_foreground
    out = []
    for t in segmentation.texels:
        a = area[t.facets]
        if a.sum() > 0 and a[fg[t.facets]].sum() >= min_overlap * a.sum():
            out.append(t)
    return out


@dataclass
class RunResult:
    axis_value: float
    run: int
    d_h: float
    texel_count: int
    extra_regions: int
    truth_count: int
    delta_t: float = float("nan")
    faces: int = 0
    error: str = ""


@dataclass
class SweepResult:
    axis_value: float
    d_h: list = field(default_factory=list)
    runs: list = field(default_factory=list)
    delta_t: float = float("nan")

    @property
    def mean(self) -> float:
        return float(np.mean(self.d_h)) if self.d_h else float("nan")

    @property
    def min(self) -> float:
        return float(np.min(self.d_h)) if self.d_h else float("nan")

    @property
    def max(self) -> float:
        return float(np.max(self.d_h)) if self.d_h else float("nan")


def evaluate_segmentation(mesh: TriangleMesh, segmentation: Segmentation, truth: GroundTruth,
                          axis_value: float = 0.0, run: int = 0,
                          matched_only: bool = True) -> RunResult:
    """Texel counts and d_H against the ground-truth foreground.

    With ``matched_only`` the distance uses only texels matching a
    ground-truth region, so noise-born extra regions are reported but do not
    enter d_H; otherwise every texel counts.
    """
    truth_count = int(truth_regions(mesh, truth).max() + 1)
    matched = matched_texels(mesh, segmentation, truth)
    extra = len(segmentation.texels) - len(matched)
    used = matched if matched_only else segmentation.texels
    if used and truth.facet_foreground.any():
        fg = np.concatenate([t.facets for t in used])
        d_h = hausdorff(mesh, fg, truth.foreground).d_h
    else:
        d_h = float("nan")
    return RunResult(axis_value, run, d_h, len(segmentation.texels), extra, truth_count,
                     faces=mesh.n_faces)


def _segment(mesh, config):
    from .pipeline import segment_mesh

    return segment_mesh(mesh, config).segmentation


def noise_sweep(mesh: TriangleMesh, truth: GroundTruth, intensities, runs: int, config,
                radius: float | None = None, base_seed: int | None = None) -> tuple[list, list]:
    """Noise robustness: for every intensity and run, perturb, segment and
    compare against the (unchanged) ground truth.

    Returns ``(summaries, rows)``: one SweepResult per intensity and one
    RunResult per (intensity, run).  Intensity 0 skips the perturbation, so
    every run reproduces the noise-free baseline.
    """
    if radius is None:
        radius = 0.5 * mesh.bbox_extent
    seed0 = config.seed if base_seed is None else base_seed
    summaries, rows = [], []
    for i, intensity in enumerate(intensities):
        summary = SweepResult(float(intensity))
        for k in range(runs):
            seed = int(np.random.SeedSequence([seed0, i, k]).generate_state(1)[0])
            try:
                noisy = add_noise(mesh, intensity, seed=seed, radius=radius)
                seg = _segment(noisy, config)
                row = evaluate_segmentation(noisy, seg, truth, intensity, k)
            except TexelError as exc:
                logger.warning("noise %.3g run %d failed: %s", intensity, k, exc)
                row = RunResult(float(intensity), k, float("nan"), 0, 0, 0,
                                error=type(exc).__name__)
            rows.append(row)
            summary.runs.append(row)
            if np.isfinite(row.d_h):
                summary.d_h.append(row.d_h)
        summaries.append(summary)
    return summaries, rows


def resolution_sweep(mesh: TriangleMesh, truth: GroundTruth, targets, config) -> tuple[list, list]:
    """Resolution robustness: decimate, segment, compare with the transferred
    ground truth; ``delta_t`` records the mean adjacent-facet spacing."""
    summaries, rows = [], []
    for target in targets:
        try:
            low, low_truth = decimate(mesh, int(target), truth)
            seg = _segment(low, config)
            row = evaluate_segmentation(low, seg, low_truth, float(target), matched_only=False)
            row.delta_t = mean_adjacent_spacing(low)
        except TexelError as exc:
            logger.warning("resolution %d failed: %s", target, exc)
            row = RunResult(float(target), 0, float("nan"), 0, 0, 0, error=type(exc).__name__)
        rows.append(row)
        summaries.append(SweepResult(float(target), [row.d_h] if np.isfinite(row.d_h) else [],
                                     [row], row.delta_t))
    return summaries, rows
