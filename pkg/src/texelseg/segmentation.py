"""Texel extraction: seeds, adaptive Otsu region growing and region merging."""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from .depth import DepthField
from .errors import EmptyRegionError, NoSeedsError
from .mesh import TriangleMesh, ball_local_maxima, geodesic_ball

logger = logging.getLogger(__name__)

OTSU_BINS = 256
MERGE_TAU = 0.5
TIE_TOL = 1e-12


@dataclass(frozen=True)
class OtsuResult:
    threshold: float
    inter_class_variance: float
    histogram_bins: int


def otsu_threshold(values, bins: int = OTSU_BINS, atol: float = TIE_TOL) -> OtsuResult:
    """Histogram threshold maximizing the between-class variance.

    Candidates are the ``bins - 1`` inner boundaries of a uniform histogram on
    ``[min, max]``; class means use the actual values, not bin centers.  The
    lowest boundary wins ties.  Values spanning less than ``atol`` are treated
    as constant: threshold = min value, variance 0.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("otsu_threshold needs at least one value")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    lo, hi = float(x.min()), float(x.max())
    if hi - lo <= atol:
        return OtsuResult(lo, 0.0, bins)
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, bins - 1)
    counts = np.bincount(idx, minlength=bins).astype(np.float64)
    sums = np.bincount(idx, weights=x, minlength=bins)
    n = float(x.size)
    w0 = np.cumsum(counts)[:-1]
    s0 = np.cumsum(sums)[:-1]
    w1 = np.cumsum(counts[::-1])[::-1][1:]
    s1 = np.cumsum(sums[::-1])[::-1][1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        var = (w0 / n) * (w1 / n) * (s0 / w0 - s1 / w1) ** 2
    var[(w0 == 0) | (w1 == 0)] = -np.inf
    k = int(np.argmax(var))
    return OtsuResult(float(edges[k + 1]), float(var[k]), bins)


@dataclass(frozen=True)
class Texel:
    id: int
    seed: int
    seed_facet: int
    facets: np.ndarray
    depth_mean: float
    depth_std: float
    threshold: float = float("nan")
    members: tuple = ()  # seeds merged into this texel


@dataclass
class Segmentation:
    texels: list
    background: np.ndarray
    scale: float
    n_faces: int
    seeds: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    global_threshold: float = float("nan")

    @property
    def labels(self) -> np.ndarray:
        """Per-facet texel index, -1 for background."""
        out = np.full(self.n_faces, -1, dtype=np.int64)
        for t in self.texels:
            out[t.facets] = t.id
        return out

    @property
    def foreground(self) -> np.ndarray:
        if not self.texels:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate([t.facets for t in self.texels]))

    def to_json(self) -> str:
        def num(x):
            return float(x) if np.isfinite(x) else None

        doc = {
            "scale": float(self.scale),
            "n_faces": int(self.n_faces),
            "global_threshold": num(self.global_threshold),
            "seeds": [int(s) for s in self.seeds],
            "texels": [
                {"id": int(t.id), "seed": int(t.seed), "seed_facet": int(t.seed_facet),
                 "depth_mean": num(t.depth_mean), "depth_std": num(t.depth_std),
                 "threshold": num(t.threshold), "members": [int(m) for m in t.members],
                 "facets": [int(f) for f in t.facets]}
                for t in self.texels
            ],
        }
        return json.dumps(doc, indent=1)


def _stats(facets, facet_depth):
    d = facet_depth[facets]
    return float(d.mean()), float(d.std())


def global_threshold(depth: DepthField, bins: int = OTSU_BINS) -> float:
    return otsu_threshold(depth.vertex_depth, bins).threshold


def find_seeds(mesh: TriangleMesh, depth: DepthField, scale: float, bins: int = OTSU_BINS,
               min_depth: float = 0.0) -> np.ndarray:
    """Strict local depth maxima over scale balls that pass the global Otsu
    threshold (and the absolute ``min_depth`` floor).  Sorted vertex ids."""
    d = depth.vertex_depth
    candidates = ball_local_maxima(mesh, scale, d, TIE_TOL)
    threshold = global_threshold(depth, bins)
    seeds = np.flatnonzero(candidates & (d > threshold) & (d > min_depth))
    logger.debug("%d local maxima, %d seeds above Otsu threshold %.4g",
                 int(candidates.sum()), len(seeds), threshold)
    if len(seeds) == 0:
        raise NoSeedsError(f"no salient detail at scale {scale:g}")
    return seeds


def _ball_facets(mesh: TriangleMesh, members: np.ndarray) -> np.ndarray:
    indptr, indices = mesh.vertex_faces
    inside = np.zeros(mesh.n_vertices, dtype=bool)
    inside[members] = True
    faces = np.unique(np.concatenate([indices[indptr[v]:indptr[v + 1]] for v in members]))
    return faces[inside[mesh.faces[faces]].all(axis=1)]


def _component(mesh: TriangleMesh, start: int, allowed: np.ndarray) -> np.ndarray:
    """Face-adjacency connected component of ``start`` inside a boolean mask."""
    nbr = mesh.face_neighbors
    seen = {start}
    queue = deque([start])
    while queue:
        f = queue.popleft()
        for g in nbr[f]:
            g = int(g)
            if allowed[g] and g not in seen:
                seen.add(g)
                queue.append(g)
    return np.array(sorted(seen), dtype=np.int64)


def grow_region(mesh: TriangleMesh, depth: DepthField, seed: int, scale: float,
                bins: int = OTSU_BINS, global_thresh: float | None = None) -> Texel:
    """Grow the texel of one seed from a local Otsu threshold over the facets
    inside its geodesic ball of radius ``2 * scale``."""
    if global_thresh is None:
        global_thresh = global_threshold(depth, bins)
    fd = depth.facet_depth
    members = geodesic_ball(mesh, seed, 2.0 * scale).members
    cand = _ball_facets(mesh, members)
    if len(cand) == 0:
        raise EmptyRegionError(f"seed {seed}: no facet inside its 2r ball")
    values = fd[cand]
    otsu = otsu_threshold(values, bins)
    if otsu.inter_class_variance == 0.0 and np.ptp(values) <= TIE_TOL:
        if values[0] <= global_thresh:
            raise EmptyRegionError(f"seed {seed}: constant, non-salient neighbourhood")
        passing = cand
        t = float(values.min())
    else:
        t = otsu.threshold
        passing = cand[values >= t]
    allowed = np.zeros(mesh.n_faces, dtype=bool)
    allowed[passing] = True
    incident = mesh.incident_faces(seed)
    incident = incident[allowed[incident]]
    if len(incident) == 0:
        raise EmptyRegionError(f"seed {seed}: no incident facet above local threshold {t:.4g}")
    start = int(incident[np.lexsort((incident, -fd[incident]))[0]])
    facets = _component(mesh, start, allowed)
    mu, sigma = _stats(facets, fd)
    return Texel(id=-1, seed=int(seed), seed_facet=start, facets=facets, depth_mean=mu,
                 depth_std=sigma, threshold=t, members=(int(seed),))


def interval_overlap_ratio(mu0: float, s0: float, mu1: float, s1: float) -> float:
    """Overlap of ]mu-s, mu+s[ intervals relative to the narrower width."""
    width = max(0.0, min(mu0 + s0, mu1 + s1) - max(mu0 - s0, mu1 - s1))
    den = min(2 * s0, 2 * s1)
    if den > 0:
        return width / den
    # a zero-width interval counts as fully overlapped when its point lies in the other
    if s0 <= s1:
        return 1.0 if mu1 - s1 <= mu0 <= mu1 + s1 else 0.0
    return 1.0 if mu0 - s0 <= mu1 <= mu0 + s0 else 0.0


def _face_adjacency(mesh: TriangleMesh) -> sparse.csr_matrix:
    m = mesh.n_faces
    rows = np.repeat(np.arange(m), 3)
    cols = mesh.face_neighbors.ravel()
    return sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(m, m))


def _touching_pairs(regions, n_faces, adj):
    k = len(regions)
    rows = np.concatenate([np.full(len(r["facets"]), i) for i, r in enumerate(regions)])
    cols = np.concatenate([r["facets"] for r in regions])
    inc = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(k, n_faces))
    touch = (inc @ (adj + sparse.identity(n_faces, format="csr")) @ inc.T).tocoo()
    pairs = {(int(i), int(j)) for i, j in zip(touch.row, touch.col) if i < j}
    return sorted(pairs)


def merge_regions(segmentation: Segmentation, mesh: TriangleMesh, depth: DepthField,
                  tau: float = MERGE_TAU) -> Segmentation:
    """Merge touching texels whose depth intervals overlap enough, to fixpoint.

    Touching means sharing a facet or an edge.  Facets still shared by
    unmerged texels go to the texel whose mean depth is closest.
    """
    fd = depth.facet_depth
    adj = _face_adjacency(mesh)
    regions = [dict(seed=t.seed, seed_facet=t.seed_facet, facets=t.facets,
                    threshold=t.threshold, members=t.members or (t.seed,))
               for t in sorted(segmentation.texels, key=lambda t: t.id)]

    while regions:
        # merge to fixpoint
        while len(regions) > 1:
            stats = [_stats(r["facets"], fd) for r in regions]
            passing = [(i, j) for i, j in _touching_pairs(regions, mesh.n_faces, adj)
                       if interval_overlap_ratio(*stats[i], *stats[j]) >= tau]
            if not passing:
                break
            parent = list(range(len(regions)))

            def find(i):
                while parent[i] != i:
                    parent[i] = parent[parent[i]]
                    i = parent[i]
                return i

            for i, j in passing:
                a, b = find(i), find(j)
                if a != b:
                    parent[max(a, b)] = min(a, b)
            groups: dict[int, list[int]] = {}
            for i in range(len(regions)):
                groups.setdefault(find(i), []).append(i)
            merged = []
            for root in sorted(groups):
                idx = groups[root]
                head = regions[idx[0]]
                merged.append(dict(
                    seed=head["seed"], seed_facet=head["seed_facet"],
                    facets=np.unique(np.concatenate([regions[i]["facets"] for i in idx])),
                    threshold=min(regions[i]["threshold"] for i in idx),
                    members=tuple(sorted(s for i in idx for s in regions[i]["members"]))))
            regions = merged

        # resolve facets shared by texels that were not merged
        owner_count = np.zeros(mesh.n_faces, dtype=np.int64)
        for r in regions:
            owner_count[r["facets"]] += 1
        if not np.any(owner_count > 1):
            break
        stats = [_stats(r["facets"], fd) for r in regions]
        best = np.full(mesh.n_faces, -1, dtype=np.int64)
        best_gap = np.full(mesh.n_faces, np.inf)
        for i, r in enumerate(regions):
            gap = np.abs(fd[r["facets"]] - stats[i][0])
            better = gap < best_gap[r["facets"]]
            best[r["facets"][better]] = i
            best_gap[r["facets"][better]] = gap[better]
        # a seed facet stays with the first texel claiming it; a texel that
        # loses its own seed facet to another is dropped, so one pass leaves
        # the texels disjoint
        claimed = np.zeros(mesh.n_faces, dtype=bool)
        for i, r in enumerate(regions):
            if not claimed[r["seed_facet"]]:
                best[r["seed_facet"]] = i
                claimed[r["seed_facet"]] = True
        kept = []
        for i, r in enumerate(regions):
            if best[r["seed_facet"]] != i:
                logger.debug("dropping texel of seed %d: seed facet owned by another texel",
                             r["seed"])
                continue
            f = r["facets"]
            allowed = np.zeros(mesh.n_faces, dtype=bool)
            allowed[f[best[f] == i]] = True
            kept.append(dict(r, facets=_component(mesh, r["seed_facet"], allowed)))
        regions = kept

    texels = []
    for i, r in enumerate(regions):
        mu, sigma = _stats(r["facets"], fd)
        texels.append(Texel(id=i, seed=r["seed"], seed_facet=r["seed_facet"], facets=r["facets"],
                            depth_mean=mu, depth_std=sigma, threshold=r["threshold"],
                            members=r["members"]))
    return _with_texels(segmentation, texels)


def _with_texels(segmentation: Segmentation, texels) -> Segmentation:
    labels = np.full(segmentation.n_faces, -1, dtype=np.int64)
    for t in texels:
        labels[t.facets] = t.id
    return replace(segmentation, texels=texels, background=np.flatnonzero(labels < 0))


def segment(mesh: TriangleMesh, depth: DepthField, scale: float, bins: int = OTSU_BINS,
            tau: float = MERGE_TAU, min_depth: float = 0.0) -> Segmentation:
    """Seeds, per-seed growth and merging.  A mesh without seeds yields an
    empty segmentation (all background)."""
    empty = Segmentation(texels=[], background=np.arange(mesh.n_faces), scale=scale,
                         n_faces=mesh.n_faces)
    try:
        seeds = find_seeds(mesh, depth, scale, bins, min_depth)
    except NoSeedsError as exc:
        logger.info("%s", exc)
        return empty
    gthr = global_threshold(depth, bins)
    texels = []
    for s in seeds:
        try:
            t = grow_region(mesh, depth, int(s), scale, bins, gthr)
        except EmptyRegionError as exc:
            logger.info("discarding seed: %s", exc)
            continue
        texels.append(replace(t, id=len(texels)))
    seg = replace(empty, seeds=seeds, global_threshold=gthr)
    seg = _with_texels(seg, texels)
    return merge_regions(seg, mesh, depth, tau)
