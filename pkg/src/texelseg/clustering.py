"""Self-tuning spectral clustering of texel feature vectors.

Local scaling (sigma_i = distance to the K-th neighbour) builds the affinity;
the number of classes is picked by how well the leading eigenvectors can be
rotated onto a canonical indicator basis (Zelnik-Manor and Perona).
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import DegenerateScaleWarning, EigenFailure, SingleClusterWarning

logger = logging.getLogger(__name__)

NEIGHBOR_RANK = 7
K_MAX = 15
COST_TOLERANCE = 0.01
MAX_ITER = 200
STEP = 1.0
POSITIVE_EIGEN = 1e-9
_EMPTY_ROW = 1e-24  # squared row maximum, relative to the largest one


@dataclass(frozen=True)
class AffinityMatrix:
    matrix: np.ndarray
    local_scales: np.ndarray


@dataclass
class Clustering:
    labels: np.ndarray
    k: int
    rotation_cost: dict = field(default_factory=dict)  # k -> alignment cost
    texel_ids: np.ndarray | None = None  # set when built from a feature table

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)

    def to_json(self) -> str:
        ids = self.texel_ids if self.texel_ids is not None else np.arange(len(self.labels))
        doc = {
            "k": int(self.k),
            "labels": {str(int(t)): int(c) for t, c in zip(ids, self.labels)},
            "rotation_cost": {str(k): float(v) for k, v in sorted(self.rotation_cost.items())},
        }
        return json.dumps(doc, indent=2, sort_keys=False)

    def write_cost_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("k", "cost"))
            for k, v in sorted(self.rotation_cost.items()):
                w.writerow((k, repr(float(v))))


def build_affinity(features, neighbor_rank: int = NEIGHBOR_RANK) -> AffinityMatrix:
    """Locally scaled Gaussian affinity A_ij = exp(-d_ij^2 / (sigma_i sigma_j))."""
    x = np.asarray(features, dtype=np.float64)
    n = len(x)
    if n < 2:
        raise ValueError("affinity needs at least two feature vectors")
    d = squareform(pdist(x))
    k = min(neighbor_rank, n - 1)
    sigma = np.sort(d, axis=1)[:, k]  # column 0 is the point itself
    zero = sigma <= 0
    if zero.any():
        positive = sigma[~zero]
        sub = positive.min() if positive.size else 1.0
        warnings.warn(f"{int(zero.sum())} local scales are zero; using {sub:.3g}",
                      DegenerateScaleWarning, stacklevel=2)
        sigma = np.where(zero, sub, sigma)
    a = np.exp(-(d ** 2) / np.outer(sigma, sigma))
    np.fill_diagonal(a, 0.0)
    return AffinityMatrix(a, sigma)


def normalized_affinity(a: np.ndarray) -> np.ndarray:
    deg = a.sum(axis=1)
    with np.errstate(divide="ignore"):
        inv = np.where(deg > 0, 1.0 / np.sqrt(deg), 0.0)
    return a * inv[:, None] * inv[None, :]


def _givens(c: int, i: int, j: int, t: float, derivative: bool = False) -> np.ndarray:
    """Givens rotation in the (i, j) plane, or its derivative in ``t``."""
    ct, st = np.cos(t), np.sin(t)
    if derivative:
        g = np.zeros((c, c))
        g[i, i] = g[j, j] = -st
        g[i, j] = -ct
        g[j, i] = ct
        return g
    g = np.eye(c)
    g[i, i] = g[j, j] = ct
    g[i, j] = -st
    g[j, i] = st
    return g


def rotation_matrix(theta: np.ndarray, c: int) -> np.ndarray:
    """Product of Givens rotations over the pairs (i < j) in row-major order."""
    ii, jj = np.triu_indices(c, 1)
    u = np.eye(c)
    for t, i, j in zip(theta, ii, jj):
        u = u @ _givens(c, i, j, t)
    return u


def alignment_cost(z: np.ndarray) -> float:
    """1 - quality of how close every row of ``z`` is to a single axis.

    Zero when each row has exactly one nonzero entry; grows as rows spread
    their mass across columns.  A row with no mass at all (possible inside
    a degenerate eigenspace) counts as fully spread.
    """
    n, c = z.shape
    sq = z ** 2
    m = sq.max(axis=1)
    empty = m <= _EMPTY_ROW * max(float(m.max()), 1e-300)
    m = np.where(empty, 1.0, m)
    j = np.sum(sq[~empty] / m[~empty, None]) + c * int(empty.sum())
    quality = 1.0 - (j / n - 1.0) / c
    return float(1.0 - quality)


def cost_derivative(z: np.ndarray, dz: np.ndarray) -> float:
    """Directional derivative of ``alignment_cost`` at ``z`` along ``dz``."""
    n, c = z.shape
    rows = np.arange(n)
    sq = z ** 2
    col = np.argmax(sq, axis=1)
    m = sq[rows, col]
    keep = m > _EMPTY_ROW * max(float(m.max()), 1e-300)
    z, dz, sq, col, m = z[keep], dz[keep], sq[keep], col[keep], m[keep]
    rows = np.arange(len(m))
    dm = 2 * z[rows, col] * dz[rows, col]
    dj = np.sum(2 * z * dz / m[:, None] - sq * (dm / m ** 2)[:, None])
    return float(dj / (n * c))


def rotate_eigenvectors(x: np.ndarray, max_iter: int = MAX_ITER,
                        step: float = STEP) -> tuple[np.ndarray, float]:
    """Coordinate-wise gradient descent on Givens angles from the identity.

    Each angle takes a step against its partial derivative (evaluated at the
    current angles) and the step is kept only if the cost drops, so the cost
    never increases.  Stops after ``max_iter`` sweeps or when two sweeps gain
    less than 1e-3.  Returns the rotated matrix and its cost.
    """
    n, c = x.shape
    ii, jj = np.triu_indices(c, 1)
    npair = len(ii)
    theta = np.zeros(npair)
    cost = alignment_cost(x)
    if npair == 0:
        return x.copy(), cost
    history = [cost]
    for it in range(max_iter):
        gs = [_givens(c, i, j, t) for t, i, j in zip(theta, ii, jj)]
        suffix = [np.eye(c)] * (npair + 1)
        for k in range(npair - 1, -1, -1):
            suffix[k] = gs[k] @ suffix[k + 1]
        left = np.eye(c)
        for k in range(npair):
            i, j, right = ii[k], jj[k], suffix[k + 1]
            xl = x @ left
            z = xl @ gs[k] @ right
            grad = cost_derivative(z, xl @ _givens(c, i, j, theta[k], True) @ right)
            trial = theta[k] - step * grad
            g_trial = _givens(c, i, j, trial)
            tc = alignment_cost(xl @ g_trial @ right)
            if tc < cost:
                theta[k], cost, gs[k] = trial, tc, g_trial
            left = left @ gs[k]
        history.append(cost)
        if history[-1] > history[-2]:
            raise AssertionError("alignment cost increased during descent")
        if it >= 2 and history[-3] - cost < 1e-3:
            break
    return x @ rotation_matrix(theta, c), cost


def _compact(labels: np.ndarray) -> tuple[np.ndarray, int]:
    """Renumber classes 0.. by first occurrence, dropping empty ones."""
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first))
    return rank[inv].astype(np.int64), len(first)


def cluster(affinity, k_max: int = K_MAX, cost_tolerance: float = COST_TOLERANCE) -> Clustering:
    """Pick the class count and labels from the leading eigenvectors.

    For each k in [2, k_max] the rotation is refined incrementally: the
    best rotation for k - 1 plus the next eigenvector seeds the descent.  The
    largest k whose cost is within ``cost_tolerance`` of the minimum wins.
    """
    a = affinity.matrix if isinstance(affinity, AffinityMatrix) else np.asarray(affinity)
    n = len(a)
    if n < 3:
        warnings.warn(f"{n} texels: a single class", SingleClusterWarning, stacklevel=2)
        return Clustering(np.zeros(n, dtype=np.int64), 1 if n else 0, {})
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    k_max = min(k_max, n - 1)
    lap = normalized_affinity(a)
    try:
        w, v = np.linalg.eigh(lap)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"symmetric eigensolver failed: {exc}") from exc
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    resid = np.linalg.norm(lap @ v[:, :k_max] - v[:, :k_max] * w[:k_max])
    if not np.isfinite(resid) or resid > 1e-6 * max(1.0, np.abs(w).max()) * n:
        raise EigenFailure(f"eigen residual {resid:.3g}")
    # cluster indicators have positive Rayleigh quotients, so eigenvectors
    # of nonpositive eigenvalues never describe a class
    n_pos = int(np.sum(w[:k_max] > POSITIVE_EIGEN))
    if n_pos < k_max:
        logger.info("k_max lowered from %d to %d (nonpositive eigenvalues)", k_max, max(2, n_pos))
        k_max = max(2, n_pos)
    costs, rotated = {}, {}
    current = v[:, :1]
    for k in range(2, k_max + 1):
        current = np.hstack([current, v[:, k - 1:k]])
        z, c = rotate_eigenvectors(current)
        costs[k], rotated[k] = c, z
        current = z
    best = min(costs.values())
    k = max(kk for kk, c in costs.items() if c <= best + cost_tolerance)
    labels = np.argmax(rotated[k] ** 2, axis=1)
    labels, k_eff = _compact(labels)
    if k_eff < k:
        logger.info("%d of %d classes empty after alignment; labels compacted", k - k_eff, k)
    return Clustering(labels, k_eff, costs)


def standardize(x: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    return (x - mu) / np.where(sd > 0, sd, 1.0)


def cluster_features(table, neighbor_rank: int = NEIGHBOR_RANK, k_max: int = K_MAX,
                     cost_tolerance: float = COST_TOLERANCE, zscore: bool = False) -> Clustering:
    """Cluster the valid rows of a feature table; invalid texels get -1."""
    valid = np.asarray(table.valid, dtype=bool)
    x = table.values[valid]
    if zscore:
        x = standardize(x)
    labels = np.full(len(table.texel_ids), -1, dtype=np.int64)
    if len(x) < 3:
        res = cluster(np.zeros((len(x), len(x))), k_max, cost_tolerance)
    else:
        res = cluster(build_affinity(x, neighbor_rank), k_max, cost_tolerance)
    labels[valid] = res.labels
    return Clustering(labels, res.k, res.rotation_cost, np.asarray(table.texel_ids))
