import json
from dataclasses import replace

import numpy as np
import pytest

from shapes import bump_sphere, torus
from texelseg.depth import depth_map
from texelseg.errors import NoSeedsError
from texelseg.segmentation import (find_seeds, grow_region, interval_overlap_ratio,
                                   merge_regions, otsu_threshold, segment)
from texelseg.synthetic import add_noise, flat_sheet


def otsu_oracle(values, bins=256):
    """Exhaustive search over the inner bin boundaries, classes split by
    direct comparison and variances from explicit class means."""
    x = np.asarray(values, dtype=float)
    lo, hi = x.min(), x.max()
    if hi - lo <= 1e-12:
        return lo
    edges = np.linspace(lo, hi, bins + 1)
    # assign bins exactly as a histogram would: the last bin is closed
    idx = np.minimum(np.searchsorted(edges, x, side="right") - 1, bins - 1)
    best, best_t = -1.0, None
    for k in range(1, bins):
        c0, c1 = x[idx < k], x[idx >= k]
        if len(c0) == 0 or len(c1) == 0:
            continue
        var = len(c0) * len(c1) / len(x) ** 2 * (c0.mean() - c1.mean()) ** 2
        if var > best * (1 + 1e-12) + 1e-300:
            best, best_t = var, edges[k]
    return best_t


def test_otsu_two_values():
    # every boundary separates {0} from {1}; the lowest one wins
    assert otsu_threshold([0.0, 1.0]).threshold == 0.00390625


def test_otsu_bimodal_hand_case():
    r = otsu_threshold([0, 0, 0, 10, 10, 10], bins=10)
    assert r.threshold == 1.0
    assert r.inter_class_variance == pytest.approx(25.0)


def test_otsu_constant_and_empty():
    r = otsu_threshold([3.0] * 5)
    assert (r.threshold, r.inter_class_variance) == (3.0, 0.0)
    with pytest.raises(ValueError):
        otsu_threshold([])


@pytest.mark.parametrize("seed", range(20))
def test_otsu_matches_exhaustive_oracle(seed):
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.normal(0, 1, rng.integers(1, 300)),
                        rng.normal(rng.uniform(1, 6), rng.uniform(0.2, 2), rng.integers(1, 300))])
    assert otsu_threshold(x).threshold == otsu_oracle(x)


@pytest.mark.parametrize("args,expected", [
    ((0, 1, 0, 1), 1.0),
    ((0, 1, 1, 1), 0.5),
    ((0, 1, 5, 1), 0.0),
    ((0, 2, 0.5, 0.5), 1.0),
    ((0, 0, 0.5, 1), 1.0),
    ((3, 0, 0.5, 1), 0.0),
])
def test_interval_overlap_hand_cases(args, expected):
    assert interval_overlap_ratio(*args) == pytest.approx(expected)


@pytest.fixture(scope="module")
def bumped():
    m, apex = bump_sphere(4, 0.06, 0.3)
    m, _ = m.normalized()
    return m, apex, depth_map(m, 0.04)


def test_single_bump_gives_single_texel(bumped):
    m, apex, d = bumped
    seg = segment(m, d, 0.04, min_depth=0.004)
    assert len(seg.texels) == 1
    t = seg.texels[0]
    assert apex in m.faces[t.facets]
    assert set(seg.background) | set(t.facets) == set(range(m.n_faces))
    assert np.array_equal(seg.labels[t.facets], np.zeros(len(t.facets)))


def test_seeds_are_sorted_strict_maxima(bumped):
    m, apex, d = bumped
    seeds = find_seeds(m, d, 0.04)
    assert np.all(np.diff(seeds) > 0)
    assert np.all(d.vertex_depth[seeds] > 0)


def test_flat_sheet_has_no_seeds():
    m = flat_sheet(60)
    d = depth_map(m, 0.04)
    with pytest.raises(NoSeedsError):
        find_seeds(m, d, 0.04)
    assert segment(m, d, 0.04).texels == []


def test_grow_region_contains_seed_facet(bumped):
    m, apex, d = bumped
    t = grow_region(m, d, find_seeds(m, d, 0.04, min_depth=0.004)[0], 0.04)
    assert t.seed_facet in t.facets
    assert t.depth_mean > np.median(d.facet_depth)


def test_merge_is_idempotent(small_stamped):
    m, _, _ = small_stamped
    m, _ = m.normalized()
    d = depth_map(m, 0.04)
    seg = segment(m, d, 0.04, min_depth=0.004)
    again = merge_regions(seg, m, d)
    assert len(again.texels) == len(seg.texels)
    for a, b in zip(seg.texels, again.texels):
        assert np.array_equal(a.facets, b.facets)
        assert a.members == b.members


def test_merge_joins_overlapping_duplicates(bumped):
    m, apex, d = bumped
    seg = segment(m, d, 0.04, min_depth=0.004)
    t = seg.texels[0]
    ghost = m.n_vertices  # any id not already among the members
    doubled = replace(seg, texels=[t, replace(t, id=1, seed=ghost, members=(ghost,))])
    merged = merge_regions(doubled, m, d)
    assert len(merged.texels) == 1
    assert merged.texels[0].members == tuple(sorted(t.members + (ghost,)))
    assert np.array_equal(merged.texels[0].facets, t.facets)


def test_merge_leaves_texels_disjoint_on_noisy_surface():
    # noise produces seeds whose grown regions start on the same facet
    m, _ = add_noise(torus(), 0.5, seed=1).normalized()
    d = depth_map(m, 0.04)
    seg = segment(m, d, 0.04, min_depth=0.004)
    assert len(seg.texels) > 1
    owners = np.zeros(m.n_faces, dtype=int)
    for t in seg.texels:
        owners[t.facets] += 1
        assert t.seed_facet in t.facets
    assert owners.max() == 1


def test_segmentation_json(bumped):
    m, _, d = bumped
    doc = json.loads(segment(m, d, 0.04, min_depth=0.004).to_json())
    assert doc["n_faces"] == m.n_faces
    assert len(doc["texels"]) == 1
    assert {"id", "seed", "facets", "depth_mean", "threshold"} <= set(doc["texels"][0])
