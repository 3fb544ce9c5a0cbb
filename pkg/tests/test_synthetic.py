import numpy as np
import pytest

from texelseg.decimation import quadric_decimate
from texelseg.errors import ParseError
from texelseg.mesh import vertex_normals
from texelseg.synthetic import (GROUND_TRUTH_THRESHOLD, DisplacementMap, GroundTruth, add_noise,
                                decimate, displace, flat_sheet, icosphere, load_truth,
                                read_displacement_map, sample_bilinear, save_truth,
                                spherical_uv, write_pgm)


def test_flat_sheet_is_closed_and_planar():
    m = flat_sheet(12, size=2.0)
    m.validate()
    assert m.genus == 0
    assert np.all(m.vertices[:, 2] == 0.0)
    assert m.face_areas.sum() == pytest.approx(8.0)  # two sides of a 2 x 2 square
    assert np.ptp(m.vertices[:, 0]) == 2.0


def test_sample_bilinear_hits_pixel_centres():
    r = np.arange(12, dtype=float).reshape(3, 4)
    v, u = np.meshgrid((np.arange(3) + 0.5) / 3, (np.arange(4) + 0.5) / 4, indexing="ij")
    assert np.allclose(sample_bilinear(r, u.ravel(), v.ravel()), r.ravel())
    # longitude wraps between the last and first column
    assert sample_bilinear(r, np.array([0.0]), np.array([0.5]))[0] == pytest.approx((4 + 7) / 2)


def test_spherical_uv_poles_and_equator():
    u, v = spherical_uv(np.array([[0, 0, 1.0], [0, 0, -1.0], [-1.0, 0, 0]]))
    assert v.tolist() == [0.0, 1.0, 0.5]
    assert u[2] == pytest.approx(1.0)


def test_displace_uniform_map_scales_sphere():
    m = icosphere(2)
    out, truth = displace(m, DisplacementMap(np.full((8, 16), 255.0), 0.02))
    assert np.allclose(np.linalg.norm(out.vertices, axis=1), 1.02)
    assert truth.facet_foreground.all()


def test_displace_half_map_ground_truth():
    raster = np.zeros((64, 128))
    raster[:32] = 255.0  # northern hemisphere raised
    out, truth = displace(icosphere(3), DisplacementMap(raster))
    north = out.face_barycenters[:, 2] > 0.05
    south = out.face_barycenters[:, 2] < -0.05
    assert truth.facet_foreground[north].all()
    assert not truth.facet_foreground[south].any()


def test_displacement_map_validation():
    with pytest.raises(ValueError):
        DisplacementMap(np.full((4, 4), 300.0))
    with pytest.raises(ValueError):
        DisplacementMap(np.zeros(5))


def test_ground_truth_threshold_on_facet_mean():
    m = icosphere(0)
    gray = np.zeros(m.n_vertices)
    gray[m.faces[0]] = [255, 255, 0]  # facet mean 170 > 128
    t = GroundTruth.from_gray(m, gray)
    assert GROUND_TRUTH_THRESHOLD == 128.0
    assert t.facet_foreground[0]
    assert t.foreground.tolist()[0] == 0


def test_noise_is_seeded_and_bounded():
    m = icosphere(3)
    a = add_noise(m, 0.2, seed=4)
    b = add_noise(m, 0.2, seed=4)
    c = add_noise(m, 0.2, seed=5)
    assert np.array_equal(a.vertices, b.vertices)
    assert not np.array_equal(a.vertices, c.vertices)
    shift = a.vertices - m.vertices
    assert np.abs(shift).max() > 0
    assert np.linalg.norm(shift, axis=1).max() <= 0.2 * 1.0 / 100 + 1e-15
    # displacement is along the vertex normal
    n = vertex_normals(m)
    assert np.allclose(np.cross(shift, n), 0, atol=1e-15)
    assert add_noise(m, 0.0) is m


def test_pgm_roundtrip(tmp_path):
    r = np.random.default_rng(0).integers(0, 256, (10, 20)).astype(float)
    write_pgm(tmp_path / "m.pgm", r)
    d = read_displacement_map(tmp_path / "m.pgm", 0.05)
    assert np.array_equal(d.raster, r)
    assert d.max_displacement == 0.05
    with pytest.raises(ParseError):
        read_displacement_map(tmp_path / "missing.pgm")


def test_truth_csv_roundtrip(tmp_path):
    raster = np.zeros((32, 64))
    raster[5:20, 10:30] = 255
    m, truth = displace(icosphere(3), DisplacementMap(raster))
    save_truth(truth, tmp_path / "v.csv", tmp_path / "f.csv")
    back = load_truth(m, tmp_path / "v.csv")
    assert np.array_equal(back.vertex_gray, truth.vertex_gray)
    assert np.array_equal(back.facet_foreground, truth.facet_foreground)
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "facet_id,label"
    with pytest.raises(ParseError):
        load_truth(icosphere(2), tmp_path / "v.csv")


@pytest.mark.parametrize("target", [1000, 300])
def test_decimation_keeps_closed_sphere(target):
    m = icosphere(4)
    out, report = quadric_decimate(m, target, return_report=True)
    assert out.n_faces <= target
    out.validate()
    assert out.genus == 0
    assert report.collapses > 0 and not report.stalled
    # quadric collapses stay close to the sphere
    assert np.abs(np.linalg.norm(out.vertices, axis=1) - 1).max() < 0.05


def test_decimation_trivial_and_invalid_targets():
    m = icosphere(1)
    assert quadric_decimate(m, 10000) is m
    with pytest.raises(ValueError):
        quadric_decimate(m, 3)


def test_decimate_transfers_truth():
    raster = np.zeros((64, 128))
    raster[:32] = 255.0
    m, truth = displace(icosphere(4), DisplacementMap(raster))
    low, low_truth = decimate(m, 1000, truth)
    north = low.face_barycenters[:, 2] > 0.1
    assert low_truth.facet_foreground[north].all()
    assert len(low_truth.vertex_gray) == low.n_vertices
