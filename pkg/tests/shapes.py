"""Analytic test meshes: bumped and dented spheres, tori, stamped spheres."""

from __future__ import annotations

import numpy as np

from stamps import render, scatter
from texelseg.mesh import TriangleMesh
from texelseg.synthetic import DisplacementMap, displace, icosphere


def bump_sphere(subdivisions: int, height: float, diameter: float):
    """Unit icosphere with a raised-cosine bump (or dent, for a negative
    height) of geodesic ``diameter`` centred on the north pole.

    Returns the mesh and the index of the apex vertex.
    """
    m = icosphere(subdivisions)
    p = m.vertices
    ang = np.arccos(np.clip(p[:, 2], -1.0, 1.0))
    a = diameter / 2
    profile = np.where(ang < a, 0.5 * height * (1 + np.cos(np.pi * ang / a)), 0.0)
    return m.with_vertices(p * (1 + profile)[:, None]), int(np.argmax(p[:, 2]))


def torus(major: float = 2.0, minor: float = 0.5, nu: int = 64, nv: int = 32) -> TriangleMesh:
    """Ring torus around the z axis; u runs along the ring, v around the tube."""
    u = 2 * np.pi * np.arange(nu) / nu
    v = 2 * np.pi * np.arange(nv) / nv
    uu, vv = np.meshgrid(u, v, indexing="ij")
    x = (major + minor * np.cos(vv)) * np.cos(uu)
    y = (major + minor * np.cos(vv)) * np.sin(uu)
    z = minor * np.sin(vv)
    verts = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    i, j = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    a = (i * nv + j).ravel()
    b = (((i + 1) % nu) * nv + j).ravel()
    c = (((i + 1) % nu) * nv + (j + 1) % nv).ravel()
    d = (i * nv + (j + 1) % nv).ravel()
    faces = np.vstack([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return TriangleMesh.from_arrays(verts, faces)


def rotation(seed: int = 0) -> np.ndarray:
    """A random proper rotation matrix."""
    q, r = np.linalg.qr(np.random.default_rng(seed).normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


DISC = ("disc", 0.1, 1.0)
RECT = ("rectangle", 0.16, 2.0)


def stamped_sphere(subdivisions: int = 5, layout: int = 0, specs=None,
                   blur: float = 0.0, gap: float = 0.25, displacement: float = 0.02):
    """Icosphere displaced by scattered stamps; returns (mesh, truth, stamps)."""
    if specs is None:
        specs = [DISC] * 4 + [RECT] * 4
    stamps = scatter(specs, seed=layout, gap=gap)
    raster = render(stamps, blur=blur)
    mesh, truth = displace(icosphere(subdivisions), DisplacementMap(raster, displacement))
    return mesh, truth, stamps
