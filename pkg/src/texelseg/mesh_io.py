"""ASCII OFF / OBJ reading and writing, plus color palettes for exports."""

from __future__ import annotations

import colorsys
from pathlib import Path

import numpy as np

from .errors import ParseError
from .mesh import TriangleMesh


def load_mesh(path, format: str | None = None, validate: bool = True) -> TriangleMesh:
    """Read an ASCII OFF or OBJ triangle mesh.

    The format is taken from the file suffix unless given.  Coordinates are
    parsed with ``float`` so decimal text round-trips exactly.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if fmt == "off":
        vertices, faces = _parse_off(text, path)
    elif fmt == "obj":
        vertices, faces = _parse_obj(text, path)
    else:
        raise ParseError(f"{path}: unsupported mesh format {fmt!r}")
    return TriangleMesh.from_arrays(vertices, faces, validate=validate)


def _tokens(text):
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            yield line


def _parse_off(text, path):
    lines = _tokens(text)
    try:
        header = next(lines)
    except StopIteration:
        raise ParseError(f"{path}: empty file") from None
    if not header.startswith("OFF"):
        raise ParseError(f"{path}: missing OFF header")
    rest = header[3:].split()
    try:
        counts = rest if rest else next(lines).split()
        nv, nf = int(counts[0]), int(counts[1])
        vertices = []
        for _ in range(nv):
            parts = next(lines).split()
            vertices.append([float(parts[0]), float(parts[1]), float(parts[2])])
        faces = []
        for i in range(nf):
            parts = next(lines).split()
            k = int(parts[0])
            if k != 3:
                raise ParseError(f"{path}: face {i} has {k} vertices, only triangles are supported")
            faces.append([int(parts[1]), int(parts[2]), int(parts[3])])
    except (StopIteration, IndexError, ValueError) as exc:
        raise ParseError(f"{path}: truncated or malformed OFF ({exc})") from exc
    return np.array(vertices, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


def _parse_obj(text, path):
    vertices, faces = [], []
    try:
        for line in _tokens(text):
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif tag == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                if len(idx) != 3:
                    raise ParseError(f"{path}: face with {len(idx)} vertices, only triangles are supported")
                faces.append([i - 1 if i > 0 else len(vertices) + i for i in idx])
    except (IndexError, ValueError) as exc:
        raise ParseError(f"{path}: malformed OBJ ({exc})") from exc
    if not vertices or not faces:
        raise ParseError(f"{path}: no geometry")
    return np.array(vertices, dtype=np.float64), np.array(faces, dtype=np.int64)


def _fmt(values) -> str:
    # repr of a Python float is the shortest string that round-trips exactly
    return " ".join(repr(float(x)) for x in values)


def save_off(path, mesh: TriangleMesh) -> None:
    lines = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} {len(mesh.edges)}"]
    lines.extend(_fmt(v) for v in mesh.vertices.tolist())
    lines.extend(f"3 {a} {b} {c}" for a, b, c in mesh.faces.tolist())
    Path(path).write_text("\n".join(lines) + "\n")


def save_obj(path, mesh: TriangleMesh, colors: np.ndarray | None = None) -> None:
    """Write OBJ; ``colors`` (n, 3) in [0, 1] uses the ``v x y z r g b`` extension."""
    lines = []
    if colors is None:
        lines.extend("v " + _fmt(v) for v in mesh.vertices.tolist())
    else:
        colors = np.asarray(colors, dtype=np.float64)
        for v, c in zip(mesh.vertices.tolist(), colors.tolist()):
            lines.append("v " + _fmt(v) + " " + " ".join(f"{x:.6f}" for x in c))
    lines.extend(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist())
    Path(path).write_text("\n".join(lines) + "\n")


def save_mesh(path, mesh: TriangleMesh) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".off":
        save_off(path, mesh)
    elif suffix == ".obj":
        save_obj(path, mesh)
    else:
        raise ParseError(f"unsupported mesh format {suffix!r}")


def rainbow(t) -> np.ndarray:
    """Map values in [0, 1] to RGB along the hue wheel (red -> violet)."""
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    return np.array([colorsys.hsv_to_rgb(0.8 * (1.0 - x), 1.0, 1.0) for x in np.ravel(t)]).reshape(*np.shape(t), 3)


def scalar_colors(values: np.ndarray) -> np.ndarray:
    """Per-vertex colors for a scalar field, cold = low, warm = high."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    t = (values - lo) / (hi - lo) if hi > lo else np.zeros_like(values)
    return rainbow(t)


def id_colors(ids, n_ids: int) -> np.ndarray:
    """Rainbow color per integer id; negative ids (background) are grey."""
    ids = np.asarray(ids)
    golden = 0.618033988749895
    out = np.full((len(ids), 3), 0.6)
    fg = ids >= 0
    # golden-ratio hue stepping keeps neighbouring ids visually distinct
    out[fg] = rainbow((ids[fg] * golden) % 1.0) if n_ids else out[fg]
    return out


def facet_labels_to_vertex_colors(mesh: TriangleMesh, facet_ids: np.ndarray, n_ids: int) -> np.ndarray:
    """Color each vertex by the label of one of its labelled incident facets."""
    vertex_ids = np.full(mesh.n_vertices, -1, dtype=np.int64)
    order = np.argsort(facet_ids, kind="stable")
    for k in range(3):
        fg = order[facet_ids[order] >= 0]
        vertex_ids[mesh.faces[fg, k]] = facet_ids[fg]
    return id_colors(vertex_ids, n_ids)
