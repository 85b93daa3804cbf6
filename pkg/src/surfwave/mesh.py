"""Triangulated surfaces: loading, validation, basic measures.

Supported file formats are ASCII OFF, ASCII PLY 1.0, and the FreeSurfer
binary surface format (big-endian, magic ``ff ff fe``). Meshes are
immutable after construction; the vertex and triangle arrays are marked
read-only so they can be shared freely between workers.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMeshError, FormatError

FREESURFER_MAGIC = b"\xff\xff\xfe"

# Triangles with area below DEGENERACY_FACTOR * bbox_diagonal**2 count as
# degenerate; scale-relative so the threshold has no unit dependence.
DEGENERACY_FACTOR = 1e-12


class TriangleMesh:
    """A triangulated surface.

    Parameters
    ----------
    vertices : (m, 3) array_like of float
        Vertex coordinates in the units of the source file.
    triangles : (g, 3) array_like of int
        Indices into ``vertices``. Each triangle must reference three
        distinct, in-range vertices.
    label : str
        Free-form surface tag (e.g. ``"lh.white"``).
    """

    def __init__(self, vertices, triangles, label=""):
        v = np.asarray(vertices, dtype=np.float64)
        t = np.asarray(triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise FormatError(f"vertices must be (m, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise FormatError(f"triangles must be (g, 3), got {t.shape}")
        if v.shape[0] < 3 or t.shape[0] < 1:
            raise FormatError(
                f"mesh too small: {v.shape[0]} vertices, {t.shape[0]} triangles"
            )
        if not np.all(np.isfinite(v)):
            raise FormatError("non-finite vertex coordinate")
        if t.min() < 0 or t.max() >= v.shape[0]:
            raise FormatError(
                f"triangle index out of range [0, {v.shape[0]})"
            )
        if np.any(
            (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])
        ):
            raise FormatError("triangle repeats a vertex index")
        v.setflags(write=False)
        t.setflags(write=False)
        self.vertices = v
        self.triangles = t
        self.label = label

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    def triangle_areas(self):
        """Per-triangle areas from the cross-product formula."""
        v = self.vertices
        t = self.triangles
        cross = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def bbox_diagonal(self):
        extent = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.linalg.norm(extent))

    def with_label(self, label):
        return TriangleMesh(self.vertices, self.triangles, label=label)

    def __repr__(self):
        return (
            f"TriangleMesh(m={self.n_vertices}, g={self.n_triangles}, "
            f"label={self.label!r})"
        )


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_mesh`.

    ``issue_counts`` reports what was found in the input;
    ``is_valid`` describes the returned mesh.
    """

    is_valid: bool
    issue_counts: dict = field(default_factory=dict)
    pruned_vertices: int = 0

    def to_dict(self):
        return {
            "is_valid": self.is_valid,
            "issue_counts": dict(self.issue_counts),
            "pruned_vertices": self.pruned_vertices,
        }


def surface_area(mesh):
    """Total surface area (squared coordinate units)."""
    return float(mesh.triangle_areas().sum())


def inspect_mesh(mesh):
    """Count validation issues without raising.

    Returns a dict with keys ``nonmanifold_edges``, ``duplicate_triangles``,
    ``degenerate_triangles``, ``isolated_vertices``.
    """
    t = mesh.triangles
    edges = np.sort(
        np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1
    )
    _, edge_counts = np.unique(edges, axis=0, return_counts=True)
    nonmanifold = int(np.count_nonzero(edge_counts > 2))

    sorted_tris = np.sort(t, axis=1)
    n_unique_tris = np.unique(sorted_tris, axis=0).shape[0]
    duplicates = t.shape[0] - n_unique_tris

    threshold = DEGENERACY_FACTOR * mesh.bbox_diagonal() ** 2
    degenerate = int(np.count_nonzero(mesh.triangle_areas() < threshold))

    referenced = np.zeros(mesh.n_vertices, dtype=bool)
    referenced[t.reshape(-1)] = True
    isolated = int(np.count_nonzero(~referenced))

    return {
        "nonmanifold_edges": nonmanifold,
        "duplicate_triangles": duplicates,
        "degenerate_triangles": degenerate,
        "isolated_vertices": isolated,
    }


def validate_mesh(mesh, policy="strict", nonmanifold_fatal=False):
    """Validate a mesh, optionally pruning repairable issues.

    Parameters
    ----------
    mesh : TriangleMesh
    policy : {"strict", "prune"}
        ``strict`` returns the input unchanged iff there are no fatal
        issues, otherwise raises. ``prune`` removes exact-duplicate
        triangles and isolated vertices (reindexing the rest) and only
        raises when degenerate triangles remain.
    nonmanifold_fatal : bool
        Upgrade nonmanifold edges from reported to fatal. Off by default:
        cotangent weights degrade gracefully on nonmanifold edges.

    Returns
    -------
    (TriangleMesh, ValidationReport)
    """
    if policy not in ("strict", "prune"):
        raise ValueError(f"unknown policy {policy!r}")
    counts = inspect_mesh(mesh)

    if policy == "strict":
        fatal = (
            counts["duplicate_triangles"]
            + counts["degenerate_triangles"]
            + counts["isolated_vertices"]
        )
        if nonmanifold_fatal:
            fatal += counts["nonmanifold_edges"]
        if fatal:
            raise DegenerateMeshError(
                f"mesh {mesh.label!r} has fatal issues: {counts}"
            )
        return mesh, ValidationReport(True, counts, 0)

    # prune: drop duplicate triangles first, then vertices the remaining
    # triangles no longer reference
    if counts["degenerate_triangles"]:
        raise DegenerateMeshError(
            f"mesh {mesh.label!r} has {counts['degenerate_triangles']} "
            "zero-area triangles; pruning cannot repair them"
        )
    if nonmanifold_fatal and counts["nonmanifold_edges"]:
        raise DegenerateMeshError(
            f"mesh {mesh.label!r} has {counts['nonmanifold_edges']} "
            "nonmanifold edges"
        )
    t = mesh.triangles
    _, keep_idx = np.unique(np.sort(t, axis=1), axis=0, return_index=True)
    t = t[np.sort(keep_idx)]

    referenced = np.zeros(mesh.n_vertices, dtype=bool)
    referenced[t.reshape(-1)] = True
    n_pruned = int(np.count_nonzero(~referenced))
    if n_pruned:
        new_index = np.cumsum(referenced) - 1
        pruned = TriangleMesh(
            mesh.vertices[referenced], new_index[t], label=mesh.label
        )
    elif counts["duplicate_triangles"]:
        pruned = TriangleMesh(mesh.vertices, t, label=mesh.label)
    else:
        pruned = mesh
    return pruned, ValidationReport(True, counts, n_pruned)


# ---------------------------------------------------------------------------
# Readers


def _data_lines(text):
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            yield line


def _read_off(path):
    with open(path, "r", encoding="ascii", errors="replace") as f:
        lines = _data_lines(f.read())
    try:
        header = next(lines)
    except StopIteration:
        raise FormatError(f"{path}: empty OFF file") from None
    if not header.startswith("OFF"):
        raise FormatError(f"{path}: missing OFF header")
    rest = header[3:].split()
    if rest:  # counts on the header line ("OFF m g e" variant)
        fields = rest
    else:
        try:
            fields = next(lines).split()
        except StopIteration:
            raise FormatError(f"{path}: missing counts line") from None
    try:
        m, g = int(fields[0]), int(fields[1])
    except (IndexError, ValueError):
        raise FormatError(f"{path}: malformed counts line") from None

    vertices = np.empty((m, 3), dtype=np.float64)
    try:
        for i in range(m):
            parts = next(lines).split()
            vertices[i] = [float(x) for x in parts[:3]]
        faces = np.empty((g, 3), dtype=np.int64)
        for i in range(g):
            parts = next(lines).split()
            if int(parts[0]) != 3:
                raise FormatError(f"{path}: face {i} is not a triangle")
            faces[i] = [int(x) for x in parts[1:4]]
    except StopIteration:
        raise FormatError(f"{path}: truncated OFF file") from None
    except (ValueError, IndexError):
        raise FormatError(f"{path}: malformed OFF data line") from None
    return vertices, faces


def _read_ply(path):
    with open(path, "r", encoding="ascii", errors="replace") as f:
        text = f.read()
    lines = iter(text.splitlines())
    if next(lines, "").strip() != "ply":
        raise FormatError(f"{path}: missing ply header")

    n_vertices = n_faces = None
    vertex_props = []
    current = None
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("comment"):
            continue
        if line == "end_header":
            break
        parts = line.split()
        if parts[0] == "format":
            if parts[1] != "ascii":
                raise FormatError(f"{path}: only ASCII PLY is supported")
        elif parts[0] == "element":
            current = parts[1]
            if current == "vertex":
                n_vertices = int(parts[2])
            elif current == "face":
                n_faces = int(parts[2])
        elif parts[0] == "property" and current == "vertex":
            vertex_props.append(parts[-1])
    else:
        raise FormatError(f"{path}: unterminated PLY header")
    if n_vertices is None or n_faces is None:
        raise FormatError(f"{path}: PLY header lacks vertex/face elements")
    try:
        xyz = [vertex_props.index(c) for c in ("x", "y", "z")]
    except ValueError:
        raise FormatError(f"{path}: PLY vertices lack x/y/z") from None

    vertices = np.empty((n_vertices, 3), dtype=np.float64)
    faces = np.empty((n_faces, 3), dtype=np.int64)
    try:
        for i in range(n_vertices):
            parts = next(lines).split()
            vertices[i] = [float(parts[j]) for j in xyz]
        for i in range(n_faces):
            parts = next(lines).split()
            if int(parts[0]) != 3:
                raise FormatError(f"{path}: face {i} is not a triangle")
            faces[i] = [int(x) for x in parts[1:4]]
    except StopIteration:
        raise FormatError(f"{path}: truncated PLY file") from None
    except (ValueError, IndexError):
        raise FormatError(f"{path}: malformed PLY data line") from None
    return vertices, faces


def _read_freesurfer(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:3] != FREESURFER_MAGIC:
        raise FormatError(f"{path}: bad FreeSurfer magic bytes")
    end = blob.find(b"\n\n", 3)
    if end < 0:
        raise FormatError(f"{path}: unterminated creator string")
    offset = end + 2
    try:
        m, g = np.frombuffer(blob, dtype=">i4", count=2, offset=offset)
    except ValueError:
        raise FormatError(f"{path}: truncated header") from None
    offset += 8
    m, g = int(m), int(g)
    if m <= 0 or g <= 0:
        raise FormatError(f"{path}: invalid counts {m}, {g}")
    need = offset + 12 * m + 12 * g
    if len(blob) < need:
        raise FormatError(f"{path}: truncated payload")
    vertices = (
        np.frombuffer(blob, dtype=">f4", count=3 * m, offset=offset)
        .reshape(m, 3)
        .astype(np.float64)
    )
    offset += 12 * m
    faces = (
        np.frombuffer(blob, dtype=">i4", count=3 * g, offset=offset)
        .reshape(g, 3)
        .astype(np.int64)
    )
    return vertices, faces


def _sniff_format(path):
    with open(path, "rb") as f:
        head = f.read(16)
    if head[:3] == FREESURFER_MAGIC:
        return "freesurfer-binary"
    text = head.decode("ascii", errors="replace").lstrip()
    if text.startswith("OFF"):
        return "off"
    if text.lower().startswith("ply"):
        return "ply-ascii"
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".off":
        return "off"
    if ext == ".ply":
        return "ply-ascii"
    raise FormatError(f"{path}: cannot determine format from content or extension")


_READERS = {
    "off": _read_off,
    "ply-ascii": _read_ply,
    "freesurfer-binary": _read_freesurfer,
}


def load_mesh(path, fmt="auto", label=None):
    """Load a surface from OFF, ASCII PLY, or FreeSurfer binary format.

    ``fmt="auto"`` resolves the format from magic bytes, falling back to
    the file extension. The returned mesh passes the structural checks
    (in-range indices, finite coordinates); run :func:`validate_mesh` to
    detect isolated vertices or degenerate triangles.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    if fmt == "auto":
        fmt = _sniff_format(path)
    try:
        reader = _READERS[fmt]
    except KeyError:
        raise ValueError(f"unknown format {fmt!r}") from None
    vertices, triangles = reader(path)
    if label is None:
        label = os.path.basename(str(path))
    return TriangleMesh(vertices, triangles, label=label)


# ---------------------------------------------------------------------------
# Writers


def _write_off(mesh, path):
    with open(path, "w", encoding="ascii") as f:
        f.write("OFF\n")
        f.write(f"{mesh.n_vertices} {mesh.n_triangles} 0\n")
        for x, y, z in mesh.vertices:
            f.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
        for i, j, k in mesh.triangles:
            f.write(f"3 {i} {j} {k}\n")


def _write_ply(mesh, path):
    with open(path, "w", encoding="ascii") as f:
        f.write("ply\nformat ascii 1.0\n")
        f.write(f"element vertex {mesh.n_vertices}\n")
        f.write("property float x\nproperty float y\nproperty float z\n")
        f.write(f"element face {mesh.n_triangles}\n")
        f.write("property list uchar int vertex_indices\nend_header\n")
        for x, y, z in mesh.vertices:
            f.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
        for i, j, k in mesh.triangles:
            f.write(f"3 {i} {j} {k}\n")


def _write_freesurfer(mesh, path):
    with open(path, "wb") as f:
        f.write(FREESURFER_MAGIC)
        f.write(b"created by surfwave\n\n")
        f.write(np.array([mesh.n_vertices, mesh.n_triangles], dtype=">i4").tobytes())
        f.write(mesh.vertices.astype(">f4").tobytes())
        f.write(mesh.triangles.astype(">i4").tobytes())


_WRITERS = {
    "off": _write_off,
    "ply-ascii": _write_ply,
    "freesurfer-binary": _write_freesurfer,
}

_EXTENSION_FORMATS = {".off": "off", ".ply": "ply-ascii"}


def write_mesh(mesh, path, fmt="auto"):
    """Write a mesh; ``auto`` picks the format from the extension.

    Extensions other than ``.off``/``.ply`` write FreeSurfer binary,
    which stores coordinates as float32.
    """
    if fmt == "auto":
        ext = os.path.splitext(str(path))[1].lower()
        fmt = _EXTENSION_FORMATS.get(ext, "freesurfer-binary")
    try:
        writer = _WRITERS[fmt]
    except KeyError:
        raise ValueError(f"unknown format {fmt!r}") from None
    writer(mesh, path)
