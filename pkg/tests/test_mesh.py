import struct

import numpy as np
import pytest

from surfwave.errors import DegenerateMeshError, FormatError
from surfwave.mesh import (
    TriangleMesh,
    inspect_mesh,
    load_mesh,
    surface_area,
    validate_mesh,
    write_mesh,
)
from surfwave.synth import icosphere

from conftest import TETRA_TRIANGLES, TETRA_VERTICES, make_tetra, random_rotation

TETRA_OFF = """OFF
4 4 6
0.35355339059327379 0.35355339059327379 0.35355339059327379
0.35355339059327379 -0.35355339059327379 -0.35355339059327379
-0.35355339059327379 0.35355339059327379 -0.35355339059327379
-0.35355339059327379 -0.35355339059327379 0.35355339059327379
3 0 1 2
3 0 3 1
3 0 2 3
3 1 3 2
"""


def test_load_off_tetra(tmp_path):
    path = tmp_path / "tetra.off"
    path.write_text(TETRA_OFF)
    mesh = load_mesh(path)
    assert mesh.n_vertices == 4
    assert mesh.n_triangles == 4
    np.testing.assert_allclose(mesh.vertices, TETRA_VERTICES, atol=1e-15)


def test_load_off_counts_on_header_line(tmp_path):
    path = tmp_path / "tetra.off"
    path.write_text(TETRA_OFF.replace("OFF\n4 4 6", "OFF 4 4 6"))
    mesh = load_mesh(path)
    assert mesh.n_vertices == 4


def test_load_off_with_comments(tmp_path):
    path = tmp_path / "tetra.off"
    path.write_text("# comment\n" + TETRA_OFF.replace("4 4 6", "4 4 6 # counts"))
    assert load_mesh(path).n_triangles == 4


def test_off_index_out_of_range(tmp_path):
    path = tmp_path / "bad.off"
    path.write_text(TETRA_OFF.replace("3 1 3 2", "3 1 3 4"))
    with pytest.raises(FormatError):
        load_mesh(path)


def test_off_non_triangle_face(tmp_path):
    path = tmp_path / "quad.off"
    path.write_text(TETRA_OFF.replace("3 0 1 2", "4 0 1 2 3"))
    with pytest.raises(FormatError):
        load_mesh(path)


def test_off_truncated(tmp_path):
    path = tmp_path / "trunc.off"
    path.write_text("\n".join(TETRA_OFF.splitlines()[:5]))
    with pytest.raises(FormatError):
        load_mesh(path)


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_mesh(tmp_path / "nope.off")


def test_constructor_rejects_repeated_index():
    with pytest.raises(FormatError):
        TriangleMesh(TETRA_VERTICES, [[0, 1, 1], [0, 2, 3], [1, 2, 3]])


def test_constructor_rejects_nan():
    v = TETRA_VERTICES.copy()
    v[0, 0] = np.nan
    with pytest.raises(FormatError):
        TriangleMesh(v, TETRA_TRIANGLES)


def test_ply_roundtrip(tmp_path):
    mesh = make_tetra()
    path = tmp_path / "tetra.ply"
    write_mesh(mesh, path, fmt="ply-ascii")
    back = load_mesh(path)
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.triangles, mesh.triangles)


def test_ply_extra_vertex_property(tmp_path):
    # confidence column before the coordinates; x/y/z located by name
    text = (
        "ply\nformat ascii 1.0\n"
        "element vertex 3\n"
        "property float confidence\n"
        "property float x\nproperty float y\nproperty float z\n"
        "element face 1\n"
        "property list uchar int vertex_indices\nend_header\n"
        "0.9 0 0 0\n0.8 1 0 0\n0.7 0 1 0\n"
        "3 0 1 2\n"
    )
    path = tmp_path / "extra.ply"
    path.write_text(text)
    mesh = load_mesh(path)
    np.testing.assert_array_equal(mesh.vertices[1], [1, 0, 0])


def test_off_roundtrip_identity(tmp_path):
    mesh = icosphere(1)
    path = tmp_path / "ico.off"
    write_mesh(mesh, path)
    back = load_mesh(path)
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.triangles, mesh.triangles)


def test_freesurfer_roundtrip_float32_quantization(tmp_path):
    mesh = icosphere(1)
    path = tmp_path / "lh.sphere"
    write_mesh(mesh, path, fmt="freesurfer-binary")
    with open(path, "rb") as f:
        assert f.read(3) == b"\xff\xff\xfe"
    back = load_mesh(path)
    np.testing.assert_array_equal(
        back.vertices, mesh.vertices.astype(np.float32).astype(np.float64)
    )
    np.testing.assert_array_equal(back.triangles, mesh.triangles)


def test_freesurfer_reader_against_independent_writer(tmp_path):
    # oracle: a second writer built from the documented field list
    mesh = make_tetra()
    blob = b"\xff\xff\xfe"
    blob += b"some creator text\n\n"
    blob += struct.pack(">ii", mesh.n_vertices, mesh.n_triangles)
    blob += mesh.vertices.astype(">f4").tobytes()
    blob += mesh.triangles.astype(">i4").tobytes()
    path = tmp_path / "rh.white"
    path.write_bytes(blob)
    back = load_mesh(path)
    np.testing.assert_array_equal(
        back.vertices, mesh.vertices.astype(np.float32).astype(np.float64)
    )
    np.testing.assert_array_equal(back.triangles, mesh.triangles)


def test_freesurfer_truncated(tmp_path):
    path = tmp_path / "trunc.white"
    path.write_bytes(b"\xff\xff\xfecreator\n\n" + struct.pack(">ii", 100, 100))
    with pytest.raises(FormatError):
        load_mesh(path)


def test_auto_sniff_by_magic(tmp_path):
    mesh = make_tetra()
    fs = tmp_path / "noext"
    write_mesh(mesh, fs, fmt="freesurfer-binary")
    assert load_mesh(fs, fmt="auto").n_vertices == 4
    off = tmp_path / "alsonoext"
    write_mesh(mesh, off, fmt="off")
    assert load_mesh(off, fmt="auto").n_vertices == 4


def test_auto_sniff_unknown(tmp_path):
    path = tmp_path / "mystery.bin"
    path.write_bytes(b"\x00\x01\x02\x03")
    with pytest.raises(FormatError):
        load_mesh(path)


# ---------------------------------------------------------------------------
# surface_area


def test_area_tetra(tetra):
    assert surface_area(tetra) == pytest.approx(np.sqrt(3.0), rel=1e-12)


def test_area_icosphere_converges(icosphere4):
    assert surface_area(icosphere4) == pytest.approx(4 * np.pi, rel=0.01)


def test_area_scaling(tetra):
    scaled = TriangleMesh(tetra.vertices * 2.5, tetra.triangles)
    assert surface_area(scaled) == pytest.approx(
        2.5**2 * surface_area(tetra), rel=1e-12
    )


def test_area_rigid_invariance(tetra):
    rot = random_rotation(7)
    moved = TriangleMesh(tetra.vertices @ rot.T + [3.0, -1.0, 2.0], tetra.triangles)
    assert surface_area(moved) == pytest.approx(surface_area(tetra), rel=1e-12)


# ---------------------------------------------------------------------------
# validation


def test_validate_clean_strict(icosphere2):
    mesh, report = validate_mesh(icosphere2, policy="strict")
    assert mesh is icosphere2
    assert report.is_valid
    assert all(c == 0 for c in report.issue_counts.values())


def test_validate_prune_isolated_vertex(tetra):
    v = np.vstack([tetra.vertices, [5.0, 5.0, 5.0]])
    mesh = TriangleMesh(v, tetra.triangles)
    pruned, report = validate_mesh(mesh, policy="prune")
    assert pruned.n_vertices == 4
    assert report.pruned_vertices == 1
    assert report.issue_counts["isolated_vertices"] == 1
    assert surface_area(pruned) == pytest.approx(surface_area(tetra), rel=1e-12)


def test_validate_prune_isolated_vertex_reindexes():
    # isolated vertex in the middle: following indices must shift down
    v = np.array(
        [[0, 0, 0], [1, 0, 0], [9, 9, 9], [0, 1, 0], [0, 0, 1]], dtype=float
    )
    t = np.array([[0, 1, 3], [0, 3, 4], [0, 4, 1], [1, 4, 3]])
    pruned, report = validate_mesh(TriangleMesh(v, t), policy="prune")
    assert report.pruned_vertices == 1
    assert pruned.n_vertices == 4
    np.testing.assert_array_equal(
        pruned.vertices, np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    )


def test_validate_strict_zero_area(tetra):
    v = np.vstack([tetra.vertices, tetra.vertices[0] + 1e-300])
    t = np.vstack([tetra.triangles, [[0, 1, 4]]])
    with pytest.raises(DegenerateMeshError):
        validate_mesh(TriangleMesh(v, t), policy="strict")


def test_validate_prune_cannot_fix_zero_area(tetra):
    v = np.vstack([tetra.vertices, tetra.vertices[0] + 1e-300])
    t = np.vstack([tetra.triangles, [[0, 1, 4]]])
    with pytest.raises(DegenerateMeshError):
        validate_mesh(TriangleMesh(v, t), policy="prune")


def test_validate_prune_duplicate_triangles(tetra):
    t = np.vstack([tetra.triangles, [[2, 0, 1]]])  # same triple, rotated
    pruned, report = validate_mesh(TriangleMesh(tetra.vertices, t), policy="prune")
    assert report.issue_counts["duplicate_triangles"] == 1
    assert pruned.n_triangles == 4


def test_validate_strict_rejects_isolated(tetra):
    v = np.vstack([tetra.vertices, [5.0, 5.0, 5.0]])
    with pytest.raises(DegenerateMeshError):
        validate_mesh(TriangleMesh(v, tetra.triangles), policy="strict")


def test_nonmanifold_reported_not_fatal(tetra):
    # an extra fin on edge (0, 1) makes it borderline three-triangle
    v = np.vstack([tetra.vertices, [0.8, 0.8, -0.8]])
    t = np.vstack([tetra.triangles, [[0, 1, 4]]])
    mesh = TriangleMesh(v, t)
    assert inspect_mesh(mesh)["nonmanifold_edges"] == 1
    checked, report = validate_mesh(mesh, policy="strict")
    assert report.issue_counts["nonmanifold_edges"] == 1
    with pytest.raises(DegenerateMeshError):
        validate_mesh(mesh, policy="strict", nonmanifold_fatal=True)


def test_validate_prune_idempotent():
    v = np.array(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [9, 9, 9]], dtype=float
    )
    t = np.array([[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2], [2, 1, 0]])
    once, _ = validate_mesh(TriangleMesh(v, t), policy="prune")
    twice, report = validate_mesh(once, policy="prune")
    assert report.pruned_vertices == 0
    np.testing.assert_array_equal(once.vertices, twice.vertices)
    np.testing.assert_array_equal(once.triangles, twice.triangles)


def test_mesh_arrays_read_only(tetra):
    with pytest.raises(ValueError):
        tetra.vertices[0, 0] = 1.0
