import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from coalesce.meshkit import (
    ErosionConfig,
    ErosionError,
    GridSpec,
    MeshFormatError,
    NonManifoldError,
    OccupancyGrid,
    PointCloud,
    SimilarityTransform,
    TriMesh,
    boundary_loops,
    dilate,
    distance_to_segments,
    erode_cloud,
    erode_part,
    grid_from_bytes,
    grid_to_bytes,
    load_labeled_parts,
    load_mesh,
    normalize_cloud,
    poisson_disk_radius,
    save_labeled_parts,
    save_mesh,
    sample_surface,
    voxel_occupancy,
    weld_vertices,
)
from coalesce.meshkit.primitives import box, cylinder, icosphere, strip
from oracles import brute_nearest_sq, l1_ball_count

CUBE_OBJ = """# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
"""
CUBE_TRIS = ["1 3 2", "1 4 3", "5 6 7", "5 7 8", "1 2 6", "1 6 5", "2 3 7", "2 7 6", "3 4 8", "3 8 7", "4 1 5", "4 5 8"]
CUBE_QUADS = ["1 4 3 2", "5 6 7 8", "1 2 6 5", "2 3 7 6", "3 4 8 7", "4 1 5 8"]


def write(tmp_path, name, faces):
    p = tmp_path / name
    p.write_text(CUBE_OBJ + "".join(f"f {f}\n" for f in faces))
    return p


def test_load_cube(tmp_path):
    m = load_mesh(write(tmp_path, "cube.obj", CUBE_TRIS))
    assert (m.n_vertices, m.n_triangles) == (8, 12)
    assert m.boundary_edge_count() == 0 and m.euler_characteristic() == 2


def test_load_quads_fan_triangulated(tmp_path):
    m = load_mesh(write(tmp_path, "quads.obj", CUBE_QUADS))
    assert m.n_triangles == 12 and m.boundary_edge_count() == 0


def test_load_out_of_range_index(tmp_path):
    with pytest.raises(MeshFormatError, match="index out of range"):
        load_mesh(write(tmp_path, "bad.obj", ["1 2 9"]))


def test_load_garbage_names_line(tmp_path):
    p = tmp_path / "junk.obj"
    p.write_text("v 0 0 0\nv 1 nope 0\n")
    with pytest.raises(MeshFormatError, match=":2:"):
        load_mesh(p)


def test_save_load_roundtrip(tmp_path, rng):
    m = icosphere(2, 0.7)
    m.vertices += rng.normal(size=m.vertices.shape) * 1e-3
    back = load_mesh(save_mesh(tmp_path / "s.obj", m))
    assert np.abs(back.vertices - m.vertices).max() <= 1e-6
    np.testing.assert_array_equal(back.triangles, m.triangles)


def test_labeled_parts_roundtrip(tmp_path):
    parts = {"seat": box((0, 0, 0), (1, 0.2, 1), divisions=2), "leg": box((0, -1, 0), (0.2, 0, 0.2), divisions=1)}
    back = load_labeled_parts(save_labeled_parts(tmp_path / "p.obj", parts))
    assert sorted(back) == ["leg", "seat"]
    for k in parts:
        assert back[k].n_triangles == parts[k].n_triangles


def test_boundary_loops_cube_cases(tmp_path):
    m = load_mesh(write(tmp_path, "cube.obj", CUBE_TRIS))
    assert boundary_loops(m) == []
    open_cube = m.submesh(np.arange(2, 12))
    loops = boundary_loops(open_cube)
    assert len(loops) == 1 and len(loops[0]) == 4


def _signed_area_xy(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def test_open_cylinder_loops_are_opposite():
    m = cylinder(0.3, 0.0, 1.0, n_around=24, n_height=4, caps=False)
    loops = boundary_loops(m)
    assert len(loops) == 2
    areas = [_signed_area_xy(m.vertices[lp.vertex_ids]) for lp in loops]
    assert areas[0] * areas[1] < 0


def test_nonmanifold_edge_is_named():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1.0]])
    m = TriMesh(v, [[0, 1, 2], [1, 0, 3], [0, 1, 4]])
    with pytest.raises(NonManifoldError, match=r"\(0, 1\)"):
        boundary_loops(m)


def test_erode_identity_and_strip():
    s = strip(1.0, 0.2, nu=40, nv=4)
    s.vertices[:, 0] += 0.5  # x in [0, 1]
    assert np.array_equal(erode_part(s, np.zeros((0, 3)), ErosionConfig(0.05), 1.0).vertices, s.vertices)
    assert erode_part(s, [[0, -1, 0], [0, 1, 0]], ErosionConfig(0.0), 1.0).n_triangles == s.n_triangles
    seg = np.array([[[0.0, -1, 0], [0.0, 1, 0]]])
    out = erode_part(s, seg, ErosionConfig(0.05), 1.0)
    touching = (s.vertices[s.triangles][:, :, 0] < 0.05).any(axis=1)
    assert out.n_triangles == int((~touching).sum())
    assert out.vertices[np.unique(out.triangles)][:, 0].min() >= 0.05


def test_erode_everything_raises():
    part = box((0, 0, 0), (0.3, 0.1, 0.1), divisions=2)
    with pytest.raises(ErosionError, match="part fully eroded"):
        erode_part(part, [[0.15, 0.05, 0.05]], ErosionConfig(1.0), 0.3)


def test_erosion_boundary_band():
    part = icosphere(3, 0.5)
    seg = np.array([[[-1.0, 0.0, 0.5], [1.0, 0.0, 0.5]]])
    cfg, d = ErosionConfig(0.2), 1.0
    out = erode_part(part, seg, cfg, d)
    rim = np.unique(np.concatenate([lp.vertex_ids for lp in boundary_loops(out)]))
    dist = distance_to_segments(out.vertices[rim], seg)
    assert dist.min() >= cfg.tau * d and dist.max() <= cfg.tau * d + part.longest_edge()


def test_erode_cloud_counts(rng):
    pts = np.column_stack([np.linspace(0, 1, 100), np.zeros(100), np.zeros(100)])
    cloud = PointCloud(pts, np.tile([0, 0, 1.0], (100, 1)), np.zeros(100, dtype=int))
    seg = [[0.0, 1.0, 0.0]]
    d = np.sqrt(brute_nearest_sq(pts, np.array(seg)))
    thr = np.sort(d)[29] + 1e-9  # exactly 30 points closer than the threshold
    out = erode_cloud(cloud, seg, ErosionConfig(thr), 1.0)
    assert len(out) == 70
    assert len(erode_cloud(cloud, np.zeros((0, 3)), ErosionConfig(0.3), 1.0)) == 100
    assert len(erode_cloud(cloud, seg, ErosionConfig(0.0), 1.0)) == 100


def test_sample_single_triangle():
    tri = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    c = sample_surface(tri, 1000, seed=3)
    p = c.points
    assert np.all(p[:, 0] >= 0) and np.all(p[:, 1] >= 0) and np.all(p.sum(1) <= 1 + 1e-12) and np.all(p[:, 2] == 0)
    np.testing.assert_allclose(c.normals, np.tile([0, 0, 1.0], (1000, 1)))
    assert len(sample_surface(tri, 0)) == 0


def test_sample_area_proportional():
    m = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [np.sqrt(3), 0, 1], [0, np.sqrt(3), 1]],
                [[0, 1, 2], [3, 4, 5]])
    assert np.isclose(m.face_areas()[1] / m.face_areas()[0], 3)
    counts = sum(np.bincount(sample_surface(m, 4000, seed=seed).source_face, minlength=2) for seed in range(10))
    assert abs(counts[0] - 10000) <= 500 and abs(counts[1] - 30000) <= 1500


def test_sample_chi_square_per_triangle():
    m = icosphere(1, 1.0)
    m.vertices *= np.array([1.0, 0.6, 0.3])  # unequal triangle areas
    expected = m.face_areas() / m.area() * 20000
    for seed in range(10):
        counts = np.bincount(sample_surface(m, 20000, seed=seed).source_face, minlength=m.n_triangles)
        assert stats.chisquare(counts, expected).pvalue > 0.01


def test_sample_zero_area_raises():
    with pytest.raises(ValueError):
        sample_surface(TriMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]]), 10)


def test_poisson_disk_min_spacing():
    m = icosphere(4, 1.0)
    c = sample_surface(m, 512, mode="poisson_disk", seed=0)
    r = poisson_disk_radius(m.area(), 512)
    assert len(c) == 512
    d = np.sqrt(((c.points[:, None] - c.points[None]) ** 2).sum(-1)) + np.eye(512) * 9
    assert d.min() >= 0.9 * r


def test_normalize_cloud_cases(rng):
    pts = rng.normal(size=(200, 3))
    cloud = PointCloud(pts, np.tile([1.0, 0, 0], (200, 1)), np.zeros(200, dtype=int))
    norm, back = normalize_cloud(cloud)
    lo, hi = norm.points.min(0), norm.points.max(0)
    assert np.isclose(np.linalg.norm(hi - lo), 1.0)
    np.testing.assert_allclose(back.apply(norm.points), pts, atol=1e-6)
    # normalizing an already normalized cloud changes nothing
    again, xf = normalize_cloud(norm)
    assert np.isclose(xf.s, 1.0) and np.allclose(xf.translation, 0, atol=1e-12)
    moved = PointCloud(pts * 2 + 5, cloud.normals, cloud.source_face)
    n2, back2 = normalize_cloud(moved)
    assert np.isclose(1.0 / back2.s, 0.5 * (1.0 / back.s))
    np.testing.assert_allclose(back2.apply(n2.points), pts * 2 + 5, atol=1e-9)
    with pytest.raises(ValueError):
        normalize_cloud(PointCloud(np.ones((5, 3)), np.ones((5, 3)), np.zeros(5, dtype=int)))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10), st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       st.floats(0.1, 10), st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_similarity_compose_and_inverse(s1, t1, s2, t2):
    a, b = SimilarityTransform(s1, t1), SimilarityTransform(s2, t2)
    p = np.array([[0.3, -1.0, 2.0], [1.0, 1.0, 1.0]])
    np.testing.assert_allclose(a.then(b).apply(p), b.apply(a.apply(p)), rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(a.inverse().apply(a.apply(p)), p, rtol=1e-9, atol=1e-9)


def test_voxel_half_cube_exact():
    spec = GridSpec.cube(16, 0.5)
    g = voxel_occupancy(box((-0.6, -0.6, -0.6), (0.0, 0.6, 0.6), divisions=2), spec=spec)
    assert g.occupancy.sum() == 8 * 16 * 16
    assert g.occupancy[:8].all() and not g.occupancy[8:].any()


def test_voxel_empty_and_sphere():
    spec = GridSpec.cube(64, 0.5)
    assert not voxel_occupancy(TriMesh.empty(), spec=spec).occupancy.any()
    g = voxel_occupancy(icosphere(4, 0.4), spec=spec)
    want = 4 / 3 * np.pi * 0.4**3
    assert abs(g.occupancy.mean() - want) <= 0.02 * want
    assert not g.flagged


def _single(n=13):
    spec = GridSpec.cube(n, 0.5)
    occ = np.zeros(spec.resolution, dtype=bool)
    occ[n // 2, n // 2, n // 2] = True
    return OccupancyGrid(spec, occ)


def test_dilate_counts():
    g = _single()
    assert np.array_equal(dilate(g, 0).occupancy, g.occupancy)
    assert dilate(g, 1).occupancy.sum() == 7
    assert dilate(g, 5).occupancy.sum() == l1_ball_count(5) == 231


def test_dilate_monotone(rng):
    spec = GridSpec.cube(12, 0.5)
    g = OccupancyGrid(spec, rng.random(spec.resolution) > 0.97)
    prev = g.occupancy
    for k in range(1, 5):
        cur = dilate(g, k).occupancy
        assert np.all(cur >= prev)
        prev = cur


def test_grid_bytes_roundtrip(rng):
    spec = GridSpec.cube(10, 0.5)
    g = OccupancyGrid(spec, rng.random(spec.resolution) > 0.5)
    back = grid_from_bytes(grid_to_bytes(g))
    # the header stores origin and cell size as float32
    assert back.spec.resolution == g.spec.resolution
    assert back.spec.cell_size == float(np.float32(g.spec.cell_size))
    assert np.array_equal(back.occupancy, g.occupancy)


def test_weld_merges_close_vertices():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1e-9, 0, 0], [0, -1, 0], [1, 0, 0]])
    m = weld_vertices(TriMesh(v, [[0, 1, 2], [3, 4, 5]]), 1e-6)
    assert m.n_vertices == 4
