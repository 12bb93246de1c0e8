import numpy as np
import pytest

from coalesce.meshkit import GridSpec, TriMesh, boundary_loops
from coalesce.meshkit.primitives import box, strip
from coalesce.surfacing import (
    ScalarField,
    bridge_loops,
    harmonic_displacement,
    largest_subloop,
    loop_correspondence,
    marching_cubes,
    metric_d,
    poisson_blend,
    remove_redundant,
    stitch,
    stitch_meshes,
    uniform_laplacian,
)


def sphere_field(r=0.3, res=64):
    spec = GridSpec.cube(res, 0.5)
    return ScalarField.from_function(spec, lambda p: 0.5 + (r - np.linalg.norm(p, axis=1)))


def test_marching_cubes_sphere_is_closed_with_right_area():
    r = 0.3
    m = marching_cubes(sphere_field(r))
    assert m.boundary_edge_count() == 0 and m.is_edge_manifold()
    assert m.euler_characteristic() == 2
    assert abs(m.area() - 4 * np.pi * r**2) <= 0.03 * 4 * np.pi * r**2
    # outward winding: the enclosed volume is positive
    v = m.vertices[m.triangles]
    assert np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() > 0


def test_marching_cubes_empty_field():
    spec = GridSpec.cube(16, 0.5)
    assert marching_cubes(ScalarField(spec, np.zeros(spec.resolution))).is_empty()
    assert marching_cubes(ScalarField(spec, np.ones(spec.resolution)), pad_value=None).is_empty()


def test_marching_cubes_closes_at_the_border():
    # occupied all the way to the grid edge: the zero padding still closes it
    spec = GridSpec.cube(8, 0.5)
    m = marching_cubes(ScalarField(spec, np.ones(spec.resolution)))
    assert not m.is_empty() and m.boundary_edge_count() == 0


def _strip_fixture():
    s = strip(1.0, 0.2, nu=20, nv=4)
    x = s.vertices[:, 0]
    fixed = np.flatnonzero((x < 1e-9) | (x > 1 - 1e-9))
    return s, x, fixed


def test_harmonic_zero_data_is_identity():
    s, x, fixed = _strip_fixture()
    d, _ = harmonic_displacement(s, fixed, np.zeros((len(fixed), 3)))
    assert np.abs(d).max() <= 1e-9


def test_harmonic_strip_is_linear():
    s, x, fixed = _strip_fixture()
    vals = np.zeros((len(fixed), 3))
    vals[:, 2] = np.where(x[fixed] > 0.5, 0.1, 0.0)
    d, res = harmonic_displacement(s, fixed, vals)
    assert np.abs(d[:, 2] - 0.1 * x).max() <= 1e-4
    assert np.abs(d[:, :2]).max() <= 1e-12
    assert res <= 1e-8


def test_cg_residual_on_random_fixtures():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        s = strip(1.0, 0.5, nu=12, nv=6)
        s.vertices[:, 2] = rng.normal(size=s.n_vertices) * 0.05
        fixed = rng.choice(s.n_vertices, 10, replace=False)
        vals = rng.normal(size=(10, 3))
        d, res = harmonic_displacement(s, fixed, vals)
        assert res <= 1e-8
        # independent check of the reported residual
        L = uniform_laplacian(s).toarray()
        free = np.setdiff1d(np.arange(s.n_vertices), fixed)
        r = L[free] @ d
        assert np.linalg.norm(r) <= 1e-8 * np.linalg.norm(L[np.ix_(free, fixed)] @ vals) * 1.5


def test_poisson_blend_identity_on_zero_motion():
    ann = annulus()
    inner = ann.rim
    c = loop_correspondence(ann.mesh.vertices[inner], np.tile([0, 0, 1.0], (len(inner), 1)), ann.mesh)
    c.targets = ann.mesh.vertices[c.joint_loop]
    out = poisson_blend(ann.mesh, [c])
    assert np.abs(out.vertices - ann.mesh.vertices).max() <= 1e-9


class annulus:
    """Flat ring in z=0, normals +z, with inner rim vertex ids in ``rim``."""

    def __init__(self, r0=0.3, r1=0.6, n_around=48, n_rings=6, z=0.0, flip=False):
        rs = np.linspace(r0, r1, n_rings)
        th = np.linspace(0, 2 * np.pi, n_around, endpoint=False)
        R, T = np.meshgrid(rs, th, indexing="ij")
        v = np.stack([R.ravel() * np.cos(T.ravel()), R.ravel() * np.sin(T.ravel()), np.full(R.size, z)], axis=1)
        tris = []
        for i in range(n_rings - 1):
            for j in range(n_around):
                a, b = i * n_around + j, i * n_around + (j + 1) % n_around
                c, d = a + n_around, b + n_around
                tris += [[a, d, b], [a, c, d]]
        tris = np.array(tris)
        if flip:
            tris = tris[:, ::-1]
        self.mesh = TriMesh(v, tris)
        self.rim = np.arange(n_around)


def test_loop_correspondence_covers_shared_rim():
    ann = annulus()
    S = ann.mesh.vertices[ann.rim]
    c = loop_correspondence(S, np.tile([0, 0, 1.0], (len(S), 1)), ann.mesh)
    assert c.matched
    covered = np.isin(ann.rim, c.joint_loop).mean()
    assert covered >= 0.95


def test_loop_correspondence_is_deterministic():
    ann = annulus()
    S = ann.mesh.vertices[ann.rim] * 0.98
    a = loop_correspondence(S, np.tile([0, 0, 1.0], (len(S), 1)), ann.mesh)
    b = loop_correspondence(S, np.tile([0, 0, 1.0], (len(S), 1)), ann.mesh)
    assert a.joint_loop == b.joint_loop and a.seed == b.seed


def test_metric_prefers_aligned_normal_on_ties():
    p, n_p = np.zeros(3), np.array([0, 0, 1.0])
    q = np.array([[1.0, 0, 0], [-1.0, 0, 0]])
    n_q = np.array([[0, 0, 1.0], [0, 0, -1.0]])
    d = metric_d(p, n_p, q, n_q)
    np.testing.assert_allclose(d, [1.0, 3.0])
    assert int(np.argmin(d)) == 0


def test_walk_stays_on_the_aligned_sheet():
    # two sheets equally far from the part rim, facing opposite ways
    top = annulus(z=0.01)
    bottom = annulus(z=-0.01, flip=True)
    n = top.mesh.n_vertices
    both = TriMesh(np.concatenate([bottom.mesh.vertices, top.mesh.vertices]),
                   np.concatenate([bottom.mesh.triangles, top.mesh.triangles + n]))
    S = top.mesh.vertices[top.rim] * [1, 1, 0]
    c = loop_correspondence(S, np.tile([0, 0, 1.0], (len(S), 1)), both)
    assert c.matched and np.all(both.vertices[c.joint_loop][:, 2] > 0)


def test_largest_subloop():
    assert largest_subloop([1, 2, 3, 2, 4, 5, 6]) == [2, 4, 5, 6] or len(largest_subloop([1, 2, 3, 2, 4, 5, 6])) == 5
    assert largest_subloop([0, 1, 2, 3]) == [0, 1, 2, 3]


def test_bridge_parallel_squares():
    a = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0.0]])
    b = a + [0, 0, 0.5]
    ring = bridge_loops(a, b)
    assert len(ring) == 8
    v = np.concatenate([a, b])
    area = 0.5 * np.linalg.norm(np.cross(v[ring[:, 1]] - v[ring[:, 0]], v[ring[:, 2]] - v[ring[:, 0]]), axis=1).sum()
    assert np.isclose(area, 4 * 0.5)


def test_bridge_counts_and_edge_use():
    th3 = np.linspace(0, 2 * np.pi, 3, endpoint=False)
    th5 = np.linspace(0, 2 * np.pi, 5, endpoint=False)
    a = np.stack([np.cos(th3), np.sin(th3), np.zeros(3)], 1)
    b = np.stack([np.cos(th5), np.sin(th5), np.ones(5)], 1) * 1.2
    ring = bridge_loops(a, b)
    assert len(ring) == 8 and ring.max() < 8
    # every loop edge appears in exactly one ring triangle
    edges = [tuple(sorted(e)) for t in ring for e in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0]))]
    for i in range(3):
        assert edges.count(tuple(sorted((i, (i + 1) % 3)))) == 1
    for j in range(5):
        assert edges.count(tuple(sorted((3 + j, 3 + (j + 1) % 5)))) == 1


def test_bridge_degenerate_loop():
    with pytest.raises(ValueError):
        bridge_loops(np.zeros((2, 3)), np.zeros((4, 3)))


def _open_box(lo, hi, drop_above=None, drop_below=None):
    b = box(lo, hi, spacing=0.025)
    z = b.vertices[b.triangles][:, :, 2]
    keep = np.ones(b.n_triangles, bool)
    if drop_above is not None:
        keep &= ~(z > drop_above - 1e-9).all(1)
    if drop_below is not None:
        keep &= ~(z < drop_below + 1e-9).all(1)
    return b.submesh(np.flatnonzero(keep))


def two_boxes_and_slab():
    A = _open_box((-0.2, -0.2, -0.4), (0.2, 0.2, -0.05), drop_above=-0.05)
    B = _open_box((-0.2, -0.2, 0.05), (0.2, 0.2, 0.4), drop_below=0.05)
    spec = GridSpec.cube(64, 0.5)

    def slab(p):
        d = np.minimum(np.minimum(0.2 - np.abs(p[:, 0]), 0.2 - np.abs(p[:, 1])), 0.15 - np.abs(p[:, 2]))
        return 1 / (1 + np.exp(-80 * d))

    return [A, B], ScalarField.from_function(spec, slab)


def test_stitch_two_boxes_and_slab_is_watertight():
    parts, field = two_boxes_and_slab()
    before = [p.copy() for p in parts]
    r = stitch(parts, field)
    assert not r.flagged and r.matched == 2
    assert r.mesh.boundary_edge_count() == 0 and r.mesh.is_edge_manifold()
    assert r.mesh.euler_characteristic() == 2
    # parts are never modified by surfacing
    for a, b in zip(parts, before):
        assert np.array_equal(a.vertices, b.vertices) and np.array_equal(a.triangles, b.triangles)
    # trimming only removes joint faces
    assert r.trimmed_joint.n_triangles < r.raw_joint.n_triangles


def test_stitch_empty_field_returns_parts_flagged():
    parts, field = two_boxes_and_slab()
    empty = ScalarField(field.spec, np.zeros(field.spec.resolution))
    r = stitch(parts, empty)
    assert r.flagged
    assert r.mesh.n_triangles == sum(p.n_triangles for p in parts)


def test_stitch_without_any_match_is_flagged():
    parts, _ = two_boxes_and_slab()
    far = TriMesh(np.array([[5.0, 5, 5], [6, 5, 5], [5, 6, 5]]), [[0, 1, 2]])
    r = stitch_meshes(parts, far)
    assert r.flagged


def test_remove_redundant_keeps_part_meshes_untouched():
    parts, field = two_boxes_and_slab()
    joint = marching_cubes(field)
    r = stitch_meshes(parts, joint)
    matched = [c for c in r.correspondences if c.matched]
    trimmed = remove_redundant(joint, matched)
    assert trimmed.n_triangles <= joint.n_triangles
    assert boundary_loops(parts[0]) and boundary_loops(parts[1])
