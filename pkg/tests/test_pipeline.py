import filecmp
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coalesce.meshkit import PointCloud, TriMesh, points_inside
from coalesce.meshkit.primitives import box
from coalesce.pipeline.cli import main
from coalesce.pipeline.config import PipelineConfig, desk_config, env_overrides, load_config
from coalesce.pipeline.evaluate import STAGES, SuiteReport, evaluate_suite
from coalesce.pipeline.metrics import chamfer, field_iou
from coalesce.pipeline.perturb import (
    PerturbConfig,
    perturb_similarity,
    perturb_sine,
    sample_similarity,
    sine_phase,
    warp_normals,
    warp_points,
)
from coalesce.pipeline.synthetic import CATEGORIES, generate_shape, generate_synthetic, load_dataset


# -- configuration -----------------------------------------------------------

def test_config_layers(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text('seed = 3\n[refine]\niterations = 7\n[category]\nname = "muglike"\n')
    cfg = load_config(p, environ={"COALESCE_REFINE__ITERATIONS": "9", "COALESCE_JOINT__DECODER_HIDDEN": "64,32"})
    assert cfg.category.name == "muglike" and cfg.category.part_labels == CATEGORIES["muglike"]
    assert cfg.seed == 3 and cfg.refine.iterations == 9
    assert cfg.joint.decoder_hidden == (64, 32)


def test_config_unknown_key(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[refine]\nsteps = 3\n")
    with pytest.raises(KeyError):
        load_config(p, environ={})


def test_env_parse_types():
    got = env_overrides({"COALESCE_ALIGN__LR": "0.5", "COALESCE_REFINE__ENABLED": "false", "OTHER": "1"})
    assert got == {"align": {"lr": 0.5}, "refine": {"enabled": False}}


def test_config_hash_tracks_content():
    a, b = PipelineConfig(), PipelineConfig()
    assert a.hash() == b.hash()
    b.refine.iterations += 1
    assert a.hash() != b.hash()
    assert load_config(environ={}, base=desk_config()).hash() == desk_config().hash()


def test_unknown_category():
    with pytest.raises(ValueError):
        PipelineConfig.for_category("airplane")


# -- synthetic data ----------------------------------------------------------

def test_gen_data_is_byte_identical(tmp_path):
    a = generate_synthetic("chairlike", 2, 11, tmp_path / "a")
    b = generate_synthetic("chairlike", 2, 11, tmp_path / "b")
    for name in ("manifest.json", "shape_000/shape.obj", "shape_000/meta.json", "shape_001/shape.obj"):
        assert filecmp.cmp(a / name, b / name, shallow=False)
    manifest, shapes = load_dataset(a)
    assert manifest["count"] == 2 and [s.name for s in shapes] == ["shape_000", "shape_001"]


def test_gen_data_count_eight(tmp_path):
    out = generate_synthetic("muglike", 8, 0, tmp_path / "m")
    assert len([d for d in out.iterdir() if d.is_dir()]) == 8


def _touches(a: TriMesh, b: TriMesh) -> bool:
    # a closed surface with vertices on both sides of another closed surface crosses it
    inside = points_inside(b, a.vertices)
    return bool(inside.any() and (~inside).any())


@pytest.mark.parametrize("seed", [0, 1, 2, 5])
def test_chairlike_parts_are_adjacent(seed):
    shape = generate_shape("chairlike", seed)
    labels = shape.labels
    adj = {l: {m for m in labels if m != l and _touches(shape.parts[l], shape.parts[m])} for l in labels}
    assert {"seat", "leg", "back"} <= set(labels)
    assert "seat" in adj["leg"] and "seat" in adj["back"]
    # the contact graph is connected and every part has a segmentation boundary
    seen, todo = set(), ["seat"]
    while todo:
        l = todo.pop()
        if l not in seen:
            seen.add(l)
            todo += list(adj[l])
    assert seen == set(labels)
    assert all(len(shape.boundaries[l]) > 0 for l in labels)


def test_shapes_are_closed_and_unit_diameter():
    for cat in CATEGORIES:
        s = generate_shape(cat, 4)
        assert all(m.boundary_edge_count() == 0 for m in s.parts.values())
        assert np.isclose(s.diameter(), 1.0)


# -- perturbations -----------------------------------------------------------

def test_sine_spot_checks():
    p = np.array([[0.0, 0.0, 0.125]])
    assert warp_points(p, 0.02, 4 * np.pi, 0.0)[0, 1] == 0.02
    q = np.array([[0.3, -0.1, 0.2]])
    f = 0.7
    assert warp_points(q, 0.02, 4 * np.pi, f)[0, 1] == -0.1 + 0.02 * np.sin(4 * np.pi * 0.2 + f)
    assert np.array_equal(perturb_sine(q, PerturbConfig(amplitude=0.0), seed=3), q)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.floats(-np.pi, np.pi), st.floats(0.0, 0.1))
def test_sine_plus_and_minus_cancel(p, phase, a):
    p = np.array([p])
    back = warp_points(warp_points(p, a, 4 * np.pi, phase), -a, 4 * np.pi, phase)
    # z is untouched, so both steps add the very same term; only the one
    # rounding of y + term can survive
    assert back[0, 0] == p[0, 0] and back[0, 2] == p[0, 2]
    assert abs(back[0, 1] - p[0, 1]) <= np.spacing(abs(p[0, 1]) + a)


def test_sine_normals_follow_the_surface():
    # the plane y = 0 becomes y = a sin(w z + f); its normal is (0, 1, -a w cos)
    pts = np.column_stack([np.zeros(5), np.zeros(5), np.linspace(0, 1, 5)])
    n = warp_normals(pts, np.tile([0, 1.0, 0], (5, 1)), 0.02, 4 * np.pi, 0.3)
    want = np.column_stack([np.zeros(5), np.ones(5), -0.02 * 4 * np.pi * np.cos(4 * np.pi * pts[:, 2] + 0.3)])
    np.testing.assert_allclose(n, want / np.linalg.norm(want, axis=1, keepdims=True))


def test_one_phase_per_shape():
    shape = generate_shape("muglike", 1)
    warped = perturb_sine(shape, seed=9)
    f = sine_phase(9)
    for l, m in shape.parts.items():
        np.testing.assert_array_equal(warped.parts[l].vertices, warp_points(m.vertices, 0.02, 4 * np.pi, f))
    assert -np.pi <= f <= np.pi


def test_similarity_ranges_over_1000_seeds():
    for seed in range(1000):
        xf = sample_similarity(seed=seed)
        assert 0.9 <= xf.s <= 1.1
        assert np.all(np.abs(xf.translation) <= 0.04)


def test_similarity_identity_and_global():
    cfg = PerturbConfig(scale_range=(1.0, 1.0), translation_range=(0.0, 0.0))
    pts = np.random.default_rng(0).normal(size=(10, 3))
    same, xf = perturb_similarity(pts, cfg, seed=5)
    assert np.array_equal(same, pts) and xf.s == 1.0
    parts = {"a": pts, "b": pts[:3] + 1}
    moved, xf = perturb_similarity(parts, seed=5)
    for k in parts:
        np.testing.assert_array_equal(moved[k], xf.apply(parts[k]))
    cloud = PointCloud(pts, np.tile([1.0, 0, 0], (10, 1)))
    moved_cloud, _ = perturb_similarity(cloud, seed=5)
    np.testing.assert_array_equal(moved_cloud.normals, cloud.normals)


# -- metrics -----------------------------------------------------------------

def test_chamfer_basics(rng):
    x = rng.normal(size=(500, 3))
    assert chamfer(x, x) == 0.0
    y = rng.normal(size=(400, 3))
    assert abs(chamfer(x, y) - chamfer(y, x)) <= 1e-9
    assert chamfer(x, y) >= 0 and chamfer(x, y, squared=False) >= 0
    with pytest.raises(ValueError):
        chamfer(np.zeros((0, 3)), x)


def test_chamfer_against_brute_force(rng):
    from oracles import brute_nearest_sq

    a, b = rng.random((300, 3)), rng.random((200, 3))
    want = 0.5 * (brute_nearest_sq(a, b).mean() + brute_nearest_sq(b, a).mean()) * 1e3
    assert abs(chamfer(a, b) - want) <= 1e-9


def test_chamfer_parallel_squares():
    d = 0.05
    sq = TriMesh([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], [[0, 1, 2], [0, 2, 3]])
    up = TriMesh(sq.vertices + [0, 0, d], sq.triangles)
    got = chamfer(sq, up, n=16384)
    assert abs(got - d * d * 1e3) <= 0.05 * d * d * 1e3


def test_field_iou():
    region = np.ones((2, 2), bool)
    assert field_iou(np.array([[0.9, 0.1], [0.9, 0.1]]), np.array([[1, 0], [1, 0]]), region) == 1.0
    assert field_iou(np.array([[0.9, 0.9], [0.1, 0.1]]), np.array([[1, 0], [1, 0]]), region) == 1 / 3
    assert field_iou(np.zeros((2, 2)), np.zeros((2, 2)), region) == 1.0


# -- evaluation report -------------------------------------------------------

def test_report_structure(tmp_path):
    r = SuiteReport("none", ["a", "b"], {k: [1.0, 2.0] for k, _ in STAGES})
    d = r.to_dict()
    assert [row["stage"] for row in d["rows"]] == [
        "Ours (before test-time opt.)", "Ours (after test-time opt.)", "Ours (after Poisson blending)"]
    assert all(row["mean"] == 1.5 for row in d["rows"])
    r.write(tmp_path)
    assert json.loads((tmp_path / "report.json").read_text())["rows"][0]["per_shape"] == [1.0, 2.0]
    assert len((tmp_path / "report.txt").read_text().strip().splitlines()) == 5


def test_empty_suite_raises():
    with pytest.raises(ValueError):
        evaluate_suite(PipelineConfig(), [], None, None, None)


# -- command line ------------------------------------------------------------

def test_cli_missing_checkpoint_fails_before_compute(tmp_path, capsys):
    code = main(["assemble", "--category", "chairlike", "--data", str(tmp_path), "--align", str(tmp_path / "no.ckpt"),
                 "--joint", str(tmp_path / "no2.ckpt"), "--part", "shape_000:seat", "--out", str(tmp_path / "o.obj")])
    assert code == 1
    assert "not found" in capsys.readouterr().err
    assert not (tmp_path / "o.obj").exists()


def test_cli_train_joint_needs_pretrain(tmp_path, capsys):
    code = main(["train-joint", "--category", "chairlike", "--data", str(tmp_path), "--pretrain",
                 str(tmp_path / "none.ckpt"), "--out", str(tmp_path / "j.ckpt")])
    assert code == 1 and "not found" in capsys.readouterr().err


def test_cli_gen_data_and_perturb(tmp_path):
    assert main(["gen-data", "--category", "muglike", "--count", "1", "--seed", "2", "--out", str(tmp_path / "d")]) == 0
    assert main(["perturb", "--data", str(tmp_path / "d"), "--shape", "shape_000", "--mode", "sine",
                 "--out", str(tmp_path / "w")]) == 0
    assert (tmp_path / "w" / "shape.obj").exists()


def test_cli_bad_part_spec(tmp_path):
    (tmp_path / "a.ckpt").write_bytes(b"x")
    (tmp_path / "j.ckpt").write_bytes(b"x")
    code = main(["assemble", "--data", str(tmp_path), "--align", str(tmp_path / "a.ckpt"), "--joint",
                 str(tmp_path / "j.ckpt"), "--part", "noseparator", "--out", str(tmp_path / "o.obj")])
    assert code == 1


def test_box_fixture_is_closed():
    assert box((0, 0, 0), (1, 1, 1), divisions=2).boundary_edge_count() == 0
