import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coalesce.autodiff import Tensor, precision, sigmoid
from coalesce.jointsynth import (
    ImplicitDecoder,
    JointVolumeError,
    LossConfig,
    build_joint_volume,
    loss_match,
    loss_mse,
    objective_h,
    pretrain_lr,
    sample_count,
    sample_training_points,
    split_counts,
)
from coalesce.meshkit import GridSpec, OccupancyGrid, voxel_occupancy
from coalesce.meshkit.primitives import box, icosphere, revolve
from oracles import ray_parity_inside


def linear_field(w, b):
    def field(p):
        return sigmoid(p @ Tensor(w.reshape(3, 1), dtype=np.float64) + b).reshape(len(p))
    return field


def np_field(w, b, p):
    return 1.0 / (1.0 + np.exp(-(p @ w + b)))


def test_losses_match_direct_recomputation():
    with precision(np.float64):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(1, 60))
            f = rng.random(n)
            labels = (rng.random(n) > 0.5).astype(float)
            assert abs(loss_mse(Tensor(f), labels).item() - np.mean((f - labels) ** 2)) <= 1e-9

            w, b = rng.normal(size=3), float(rng.normal())
            pts = rng.normal(size=(n, 3))
            nrm = rng.normal(size=(n, 3))
            nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
            lam = float(rng.uniform(0.001, 0.05))
            out = np_field(w, b, pts + lam * nrm)
            inn = np_field(w, b, pts - lam * nrm)
            want_match = (np.sum(out**2) + np.sum((inn - 1) ** 2)) / (2 * n)
            want_h = (np.sum(np.abs(out)) + np.sum(np.abs(inn - 1))) / (2 * n)
            assert abs(loss_match(linear_field(w, b), pts, nrm, lam).item() - want_match) <= 1e-9
            assert abs(objective_h(linear_field(w, b), pts, nrm, lam).item() - want_h) <= 1e-9


def test_constant_half_field_values():
    half = lambda p: p[:, 0] * 0.0 + 0.5  # noqa: E731
    rng = np.random.default_rng(3)
    pts, nrm = rng.normal(size=(17, 3)), rng.normal(size=(17, 3))
    with precision(np.float64):
        assert loss_match(half, pts, nrm).item() == 0.25
        assert objective_h(half, pts, nrm).item() == 0.5


def test_loss_errors():
    with pytest.raises(ValueError):
        loss_mse(Tensor(np.zeros(0)), np.zeros(0))
    with pytest.raises(ValueError):
        loss_match(lambda p: p[:, 0], np.zeros((0, 3)), np.zeros((0, 3)))
    with pytest.raises(ValueError):
        LossConfig(alpha=-1.0)


@pytest.mark.parametrize("n,want", [(1000, (800, 100, 100)), (1001, (800, 100, 101)), (16384, (13107, 1638, 1639)),
                                    (7, (5, 0, 2)), (0, (0, 0, 0))])
def test_split_counts(n, want):
    assert split_counts(n) == want


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6))
def test_split_counts_floor_floor_remainder(n):
    a, b, c = split_counts(n)
    assert (a, b) == (int(np.floor(0.8 * n + 1e-9)), int(np.floor(0.1 * n + 1e-9)))
    assert a + b + c == n and c >= 0


def test_schedules():
    assert [sample_count(e) for e in (0, 19, 20, 40, 60, 79, 200)] == [2048, 2048, 4096, 8192, 16384, 16384, 32768]
    assert [pretrain_lr(e) for e in (0, 20, 40, 60, 80, 500)] == [1e-3, 5e-4, 2.5e-4, 1.25e-4, 1.25e-4, 1.25e-4]


def _cup():
    return revolve([(0.0, -0.3), (0.3, -0.3), (0.3, 0.3), (0.25, 0.3), (0.25, -0.25), (0.0, -0.25)], n_around=40)


@pytest.mark.parametrize("name", ["box", "sphere", "cup"])
def test_sample_labels_agree_with_ray_parity(name):
    mesh = {"box": box((-0.3, -0.2, -0.25), (0.3, 0.2, 0.25), divisions=3),
            "sphere": icosphere(3, 0.35),
            "cup": _cup()}[name]
    spec = GridSpec.cube(32, 0.55)
    shape_grid = voxel_occupancy(mesh, spec=spec)
    # a slab through the middle stands in for the joint region
    region = np.zeros(spec.resolution, dtype=bool)
    region[:, 14:18, :] = True
    joint = OccupancyGrid(spec, region & shape_grid.occupancy)
    joint = build_joint_volume(shape_grid, OccupancyGrid(spec, shape_grid.occupancy & ~joint.occupancy), steps=2)
    s = sample_training_points([mesh], shape_grid, joint, n=1000, seed=5)
    assert s.counts == (800, 100, 100) and len(s) == 1000
    assert np.all(s.labels[800:] == 0)
    audit = np.random.default_rng(0).choice(len(s), 100, replace=False)
    truth = ray_parity_inside(mesh, s.points[audit])
    assert np.sum(truth != (s.labels[audit] > 0.5)) == 0
    # the joint samples really are in joint cells
    cells = spec.index_of(s.points[:800])
    assert joint.occupancy[tuple(cells.T)].all()


def test_empty_joint_volume_raises():
    spec = GridSpec.cube(8)
    g = OccupancyGrid(spec, np.zeros(spec.resolution, dtype=bool))
    with pytest.raises(JointVolumeError):
        build_joint_volume(g, g)


def test_decoder_output_range_and_code_check(rng):
    dec = ImplicitDecoder(8, rng, hidden=(16, 8, 8))
    out = dec.evaluate(rng.normal(size=8), rng.normal(size=(50, 3)))
    assert out.shape == (50,) and np.all((out > 0) & (out < 1))
    with pytest.raises(ValueError):
        dec(np.zeros(7), np.zeros((2, 3)))


def test_code_statistics_are_an_affine_input_map(rng):
    dec = ImplicitDecoder(6, rng, hidden=(16, 8, 8))
    codes = rng.normal(size=(5, 6)) * 0.01 + 0.3
    pts = rng.normal(size=(7, 3))
    dec.set_code_statistics(codes, kappa=0.5, floor=0.0)
    z = (codes[2] - codes.mean(0)) / codes.std(0) * 0.5
    twin = ImplicitDecoder(6, np.random.default_rng(0), hidden=(16, 8, 8))
    twin.load_state_dict({k: v for k, v in dec.state_dict().items()
                          if not k.startswith("code_")} | {"code_shift": np.zeros(6), "code_scale": np.ones(6)})
    np.testing.assert_allclose(dec.evaluate(codes[2], pts), twin.evaluate(z, pts), rtol=1e-5, atol=1e-6)
    with pytest.raises(ValueError):
        dec.set_code_statistics(np.ones((3, 6)), kappa=1.0, floor=0.0)


def test_code_statistics_travel_with_the_state(rng):
    dec = ImplicitDecoder(4, rng, hidden=(8, 8, 4))
    dec.set_code_statistics(rng.normal(size=(3, 4)), kappa=0.03)
    other = ImplicitDecoder(4, np.random.default_rng(9), hidden=(8, 8, 4))
    other.load_state_dict(dec.state_dict())
    np.testing.assert_array_equal(other.code_scale, dec.code_scale)
    code, pts = rng.normal(size=4), rng.normal(size=(5, 3))
    np.testing.assert_array_equal(other.evaluate(code, pts), dec.evaluate(code, pts))
    assert len(dec.parameters()) == len(other.parameters())
    assert all(p.requires_grad for p in dec.parameters())
