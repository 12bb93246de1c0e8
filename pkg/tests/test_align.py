import numpy as np
import pytest

from coalesce.align import AlignmentModel, apply_transform, emd_loss, optimal_assignment, predict_transforms
from coalesce.autodiff import Tensor, precision
from coalesce.encoders import shrink, ENCODER_A
from coalesce.meshkit import PointCloud, SimilarityTransform
from oracles import brute_force_assignment, hungarian


def _cost(a, b):
    return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)


def test_hungarian_oracle_agrees_with_enumeration():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 7))
        c = rng.random((n, n))
        mine = hungarian(c)
        brute = brute_force_assignment(c)
        assert abs(c[np.arange(n), mine].sum() - c[np.arange(n), brute].sum()) <= 1e-12


def test_emd_equals_exact_assignment_oracle():
    with precision(np.float64):
        for seed in range(40):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(1, 33))
            a, b = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
            c = _cost(a, b)
            want = c[np.arange(n), hungarian(c)].mean()
            got = emd_loss(Tensor(a), b).item()
            assert abs(got - want) <= 1e-9
            perm = optimal_assignment(a, b)
            assert sorted(perm) == list(range(n))


def test_emd_translation_is_exactly_the_offset_length():
    # dyadic coordinates keep every subtraction exact
    rng = np.random.default_rng(7)
    a = rng.integers(-64, 64, size=(16, 3)) / 8.0
    d = np.array([0.375, -0.5, 0.25])
    with precision(np.float64):
        got = emd_loss(Tensor(a), a + d).item()
    assert got == np.linalg.norm(d)


def test_emd_gradient_moves_points_toward_matches():
    with precision(np.float64):
        a = Tensor(np.array([[0.0, 0, 0], [1.0, 0, 0]]), requires_grad=True)
        emd_loss(a, np.array([[1.5, 0, 0], [0.0, 0.5, 0]])).backward()
    np.testing.assert_allclose(a.grad, [[0, -0.5, 0], [-0.5, 0, 0]])


def test_emd_rejects_unequal_sets():
    with pytest.raises(ValueError):
        emd_loss(Tensor(np.zeros((3, 3))), np.zeros((4, 3)))


def _small_model(labels=("a", "b", "c")):
    return AlignmentModel(labels, np.random.default_rng(0), shrink(ENCODER_A, 16, 8))


def test_untrained_model_predicts_identity_and_absent_slots_stay_identity():
    model = _small_model()
    rng = np.random.default_rng(1)
    clouds = {"a": rng.normal(size=(64, 3)) * 0.3, "b": None, "c": rng.normal(size=(64, 3)) * 0.3}
    xf = predict_transforms(model, clouds)
    for p in "abc":
        assert xf[p].s == 1.0 and np.all(xf[p].translation == 0)
    model.regressor.fc3.weight.data[:] = 0.01
    model.regressor.fc3.bias.data[:] = 0.05
    xf = predict_transforms(model, clouds)
    assert xf["b"].s == 1.0 and np.all(xf["b"].translation == 0)
    assert xf["a"].s != 1.0


def test_apply_transform_keeps_normals():
    c = PointCloud(np.eye(3), np.eye(3), np.arange(3))
    out = apply_transform(c, SimilarityTransform(2.0, np.array([1.0, 0, 0])))
    np.testing.assert_allclose(out.points, 2 * np.eye(3) + [1, 0, 0])
    np.testing.assert_allclose(out.normals, np.eye(3))
