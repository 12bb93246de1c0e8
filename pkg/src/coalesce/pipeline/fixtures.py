"""Analytic fields and misaligned part sets for exercising test-time refinement.

The fields stand in for a trained decoder: they ignore the codes, have no
trainable weights (so refinement only moves the transforms), and are built
from autodiff ops so that h can be differentiated through them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Module, Tensor, no_grad, reduce_sum, sigmoid, sqrt, square
from ..meshkit import PointCloud, SimilarityTransform, TriMesh, distance_to_segments, points_inside, sample_surface
from ..meshkit.primitives import icosphere, strip
from ..refine import RefinePart


class AnalyticField(Module):
    """Occupancy ``sigmoid(-sharpness * sdf(p))`` of a fixed solid."""

    sharpness: float = 300.0

    def sdf(self, p: Tensor) -> Tensor:
        raise NotImplementedError

    def __call__(self, codes, points) -> Tensor:
        p = points if isinstance(points, Tensor) else Tensor(np.asarray(points), dtype=np.float64)
        return sigmoid(self.sdf(p) * (-self.sharpness))

    def evaluate(self, codes, points: np.ndarray, chunk: int = 65536) -> np.ndarray:
        out = np.empty(len(points))
        with no_grad():
            for lo in range(0, len(points), chunk):
                out[lo:lo + chunk] = self(codes, points[lo:lo + chunk]).data
        return out


class HalfSpaceField(AnalyticField):
    """Inside where n . p < offset."""

    def __init__(self, normal=(0.0, 0.0, 1.0), offset: float = 0.0, sharpness: float = 400.0):
        n = np.asarray(normal, dtype=np.float64)
        self.normal = n / np.linalg.norm(n)
        self.offset = float(offset)
        self.sharpness = sharpness

    def sdf(self, p: Tensor) -> Tensor:
        return reduce_sum(p * Tensor(self.normal[None], dtype=p.dtype), axis=1) - self.offset


class SphereUnionField(AnalyticField):
    """Union of balls: one minus the product of the per-ball outside probabilities."""

    def __init__(self, centers, radii, sharpness: float = 300.0):
        self.centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
        self.radii = np.asarray(radii, dtype=np.float64).reshape(-1)
        self.sharpness = sharpness

    def __call__(self, codes, points) -> Tensor:
        p = points if isinstance(points, Tensor) else Tensor(np.asarray(points), dtype=np.float64)
        outside = None
        for c, r in zip(self.centers, self.radii):
            d = sqrt(reduce_sum(square(p - Tensor(c[None], dtype=p.dtype)), axis=1) + 1e-18) - r
            term = sigmoid(d * self.sharpness)  # 1 - occupancy of this ball
            outside = term if outside is None else outside * term
        return outside * (-1.0) + 1.0

    def inside(self, points: np.ndarray) -> np.ndarray:
        d = np.linalg.norm(points[:, None, :] - self.centers[None], axis=-1) - self.radii[None]
        return (d < 0).any(axis=1)


@dataclass
class MisalignedFixture:
    parts: list[RefinePart]
    truth: dict[str, SimilarityTransform]
    start: dict[str, SimilarityTransform]
    offsets: dict[str, np.ndarray]
    field: AnalyticField

    def translation_error(self, xfs: dict[str, SimilarityTransform]) -> float:
        """Mean distance between current and true translations."""
        return float(np.mean([np.linalg.norm(xfs[l].translation - self.truth[l].translation) for l in self.truth]))


def _circle_segments(center, axis, radius: float, n: int = 96) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    u = np.cross(axis, [1.0, 0.0, 0.0] if abs(axis[0]) < 0.9 else [0.0, 1.0, 0.0])
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    th = np.linspace(0, 2 * np.pi, n, endpoint=False)
    pts = center + radius * (np.cos(th)[:, None] * u + np.sin(th)[:, None] * v)
    return np.stack([pts, np.roll(pts, -1, axis=0)], axis=1)


def sphere_chain(seed: int, n_parts: int = 3, points: int = 1024, max_offset: float = 0.05, tau: float = 0.05) -> MisalignedFixture:
    """Overlapping balls in a row; each ball is a part, displaced by a known offset.

    Part clouds live in each ball's own frame (centered, unit scale); the
    true transform is a pure translation to the ball's center.
    """
    rng = np.random.default_rng(seed)
    radii = rng.uniform(0.12, 0.18, size=n_parts)
    centers = [np.zeros(3)]
    for i in range(1, n_parts):
        direction = rng.normal(size=3)
        direction[1] = abs(direction[1]) + 1.0
        direction /= np.linalg.norm(direction)
        gap = (radii[i - 1] + radii[i]) * rng.uniform(0.6, 0.75)
        centers.append(centers[-1] + gap * direction)
    centers = np.array(centers)
    centers -= centers.mean(axis=0)
    field = SphereUnionField(centers, radii)
    parts, truth, start, offsets = [], {}, {}, {}
    for i in range(n_parts):
        label = f"ball{i}"
        mesh = icosphere(4, radii[i])
        cloud = sample_surface(mesh, 8 * points, "uniform", rng)
        # exact unit normals of the ball
        cloud = PointCloud(cloud.points, cloud.points / np.linalg.norm(cloud.points, axis=1, keepdims=True))
        segs = []
        for j in range(n_parts):
            if j == i or abs(j - i) != 1:
                continue
            d = centers[j] - centers[i]
            dist = np.linalg.norm(d)
            a = (dist ** 2 + radii[i] ** 2 - radii[j] ** 2) / (2 * dist)
            segs.append(_circle_segments(d / dist * a, d, np.sqrt(max(radii[i] ** 2 - a ** 2, 0.0))))
        seg = np.concatenate(segs)
        world = cloud.points + centers[i]
        others = [k for k in range(n_parts) if k != i]
        dist_in = np.linalg.norm(world[:, None] - centers[others][None], axis=-1) < radii[others][None]
        keep = ~dist_in.any(axis=1) & (distance_to_segments(cloud.points, seg) >= tau)
        pool = np.flatnonzero(keep)
        idx = rng.choice(pool, size=points, replace=len(pool) < points)
        parts.append(RefinePart(label, cloud.subset(idx), seg))
        offset = rng.normal(size=3)
        offset *= rng.uniform(0.5, 1.0) * max_offset / np.linalg.norm(offset)
        truth[label] = SimilarityTransform(1.0, centers[i])
        start[label] = SimilarityTransform(1.0, centers[i] + offset)
        offsets[label] = offset
    return MisalignedFixture(parts, truth, start, offsets, field)


def misaligned_set(count: int = 10, seed: int = 0, max_offset: float = 0.05) -> list[MisalignedFixture]:
    seeds = np.random.SeedSequence(seed).generate_state(count)
    return [sphere_chain(int(s), n_parts=2 + int(s % 2), max_offset=max_offset) for s in seeds]


def halfspace_fixture(offset: float = 0.05, points: int = 512, sharpness: float = 400.0) -> MisalignedFixture:
    """A flat patch whose true place is on the plane z = 0, started ``offset`` above it.

    The field only depends on z, so only t_z feels a gradient and the
    translation error is |t_z|.
    """
    patch = strip(0.3, 0.3, 12, 12)
    v = patch.vertices - patch.vertices.mean(axis=0)
    patch = TriMesh(v, patch.triangles)
    cloud = sample_surface(patch, points, "uniform", 0)
    cloud = PointCloud(cloud.points, np.tile([0.0, 0.0, 1.0], (points, 1)))
    rim = np.array([[-0.2, -0.2, 0], [0.2, -0.2, 0], [0.2, 0.2, 0], [-0.2, 0.2, 0]])
    seg = np.stack([rim, np.roll(rim, -1, axis=0)], axis=1)
    part = RefinePart("patch", cloud, seg)
    truth = {"patch": SimilarityTransform(1.0, (0.0, 0.0, 0.0))}
    start = {"patch": SimilarityTransform(1.0, (0.0, 0.0, offset))}
    return MisalignedFixture([part], truth, start, {"patch": np.array([0.0, 0.0, offset])},
                             HalfSpaceField((0, 0, 1), 0.0, sharpness))


class OccupancyOracle:
    """A "perfect decoder": the exact inside test of a set of closed meshes.

    Only ``evaluate`` is provided (no gradients), which is all field
    extraction needs when refinement is off.
    """

    def __init__(self, meshes):
        self.meshes = list(meshes)

    def evaluate(self, codes, points: np.ndarray, chunk: int = 65536) -> np.ndarray:
        return points_inside(self.meshes, np.asarray(points)).astype(np.float64)

    def parameters(self) -> list:
        return []
