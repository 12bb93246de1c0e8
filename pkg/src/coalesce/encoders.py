"""PointNet++-style point-cloud encoders built from set-abstraction layers.

Three configurations are provided: ``A`` encodes a whole part for the
alignment network, ``B`` (whole part) and ``C`` (the points nearest the joint,
smaller radii) form the two-branch encoder of the joint decoder.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .autodiff import MLP, Module, Tensor, concat, gather_rows, max_over_axis, no_grad
from .meshkit.erosion import distance_to_segments

INF = math.inf


@dataclass(frozen=True)
class SAConfig:
    M: int  # number of patches (FPS centers)
    r: float  # ball radius; inf marks the global layer
    N: float  # samples per patch; inf for the global layer
    widths: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.M < 1 or not self.N >= 1 or not self.widths:
            raise ValueError(f"invalid set-abstraction config {self}")
        if not (self.r > 0):
            raise ValueError(f"ball radius must be positive or inf, got {self.r}")

    @property
    def is_global(self) -> bool:
        return math.isinf(self.r)


ENCODER_A = (
    SAConfig(256, 0.2, 128, (64, 64, 128)),
    SAConfig(128, 0.4, 128, (128, 128, 128)),
    SAConfig(1, INF, INF, (128, 128, 128)),
)
ENCODER_B = (
    SAConfig(256, 0.1, 128, (64, 64, 128)),
    SAConfig(128, 0.2, 128, (128, 128, 128)),
    SAConfig(1, INF, INF, (128, 128, 128)),
)
ENCODER_C = (
    SAConfig(256, 0.05, 128, (32, 32, 64)),
    SAConfig(128, 0.1, 128, (64, 64, 128)),
    SAConfig(1, INF, INF, (128, 128, 128)),
)


def shrink(configs: Sequence[SAConfig], max_patches: int, max_samples: int) -> tuple[SAConfig, ...]:
    """Cap patch and sample counts for cheap runs; radii and widths stay as given."""
    out = []
    for c in configs:
        if c.is_global:
            out.append(c)
        else:
            out.append(replace(c, M=min(c.M, max_patches), N=min(c.N, max_samples)))
    return tuple(out)


def farthest_point_sample(points: np.ndarray, M: int) -> np.ndarray:
    """Greedy max-min selection starting at index 0.

    Ties go to the lowest index. When M exceeds the point count the
    selection order repeats cyclically.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n == 0:
        raise ValueError("farthest point sampling on an empty cloud")
    k = min(M, n)
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = 0
    dist = np.sum((pts - pts[0]) ** 2, axis=1)
    for i in range(1, k):
        nxt = int(np.argmax(dist))
        chosen[i] = nxt
        dist = np.minimum(dist, np.sum((pts - pts[nxt]) ** 2, axis=1))
    if M > n:
        chosen = chosen[np.arange(M) % n]
    return chosen


def ball_query(points: np.ndarray, centers: np.ndarray, r: float, N: int) -> np.ndarray:
    """First N point indices (in index order) within distance r of each center.

    Short groups are padded with their first index; an empty ball falls back
    to the point nearest the center.
    """
    pts = np.asarray(points, dtype=np.float64)
    ctr = np.asarray(centers, dtype=np.float64)
    d2 = np.sum(ctr**2, 1)[:, None] + np.sum(pts**2, 1)[None, :] - 2.0 * ctr @ pts.T
    inside = d2 <= r * r + 1e-12
    rank = np.cumsum(inside, axis=1) - 1
    out = np.full((len(ctr), N), -1, dtype=np.int64)
    rows, cols = np.nonzero(inside & (rank < N))
    out[rows, rank[rows, cols]] = cols
    first = out[:, 0]
    empty = first < 0
    if empty.any():
        first = first.copy()
        first[empty] = np.argmin(d2[empty], axis=1)
        out[empty, 0] = first[empty]
    return np.where(out < 0, first[:, None], out)


def canonical_order(points: np.ndarray) -> np.ndarray:
    """Lexicographic (x, then y, then z) ordering of a cloud."""
    return np.lexsort((points[:, 2], points[:, 1], points[:, 0]))


class SetAbstraction(Module):
    """Group, localize, shared MLP, max-pool.

    Every MLP layer, the last included, is followed by leaky-relu(0.02).
    """

    def __init__(self, cfg: SAConfig, in_features: int, rng: np.random.Generator):
        self.cfg = cfg
        self.in_features = in_features
        self.mlp = MLP([3 + in_features, *cfg.widths], rng, activation="leaky_relu", final_activation="leaky_relu")

    @property
    def out_features(self) -> int:
        return self.cfg.widths[-1]

    def __call__(self, xyz: np.ndarray, feats: Tensor | None) -> tuple[np.ndarray, Tensor]:
        """``xyz`` is (B, n, 3) data; ``feats`` is (B, n, C) or None."""
        B, n, _ = xyz.shape
        if feats is not None and feats.shape[:2] != (B, n):
            raise ValueError(f"feature shape {feats.shape} does not match points {xyz.shape}")
        width = 0 if feats is None else feats.shape[-1]
        if width != self.in_features:
            raise ValueError(f"set abstraction expects {self.in_features} input features, got {width}")
        dtype = feats.dtype if feats is not None else None
        if self.cfg.is_global:
            # one patch centered at the origin covering every point
            local = Tensor(xyz, dtype=dtype)
            grouped = local if feats is None else concat([local, feats], axis=-1)
            pooled = max_over_axis(self.mlp(grouped), axis=1)
            return np.zeros((B, 1, 3)), pooled.reshape(B, 1, self.out_features)
        M, N = self.cfg.M, int(self.cfg.N)
        centers = np.empty((B, M, 3))
        index = np.empty((B, M, N), dtype=np.int64)
        for b in range(B):
            c = farthest_point_sample(xyz[b], M)
            centers[b] = xyz[b, c]
            index[b] = ball_query(xyz[b], centers[b], self.cfg.r, N) + b * n
        local = xyz.reshape(B * n, 3)[index] - centers[:, :, None, :]
        grouped = Tensor(local, dtype=dtype)
        if feats is not None:
            grouped = concat([grouped, gather_rows(feats.reshape(B * n, width), index)], axis=-1)
        return centers, max_over_axis(self.mlp(grouped), axis=2)


class PointNetEncoder(Module):
    def __init__(self, configs: Sequence[SAConfig], rng: np.random.Generator):
        self.configs = tuple(configs)
        if not self.configs[-1].is_global:
            raise ValueError("the last set-abstraction layer must be global")
        layers, width = [], 0
        for cfg in self.configs:
            layers.append(SetAbstraction(cfg, width, rng))
            width = cfg.widths[-1]
        self.layers = layers

    @property
    def code_size(self) -> int:
        return self.configs[-1].widths[-1]

    def __call__(self, xyz) -> Tensor:
        """(B, n, 3) or (n, 3) clouds to (B, code) or (code,) features."""
        xyz = np.asarray(xyz, dtype=np.float64)
        single = xyz.ndim == 2
        if single:
            xyz = xyz[None]
        # a canonical point order makes the index-0 FPS seed, and with it the
        # whole code, independent of how the cloud was listed
        xyz = np.stack([c[canonical_order(c)] for c in xyz])
        feats = None
        for layer in self.layers:
            xyz, feats = layer(xyz, feats)
        code = feats.reshape(len(xyz), self.code_size)
        return code.reshape(self.code_size) if single else code


def encode_align(encoder: PointNetEncoder, cloud: np.ndarray | None, expected_points: int | None = None) -> np.ndarray:
    """Alignment code of one part; an absent part gives the zero vector."""
    if cloud is None:
        return np.zeros(encoder.code_size, dtype=np.float32)
    if expected_points is not None and len(cloud) != expected_points:
        raise ValueError(f"expected {expected_points} points, got {len(cloud)}")
    with no_grad():
        return encoder(cloud).data.copy()


def near_boundary_indices(points: np.ndarray, seg_boundary, k: int) -> np.ndarray:
    """Indices of the k points closest to the segmentation boundary (ties by index)."""
    d = distance_to_segments(points, seg_boundary)
    order = np.argsort(d, kind="stable")
    return np.sort(order[: min(k, len(order))])


class JointEncoder(Module):
    """Two branches per part slot: B sees the whole part, C the near-joint points."""

    def __init__(self, part_labels: Sequence[str], rng: np.random.Generator,
                 config_b: Sequence[SAConfig] = ENCODER_B, config_c: Sequence[SAConfig] = ENCODER_C):
        self.part_labels = list(part_labels)
        self.enc_B = {p: PointNetEncoder(config_b, rng) for p in self.part_labels}
        self.enc_C = {p: PointNetEncoder(config_c, rng) for p in self.part_labels}

    @property
    def code_size(self) -> int:
        p = self.part_labels[0]
        return self.enc_B[p].code_size + self.enc_C[p].code_size

    def encode(self, label: str, part_cloud: np.ndarray | None, near_joint: np.ndarray | None) -> Tensor:
        if part_cloud is None:
            return Tensor(np.zeros(self.code_size))
        return concat([self.enc_B[label](part_cloud), self.enc_C[label](near_joint)], axis=-1)

    def encode_all(self, clouds: dict[str, np.ndarray | None], near: dict[str, np.ndarray | None]) -> Tensor:
        """Concatenated code for every slot, in slot order: (N * code_size,)."""
        return concat([self.encode(p, clouds.get(p), near.get(p)) for p in self.part_labels], axis=0)


def encode_joint(encoder: JointEncoder, label: str, part_cloud: np.ndarray | None, near_joint: np.ndarray | None) -> np.ndarray:
    with no_grad():
        return encoder.encode(label, part_cloud, near_joint).data.copy()
