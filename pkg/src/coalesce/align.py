"""Part alignment: regress per-part scale and translation from part codes."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .autodiff import Adam, Linear, Module, Tensor, concat, exp, leaky_relu, no_grad, reduce_mean, reduce_sum, sqrt, square
from .encoders import ENCODER_A, PointNetEncoder, SAConfig
from .meshkit import PointCloud, SimilarityTransform

log = logging.getLogger(__name__)


def apply_transform(cloud: PointCloud, xf: SimilarityTransform) -> PointCloud:
    """p' = s p + t; normals keep their direction under uniform scale."""
    return PointCloud(xf.apply(cloud.points), cloud.normals.copy(), cloud.source_face.copy())


class AlignmentRegressor(Module):
    """128N -> 512 -> 512 -> 4N with the first hidden layer added to the second.

    Output per slot is (log s, tx, ty, tz). The last layer starts at zero so
    an untrained regressor predicts identity transforms.
    """

    def __init__(self, n_parts: int, rng: np.random.Generator, code_size: int = 128, hidden: int = 512,
                 zero_last: bool = True):
        self.n_parts = n_parts
        self.code_size = code_size
        self.fc1 = Linear(code_size * n_parts, hidden, rng)
        self.fc2 = Linear(hidden, hidden, rng)
        self.fc3 = Linear(hidden, 4 * n_parts, rng)
        if zero_last:
            self.fc3.weight.data[:] = 0.0

    def __call__(self, codes: Tensor, mask: np.ndarray) -> tuple[Tensor, Tensor]:
        """``codes`` (B, N*code) and ``mask`` (B, N) -> (log_s (B, N), t (B, N, 3)).

        Slots with mask 0 get exactly log s = 0 and t = 0.
        """
        mask = np.asarray(mask, dtype=codes.dtype).reshape(-1, self.n_parts)
        h1 = leaky_relu(self.fc1(codes))
        h2 = leaky_relu(self.fc2(h1))
        out = self.fc3(h2 + h1).reshape(len(mask), self.n_parts, 4)
        out = out * mask[:, :, None]
        log_s = out[:, :, 0]
        t = out[:, :, 1:]
        return log_s, t


class AlignmentModel(Module):
    """Shared encoder A plus the regressor."""

    def __init__(self, part_labels: Sequence[str], rng: np.random.Generator,
                 encoder_config: Sequence[SAConfig] = ENCODER_A):
        self.part_labels = list(part_labels)
        self.enc_A = PointNetEncoder(encoder_config, rng)
        self.regressor = AlignmentRegressor(len(self.part_labels), rng, code_size=self.enc_A.code_size)

    def codes(self, clouds: dict[str, np.ndarray | None]) -> tuple[Tensor, np.ndarray]:
        present = [p for p in self.part_labels if clouds.get(p) is not None]
        mask = np.array([clouds.get(p) is not None for p in self.part_labels], dtype=np.float64)
        if not present:
            return Tensor(np.zeros(self.enc_A.code_size * len(self.part_labels))), mask
        sizes = {len(clouds[p]) for p in present}
        if len(sizes) == 1:
            enc = self.enc_A(np.stack([clouds[p] for p in present]))
            rows = {p: enc[i] for i, p in enumerate(present)}
        else:
            rows = {p: self.enc_A(clouds[p]) for p in present}
        zero = Tensor(np.zeros(self.enc_A.code_size))
        return concat([rows.get(p, zero) for p in self.part_labels], axis=0), mask

    def forward(self, clouds: dict[str, np.ndarray | None]) -> tuple[Tensor, Tensor, np.ndarray]:
        code, mask = self.codes(clouds)
        log_s, t = self.regressor(code.reshape(1, -1), mask[None])
        return log_s.reshape(-1), t.reshape(-1, 3), mask

    def predict(self, clouds: dict[str, np.ndarray | None]) -> dict[str, SimilarityTransform]:
        return predict_transforms(self, clouds)


def predict_transforms(model: AlignmentModel, clouds: dict[str, np.ndarray | None]) -> dict[str, SimilarityTransform]:
    """One transform per slot; absent slots get the identity."""
    with no_grad():
        log_s, t, mask = model.forward(clouds)
    out = {}
    for i, p in enumerate(model.part_labels):
        if mask[i]:
            out[p] = SimilarityTransform(float(np.exp(log_s.data[i])), t.data[i].astype(np.float64))
        else:
            out[p] = SimilarityTransform.identity()
    return out


def optimal_assignment(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Permutation sigma minimizing sum_i |a_i - b_sigma(i)|."""
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(len(a), dtype=np.int64)
    perm[rows] = cols
    return perm


def emd_loss(pred, target) -> Tensor:
    """Mean Euclidean cost of the optimal one-to-one matching.

    The assignment is solved exactly on the current values and then held
    fixed, so gradients flow only through the matched point positions.
    """
    pred = pred if isinstance(pred, Tensor) else Tensor(pred)
    tgt = np.asarray(target.data if isinstance(target, Tensor) else target)
    if pred.shape != tgt.shape:
        raise ValueError(f"emd_loss needs equal cardinality, got {pred.shape} and {tgt.shape}")
    if len(tgt) == 0:
        raise ValueError("emd_loss on empty sets")
    perm = optimal_assignment(pred.data.astype(np.float64), tgt.astype(np.float64))
    diff = pred - Tensor(tgt[perm], dtype=pred.dtype)
    return reduce_mean(sqrt(reduce_sum(square(diff), axis=1)))


@dataclass
class AlignSample:
    """One training shape: normalized eroded part clouds and their true placement."""

    clouds: dict[str, np.ndarray | None]
    truth: dict[str, SimilarityTransform]
    emd_index: dict[str, np.ndarray] = field(default_factory=dict)  # per-part rows used by the loss


def emd_subsample(sample: AlignSample, part_labels: Sequence[str], n: int, seed: int) -> dict[str, np.ndarray]:
    """Fixed subset of the union of present parts, split back per part."""
    present = [p for p in part_labels if sample.clouds.get(p) is not None]
    owners = np.concatenate([np.full(len(sample.clouds[p]), i) for i, p in enumerate(present)])
    local = np.concatenate([np.arange(len(sample.clouds[p])) for p in present])
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(len(owners), size=min(n, len(owners)), replace=False))
    return {p: local[pick][owners[pick] == i] for i, p in enumerate(present)}


def assembly_points(model: AlignmentModel, sample: AlignSample, log_s: Tensor, t: Tensor) -> tuple[Tensor, np.ndarray]:
    """Predicted and true positions of the loss subsample."""
    pred, true = [], []
    for i, p in enumerate(model.part_labels):
        rows = sample.emd_index.get(p)
        if rows is None or len(rows) == 0:
            continue
        pts = sample.clouds[p][rows]
        s = exp(log_s[i])
        pred.append(Tensor(pts) * s + t[i].reshape(1, 3))
        true.append(sample.truth[p].apply(pts))
    return concat(pred, axis=0), np.concatenate(true)


def alignment_loss(model: AlignmentModel, sample: AlignSample) -> Tensor:
    log_s, t, _ = model.forward(sample.clouds)
    pred, true = assembly_points(model, sample, log_s, t)
    return emd_loss(pred, true)


def train_alignment(model: AlignmentModel, dataset: Sequence[AlignSample], epochs: int = 200, lr: float = 1e-3,
                    batch: int = 8, emd_points: int = 256, seed: int = 0, train_encoder: bool = True) -> list[float]:
    """Adam on the mean EMD over shuffled mini-batches; returns per-epoch mean loss."""
    if not dataset:
        raise ValueError("empty alignment dataset")
    for i, s in enumerate(dataset):
        if not s.emd_index:
            s.emd_index = emd_subsample(s, model.part_labels, emd_points, seed + i)
    params = model.parameters() if train_encoder else model.regressor.parameters()
    opt = Adam(params, lr=lr)
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(dataset))
        total = 0.0
        for lo in range(0, len(order), batch):
            idx = order[lo:lo + batch]
            opt.zero_grad()
            model.zero_grad()
            for j in idx:
                loss = alignment_loss(model, dataset[j])
                (loss * (1.0 / len(idx))).backward()
                total += loss.item()
            opt.step()
        history.append(total / len(dataset))
        log.info("align epoch %d loss %.6f", epoch, history[-1])
    return history
