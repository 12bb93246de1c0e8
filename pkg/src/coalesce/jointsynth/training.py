"""Encoder pretraining and the coarse-to-fine joint decoder schedule."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from ..autodiff import MLP, Adam, Module, Tensor, gather_rows, no_grad, reduce_mean, reduce_sum, square
from ..encoders import JointEncoder
from .decoder import ImplicitDecoder, LossConfig, loss_match, loss_mse
from .volume import JointBoundarySet, TrainingSampleSet

log = logging.getLogger(__name__)


@dataclass
class JointSample:
    """One training shape for the joint network, in assembled coordinates."""

    clouds: dict[str, np.ndarray | None]  # eroded part clouds
    near: dict[str, np.ndarray | None]  # the part points nearest the joint
    samples: TrainingSampleSet
    boundary: JointBoundarySet
    name: str = ""


def pretrain_lr(epoch: int, base: float = 1e-3, every: int = 20, floor: float = 1.25e-4) -> float:
    """Halve every ``every`` epochs, never below ``floor``."""
    return max(base * 0.5 ** (epoch // every), floor)


def sample_count(epoch: int, start: int = 2048, every: int = 20, cap: int = 32768) -> int:
    """Occupancy samples per shape at a stage-2 epoch: doubling, capped."""
    return int(min(start * 2 ** (epoch // every), cap))


def chamfer_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean squared nearest-neighbour distance, both directions, summed.

    Nearest neighbours are found on current values and then held fixed.
    """
    tgt = np.asarray(target, dtype=np.float64)
    p = pred.data.astype(np.float64)
    _, to_t = cKDTree(tgt).query(p)
    _, to_p = cKDTree(p).query(tgt)
    t = Tensor(tgt, dtype=pred.dtype)
    a = reduce_mean(reduce_sum(square(pred - gather_rows(t, to_t)), axis=1))
    b = reduce_mean(reduce_sum(square(gather_rows(pred, to_p) - t), axis=1))
    return a + b


class PointSetDecoder(Module):
    """Fully connected code -> (n_points, 3) decoder used only for pretraining."""

    def __init__(self, code_size: int, rng: np.random.Generator, n_points: int = 512, hidden=(256, 256)):
        self.n_points = n_points
        self.mlp = MLP([code_size, *hidden, 3 * n_points], rng, activation="leaky_relu")

    def __call__(self, code: Tensor) -> Tensor:
        return self.mlp(code.reshape(1, -1)).reshape(self.n_points, 3)


class PretrainHeads(Module):
    def __init__(self, encoder: JointEncoder, rng: np.random.Generator, n_points: int = 512):
        labels = encoder.part_labels
        size_b = encoder.enc_B[labels[0]].code_size
        size_c = encoder.enc_C[labels[0]].code_size
        self.dec_B = {p: PointSetDecoder(size_b, rng, n_points) for p in labels}
        self.dec_C = {p: PointSetDecoder(size_c, rng, n_points) for p in labels}


def pretrain_encoders(encoder: JointEncoder, dataset: Sequence[JointSample], epochs: int = 100, base_lr: float = 1e-3,
                      halve_every: int = 20, floor: float = 1.25e-4, n_points: int = 512, seed: int = 0) -> list[float]:
    """Train both branches of every slot as auto-encoders under chamfer loss."""
    if not dataset:
        raise ValueError("empty pretraining dataset")
    rng = np.random.default_rng(seed)
    heads = PretrainHeads(encoder, rng, n_points)
    opt = Adam(encoder.parameters() + heads.parameters(), lr=base_lr)
    history = []
    for epoch in range(epochs):
        opt.lr = pretrain_lr(epoch, base_lr, halve_every, floor)
        total, count = 0.0, 0
        for j in rng.permutation(len(dataset)):
            sample = dataset[j]
            opt.zero_grad()
            loss = None
            for p in encoder.part_labels:
                cloud, near = sample.clouds.get(p), sample.near.get(p)
                if cloud is None:
                    continue
                term = chamfer_loss(heads.dec_B[p](encoder.enc_B[p](cloud)), cloud)
                term = term + chamfer_loss(heads.dec_C[p](encoder.enc_C[p](near)), near)
                loss = term if loss is None else loss + term
            if loss is None:
                continue
            loss.backward()
            opt.step()
            total += loss.item()
            count += 1
        history.append(total / max(count, 1))
        log.info("pretrain epoch %d lr %.2e loss %.6f", epoch, opt.lr, history[-1])
    return history


@dataclass
class JointTrainConfig:
    stage2_epochs: int = 80
    stage3_epochs: int = 80
    lr: float = 1e-4
    start_samples: int = 2048
    double_every: int = 20
    sample_cap: int = 32768
    point_batch: int = 2048
    duplication: int = 1
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    # optional stage-2 warm start: begin at stage2_lr, halve every
    # stage2_halve_every epochs, never go below lr (0 disables)
    stage2_lr: float = 0.0
    stage2_halve_every: int = 0
    # standardize codes over the training shapes before stage 2 and scale
    # them by this factor (0 leaves the decoder's code map as it is)
    code_kappa: float = 0.0

    def stage2_rate(self, epoch: int) -> float:
        if self.stage2_lr <= 0 or self.stage2_halve_every <= 0:
            return self.lr
        return max(self.stage2_lr * 0.5 ** (epoch // self.stage2_halve_every), self.lr)


def _epoch_order(n: int, duplication: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.repeat(np.arange(n), max(1, duplication)))


def _subset(sample: JointSample, count: int, rng: np.random.Generator) -> np.ndarray:
    n = len(sample.samples)
    if count >= n:
        return rng.permutation(n)
    return rng.choice(n, size=count, replace=False)


def train_joint(encoder: JointEncoder, decoder: ImplicitDecoder, dataset: Sequence[JointSample],
                cfg: JointTrainConfig | None = None) -> dict[str, list[float]]:
    """Stage 2: decoder alone on L_mse. Stage 3: everything on L_mse + alpha L_match.

    One shape per step. Stage 2 splits each shape's samples into point
    batches; stage 3 takes one step per shape with all its samples.
    """
    cfg = cfg or JointTrainConfig()
    if not dataset:
        raise ValueError("empty joint training dataset")
    rng = np.random.default_rng(cfg.seed)
    history: dict[str, list[float]] = {"stage2": [], "stage3": []}

    with no_grad():
        codes = [encoder.encode_all(s.clouds, s.near).data.copy() for s in dataset]
    if cfg.code_kappa > 0 and cfg.stage2_epochs > 0 and len(dataset) > 1:
        decoder.set_code_statistics(np.stack(codes), cfg.code_kappa)
    opt = Adam(decoder.parameters(), lr=cfg.lr)
    for epoch in range(cfg.stage2_epochs):
        count = sample_count(epoch, cfg.start_samples, cfg.double_every, cfg.sample_cap)
        opt.lr = cfg.stage2_rate(epoch)
        total, steps = 0.0, 0
        for j in _epoch_order(len(dataset), cfg.duplication, rng):
            s = dataset[j]
            idx = _subset(s, count, rng)
            for lo in range(0, len(idx), cfg.point_batch):
                b = idx[lo:lo + cfg.point_batch]
                opt.zero_grad()
                loss = loss_mse(decoder(codes[j], s.samples.points[b]), s.samples.labels[b])
                loss.backward()
                opt.step()
                total += loss.item()
                steps += 1
        history["stage2"].append(total / max(steps, 1))
        log.info("stage2 epoch %d samples %d lr %.2e mse %.6f", epoch, count, opt.lr, history["stage2"][-1])

    params = encoder.parameters() + decoder.parameters()
    opt = Adam(params, lr=cfg.lr)
    count = sample_count(cfg.stage2_epochs, cfg.start_samples, cfg.double_every, cfg.sample_cap)
    for epoch in range(cfg.stage3_epochs):
        total = 0.0
        order = _epoch_order(len(dataset), cfg.duplication, rng)
        for j in order:
            s = dataset[j]
            idx = _subset(s, count, rng)
            opt.zero_grad()
            code = encoder.encode_all(s.clouds, s.near)
            loss = loss_mse(decoder(code, s.samples.points[idx]), s.samples.labels[idx])
            if cfg.loss.alpha > 0 and len(s.boundary):
                match = loss_match(lambda p: decoder(code, p), s.boundary.points, s.boundary.normals, cfg.loss.lam)
                loss = loss + match * cfg.loss.alpha
            loss.backward()
            opt.step()
            total += loss.item()
        history["stage3"].append(total / len(order))
        log.info("stage3 epoch %d loss %.6f", epoch, history["stage3"][-1])
    return history
