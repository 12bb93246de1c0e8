"""Dataset preparation and the three training commands."""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Sequence

from ..align import train_alignment
from ..jointsynth import JointTrainConfig, LossConfig, pretrain_encoders, train_joint
from .config import PipelineConfig
from .models import JointNetwork, build_alignment, build_joint, checkpoint_digest, load_model, save_model
from .preprocess import PreparedShape, load_prepared, prepare_shape, save_prepared
from .synthetic import load_dataset

log = logging.getLogger(__name__)


def prepare_dataset(dataset_dir, cfg: PipelineConfig, out_dir=None) -> list[PreparedShape]:
    """Preprocess every shape; with ``out_dir`` the results are cached there as .npz files."""
    manifest, shapes = load_dataset(dataset_dir)
    if manifest["category"] != cfg.category.name:
        raise ValueError(f"dataset category {manifest['category']!r} does not match config {cfg.category.name!r}")
    out = []
    for i, shape in enumerate(shapes):
        cached = Path(out_dir) / f"{shape.name}.npz" if out_dir else None
        if cached is not None and cached.exists():
            out.append(load_prepared(cached, shape.name))
            continue
        prep = prepare_shape(shape, cfg, seed=cfg.seed * 100003 + i)
        if cached is not None:
            save_prepared(cached, prep)
        out.append(prep)
        log.info("prepared %s", shape.name)
    if out_dir:
        (Path(out_dir) / "prepared.json").write_text(json.dumps(
            {"dataset": str(dataset_dir), "shapes": [p.name for p in out], "config_hash": cfg.hash()}, indent=1))
    return out


def run_train_align(cfg: PipelineConfig, prepared: Sequence[PreparedShape], out) -> tuple[Path, list[float]]:
    model = build_alignment(cfg)
    ac = cfg.align
    history = train_alignment(model, [p.align_sample() for p in prepared], ac.epochs, ac.lr, ac.batch, ac.emd_points,
                              cfg.seed, ac.train_encoder)
    path = save_model(out, model.state_dict(), "align", cfg, {"history": history})
    return path, history


def run_pretrain(cfg: PipelineConfig, prepared: Sequence[PreparedShape], out) -> tuple[Path, list[float]]:
    enc, dec = build_joint(cfg)
    pc = cfg.pretrain
    history = pretrain_encoders(enc, [p.joint_sample() for p in prepared], pc.epochs, pc.lr, pc.halve_every,
                                pc.lr_floor, pc.n_points, cfg.seed)
    path = save_model(out, enc.state_dict(), "pretrain", cfg, {"history": history})
    return path, history


def joint_train_config(cfg: PipelineConfig) -> JointTrainConfig:
    jc = cfg.joint
    return JointTrainConfig(jc.stage2_epochs, jc.stage3_epochs, jc.lr, jc.start_samples, jc.double_every, jc.sample_cap,
                            jc.point_batch, jc.duplication, LossConfig(jc.alpha, jc.lam), cfg.seed,
                            jc.stage2_lr, jc.stage2_halve_every, jc.code_kappa)


def run_train_joint(cfg: PipelineConfig, prepared: Sequence[PreparedShape], pretrain_ckpt, out) -> tuple[Path, dict]:
    if not Path(pretrain_ckpt).is_file():
        raise FileNotFoundError(f"pretrained encoder checkpoint not found: {pretrain_ckpt}")
    tensors, _ = load_model(pretrain_ckpt, "pretrain")
    enc, dec = build_joint(cfg)
    net = JointNetwork(enc, dec)
    net.load(tensors, require_decoder=False)
    history = train_joint(enc, dec, [p.joint_sample() for p in prepared], joint_train_config(cfg))
    path = save_model(out, net.state(), "joint", cfg, {"history": history, "pretrain_sha256": checkpoint_digest(pretrain_ckpt)})
    return path, history
