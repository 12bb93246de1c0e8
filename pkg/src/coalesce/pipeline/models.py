"""Building the networks from a run config and moving them through checkpoints."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..align import AlignmentModel
from ..autodiff import Module, file_digest, load_checkpoint, save_checkpoint
from ..encoders import JointEncoder
from ..jointsynth import ImplicitDecoder
from .config import PipelineConfig


def _rng(cfg: PipelineConfig, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, stream]))


def build_alignment(cfg: PipelineConfig) -> AlignmentModel:
    config_a, _, _ = cfg.encoders.configs()
    return AlignmentModel(cfg.category.part_labels, _rng(cfg, 1), config_a)


def build_joint(cfg: PipelineConfig) -> tuple[JointEncoder, ImplicitDecoder]:
    _, config_b, config_c = cfg.encoders.configs()
    enc = JointEncoder(cfg.category.part_labels, _rng(cfg, 2), config_b, config_c)
    dec = ImplicitDecoder(enc.code_size * len(cfg.category.part_labels), _rng(cfg, 3), cfg.joint.decoder_hidden)
    return enc, dec


class JointNetwork(Module):
    """Encoder and decoder saved side by side: enc_B/..., enc_C/..., decoder/..."""

    def __init__(self, encoder: JointEncoder, decoder: ImplicitDecoder):
        self.encoder = encoder
        self.decoder = decoder

    def state(self) -> dict[str, np.ndarray]:
        out = self.encoder.state_dict()
        out.update(self.decoder.state_dict("decoder/"))
        return out

    def load(self, tensors: dict[str, np.ndarray], require_decoder: bool = True):
        self.encoder.load_state_dict({k: v for k, v in tensors.items() if not k.startswith("decoder/")})
        if require_decoder or any(k.startswith("decoder/") for k in tensors):
            self.decoder.load_state_dict(tensors, "decoder/")


def save_model(path, tensors: dict[str, np.ndarray], kind: str, cfg: PipelineConfig, extra: dict | None = None) -> Path:
    meta = {"kind": kind, "config_hash": cfg.hash(), "config": cfg.to_dict()}
    meta.update(extra or {})
    return save_checkpoint(path, tensors, meta)


def load_model(path, kind: str) -> tuple[dict[str, np.ndarray], dict]:
    tensors, meta = load_checkpoint(path)
    if meta.get("kind") != kind:
        raise ValueError(f"{path}: expected a {kind!r} checkpoint, found {meta.get('kind')!r}")
    return tensors, meta


def checkpoint_digest(path) -> str:
    return file_digest(path)
