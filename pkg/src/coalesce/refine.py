"""Test-time refinement of part transforms and decoder weights.

Each iteration takes one Adam step on every part's (s, t) with the decoder
frozen, then one Adam step on the decoder weights with the transforms
frozen, both descending the L1 matching objective h evaluated on the
current near-joint surface points.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import Adam, Module, Tensor, gather_rows
from .jointsynth.decoder import objective_h
from .jointsynth.volume import JointBoundarySet, select_joint_boundary
from .meshkit import PointCloud, SimilarityTransform
from .meshkit.erosion import as_segments

log = logging.getLogger(__name__)


class RefineError(FloatingPointError):
    def __init__(self, message: str, state: dict):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class RefineConfig:
    iterations: int = 25
    lr_transform: float = 0.002
    lr_decoder: float = 1e-4
    lam: float = 0.005
    boundary_points: int = 1024

    def __post_init__(self):
        if self.iterations < 0 or self.lr_transform < 0 or self.lr_decoder < 0 or not self.lam > 0:
            raise ValueError(f"invalid refinement config {self}")


@dataclass
class RefinePart:
    """A part cloud in its own (untransformed) frame and its segmentation boundary there."""

    label: str
    cloud: PointCloud
    seg_boundary: np.ndarray


@dataclass
class RefineResult:
    transforms: dict[str, SimilarityTransform]
    h_trace: list[float] = field(default_factory=list)


def _boundary_set(parts: Sequence[RefinePart], s: np.ndarray, t: np.ndarray, k: int) -> JointBoundarySet:
    clouds, segs = [], []
    for i, part in enumerate(parts):
        clouds.append(PointCloud(part.cloud.points * s[i] + t[i], part.cloud.normals, part.cloud.source_face))
        segs.append(as_segments(part.seg_boundary) * s[i] + t[i])
    return select_joint_boundary(clouds, segs, k)


def _positions(parts: Sequence[RefinePart], nj: JointBoundarySet, s: Tensor, t: Tensor) -> Tensor:
    """Differentiable p = s_k p0 + t_k for every selected point."""
    p0 = np.stack([parts[o].cloud.points[r] for o, r in zip(nj.part_index, nj.row)])
    own = nj.part_index
    scale = gather_rows(s.reshape(-1, 1), own)
    shift = gather_rows(t, own)
    return Tensor(p0, dtype=s.dtype) * scale + shift


def evaluate_h(decoder, codes, parts: Sequence[RefinePart], s: Tensor, t: Tensor, lam: float, k: int) -> Tensor:
    nj = _boundary_set(parts, s.data, t.data, k)
    pts = _positions(parts, nj, s, t)
    return objective_h(lambda p: decoder(codes, p), pts, nj.normals, lam)


def refine(parts: Sequence[RefinePart], transforms: dict[str, SimilarityTransform], codes, decoder: Module,
           cfg: RefineConfig | None = None, dump_path: str | Path | None = None) -> RefineResult:
    """Alternate transform and decoder steps for ``cfg.iterations`` rounds.

    ``decoder`` is updated in place. Codes stay fixed. The returned trace
    holds h before every iteration and once more at the end.
    """
    cfg = cfg or RefineConfig()
    labels = [p.label for p in parts]
    s = Tensor(np.array([transforms[l].s for l in labels], dtype=np.float64), requires_grad=True, dtype=np.float64)
    t = Tensor(np.array([transforms[l].t for l in labels], dtype=np.float64), requires_grad=True, dtype=np.float64)
    codes = codes if isinstance(codes, Tensor) else Tensor(codes)
    weights = decoder.parameters()
    opt_xf = Adam([s, t], lr=cfg.lr_transform)
    opt_w = Adam(weights, lr=cfg.lr_decoder) if weights else None
    trace: list[float] = []

    def check(h: Tensor, it: int):
        if not np.isfinite(h.item()):
            state = {
                "iteration": it,
                "h_trace": trace,
                "s": s.data.tolist(),
                "t": t.data.tolist(),
                "labels": labels,
            }
            if dump_path is not None:
                Path(dump_path).write_text(json.dumps(state, indent=2))
            raise RefineError(f"objective h became non-finite at iteration {it}", state)

    for it in range(cfg.iterations):
        # (a) transforms, decoder frozen
        opt_xf.zero_grad()
        for w in weights:
            w.requires_grad = False
        h = evaluate_h(decoder, codes, parts, s, t, cfg.lam, cfg.boundary_points)
        for w in weights:
            w.requires_grad = True
        check(h, it)
        trace.append(h.item())
        h.backward()
        opt_xf.step()
        s.data = np.maximum(s.data, 1e-6)
        # (b) decoder weights, transforms frozen
        if opt_w is not None:
            opt_w.zero_grad()
            frozen_s, frozen_t = Tensor(s.data.copy(), dtype=np.float64), Tensor(t.data.copy(), dtype=np.float64)
            h = evaluate_h(decoder, codes, parts, frozen_s, frozen_t, cfg.lam, cfg.boundary_points)
            check(h, it)
            h.backward()
            opt_w.step()
        log.info("refine iteration %d h %.6f", it, trace[-1])
    final = evaluate_h(decoder, codes, parts, Tensor(s.data, dtype=np.float64), Tensor(t.data, dtype=np.float64), cfg.lam, cfg.boundary_points)
    check(final, cfg.iterations)
    trace.append(final.item())
    out = {l: SimilarityTransform(float(s.data[i]), t.data[i].copy()) for i, l in enumerate(labels)}
    return RefineResult(out, trace)
