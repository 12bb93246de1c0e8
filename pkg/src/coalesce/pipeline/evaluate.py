"""Stage-by-stage chamfer evaluation of self-assembly on a test set."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .assemble import PartInput, assemble_parts
from .config import PipelineConfig
from .metrics import chamfer
from .perturb import PerturbConfig, perturb_similarity, perturb_sine
from .preprocess import outer_surface_samples
from .synthetic import LabeledShape

log = logging.getLogger(__name__)

STAGES = (
    ("before_refine", "Ours (before test-time opt.)"),
    ("after_refine", "Ours (after test-time opt.)"),
    ("after_blend", "Ours (after Poisson blending)"),
)
PERTURBATIONS = ("none", "sine", "similarity")


@dataclass
class SuiteReport:
    perturbation: str
    shapes: list[str]
    chamfer: dict[str, list[float]]  # stage key -> per-shape values
    squared: bool = True
    extra: dict = field(default_factory=dict)

    def mean(self, stage: str) -> float:
        return float(np.mean(self.chamfer[stage]))

    def rows(self) -> list[tuple[str, float]]:
        return [(label, self.mean(key)) for key, label in STAGES]

    def to_dict(self) -> dict:
        return {
            "perturbation": self.perturbation,
            "metric": "chamfer x1e3 (" + ("squared" if self.squared else "absolute") + ")",
            "shapes": self.shapes,
            "rows": [{"stage": label, "key": key, "mean": self.mean(key), "per_shape": self.chamfer[key]}
                     for key, label in STAGES],
            **self.extra,
        }

    def table(self) -> str:
        width = max(len(label) for _, label in STAGES)
        lines = [f"{'stage':<{width}}  chamfer x1e3", "-" * (width + 14)]
        lines += [f"{label:<{width}}  {value:.4f}" for label, value in self.rows()]
        return "\n".join(lines)

    def write(self, out_dir) -> Path:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / "report.json").write_text(json.dumps(self.to_dict(), indent=1))
        (d / "report.txt").write_text(self.table() + "\n")
        return d


def perturb_shape(shape: LabeledShape, kind: str, seed: int, cfg: PerturbConfig | None = None) -> LabeledShape:
    if kind == "none":
        return shape
    if kind == "sine":
        return perturb_sine(shape, cfg, seed)
    if kind == "similarity":
        return perturb_similarity(shape, cfg, seed)[0]
    raise ValueError(f"unknown perturbation {kind!r}; choose from {PERTURBATIONS}")


def evaluate_suite(cfg: PipelineConfig, shapes: Sequence[LabeledShape], align_model, encoder, decoder,
                   perturbation: str = "none", n_samples: int = 16384, squared: bool = True, seed: int = 0,
                   do_refine: bool = True) -> SuiteReport:
    """Self-assemble every test shape and score the three stages against it."""
    if not shapes:
        raise ValueError("empty test set")
    if perturbation not in PERTURBATIONS:
        raise ValueError(f"unknown perturbation {perturbation!r}; choose from {PERTURBATIONS}")
    per_stage: dict[str, list[float]] = {k: [] for k, _ in STAGES}
    names, flags = [], []
    for i, shape in enumerate(shapes):
        shape = perturb_shape(shape, perturbation, seed + i)
        diameter = shape.diameter()
        inputs = [PartInput(l, m, shape.boundaries[l], diameter, shape.name) for l, m in shape.parts.items()]
        res = assemble_parts(inputs, cfg, align_model, encoder, decoder, do_refine=do_refine, seed=seed + i)
        truth = outer_surface_samples(shape, n_samples, "uniform", seed + i).points
        for key, _ in STAGES:
            per_stage[key].append(chamfer(res.stage_meshes[key], truth, n_samples, squared, seed + i))
        names.append(shape.name)
        flags.append(res.flagged)
        log.info("%s: %s", shape.name, {k: round(v[-1], 4) for k, v in per_stage.items()})
    return SuiteReport(perturbation, names, per_stage, squared, {"flagged": flags})


def training_iou(encoder, decoder, prepared: Sequence) -> list[float]:
    """Joint-region IoU of the decoder on each prepared training shape."""
    from ..autodiff import no_grad
    from .metrics import joint_iou

    out = []
    for p in prepared:
        s = p.joint_sample()
        with no_grad():
            codes = encoder.encode_all(s.clouds, s.near).data
        out.append(joint_iou(decoder, codes, p.shape_grid, p.joint_grid))
    return out
