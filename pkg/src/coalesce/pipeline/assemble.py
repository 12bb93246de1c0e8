"""End-to-end assembly of eroded parts into one stitched mesh."""
from __future__ import annotations

import copy
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from ..align import AlignmentModel, predict_transforms
from ..autodiff import no_grad
from ..encoders import JointEncoder, near_boundary_indices
from ..jointsynth import ImplicitDecoder
from ..meshkit import (
    ErosionConfig,
    GridSpec,
    PointCloud,
    SimilarityTransform,
    TriMesh,
    erode_cloud,
    erode_part,
    merge_meshes,
    normalizing_transform,
    resample_cloud,
    sample_surface,
    save_mesh,
)
from ..meshkit.erosion import as_segments
from ..refine import RefineConfig, RefinePart, refine
from ..surfacing import ScalarField, StitchResult, marching_cubes, stitch_meshes
from .config import PipelineConfig
from .models import JointNetwork, build_alignment, build_joint, checkpoint_digest, load_model
from .synthetic import load_shape

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PartInput:
    """One input part in its source shape's frame."""

    label: str
    mesh: TriMesh  # closed, not yet eroded
    seg_boundary: np.ndarray  # (K, 2, 3)
    shape_diameter: float
    source: str = ""


@dataclass
class PreparedPart:
    label: str
    eroded_mesh: TriMesh  # source frame
    eroded_cloud: PointCloud  # source frame
    seg_boundary: np.ndarray  # source frame
    to_normalized: SimilarityTransform

    def normalized_cloud(self) -> PointCloud:
        c = self.eroded_cloud
        return PointCloud(self.to_normalized.apply(c.points), c.normals, c.source_face)

    def normalized_segments(self) -> np.ndarray:
        seg = as_segments(self.seg_boundary)
        return self.to_normalized.apply(seg.reshape(-1, 3)).reshape(seg.shape)


@dataclass
class AssemblyResult:
    mesh: TriMesh
    stitch: StitchResult
    stage_meshes: dict[str, TriMesh]
    initial: dict[str, SimilarityTransform]
    refined: dict[str, SimilarityTransform]
    h_trace: list[float]
    timings: dict[str, float]
    flagged: bool = False
    fields: dict[str, ScalarField] = field(default_factory=dict)


def load_part(dataset_dir, shape_name: str, label: str) -> PartInput:
    shape = load_shape(Path(dataset_dir) / shape_name)
    if label not in shape.parts:
        raise KeyError(f"shape {shape_name!r} has no part {label!r}")
    return PartInput(label, shape.parts[label], shape.boundaries[label], shape.diameter(), shape_name)


def prepare_part(part: PartInput, cfg: PipelineConfig, seed) -> PreparedPart:
    """Sample, erode and normalize one part; the eroded mesh keeps only whole triangles."""
    pc = cfg.preprocess
    ecfg = ErosionConfig(cfg.category.tau)
    rng = np.random.default_rng(seed)
    eroded_mesh = erode_part(part.mesh, part.seg_boundary, ecfg, part.shape_diameter)
    dense = sample_surface(part.mesh, 2 * pc.part_points, pc.sampling, rng)
    cloud = resample_cloud(erode_cloud(dense, part.seg_boundary, ecfg, part.shape_diameter), pc.part_points, rng)
    return PreparedPart(part.label, eroded_mesh, cloud, as_segments(part.seg_boundary), normalizing_transform(cloud.points))


def _place(part: PreparedPart, xf: SimilarityTransform) -> SimilarityTransform:
    """Source frame -> assembled frame through the normalized frame."""
    return part.to_normalized.then(xf)


def joint_codes(encoder: JointEncoder, parts: Sequence[PreparedPart], placed: dict[str, SimilarityTransform],
                near_points: int) -> np.ndarray:
    clouds, near = {}, {}
    for p in parts:
        xf = _place(p, placed[p.label])
        pts = xf.apply(p.eroded_cloud.points)
        seg = xf.apply(p.seg_boundary.reshape(-1, 3)).reshape(-1, 2, 3)
        clouds[p.label] = pts
        near[p.label] = pts[near_boundary_indices(pts, seg, near_points)]
    with no_grad():
        return encoder.encode_all(clouds, near).data.copy()


def joint_mask(spec: GridSpec, segments: np.ndarray, radius: float) -> np.ndarray:
    """Cells whose centers lie within ``radius`` of any boundary segment."""
    seg = as_segments(segments)
    if len(seg) == 0:
        return np.zeros(spec.resolution, dtype=bool)
    step = spec.cell_size / 4
    pts = []
    for a, b in seg:
        k = max(1, int(np.ceil(np.linalg.norm(b - a) / step)))
        pts.append(a + np.linspace(0.0, 1.0, k + 1)[:, None] * (b - a))
    tree = cKDTree(np.concatenate(pts))
    centers = spec.centers().reshape(-1, 3)
    d, _ = tree.query(centers, distance_upper_bound=radius)
    return (d < radius).reshape(spec.resolution)


def joint_field(decoder: ImplicitDecoder, codes: np.ndarray, parts: Sequence[PreparedPart],
                placed: dict[str, SimilarityTransform], cfg: PipelineConfig) -> ScalarField:
    sc = cfg.surfacing
    spec = GridSpec.cube(sc.grid_resolution, sc.grid_half_extent)
    segs = []
    pts = []
    for p in parts:
        xf = _place(p, placed[p.label])
        segs.append(xf.apply(p.seg_boundary.reshape(-1, 3)).reshape(-1, 2, 3))
        pts.append(xf.apply(p.eroded_cloud.points))
    allp = np.concatenate(pts)
    diameter = float(np.linalg.norm(allp.max(axis=0) - allp.min(axis=0)))
    radius = cfg.category.tau * diameter + sc.mask_margin_cells * spec.cell_size
    mask = joint_mask(spec, np.concatenate(segs), radius)
    return ScalarField.from_function(spec, lambda q: decoder.evaluate(codes, q), mask, fill=0.0)


def placed_parts(parts: Sequence[PreparedPart], xfs: dict[str, SimilarityTransform]) -> list[TriMesh]:
    out = []
    for p in parts:
        xf = _place(p, xfs[p.label])
        out.append(TriMesh(xf.apply(p.eroded_mesh.vertices), p.eroded_mesh.triangles))
    return out


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def assemble_parts(inputs: Sequence[PartInput], cfg: PipelineConfig, align_model: AlignmentModel,
                   encoder: JointEncoder, decoder: ImplicitDecoder, do_refine: bool = True,
                   refine_iterations: int | None = None, seed: int = 0, dump_path=None,
                   keep_fields: bool = False) -> AssemblyResult:
    """Erode, align, synthesize the joint, refine, extract and stitch.

    ``decoder`` is copied before refinement so the caller's weights stay put.
    Slots without an input part are absent (zero codes, identity transform).
    """
    timings: dict[str, float] = {}
    clock = time.perf_counter()

    def lap(name):
        nonlocal clock
        now = time.perf_counter()
        timings[name] = now - clock
        clock = now

    labels = [p.label for p in inputs]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate part slots in {labels}")
    unknown = set(labels) - set(cfg.category.part_labels)
    if unknown:
        raise ValueError(f"unknown part labels {sorted(unknown)} for category {cfg.category.name}")
    order = [l for l in cfg.category.part_labels if l in labels]
    by_label = {p.label: p for p in inputs}
    seeds = np.random.SeedSequence([seed, 23]).spawn(len(order))
    parts = [_stage("erode", prepare_part, by_label[l], cfg, np.random.default_rng(s)) for l, s in zip(order, seeds)]
    lap("erode")

    norm = {p.label: p.normalized_cloud().points for p in parts}
    initial = _stage("align", predict_transforms, align_model, norm)
    initial = {l: initial[l] for l in order}
    lap("align")

    codes = _stage("encode", joint_codes, encoder, parts, initial, cfg.preprocess.near_points)
    lap("encode")

    stage_meshes = {}
    fields = {}
    field0 = _stage("field", joint_field, decoder, codes, parts, initial, cfg)
    joint0 = _stage("extract", marching_cubes, field0, cfg.surfacing.iso)
    stage_meshes["before_refine"] = merge_meshes(placed_parts(parts, initial) + [joint0])
    if keep_fields:
        fields["before_refine"] = field0
    lap("field_before")

    dec = copy.deepcopy(decoder)
    trace: list[float] = []
    refined = dict(initial)
    iters = cfg.refine.iterations if refine_iterations is None else refine_iterations
    if do_refine and iters > 0:
        rcfg = RefineConfig(iters, cfg.refine.lr_transform, cfg.refine.lr_decoder, cfg.joint.lam, cfg.refine.boundary_points)
        rparts = [RefinePart(p.label, p.normalized_cloud(), p.normalized_segments()) for p in parts]
        res = _stage("refine", refine, rparts, initial, codes, dec, rcfg, dump_path)
        refined, trace = res.transforms, res.h_trace
    lap("refine")

    field1 = _stage("field", joint_field, dec, codes, parts, refined, cfg) if refined is not initial or do_refine else field0
    joint1 = _stage("extract", marching_cubes, field1, cfg.surfacing.iso)
    final_parts = placed_parts(parts, refined)
    stage_meshes["after_refine"] = merge_meshes(final_parts + [joint1])
    if keep_fields:
        fields["after_refine"] = field1
    lap("field_after")

    st = _stage("stitch", stitch_meshes, final_parts, joint1, cfg.surfacing.weld_rel)
    stage_meshes["after_blend"] = st.mesh
    lap("stitch")
    return AssemblyResult(st.mesh, st, stage_meshes, initial, refined, trace, timings, st.flagged, fields)


def _xf_dict(xfs: dict[str, SimilarityTransform]) -> dict:
    return {k: v.to_dict() for k, v in xfs.items()}


@dataclass
class Checkpoints:
    align: Path
    joint: Path

    def check(self):
        for p in (self.align, self.joint):
            if not Path(p).is_file():
                raise FileNotFoundError(f"checkpoint not found: {p}")


def load_networks(ckpts: Checkpoints, cfg: PipelineConfig) -> tuple[AlignmentModel, JointEncoder, ImplicitDecoder]:
    tensors, _ = load_model(ckpts.align, "align")
    model = build_alignment(cfg)
    model.load_state_dict(tensors)
    tensors, _ = load_model(ckpts.joint, "joint")
    enc, dec = build_joint(cfg)
    JointNetwork(enc, dec).load(tensors)
    return model, enc, dec


def run_assembly(cfg: PipelineConfig, dataset_dir, part_specs: Sequence[tuple[str, str]], ckpts: Checkpoints,
                 out_obj, do_refine: bool = True, refine_iterations: int | None = None, seed: int = 0) -> dict:
    """Load checkpoints and parts, assemble, write the OBJ and its JSON manifest."""
    ckpts.check()
    out_obj = Path(out_obj)
    model, enc, dec = load_networks(ckpts, cfg)
    inputs = [_stage("load", load_part, dataset_dir, shape, label) for shape, label in part_specs]
    dump = out_obj.with_suffix(".refine_state.json")
    res = assemble_parts(inputs, cfg, model, enc, dec, do_refine, refine_iterations, seed, dump)
    save_mesh(out_obj, res.mesh)
    manifest = {
        "output": out_obj.name,
        "dataset": str(dataset_dir),
        "parts": [{"shape": s, "label": l} for s, l in part_specs],
        "seed": seed,
        "refine": do_refine,
        "refine_iterations": refine_iterations,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "checkpoints": {
            "align": {"path": str(ckpts.align), "sha256": checkpoint_digest(ckpts.align)},
            "joint": {"path": str(ckpts.joint), "sha256": checkpoint_digest(ckpts.joint)},
        },
        "transforms": {"predicted": _xf_dict(res.initial), "refined": _xf_dict(res.refined)},
        "h_trace": res.h_trace,
        "stitch": {"flagged": res.flagged, "matched_loops": res.stitch.matched,
                   "loops": [c.status for c in res.stitch.correspondences]},
        "timings": res.timings,
        "output_sha256": checkpoint_digest(out_obj),
    }
    out_obj.with_suffix(".json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return manifest


def rerun_manifest(manifest_path, out_obj) -> dict:
    """Repeat an assembly from its manifest; checkpoint hashes must still match."""
    from .config import load_config

    m = json.loads(Path(manifest_path).read_text())
    cfg = load_config(overrides=m["config"], environ={})
    ck = Checkpoints(Path(m["checkpoints"]["align"]["path"]), Path(m["checkpoints"]["joint"]["path"]))
    ck.check()
    for key, path in (("align", ck.align), ("joint", ck.joint)):
        if checkpoint_digest(path) != m["checkpoints"][key]["sha256"]:
            raise ValueError(f"{key} checkpoint {path} changed since the manifest was written")
    specs = [(p["shape"], p["label"]) for p in m["parts"]]
    return run_assembly(cfg, m["dataset"], specs, ck, out_obj, m["refine"], m["refine_iterations"], m["seed"])
