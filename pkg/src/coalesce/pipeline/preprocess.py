"""Per-shape derived data: eroded part clouds, grids, occupancy samples, N(J)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..align import AlignSample
from ..jointsynth import (
    JointBoundarySet,
    JointSample,
    TrainingSampleSet,
    build_joint_volume,
    eroded_occupancy,
    sample_training_points,
    select_joint_boundary,
)
from ..encoders import near_boundary_indices
from ..meshkit import (
    ErosionConfig,
    GridSpec,
    OccupancyGrid,
    PointCloud,
    SimilarityTransform,
    TriMesh,
    erode_cloud,
    normalize_cloud,
    points_inside,
    resample_cloud,
    sample_surface,
    voxel_occupancy,
)
from .config import PipelineConfig
from .synthetic import LabeledShape

log = logging.getLogger(__name__)


def outer_surface_samples(shape: LabeledShape, n: int, mode: str = "uniform", seed=0) -> PointCloud:
    """Surface samples of the assembled shape, without the overlapping part interiors.

    Returns a cloud whose ``source_face`` holds the index of the owning part
    in ``shape.labels``.
    """
    mesh = shape.mesh()
    owner_of_face = np.concatenate([np.full(m.n_triangles, i) for i, m in enumerate(shape.parts.values())])
    rng = np.random.default_rng(seed)
    out_pts, out_nrm, out_own = [], [], []
    have, factor = 0, 1.3
    for _ in range(8):
        cloud = sample_surface(mesh, int(factor * n) + 16, mode, rng)
        owner = owner_of_face[cloud.source_face]
        keep = np.ones(len(cloud), dtype=bool)
        parts = list(shape.parts.values())
        for i in range(len(parts)):
            sel = np.flatnonzero(owner == i)
            others = [m for j, m in enumerate(parts) if j != i]
            if others and len(sel):
                keep[sel[points_inside(others, cloud.points[sel])]] = False
        out_pts.append(cloud.points[keep])
        out_nrm.append(cloud.normals[keep])
        out_own.append(owner[keep])
        have += int(keep.sum())
        if have >= n:
            break
        factor *= 2
    pts, nrm, own = (np.concatenate(x) for x in (out_pts, out_nrm, out_own))
    return PointCloud(pts[:n], nrm[:n], own[:n])


@dataclass
class PreparedShape:
    """Everything the training stages need from one labeled shape (shape frame)."""

    name: str
    labels: list[str]
    surface: np.ndarray  # outer-surface samples of the whole shape
    eroded: dict[str, PointCloud]  # fixed-size eroded part clouds
    near: dict[str, np.ndarray]
    boundaries: dict[str, np.ndarray]
    truth: dict[str, SimilarityTransform]  # normalized part frame -> shape frame
    samples: TrainingSampleSet
    boundary: JointBoundarySet
    shape_grid: OccupancyGrid
    joint_grid: OccupancyGrid
    meta: dict = field(default_factory=dict)

    def normalized(self, label: str) -> np.ndarray:
        return self.truth[label].inverse().apply(self.eroded[label].points)

    def align_sample(self) -> AlignSample:
        clouds = {l: self.normalized(l) for l in self.labels}
        return AlignSample(clouds, dict(self.truth))

    def joint_sample(self) -> JointSample:
        clouds = {l: self.eroded[l].points for l in self.labels}
        return JointSample(clouds, dict(self.near), self.samples, self.boundary, self.name)


def eroded_part_cloud(surface: PointCloud, seg, tau: float, diameter: float, n: int, seed) -> PointCloud:
    """Erode a part's surface samples and draw a fixed-size cloud from the survivors."""
    kept = erode_cloud(surface, seg, ErosionConfig(tau), diameter)
    return resample_cloud(kept, n, seed)


def grid_spec(cfg: PipelineConfig) -> GridSpec:
    return GridSpec.cube(cfg.preprocess.grid_resolution, cfg.preprocess.grid_half_extent)


def prepare_shape(shape: LabeledShape, cfg: PipelineConfig, seed: int = 0) -> PreparedShape:
    pc = cfg.preprocess
    tau = cfg.category.tau
    diameter = shape.diameter()
    ss = np.random.SeedSequence([seed, 17])
    s_surf, s_parts, s_train = (np.random.default_rng(s) for s in ss.spawn(3))

    surf = outer_surface_samples(shape, pc.shape_samples, pc.sampling, s_surf)
    eroded, near, truth = {}, {}, {}
    for i, label in enumerate(shape.labels):
        rows = np.flatnonzero(surf.source_face == i)
        if len(rows) == 0:
            raise ValueError(f"{shape.name}: part {label!r} received no surface samples")
        cloud = eroded_part_cloud(surf.subset(rows), shape.boundaries[label], tau, diameter, pc.part_points, s_parts)
        eroded[label] = cloud
        near[label] = cloud.points[near_boundary_indices(cloud.points, shape.boundaries[label], pc.near_points)]
        _, back = normalize_cloud(cloud)
        truth[label] = back

    spec = grid_spec(cfg)
    meshes = list(shape.parts.values())
    shape_grid = voxel_occupancy(meshes, spec=spec)
    segs = [shape.boundaries[l] for l in shape.labels]
    ero = eroded_occupancy(meshes, segs, tau * diameter, spec)
    joint = build_joint_volume(shape_grid, ero, pc.dilation_steps)
    samples = sample_training_points(meshes, shape_grid, joint, pc.train_samples, band_cells=pc.band_cells, seed=s_train)
    nj = select_joint_boundary([eroded[l] for l in shape.labels], segs, pc.boundary_points)
    return PreparedShape(shape.name, list(shape.labels), surf.points, eroded, near, dict(shape.boundaries), truth,
                         samples, nj, shape_grid, joint, {"seed": seed, "diameter": diameter})


def save_prepared(path, prep: PreparedShape) -> Path:
    arrays = {
        "surface": prep.surface,
        "samples_points": prep.samples.points,
        "samples_labels": prep.samples.labels,
        "samples_counts": np.array(prep.samples.counts),
        "nj_points": prep.boundary.points,
        "nj_normals": prep.boundary.normals,
        "nj_part": prep.boundary.part_index,
        "nj_row": prep.boundary.row,
        "nj_flagged": np.array(prep.boundary.flagged),
        "shape_grid": prep.shape_grid.occupancy,
        "joint_grid": prep.joint_grid.occupancy,
        "grid_res": np.array(prep.shape_grid.spec.resolution),
        "grid_origin": np.array(prep.shape_grid.spec.origin),
        "grid_cell": np.array(prep.shape_grid.spec.cell_size),
        "labels": np.array(prep.labels),
        "diameter": np.array(prep.meta.get("diameter", 1.0)),
    }
    for l in prep.labels:
        c = prep.eroded[l]
        arrays[f"eroded_{l}_points"] = c.points
        arrays[f"eroded_{l}_normals"] = c.normals
        arrays[f"near_{l}"] = prep.near[l]
        arrays[f"seg_{l}"] = prep.boundaries[l]
        arrays[f"truth_{l}"] = np.concatenate([[prep.truth[l].s], prep.truth[l].t])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **arrays)
    return path


def load_prepared(path, name: str = "") -> PreparedShape:
    z = np.load(path)
    labels = [str(x) for x in z["labels"]]
    spec = GridSpec(tuple(z["grid_res"]), tuple(z["grid_origin"]), float(z["grid_cell"]))
    eroded = {l: PointCloud(z[f"eroded_{l}_points"], z[f"eroded_{l}_normals"]) for l in labels}
    truth = {l: SimilarityTransform(float(z[f"truth_{l}"][0]), z[f"truth_{l}"][1:]) for l in labels}
    samples = TrainingSampleSet(z["samples_points"], z["samples_labels"], tuple(int(c) for c in z["samples_counts"]))
    nj = JointBoundarySet(z["nj_points"], z["nj_normals"], z["nj_part"], z["nj_row"], bool(z["nj_flagged"]))
    return PreparedShape(name or Path(path).stem, labels, z["surface"], eroded, {l: z[f"near_{l}"] for l in labels},
                         {l: z[f"seg_{l}"] for l in labels}, truth, samples, nj, OccupancyGrid(spec, z["shape_grid"]),
                         OccupancyGrid(spec, z["joint_grid"]), {"diameter": float(z["diameter"])})
