"""Joint volumes, joint-focused occupancy samples and the near-joint surface set."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..meshkit import GridSpec, OccupancyGrid, PointCloud, TriMesh, dilate, distance_to_segments, points_inside, voxel_occupancy


class JointVolumeError(ValueError):
    pass


def eroded_occupancy(parts: Sequence[TriMesh], seg_boundaries: Sequence, radius: float, spec: GridSpec) -> OccupancyGrid:
    """Union of part interiors with every cell center closer than ``radius``
    to that part's segmentation boundary carved out."""
    centers = spec.centers().reshape(-1, 3)
    occ = np.zeros(spec.resolution, dtype=bool)
    flagged = False
    for mesh, seg in zip(parts, seg_boundaries):
        g = voxel_occupancy(mesh, spec=spec)
        flagged |= g.flagged
        inside = g.occupancy.ravel()
        if radius > 0 and np.size(seg):
            idx = np.flatnonzero(inside)
            near = distance_to_segments(centers[idx], seg) < radius
            inside = inside.copy()
            inside[idx[near]] = False
        occ |= inside.reshape(spec.resolution)
    return OccupancyGrid(spec, occ, flagged)


def build_joint_volume(shape_grid: OccupancyGrid, eroded_grid: OccupancyGrid, steps: int = 5) -> OccupancyGrid:
    """Shape interior minus eroded-part interiors, inflated ``steps`` times."""
    if shape_grid.spec != eroded_grid.spec:
        raise ValueError("shape and eroded-part grids are not aligned")
    region = shape_grid.occupancy & ~eroded_grid.occupancy
    if not region.any():
        raise JointVolumeError("no joint volume")
    return dilate(shape_grid.with_occupancy(region), steps)


@dataclass
class TrainingSampleSet:
    points: np.ndarray  # (n, 3)
    labels: np.ndarray  # (n,) 1 = inside
    counts: tuple[int, int, int]  # joint / near-surface outside / far outside

    def __len__(self) -> int:
        return len(self.points)


def split_counts(n: int, fractions=(0.8, 0.1, 0.1)) -> tuple[int, int, int]:
    """floor, floor, remainder."""
    a = int(np.floor(n * fractions[0] + 1e-9))
    b = int(np.floor(n * fractions[1] + 1e-9))
    return a, b, n - a - b


def _in_cells(spec: GridSpec, cells: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    pick = cells[rng.integers(0, len(cells), size=count)]
    return np.asarray(spec.origin) + (pick + rng.random((count, 3))) * spec.cell_size


def _outside_in_cells(shape: Sequence[TriMesh], spec: GridSpec, cells: np.ndarray, count: int,
                      rng: np.random.Generator, max_rounds: int = 100) -> np.ndarray:
    out = np.zeros((0, 3))
    for _ in range(max_rounds):
        if len(out) >= count:
            break
        need = count - len(out)
        cand = _in_cells(spec, cells, 2 * need + 16, rng)
        cand = cand[~points_inside(shape, cand)]
        out = np.concatenate([out, cand[:need]])
    if len(out) < count:
        raise JointVolumeError("could not draw enough outside samples")
    return out


def sample_training_points(shape: Sequence[TriMesh], shape_grid: OccupancyGrid, joint: OccupancyGrid, n: int = 16384,
                           fractions=(0.8, 0.1, 0.1), band_cells: int = 2, seed=0) -> TrainingSampleSet:
    """Dense samples in the joint volume, sparse ones outside the shape.

    Joint-volume samples are uniform inside joint cells and labeled by the
    ray-parity inside test on the shape. The two outside groups come from the
    ``band_cells`` shell around the shape and from the whole grid, and only
    points that test outside are kept.
    """
    rng = np.random.default_rng(seed)
    spec = joint.spec
    n_joint, n_band, n_far = split_counts(n, fractions)
    jcells = np.argwhere(joint.occupancy)
    if len(jcells) == 0:
        raise JointVolumeError("no joint volume")
    pts = [np.zeros((0, 3))]
    labels = [np.zeros(0)]
    if n_joint:
        p = _in_cells(spec, jcells, n_joint, rng)
        pts.append(p)
        labels.append(points_inside(shape, p).astype(np.float64))
    if n_band:
        band = dilate(shape_grid, band_cells).occupancy & ~shape_grid.occupancy
        p = _outside_in_cells(shape, spec, np.argwhere(band), n_band, rng)
        pts.append(p)
        labels.append(np.zeros(n_band))
    if n_far:
        every = np.argwhere(np.ones(spec.resolution, dtype=bool))
        p = _outside_in_cells(shape, spec, every, n_far, rng)
        pts.append(p)
        labels.append(np.zeros(n_far))
    return TrainingSampleSet(np.concatenate(pts), np.concatenate(labels), (n_joint, n_band, n_far))


@dataclass
class JointBoundarySet:
    points: np.ndarray  # (k, 3)
    normals: np.ndarray  # (k, 3)
    part_index: np.ndarray  # which input cloud each point came from
    row: np.ndarray  # row within that cloud
    flagged: bool = False  # fewer points than requested were available

    def __len__(self) -> int:
        return len(self.points)


def select_joint_boundary(clouds: Sequence[PointCloud], seg_boundaries: Sequence, k: int = 1024) -> JointBoundarySet:
    """The k points over all clouds nearest their own segmentation boundary."""
    dists, owners, rows = [], [], []
    for i, (cloud, seg) in enumerate(zip(clouds, seg_boundaries)):
        if cloud is None or len(cloud) == 0:
            continue
        dists.append(distance_to_segments(cloud.points, seg))
        owners.append(np.full(len(cloud), i))
        rows.append(np.arange(len(cloud)))
    if not dists:
        return JointBoundarySet(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0, int), np.zeros(0, int), True)
    d = np.concatenate(dists)
    owner = np.concatenate(owners)
    row = np.concatenate(rows)
    order = np.argsort(d, kind="stable")[:k]
    owner, row = owner[order], row[order]
    pts = np.stack([clouds[o].points[r] for o, r in zip(owner, row)])
    nrm = np.stack([clouds[o].normals[r] for o, r in zip(owner, row)])
    return JointBoundarySet(pts, nrm, owner, row, flagged=len(d) < k)
