"""Chamfer distance and joint-region IoU."""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..meshkit import OccupancyGrid, PointCloud, TriMesh, sample_surface

CHAMFER_SCALE = 1e3


def _points(x, n: int, seed) -> np.ndarray:
    if isinstance(x, TriMesh):
        if x.is_empty():
            raise ValueError("chamfer of an empty mesh")
        return sample_surface(x, n, "uniform", seed).points
    if isinstance(x, PointCloud):
        x = x.points
    pts = np.asarray(x, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("chamfer of an empty point set")
    return pts


def chamfer(a, b, n: int = 16384, squared: bool = True, seed: int = 0) -> float:
    """Symmetric chamfer distance times 1000.

    Meshes are sampled uniformly with ``n`` points (same seed on both sides);
    point sets are used as given. Each direction averages the nearest-neighbour
    distance (squared by default) and the two directions are averaged.
    """
    pa, pb = _points(a, n, seed), _points(b, n, seed)
    da, _ = cKDTree(pb).query(pa)
    db, _ = cKDTree(pa).query(pb)
    if squared:
        da, db = da ** 2, db ** 2
    return float(0.5 * (da.mean() + db.mean()) * CHAMFER_SCALE)


def field_iou(values: np.ndarray, truth: np.ndarray, region: np.ndarray, iso: float = 0.5) -> float:
    """IoU of {values > iso} against ``truth``, both restricted to ``region``."""
    pred = (np.asarray(values) > iso) & region
    gt = np.asarray(truth, dtype=bool) & region
    union = np.count_nonzero(pred | gt)
    if union == 0:
        return 1.0
    return float(np.count_nonzero(pred & gt) / union)


def joint_iou(decoder, codes, shape_grid: OccupancyGrid, joint_grid: OccupancyGrid, iso: float = 0.5) -> float:
    """Decoder occupancy against the shape occupancy inside the dilated joint volume."""
    region = joint_grid.occupancy
    centers = shape_grid.spec.centers()[region]
    vals = np.zeros(region.shape)
    vals[region] = decoder.evaluate(codes, centers)
    return field_iou(vals, shape_grid.occupancy, region, iso)
