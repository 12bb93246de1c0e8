from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import PointCloud, TriMesh


class ErosionError(ValueError):
    pass


@dataclass(frozen=True)
class ErosionConfig:
    tau: float = 0.05  # fraction of the shape's bounding-box diameter

    def __post_init__(self):
        if not self.tau >= 0:
            raise ValueError(f"tau must be non-negative, got {self.tau}")


def as_segments(boundary) -> np.ndarray:
    """Normalize a segmentation boundary to a (K, 2, 3) segment array.

    Accepts segments directly, or a bare point set (K, 3) which becomes
    zero-length segments.
    """
    b = np.asarray(boundary, dtype=np.float64)
    if b.size == 0:
        return np.zeros((0, 2, 3))
    if b.ndim == 2 and b.shape[1] == 3:
        return np.stack([b, b], axis=1)
    if b.ndim == 3 and b.shape[1:] == (2, 3):
        return b
    raise ValueError(f"segmentation boundary must be (K,3) points or (K,2,3) segments, got {b.shape}")


def polyline_segments(polyline: np.ndarray, closed: bool = True) -> np.ndarray:
    p = np.asarray(polyline, dtype=np.float64).reshape(-1, 3)
    q = np.roll(p, -1, axis=0) if closed else p[1:]
    p = p if closed else p[:-1]
    return np.stack([p, q], axis=1)


def distance_to_segments(points: np.ndarray, segments, chunk: int = 4096) -> np.ndarray:
    """Euclidean distance from each point to the nearest segment."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    seg = as_segments(segments)
    if len(seg) == 0:
        return np.full(len(pts), np.inf)
    a = seg[:, 0]
    d = seg[:, 1] - a
    dd = np.einsum("ij,ij->i", d, d)
    dd_safe = np.where(dd > 0, dd, 1.0)
    out = np.empty(len(pts))
    step = max(1, chunk * 64 // max(len(seg), 1))
    for lo in range(0, len(pts), step):
        p = pts[lo:lo + step, None, :] - a[None]
        u = np.clip(np.einsum("pkj,kj->pk", p, d) / dd_safe, 0.0, 1.0)
        u = np.where(dd > 0, u, 0.0)
        r = p - u[..., None] * d[None]
        out[lo:lo + step] = np.sqrt(np.einsum("pkj,pkj->pk", r, r).min(axis=1))
    return out


def erode_part(part: TriMesh, seg_boundary, cfg: ErosionConfig, shape_diameter: float) -> TriMesh:
    """Remove every triangle with a vertex closer than tau * diameter to the boundary.

    Whole triangles go; nothing is re-cut, so surviving geometry is untouched.
    """
    seg = as_segments(seg_boundary)
    if cfg.tau == 0 or len(seg) == 0:
        return part.copy()
    radius = cfg.tau * shape_diameter
    near = distance_to_segments(part.vertices, seg) < radius
    keep = ~near[part.triangles].any(axis=1)
    if not keep.any():
        raise ErosionError("part fully eroded")
    return part.submesh(np.flatnonzero(keep))


def erode_cloud(cloud: PointCloud, seg_boundary, cfg: ErosionConfig, shape_diameter: float) -> PointCloud:
    seg = as_segments(seg_boundary)
    if cfg.tau == 0 or len(seg) == 0:
        return cloud.subset(np.arange(len(cloud)))
    keep = distance_to_segments(cloud.points, seg) >= cfg.tau * shape_diameter
    if not keep.any():
        raise ErosionError("part fully eroded")
    return cloud.subset(np.flatnonzero(keep))
