from __future__ import annotations

import heapq

import numpy as np
from scipy.spatial import cKDTree

from .mesh import PointCloud, TriMesh
from .transform import SimilarityTransform


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _uniform(mesh: TriMesh, n: int, rng: np.random.Generator) -> PointCloud:
    areas = mesh.face_areas()
    faces = rng.choice(len(areas), size=n, p=areas / areas.sum())
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    v = mesh.vertices[mesh.triangles[faces]]
    pts = (1 - r1)[:, None] * v[:, 0] + (r1 * (1 - r2))[:, None] * v[:, 1] + (r1 * r2)[:, None] * v[:, 2]
    return PointCloud(pts, mesh.face_normals()[faces], faces)


def poisson_disk_radius(total_area: float, n: int) -> float:
    return float(np.sqrt(total_area / (n * 2.0 * np.sqrt(3.0))))


def _eliminate(points: np.ndarray, keep: np.ndarray, target: int, r_max: float) -> np.ndarray:
    """Weighted sample elimination down to ``target`` points.

    Each point carries the summed closeness of its neighbours within 2*r_max;
    the most crowded point is dropped repeatedly. Dropping points never
    shrinks the minimum pairwise distance of what remains.
    """
    pts = points[keep]
    tree = cKDTree(pts)
    rad = 2.0 * r_max
    nbrs = tree.query_ball_point(pts, rad)
    weight = np.zeros(len(pts))
    for i, js in enumerate(nbrs):
        for j in js:
            if j != i:
                weight[i] += (1.0 - np.linalg.norm(pts[i] - pts[j]) / rad) ** 8
    heap = [(-w, i) for i, w in enumerate(weight)]
    heapq.heapify(heap)
    alive = np.ones(len(pts), dtype=bool)
    remaining = len(pts)
    while remaining > target:
        w, i = heapq.heappop(heap)
        if not alive[i] or -w != weight[i]:
            continue
        alive[i] = False
        remaining -= 1
        for j in nbrs[i]:
            if alive[j] and j != i:
                weight[j] -= (1.0 - np.linalg.norm(pts[i] - pts[j]) / rad) ** 8
                heapq.heappush(heap, (-weight[j], j))
    return keep[alive]


def _poisson_disk(mesh: TriMesh, n: int, rng: np.random.Generator, oversample: int = 10) -> PointCloud:
    r = poisson_disk_radius(mesh.area(), n)
    cand = _uniform(mesh, oversample * n, rng)
    tree = cKDTree(cand.points)
    conflicts = tree.query_ball_point(cand.points, r)
    blocked = np.zeros(len(cand), dtype=bool)
    accepted = []
    # dart throwing over the (already random) candidate order
    for i in range(len(cand)):
        if blocked[i]:
            continue
        accepted.append(i)
        blocked[conflicts[i]] = True
    accepted = np.array(accepted, dtype=np.int64)
    if len(accepted) > n:
        accepted = _eliminate(cand.points, accepted, n, r)
    elif len(accepted) < n:
        # top up with the candidates farthest from the accepted set
        rest = np.setdiff1d(np.arange(len(cand)), accepted)
        d, _ = cKDTree(cand.points[accepted]).query(cand.points[rest])
        extra = rest[np.argsort(-d, kind="stable")[: n - len(accepted)]]
        accepted = np.concatenate([accepted, extra])
    return cand.subset(np.sort(accepted))


def sample_surface(mesh: TriMesh, n: int, mode: str = "uniform", seed=0) -> PointCloud:
    """Sample ``n`` surface points with face normals.

    ``uniform`` picks triangles with probability proportional to area;
    ``poisson_disk`` throws darts at radius sqrt(A / (2*sqrt(3)*n)) over
    oversampled candidates and then thins to exactly ``n`` points.
    """
    if n == 0:
        return PointCloud.empty()
    if mesh.is_empty() or mesh.area() <= 0:
        raise ValueError("cannot sample a mesh with zero surface area")
    rng = _rng(seed)
    if mode == "uniform":
        return _uniform(mesh, n, rng)
    if mode == "poisson_disk":
        return _poisson_disk(mesh, n, rng)
    raise ValueError(f"unknown sampling mode {mode!r}")


def resample_cloud(cloud: PointCloud, n: int, seed=0) -> PointCloud:
    """Draw ``n`` points; without replacement when enough exist, else with."""
    rng = _rng(seed)
    if len(cloud) == 0:
        raise ValueError("cannot resample an empty cloud")
    idx = rng.choice(len(cloud), size=n, replace=len(cloud) < n)
    return cloud.subset(idx)


def normalize_cloud(cloud: PointCloud) -> tuple[PointCloud, SimilarityTransform]:
    """Center the centroid at the origin and scale the bounding-box diagonal to 1.

    Returns the normalized cloud and the transform that maps it back.
    """
    if len(cloud) == 0:
        raise ValueError("cannot normalize an empty cloud")
    fwd = normalizing_transform(cloud.points)
    out = PointCloud(fwd.apply(cloud.points), cloud.normals.copy(), cloud.source_face.copy())
    return out, fwd.inverse()


def normalizing_transform(points: np.ndarray) -> SimilarityTransform:
    pts = np.asarray(points, dtype=np.float64)
    diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    if diag <= 0:
        raise ValueError("cloud has zero diameter")
    s = 1.0 / diag
    return SimilarityTransform(s, -s * pts.mean(axis=0))
