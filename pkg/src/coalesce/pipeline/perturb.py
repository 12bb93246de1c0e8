"""Test-time perturbations: a global sine warp along y and a global similarity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..meshkit import PointCloud, SimilarityTransform, TriMesh
from .synthetic import LabeledShape


@dataclass(frozen=True)
class PerturbConfig:
    amplitude: float = 0.02
    omega: float = 4 * np.pi
    scale_range: tuple[float, float] = (0.9, 1.1)
    translation_range: tuple[float, float] = (-0.04, 0.04)


def sine_phase(seed) -> float:
    """One phase per shape, uniform in [-pi, pi]."""
    return float(np.random.default_rng(seed).uniform(-np.pi, np.pi))


def warp_points(points: np.ndarray, amplitude: float, omega: float, phase: float) -> np.ndarray:
    p = np.array(points, dtype=np.float64, copy=True)
    p[..., 1] = p[..., 1] + amplitude * np.sin(omega * p[..., 2] + phase)
    return p


def warp_normals(points: np.ndarray, normals: np.ndarray, amplitude: float, omega: float, phase: float) -> np.ndarray:
    """Normals pushed through the warp (inverse transpose of its Jacobian)."""
    n = np.array(normals, dtype=np.float64, copy=True)
    slope = amplitude * omega * np.cos(omega * np.asarray(points)[..., 2] + phase)
    n[..., 2] = n[..., 2] - slope * n[..., 1]
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def _apply(geom, point_fn, cloud_fn):
    if isinstance(geom, TriMesh):
        return TriMesh(point_fn(geom.vertices), geom.triangles, geom.face_labels)
    if isinstance(geom, PointCloud):
        return cloud_fn(geom)
    if isinstance(geom, LabeledShape):
        parts = {k: _apply(m, point_fn, cloud_fn) for k, m in geom.parts.items()}
        bounds = {k: point_fn(v.reshape(-1, 3)).reshape(v.shape) for k, v in geom.boundaries.items()}
        return LabeledShape(geom.category, parts, bounds, geom.name)
    if isinstance(geom, dict):
        return {k: _apply(v, point_fn, cloud_fn) for k, v in geom.items()}
    return point_fn(np.asarray(geom))


def perturb_sine(geom, cfg: PerturbConfig | None = None, seed=0, phase: float | None = None):
    """y <- y + a sin(omega z + f) on a mesh, cloud, labeled shape, dict of those, or raw points.

    Every piece of one call shares the same phase ``f``.
    """
    cfg = cfg or PerturbConfig()
    f = sine_phase(seed) if phase is None else float(phase)
    a, w = cfg.amplitude, cfg.omega

    def cloud_fn(c: PointCloud) -> PointCloud:
        return PointCloud(warp_points(c.points, a, w, f), warp_normals(c.points, c.normals, a, w, f), c.source_face)

    return _apply(geom, lambda p: warp_points(p, a, w, f), cloud_fn)


def sample_similarity(cfg: PerturbConfig | None = None, seed=0) -> SimilarityTransform:
    cfg = cfg or PerturbConfig()
    rng = np.random.default_rng(seed)
    s = rng.uniform(*cfg.scale_range) if cfg.scale_range[0] != cfg.scale_range[1] else cfg.scale_range[0]
    lo, hi = cfg.translation_range
    t = rng.uniform(lo, hi, size=3) if lo != hi else np.full(3, lo)
    return SimilarityTransform(float(s), t)


def perturb_similarity(geom, cfg: PerturbConfig | None = None, seed=0):
    """One global scale and translation for everything passed in; returns (geometry, transform)."""
    xf = sample_similarity(cfg, seed)

    def cloud_fn(c: PointCloud) -> PointCloud:
        return PointCloud(xf.apply(c.points), c.normals.copy(), c.source_face)

    return _apply(geom, xf.apply, cloud_fn), xf
