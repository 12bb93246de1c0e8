"""Sampled scalar fields and iso-surface extraction."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from skimage import measure

from ..meshkit import GridSpec, TriMesh


@dataclass
class ScalarField:
    spec: GridSpec
    values: np.ndarray  # (nx, ny, nz), sampled at cell centers

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.spec.resolution:
            raise ValueError(f"field shape {self.values.shape} != grid resolution {self.spec.resolution}")

    @classmethod
    def from_function(cls, spec: GridSpec, fn: Callable[[np.ndarray], np.ndarray], mask: np.ndarray | None = None,
                      fill: float = 0.0) -> ScalarField:
        """Evaluate ``fn`` at cell centers; cells outside ``mask`` get ``fill``."""
        centers = spec.centers().reshape(-1, 3)
        vals = np.full(len(centers), fill, dtype=np.float64)
        sel = np.arange(len(centers)) if mask is None else np.flatnonzero(np.asarray(mask).ravel())
        if len(sel):
            vals[sel] = fn(centers[sel])
        return cls(spec, vals.reshape(spec.resolution))

    def trilinear(self, points: np.ndarray) -> np.ndarray:
        """Trilinear interpolation between cell centers (clamped at the border)."""
        g = (np.asarray(points) - np.asarray(self.spec.origin)) / self.spec.cell_size - 0.5
        res = np.array(self.values.shape)
        i0 = np.clip(np.floor(g).astype(np.int64), 0, res - 2)
        f = np.clip(g - i0, 0.0, 1.0)
        out = np.zeros(len(g))
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    w = (f[:, 0] if dx else 1 - f[:, 0]) * (f[:, 1] if dy else 1 - f[:, 1]) * (f[:, 2] if dz else 1 - f[:, 2])
                    out += w * self.values[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
        return out


def marching_cubes(field: ScalarField, iso: float = 0.5, pad_value: float | None = 0.0) -> TriMesh:
    """Iso-surface with outward (decreasing-field) winding.

    The field is padded with ``pad_value`` (one cell on every side) so that
    surfaces meeting the grid border still close up; ``None`` disables it.
    A field that never crosses ``iso`` gives an empty mesh.
    """
    vals = field.values
    h = field.spec.cell_size
    origin = np.asarray(field.spec.origin) + 0.5 * h
    if pad_value is not None:
        vals = np.pad(vals, 1, constant_values=pad_value)
        origin = origin - h
    if not (vals.min() < iso < vals.max()):
        return TriMesh.empty()
    verts, faces, _, _ = measure.marching_cubes(vals, level=iso, spacing=(h, h, h), allow_degenerate=False)
    # scikit-image winds triangles the other way round for a field that
    # decreases outward; flip so normals point out of the high region
    mesh = TriMesh(verts.astype(np.float64) + origin, faces[:, ::-1].astype(np.int64))
    return mesh.remove_degenerate()
