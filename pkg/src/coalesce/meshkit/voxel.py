"""Inside/outside classification by ray parity, voxel grids and dilation."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .mesh import TriMesh

# tiny irrational offsets keep rays off exactly-aligned edges and vertices
_JITTER = np.array([0.41421356237e-9, 0.73205080757e-9])


@dataclass(frozen=True)
class GridSpec:
    resolution: tuple[int, int, int]
    origin: tuple[float, float, float]  # min corner of cell (0, 0, 0)
    cell_size: float

    def __post_init__(self):
        res = tuple(int(r) for r in np.broadcast_to(np.asarray(self.resolution), (3,)))
        if min(res) < 2:
            raise ValueError(f"grid resolution must be >= 2 per axis, got {res}")
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "origin", tuple(float(x) for x in np.asarray(self.origin).reshape(3)))
        object.__setattr__(self, "cell_size", float(self.cell_size))

    @classmethod
    def cube(cls, resolution: int, half_extent: float = 0.55, center=(0.0, 0.0, 0.0)) -> GridSpec:
        h = 2.0 * half_extent / resolution
        return cls((resolution,) * 3, np.asarray(center, dtype=np.float64) - half_extent, h)

    @classmethod
    def around(cls, lo, hi, resolution: int, margin_cells: int = 1) -> GridSpec:
        lo, hi = np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64)
        extent = float(np.max(hi - lo))
        if extent <= 0:
            extent = 1.0
        h = extent / (resolution - 2 * margin_cells - 1e-9)
        center = 0.5 * (lo + hi)
        return cls((resolution,) * 3, center - 0.5 * resolution * h, h)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.resolution

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.resolution[axis]) + 0.5) * self.cell_size

    def centers(self) -> np.ndarray:
        """All cell centers, shape (nx, ny, nz, 3)."""
        xs, ys, zs = (self.axis_centers(a) for a in range(3))
        return np.stack(np.meshgrid(xs, ys, zs, indexing="ij"), axis=-1)

    def index_of(self, points: np.ndarray) -> np.ndarray:
        return np.floor((np.asarray(points) - np.array(self.origin)) / self.cell_size).astype(np.int64)

    def upper(self) -> np.ndarray:
        return np.array(self.origin) + np.array(self.resolution) * self.cell_size


@dataclass
class OccupancyGrid:
    spec: GridSpec
    occupancy: np.ndarray  # bool (nx, ny, nz), True = inside
    flagged: bool = False  # labels are best effort (open mesh or axis disagreement)

    def __post_init__(self):
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        if self.occupancy.shape != self.spec.resolution:
            raise ValueError(f"occupancy shape {self.occupancy.shape} != grid resolution {self.spec.resolution}")

    @property
    def resolution(self) -> tuple[int, int, int]:
        return self.spec.resolution

    def count(self) -> int:
        return int(self.occupancy.sum())

    def with_occupancy(self, occ: np.ndarray) -> OccupancyGrid:
        return OccupancyGrid(self.spec, occ, self.flagged)


def _triangles_of(meshes) -> list[TriMesh]:
    if isinstance(meshes, TriMesh):
        return [meshes]
    return list(meshes)


def _column_hits(tri: np.ndarray, query_uv: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Intersections of axis-parallel lines with triangles.

    ``tri`` is (T, 3, 3); each query is a line parallel to ``axis`` through
    the given coordinates on the two other axes. Returns (query index, hit
    coordinate along ``axis``) pairs.
    """
    other = [a for a in range(3) if a != axis]
    uv = tri[:, :, other]
    w = tri[:, :, axis]
    q = query_uv + _JITTER
    if len(tri) == 0 or len(q) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)

    lo, hi = q.min(axis=0), q.max(axis=0)
    nb = int(np.clip(np.sqrt(len(tri)), 1, 512))
    size = np.maximum((hi - lo) / nb, 1e-12)

    def bin_of(x):
        return np.clip(np.floor((x - lo) / size).astype(np.int64), 0, nb - 1)

    tmin, tmax = uv.min(axis=1), uv.max(axis=1)
    # drop triangles entirely outside the query footprint
    valid = np.all(tmax >= lo - size, axis=1) & np.all(tmin <= hi + size, axis=1)
    tids = np.flatnonzero(valid)
    b0, b1 = bin_of(tmin[tids]), bin_of(tmax[tids])
    span = b1 - b0 + 1
    per_tri = span[:, 0] * span[:, 1]
    rep = np.repeat(np.arange(len(tids)), per_tri)
    local = np.arange(per_tri.sum()) - np.repeat(np.cumsum(per_tri) - per_tri, per_tri)
    bu = b0[rep, 0] + local % span[rep, 0]
    bv = b0[rep, 1] + local // span[rep, 0]
    pair_tri = tids[rep]
    pair_bin = bu * nb + bv

    qb = bin_of(q)
    qbin = qb[:, 0] * nb + qb[:, 1]
    qorder = np.argsort(qbin, kind="stable")
    qsorted = qbin[qorder]
    start = np.searchsorted(qsorted, pair_bin, side="left")
    stop = np.searchsorted(qsorted, pair_bin, side="right")
    cnt = stop - start
    rep2 = np.repeat(np.arange(len(pair_bin)), cnt)
    off = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    qi = qorder[start[rep2] + off]
    ti = pair_tri[rep2]

    a, b, c = uv[ti, 0], uv[ti, 1], uv[ti, 2]
    p = q[qi]

    def cross2(x, y):
        return x[:, 0] * y[:, 1] - x[:, 1] * y[:, 0]

    area = cross2(b - a, c - a)
    e_a = cross2(c - b, p - b)
    e_b = cross2(a - c, p - c)
    e_c = cross2(b - a, p - a)
    inside = (area != 0) & (
        ((e_a >= 0) & (e_b >= 0) & (e_c >= 0)) | ((e_a <= 0) & (e_b <= 0) & (e_c <= 0))
    )
    qi, ti = qi[inside], ti[inside]
    area = area[inside]
    whit = (e_a[inside] * w[ti, 0] + e_b[inside] * w[ti, 1] + e_c[inside] * w[ti, 2]) / area
    return qi, whit


def _parity_inside(mesh: TriMesh, points: np.ndarray, axis: int) -> np.ndarray:
    tri = mesh.vertices[mesh.triangles]
    other = [a for a in range(3) if a != axis]
    qi, whit = _column_hits(tri, points[:, other], axis)
    above = whit > points[qi, axis]
    counts = np.bincount(qi[above], minlength=len(points))
    return counts % 2 == 1


def points_inside(meshes, points: np.ndarray, return_agreement: bool = False):
    """Inside test for arbitrary points: three axis rays, majority vote.

    ``meshes`` may be a single closed mesh or a list whose solids are united.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    inside = np.zeros(len(pts), dtype=bool)
    agree = np.ones(len(pts), dtype=bool)
    for mesh in _triangles_of(meshes):
        if mesh.is_empty():
            continue
        votes = np.stack([_parity_inside(mesh, pts, ax) for ax in range(3)])
        s = votes.sum(axis=0)
        inside |= s >= 2
        agree &= (s == 0) | (s == 3)
    if return_agreement:
        return inside, agree
    return inside


def _grid_parity(mesh: TriMesh, spec: GridSpec, axis: int) -> np.ndarray:
    other = [a for a in range(3) if a != axis]
    cu, cv = spec.axis_centers(other[0]), spec.axis_centers(other[1])
    U, V = np.meshgrid(cu, cv, indexing="ij")
    cols = np.stack([U.ravel(), V.ravel()], axis=1)
    qi, whit = _column_hits(mesh.vertices[mesh.triangles], cols, axis)
    n = spec.resolution[axis]
    # first cell whose center lies above the hit
    k = np.ceil((whit - spec.origin[axis]) / spec.cell_size - 0.5).astype(np.int64)
    k = np.clip(k, 0, n)
    diff = np.zeros((len(cols), n + 1), dtype=np.int32)
    np.add.at(diff, (qi, k), 1)
    below = np.cumsum(diff[:, :n], axis=1)
    par = (below % 2 == 1).reshape(len(cu), len(cv), n)
    # move the ray axis back to its place
    return np.moveaxis(par, 2, axis)


def voxel_occupancy(meshes, resolution=None, spec: GridSpec | None = None) -> OccupancyGrid:
    """Label each cell inside iff its center is inside (3-ray parity vote).

    Without an explicit ``spec`` the grid is fitted around the meshes with
    one empty cell of margin.
    """
    meshes = _triangles_of(meshes)
    if spec is None:
        if resolution is None:
            raise ValueError("give either a resolution or a grid spec")
        nonempty = [m for m in meshes if not m.is_empty()]
        if nonempty:
            lo = np.min([m.bounds()[0] for m in nonempty], axis=0)
            hi = np.max([m.bounds()[1] for m in nonempty], axis=0)
        else:
            lo, hi = -np.ones(3) * 0.5, np.ones(3) * 0.5
        spec = GridSpec.around(lo, hi, int(np.max(resolution)))
    occ = np.zeros(spec.resolution, dtype=bool)
    flagged = False
    for mesh in meshes:
        if mesh.is_empty():
            continue
        votes = sum(_grid_parity(mesh, spec, ax).astype(np.int8) for ax in range(3))
        occ |= votes >= 2
        flagged |= bool(np.any((votes == 1) | (votes == 2))) or mesh.boundary_edge_count() > 0
    return OccupancyGrid(spec, occ, flagged)


_SIX = ndimage.generate_binary_structure(3, 1)


def dilate(grid: OccupancyGrid, steps: int) -> OccupancyGrid:
    """6-connected morphological dilation, ``steps`` times."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if steps == 0:
        return grid.with_occupancy(grid.occupancy.copy())
    occ = ndimage.binary_dilation(grid.occupancy, structure=_SIX, iterations=steps)
    return grid.with_occupancy(occ)


_HEADER = struct.Struct("<3I3ff")


def grid_to_bytes(grid: OccupancyGrid) -> bytes:
    spec = grid.spec
    head = _HEADER.pack(*spec.resolution, *spec.origin, spec.cell_size)
    # x varies fastest
    flat = grid.occupancy.transpose(2, 1, 0).ravel()
    return head + np.packbits(flat, bitorder="little").tobytes()


def grid_from_bytes(buf: bytes) -> OccupancyGrid:
    vals = _HEADER.unpack_from(buf, 0)
    res, origin, h = vals[:3], vals[3:6], vals[6]
    n = int(np.prod(res))
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8, offset=_HEADER.size), bitorder="little")[:n]
    occ = bits.astype(bool).reshape(res[2], res[1], res[0]).transpose(2, 1, 0)
    return OccupancyGrid(GridSpec(res, origin, h), occ)


def save_grid(path, grid: OccupancyGrid) -> Path:
    path = Path(path)
    path.write_bytes(grid_to_bytes(grid))
    return path


def load_grid(path) -> OccupancyGrid:
    return grid_from_bytes(Path(path).read_bytes())
