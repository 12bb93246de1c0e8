"""Tessellated primitive meshes: fine enough that erosion can remove strips."""
from __future__ import annotations

import numpy as np

from .mesh import TriMesh


def weld_exact(vertices: np.ndarray, triangles: np.ndarray, decimals: int = 9) -> TriMesh:
    key = np.round(vertices, decimals)
    uniq, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    # keep the first original coordinate for each welded vertex
    first = np.full(len(uniq), -1)
    for i, g in enumerate(inverse):
        if first[g] < 0:
            first[g] = i
    tris = inverse[triangles]
    ok = (tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) & (tris[:, 0] != tris[:, 2])
    return TriMesh(vertices[first], tris[ok])


def grid_patch(origin, du, dv, nu: int, nv: int, alternate: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Planar (nu x nv)-cell patch; triangles wind counter-clockwise about du x dv.

    With ``alternate`` the diagonal direction flips with cell parity, giving
    every vertex a symmetric neighbourhood.
    """
    origin, du, dv = (np.asarray(x, dtype=np.float64) for x in (origin, du, dv))
    i, j = np.meshgrid(np.arange(nu + 1), np.arange(nv + 1), indexing="ij")
    verts = origin + (i[..., None] / nu) * du + (j[..., None] / nv) * dv
    verts = verts.reshape(-1, 3)

    def vid(a, b):
        return a * (nv + 1) + b

    tris = []
    for a in range(nu):
        for b in range(nv):
            v00, v10, v11, v01 = vid(a, b), vid(a + 1, b), vid(a + 1, b + 1), vid(a, b + 1)
            if alternate and (a + b) % 2 == 1:
                tris += [(v00, v10, v01), (v10, v11, v01)]
            else:
                tris += [(v00, v10, v11), (v00, v11, v01)]
    return verts, np.array(tris, dtype=np.int64)


def box(lo, hi, spacing: float | None = None, divisions: int | None = None) -> TriMesh:
    """Closed axis-aligned box, outward winding, faces split into a grid."""
    lo, hi = np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64)
    ext = hi - lo
    if spacing is not None:
        n = np.maximum(1, np.ceil(ext / spacing - 1e-9).astype(int))
    else:
        n = np.full(3, divisions or 1)
    verts, tris, off = [], [], 0
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        for sign in (1, -1):
            o = lo.copy()
            if sign > 0:
                o[a] = hi[a]
                du, dv, nu, nv = np.eye(3)[b] * ext[b], np.eye(3)[c] * ext[c], n[b], n[c]
            else:
                du, dv, nu, nv = np.eye(3)[c] * ext[c], np.eye(3)[b] * ext[b], n[c], n[b]
            v, t = grid_patch(o, du, dv, nu, nv)
            verts.append(v)
            tris.append(t + off)
            off += len(v)
    return weld_exact(np.concatenate(verts), np.concatenate(tris))


def icosphere(subdivisions: int = 3, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriMesh:
    t = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
         [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]],
        dtype=np.float64,
    )
    f = np.array(
        [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
         [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
         [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]],
        dtype=np.int64,
    )
    verts = list(v / np.linalg.norm(v, axis=1, keepdims=True))
    faces = f
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces.tolist():
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = np.array(new, dtype=np.int64)
    return TriMesh(np.array(verts) * radius + np.asarray(center, dtype=np.float64), faces)


def cylinder(radius: float, z0: float, z1: float, n_around: int = 32, n_height: int = 8, caps: bool = False) -> TriMesh:
    """Cylinder about the z axis; without caps it is an open tube."""
    ang = 2 * np.pi * np.arange(n_around) / n_around
    zs = np.linspace(z0, z1, n_height + 1)
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    verts = np.concatenate([np.column_stack([ring, np.full(n_around, z)]) for z in zs])
    tris = []
    for h in range(n_height):
        for k in range(n_around):
            a, b = h * n_around + k, h * n_around + (k + 1) % n_around
            c, d = a + n_around, b + n_around
            tris += [(a, b, d), (a, d, c)]
    verts = list(verts)
    if caps:
        bottom = len(verts)
        verts.append(np.array([0.0, 0.0, z0]))
        top = len(verts)
        verts.append(np.array([0.0, 0.0, z1]))
        last = n_height * n_around
        for k in range(n_around):
            tris.append((bottom, (k + 1) % n_around, k))
            tris.append((top, last + k, last + (k + 1) % n_around))
    return TriMesh(np.array(verts), np.array(tris))


def _subdivide_polyline(points: np.ndarray, spacing: float, closed: bool) -> np.ndarray:
    out = []
    n = len(points)
    segs = n if closed else n - 1
    for i in range(segs):
        a, b = points[i], points[(i + 1) % n]
        k = max(1, int(np.ceil(np.linalg.norm(b - a) / spacing - 1e-9)))
        for s in range(k):
            out.append(a + (b - a) * s / k)
    if not closed:
        out.append(points[-1])
    return np.array(out)


def signed_volume(mesh: TriMesh) -> float:
    v = mesh.vertices[mesh.triangles]
    return float(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0)


def orient_outward(mesh: TriMesh) -> TriMesh:
    if signed_volume(mesh) < 0:
        return TriMesh(mesh.vertices, mesh.triangles[:, ::-1], mesh.face_labels)
    return mesh


def revolve(profile, n_around: int = 48, spacing: float | None = None, axis_center=(0.0, 0.0)) -> TriMesh:
    """Surface of revolution about the y axis of an open (r, y) profile.

    Both profile ends must sit on the axis (r = 0); they become poles, so the
    result is closed.
    """
    prof = np.asarray(profile, dtype=np.float64)
    if spacing is not None:
        prof = _subdivide_polyline(prof, spacing, closed=False)
    ang = 2 * np.pi * np.arange(n_around) / n_around
    cx, cz = axis_center
    verts, index = [], {}
    for i, (r, y) in enumerate(prof.tolist()):
        if r <= 1e-12:
            index[(i, 0)] = len(verts)
            verts.append([cx, y, cz])
        else:
            for k, a in enumerate(ang):
                index[(i, k)] = len(verts)
                verts.append([cx + r * np.cos(a), y, cz + r * np.sin(a)])
    tris = []
    for i in range(len(prof) - 1):
        for k in range(n_around):
            k2 = (k + 1) % n_around
            a = index.get((i, k), index.get((i, 0)))
            b = index.get((i, k2), index.get((i, 0)))
            c = index.get((i + 1, k), index.get((i + 1, 0)))
            d = index.get((i + 1, k2), index.get((i + 1, 0)))
            for tri in ((a, b, d), (a, d, c)):
                if len(set(tri)) == 3:
                    tris.append(tri)
    return orient_outward(TriMesh(np.array(verts), np.array(tris)))


def swept_rectangle(center, radius: float, half_width: float, half_height: float, theta0: float, theta1: float,
                    n_arc: int = 24) -> TriMesh:
    """Rectangular-section torus segment in the x-y plane, capped at both ends.

    The arc runs about ``center`` from ``theta0`` to ``theta1`` (radians,
    measured from +x towards +y); the section is ``2*half_width`` radially by
    ``2*half_height`` along z.
    """
    center = np.asarray(center, dtype=np.float64)
    th = np.linspace(theta0, theta1, n_arc + 1)
    corners = [(-half_width, -half_height), (half_width, -half_height), (half_width, half_height), (-half_width, half_height)]
    verts = []
    for t in th:
        d = np.array([np.cos(t), np.sin(t), 0.0])
        for dr, dz in corners:
            verts.append(center + (radius + dr) * d + np.array([0.0, 0.0, dz]))
    tris = []
    for i in range(n_arc):
        for k in range(4):
            a, b = i * 4 + k, i * 4 + (k + 1) % 4
            c, d = a + 4, b + 4
            tris += [(a, b, d), (a, d, c)]
    last = n_arc * 4
    tris += [(0, 2, 1), (0, 3, 2), (last, last + 1, last + 2), (last, last + 2, last + 3)]
    return orient_outward(TriMesh(np.array(verts), np.array(tris)))


def strip(length: float = 1.0, width: float = 0.2, nu: int = 20, nv: int = 4) -> TriMesh:
    """Flat x-y strip with alternating diagonals, normal +z."""
    v, t = grid_patch((0, 0, 0), (length, 0, 0), (0, width, 0), nu, nv, alternate=True)
    return TriMesh(v, t)
