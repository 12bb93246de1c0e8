from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

DEGENERATE_AREA = 1e-12


class NonManifoldError(ValueError):
    pass


@dataclass
class TriMesh:
    """Indexed triangle mesh, counter-clockwise triangles face outward.

    ``face_labels`` optionally tags every triangle with a part label, which is
    how OBJ ``g`` groups survive a load/save round trip.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    face_labels: list[str] | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise IndexError(f"triangle index out of range for {len(self.vertices)} vertices")
        if self.face_labels is not None and len(self.face_labels) != len(self.triangles):
            raise ValueError("face_labels must have one entry per triangle")

    @classmethod
    def empty(cls) -> TriMesh:
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def is_empty(self) -> bool:
        return self.n_triangles == 0

    def copy(self) -> TriMesh:
        labels = list(self.face_labels) if self.face_labels is not None else None
        return TriMesh(self.vertices.copy(), self.triangles.copy(), labels)

    def face_cross(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        return np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_cross(), axis=1)

    def area(self) -> float:
        return float(self.face_areas().sum())

    def face_normals(self) -> np.ndarray:
        c = self.face_cross()
        n = np.linalg.norm(c, axis=1, keepdims=True)
        return c / np.where(n > 0, n, 1.0)

    @property
    def vertex_normals(self) -> np.ndarray:
        """Area-weighted average of incident face normals, unit length."""
        acc = np.zeros_like(self.vertices)
        c = self.face_cross()
        for k in range(3):
            np.add.at(acc, self.triangles[:, k], c)
        n = np.linalg.norm(acc, axis=1, keepdims=True)
        return acc / np.where(n > 0, n, 1.0)

    def face_centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.n_vertices == 0:
            return np.zeros(3), np.zeros(3)
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def diameter(self) -> float:
        lo, hi = self.bounds()
        return float(np.linalg.norm(hi - lo))

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted vertex pairs."""
        e = np.concatenate([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def edge_face_counts(self) -> dict[tuple[int, int], int]:
        counts: dict[tuple[int, int], int] = defaultdict(int)
        for a, b, c in self.triangles.tolist():
            for u, v in ((a, b), (b, c), (c, a)):
                counts[(u, v) if u < v else (v, u)] += 1
        return counts

    def is_edge_manifold(self) -> bool:
        return all(c <= 2 for c in self.edge_face_counts().values())

    def boundary_edge_count(self) -> int:
        return sum(1 for c in self.edge_face_counts().values() if c == 1)

    def longest_edge(self) -> float:
        if self.is_empty():
            return 0.0
        e = self.edges()
        return float(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1).max())

    def vertex_neighbors(self) -> list[set[int]]:
        nbrs: list[set[int]] = [set() for _ in range(self.n_vertices)]
        for a, b in self.edges().tolist():
            nbrs[a].add(b)
            nbrs[b].add(a)
        return nbrs

    def euler_characteristic(self) -> int:
        used = np.unique(self.triangles)
        return int(len(used) - len(self.edges()) + self.n_triangles)

    def submesh(self, keep_faces: np.ndarray) -> TriMesh:
        """Keep the selected triangles and drop vertices nobody references."""
        keep_faces = np.asarray(keep_faces)
        if keep_faces.dtype == bool:
            keep_faces = np.flatnonzero(keep_faces)
        tris = self.triangles[keep_faces]
        used = np.unique(tris)
        remap = np.full(self.n_vertices, -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        labels = [self.face_labels[i] for i in keep_faces] if self.face_labels is not None else None
        return TriMesh(self.vertices[used], remap[tris], labels)

    def transformed(self, scale: float, offset) -> TriMesh:
        out = self.copy()
        out.vertices = self.vertices * scale + np.asarray(offset, dtype=np.float64)
        return out

    def remove_degenerate(self, tol: float = DEGENERATE_AREA) -> TriMesh:
        t = self.triangles
        distinct = (t[:, 0] != t[:, 1]) & (t[:, 1] != t[:, 2]) & (t[:, 0] != t[:, 2])
        keep = distinct & (self.face_areas() > tol)
        if keep.all():
            return self
        labels = [l for l, k in zip(self.face_labels, keep) if k] if self.face_labels is not None else None
        return TriMesh(self.vertices, t[keep], labels)


def merge_meshes(meshes: list[TriMesh]) -> TriMesh:
    verts, tris, labels, offset = [], [], [], 0
    any_labels = any(m.face_labels is not None for m in meshes)
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        if any_labels:
            labels.extend(m.face_labels if m.face_labels is not None else [""] * m.n_triangles)
        offset += m.n_vertices
    if not verts:
        return TriMesh.empty()
    return TriMesh(np.concatenate(verts), np.concatenate(tris), labels if any_labels else None)


def weld_vertices(mesh: TriMesh, tol: float) -> TriMesh:
    """Merge vertices closer than ``tol`` and drop triangles that collapse.

    Vertices are snapped by a KD-tree union of near pairs, so chains of
    near-duplicates collapse onto the lowest index. Triangles that end up with
    a repeated vertex, or duplicated with the opposite orientation cancelled
    against each other, are removed.
    """
    from scipy.spatial import cKDTree

    if mesh.n_vertices == 0:
        return mesh
    parent = np.arange(mesh.n_vertices)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    if tol > 0:
        pairs = cKDTree(mesh.vertices).query_pairs(tol, output_type="ndarray")
        for a, b in sorted(map(tuple, pairs.tolist())):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(mesh.n_vertices)])
    tris = roots[mesh.triangles]
    ok = (tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) & (tris[:, 0] != tris[:, 2])
    tris = tris[ok]
    labels = [l for l, k in zip(mesh.face_labels, ok) if k] if mesh.face_labels is not None else None
    tris, labels = _cancel_opposite_duplicates(tris, labels)
    welded = TriMesh(mesh.vertices, tris, labels)
    return welded.submesh(np.arange(welded.n_triangles))


def _cancel_opposite_duplicates(tris: np.ndarray, labels):
    """Remove pairs of triangles that cover the same vertex triple."""
    if len(tris) == 0:
        return tris, labels
    key = np.sort(tris, axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    keep = np.ones(len(tris), dtype=bool)
    seen_first: dict[int, int] = {}
    for i, g in enumerate(inverse.tolist()):
        if counts[g] == 1:
            continue
        if g in seen_first:
            j = seen_first.pop(g)
            keep[i] = False
            keep[j] = False
        else:
            seen_first[g] = i
    if keep.all():
        return tris, labels
    labels = [l for l, k in zip(labels, keep) if k] if labels is not None else None
    return tris[keep], labels


@dataclass
class BoundaryLoop:
    """Closed chain of boundary vertices; the surface lies on the left of travel."""

    vertex_ids: np.ndarray

    def __post_init__(self):
        self.vertex_ids = np.asarray(self.vertex_ids, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.vertex_ids)

    def edges(self) -> list[tuple[int, int]]:
        ids = self.vertex_ids.tolist()
        return list(zip(ids, ids[1:] + ids[:1]))


def boundary_loops(mesh: TriMesh) -> list[BoundaryLoop]:
    """Extract directed boundary loops.

    A boundary edge has exactly one incident triangle; its direction is taken
    from that triangle's winding. Pinch vertices (two outgoing boundary edges)
    split into separate loops so no loop repeats a vertex.
    """
    counts = mesh.edge_face_counts()
    for edge, c in counts.items():
        if c > 2:
            raise NonManifoldError(f"non-manifold edge {edge} has {c} incident triangles")
    outgoing: dict[int, list[int]] = defaultdict(list)
    for a, b, c in mesh.triangles.tolist():
        for u, v in ((a, b), (b, c), (c, a)):
            if counts[(u, v) if u < v else (v, u)] == 1:
                outgoing[u].append(v)
    for u in outgoing:
        outgoing[u].sort()

    loops: list[BoundaryLoop] = []
    for start in sorted(outgoing):
        path, pos, cur = [start], {start: 0}, start
        while outgoing[cur]:
            nxt = outgoing[cur].pop(0)
            if nxt in pos:
                i = pos[nxt]
                loops.append(BoundaryLoop(path[i:]))
                for v in path[i + 1:]:
                    del pos[v]
                path = path[:i + 1]
            else:
                pos[nxt] = len(path)
                path.append(nxt)
            cur = nxt
        # a leftover open chain means the boundary is not closed; it is dropped
    return loops


@dataclass
class PointCloud:
    points: np.ndarray
    normals: np.ndarray
    source_face: np.ndarray = field(default=None)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if self.source_face is None:
            self.source_face = np.full(len(self.points), -1, dtype=np.int64)
        self.source_face = np.asarray(self.source_face, dtype=np.int64)
        if not (len(self.points) == len(self.normals) == len(self.source_face)):
            raise ValueError("points, normals and source_face must have equal length")

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, idx) -> PointCloud:
        return PointCloud(self.points[idx], self.normals[idx], self.source_face[idx])

    @classmethod
    def empty(cls) -> PointCloud:
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0, dtype=np.int64))

    @classmethod
    def concatenate(cls, clouds: list[PointCloud]) -> PointCloud:
        if not clouds:
            return cls.empty()
        return cls(
            np.concatenate([c.points for c in clouds]),
            np.concatenate([c.normals for c in clouds]),
            np.concatenate([c.source_face for c in clouds]),
        )
