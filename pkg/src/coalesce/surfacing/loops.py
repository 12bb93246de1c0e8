"""Matching part boundary loops to vertex loops on the joint mesh."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.sparse import coo_matrix

from ..meshkit import TriMesh

log = logging.getLogger(__name__)

RETRY_SEEDS = tuple(range(8))


def metric_d(p: np.ndarray, n_p: np.ndarray, q: np.ndarray, n_q: np.ndarray) -> np.ndarray:
    """D(p, q) = |p - q| * (2 - n_p . n_q); broadcasts over q."""
    return np.linalg.norm(q - p, axis=-1) * (2.0 - n_q @ n_p)


@dataclass
class LoopCorrespondence:
    part_positions: np.ndarray  # S vertex positions, loop order
    part_normals: np.ndarray
    joint_loop: list[int] = field(default_factory=list)  # T, vertex ids of the joint mesh in S's direction
    targets: np.ndarray | None = None  # per T vertex: position of its D-nearest S vertex
    target_index: np.ndarray | None = None  # which S vertex that is
    part_id: int = -1
    loop_id: int = -1
    seed: int | None = None

    @property
    def matched(self) -> bool:
        return len(self.joint_loop) >= 3

    @property
    def status(self) -> str:
        return "matched" if self.matched else "failed"


def densify_loop(positions: np.ndarray, normals: np.ndarray, spacing: float) -> tuple[np.ndarray, np.ndarray]:
    """Insert points along long loop edges so no step exceeds ``spacing``."""
    out_p, out_n = [], []
    n = len(positions)
    for i in range(n):
        a, b = positions[i], positions[(i + 1) % n]
        na, nb = normals[i], normals[(i + 1) % n]
        k = max(1, int(np.ceil(np.linalg.norm(b - a) / spacing)))
        for j in range(k):
            w = j / k
            out_p.append(a + w * (b - a))
            m = (1 - w) * na + w * nb
            out_n.append(m / max(np.linalg.norm(m), 1e-12))
    return np.array(out_p), np.array(out_n)


def largest_subloop(seq: list[int]) -> list[int]:
    """Split a closed vertex walk at repeated vertices and keep the longest simple cycle."""
    best: list[int] = []
    path: list[int] = []
    pos: dict[int, int] = {}
    for v in seq:
        if v in pos:
            i = pos[v]
            cyc = path[i:]
            if len(cyc) > len(best):
                best = cyc
            for u in path[i + 1:]:
                del pos[u]
            path = path[: i + 1]
        else:
            pos[v] = len(path)
            path.append(v)
    if len(path) > len(best):
        best = path
    return best


def _walk(S: np.ndarray, NS: np.ndarray, X: np.ndarray, NX: np.ndarray, nbrs: list[np.ndarray], r: int) -> list[int] | None:
    n = len(S)
    init_t = int(np.argmin(metric_d(S[r], NS[r], X, NX)))
    T = [init_t]
    nxt_t = init_t
    # visit every S vertex after the start and finally the start again, so a
    # successful walk ends on the vertex it began with
    for step in range(1, n + 1):
        k = (r + step) % n
        cand = nbrs[nxt_t]
        nxt_t = int(cand[np.argmin(metric_d(S[k], NS[k], X[cand], NX[cand]))])
        if nxt_t != T[-1]:
            T.append(nxt_t)
    if len(T) > 1 and T[-1] == T[0]:
        T.pop()
        return T
    return None


def closed_neighborhoods(mesh: TriMesh) -> list[np.ndarray]:
    """Each vertex's edge neighbours plus itself, sorted."""
    nb = mesh.vertex_neighbors()
    return [np.array(sorted(s | {i}), dtype=np.int64) for i, s in enumerate(nb)]


def loop_correspondence(part_positions: np.ndarray, part_normals: np.ndarray, joint: TriMesh,
                        seeds=RETRY_SEEDS, joint_normals: np.ndarray | None = None,
                        neighborhoods: list[np.ndarray] | None = None, densify: bool = True) -> LoopCorrespondence:
    """Nearest-neighbour walk of the part loop S over the joint mesh.

    Each retry starts at a random S vertex drawn from ``default_rng(seed)``.
    The walk steps to the vertex of the current vertex's closed 1-ring
    closest under D to the next S point. The first retry whose walk closes
    wins; its largest simple sub-loop becomes T.
    """
    S = np.asarray(part_positions, dtype=np.float64)
    NS = np.asarray(part_normals, dtype=np.float64)
    corr = LoopCorrespondence(S, NS)
    if joint.is_empty() or len(S) < 3:
        return corr
    X = joint.vertices
    NX = joint.vertex_normals if joint_normals is None else joint_normals
    nbrs = neighborhoods if neighborhoods is not None else closed_neighborhoods(joint)
    Sw, NSw = S, NS
    if densify:
        e = joint.vertices[joint.edges()]
        spacing = 0.5 * float(np.mean(np.linalg.norm(e[:, 0] - e[:, 1], axis=1)))
        Sw, NSw = densify_loop(S, NS, spacing)
    for seed in seeds:
        r = int(np.random.default_rng(seed).integers(len(Sw)))
        T = _walk(Sw, NSw, X, NX, nbrs, r)
        if T is None:
            continue
        T = largest_subloop(T)
        if len(T) < 3:
            continue
        corr.joint_loop = T
        corr.seed = seed
        # per T vertex, the D-nearest original S vertex
        d = np.stack([metric_d(X[v], NX[v], S, NS) for v in T])
        corr.target_index = np.argmin(d, axis=1)
        corr.targets = S[corr.target_index]
        return corr
    log.info("loop correspondence failed for all %d retries", len(tuple(seeds)))
    return corr


def _face_components(mesh: TriMesh, cut_edges: set[tuple[int, int]]) -> tuple[int, np.ndarray]:
    """Connected face components when edges in ``cut_edges`` are not crossable."""
    tris = mesh.triangles
    nf = len(tris)
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    fid = np.tile(np.arange(nf), 3)
    key = np.sort(e, axis=1)
    cut = np.array([(int(a), int(b)) in cut_edges for a, b in key], dtype=bool) if cut_edges else np.zeros(len(key), bool)
    keep = ~cut
    key, fid = key[keep], fid[keep]
    order = np.lexsort((key[:, 1], key[:, 0]))
    key, fid = key[order], fid[order]
    same = np.all(key[1:] == key[:-1], axis=1)
    a, b = fid[:-1][same], fid[1:][same]
    g = coo_matrix((np.ones(len(a)), (a, b)), shape=(nf, nf))
    return connected_components(g, directed=False)


def remove_redundant(joint: TriMesh, corrs: list[LoopCorrespondence]) -> TriMesh:
    """Cut the joint mesh along every T loop and drop components lying inside parts.

    A component next to a loop is inside its part when the mean of
    (face centroid - nearest T vertex) . (t x n) is negative, with t the
    S travel direction and n the part normal at the matched S vertex, so
    t x n points away from the part's surface. Vertices are kept (indices
    stay valid); only faces go.
    """
    matched = [c for c in corrs if c.matched]
    if not matched or joint.is_empty():
        return joint.copy()
    cut: set[tuple[int, int]] = set()
    for c in matched:
        T = c.joint_loop
        for i in range(len(T)):
            a, b = T[i], T[(i + 1) % len(T)]
            cut.add((min(a, b), max(a, b)))
    ncomp, label = _face_components(joint, cut)
    centroids = joint.face_centroids()
    remove = np.zeros(ncomp, dtype=bool)
    keep_vote = np.zeros(ncomp, dtype=bool)
    for c in matched:
        T = np.array(c.joint_loop)
        S, NS = c.part_positions, c.part_normals
        tangent = np.roll(S, -1, axis=0) - np.roll(S, 1, axis=0)
        tangent /= np.maximum(np.linalg.norm(tangent, axis=1, keepdims=True), 1e-12)
        away = np.cross(tangent, NS)  # points from the part rim toward where the joint continues
        touching = np.flatnonzero(np.isin(joint.triangles, T).any(axis=1))
        comps = np.unique(label[touching])
        for comp in comps:
            faces = np.flatnonzero(label == comp)
            # nearest T vertex per face centroid
            tv = joint.vertices[T]
            d2 = ((centroids[faces, None, :] - tv[None]) ** 2).sum(-1)
            near = np.argmin(d2, axis=1)
            s_idx = c.target_index[near]
            score = np.einsum("ij,ij->i", centroids[faces] - tv[near], away[s_idx]).mean()
            sides = _sides_of_loop(joint, faces, T)
            if sides > 1:
                warnings.warn("joint component lies on both sides of a loop; kept", RuntimeWarning)
                keep_vote[comp] = True
                continue
            if score < 0:
                remove[comp] = True
            else:
                keep_vote[comp] = True
    drop = remove & ~keep_vote
    keep_faces = np.flatnonzero(~drop[label])
    return TriMesh(joint.vertices.copy(), joint.triangles[keep_faces].copy(),
                   None if joint.face_labels is None else joint.face_labels[keep_faces])


def _sides_of_loop(mesh: TriMesh, faces: np.ndarray, T: np.ndarray) -> int:
    """How many sides of the directed loop T the given faces touch.

    A face containing the loop edge a->b in its own winding lies on the left
    of the loop, one containing b->a on the right.
    """
    nv = np.int64(mesh.n_vertices)
    T = np.asarray(T, dtype=np.int64)
    fwd = T * nv + np.roll(T, -1)
    bwd = np.roll(T, -1) * nv + T
    tri = mesh.triangles[faces]
    e = np.concatenate([tri[:, 0] * nv + tri[:, 1], tri[:, 1] * nv + tri[:, 2], tri[:, 2] * nv + tri[:, 0]])
    return int(np.isin(e, fwd).any()) + int(np.isin(e, bwd).any())
