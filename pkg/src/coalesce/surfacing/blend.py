"""Harmonic (uniform Laplacian) deformation of the joint mesh onto the part loops."""
from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import cg

from ..meshkit import TriMesh
from .loops import LoopCorrespondence


class BlendError(RuntimeError):
    pass


def uniform_laplacian(mesh: TriMesh) -> sparse.csr_matrix:
    """L = D - A over the unique undirected edges."""
    n = mesh.n_vertices
    e = mesh.edges()
    a = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    adj = ((a + a.T) > 0).astype(np.float64).tocsr()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    return (sparse.diags(deg) - adj).tocsr()


def harmonic_displacement(mesh: TriMesh, fixed: np.ndarray, values: np.ndarray, rtol: float = 1e-8) -> tuple[np.ndarray, float]:
    """Solve L d = 0 on free vertices with d = ``values`` on ``fixed`` ones.

    Free vertices in components without any fixed vertex (and vertices in
    no triangle) get zero displacement. Returns (d, relative residual).
    """
    n = mesh.n_vertices
    fixed = np.asarray(fixed, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64).reshape(len(fixed), -1)
    d = np.zeros((n, values.shape[1]))
    if len(fixed) == 0 or mesh.is_empty():
        return d, 0.0
    d[fixed] = values
    L = uniform_laplacian(mesh)
    adj = (L != 0).astype(np.int8)
    _, comp = connected_components(adj, directed=False)
    used = np.zeros(n, dtype=bool)
    used[mesh.triangles.ravel()] = True
    is_fixed = np.zeros(n, dtype=bool)
    is_fixed[fixed] = True
    anchored = np.isin(comp, np.unique(comp[fixed]))
    free = np.flatnonzero(used & anchored & ~is_fixed)
    if len(free) == 0:
        return d, 0.0
    Lff = L[free][:, free].tocsr()
    Lfc = L[free][:, fixed]
    worst = 0.0
    for k in range(values.shape[1]):
        b = -(Lfc @ values[:, k])
        nb = np.linalg.norm(b)
        if nb == 0:
            continue
        # iterate past the target so the true (not recurrence) residual meets it
        x, info = cg(Lff, b, rtol=0.01 * rtol, atol=0.0, maxiter=10 * len(free))
        res = np.linalg.norm(Lff @ x - b) / nb
        if res > rtol:
            raise BlendError(f"conjugate gradient did not converge (info={info}, relative residual {res:.3e})")
        d[free, k] = x
        worst = max(worst, res)
    return d, worst


def poisson_blend(joint: TriMesh, corrs: list[LoopCorrespondence]) -> TriMesh:
    """Move every T vertex onto its matched S vertex and spread the motion harmonically.

    Parts are never touched; only the joint mesh deforms.
    """
    matched = [c for c in corrs if c.matched]
    if not matched or joint.is_empty():
        return joint.copy()
    idx, tgt = [], []
    for c in matched:
        idx.extend(c.joint_loop)
        tgt.extend(c.targets)
    idx = np.asarray(idx, dtype=np.int64)
    tgt = np.asarray(tgt)
    # a vertex shared by two loops keeps its first target
    idx, first = np.unique(idx, return_index=True)
    tgt = tgt[first]
    d, _ = harmonic_displacement(joint, idx, tgt - joint.vertices[idx])
    return TriMesh(joint.vertices + d, joint.triangles.copy(), joint.face_labels)
