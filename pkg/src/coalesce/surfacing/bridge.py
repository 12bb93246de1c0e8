"""Zipper triangulation between two corresponding closed loops."""
from __future__ import annotations

import numpy as np


def bridge_loops(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Ring of |a| + |b| triangles joining loop ``a`` to loop ``b``.

    Indices refer to the stacked array [a; b]. Both loops must run the same
    way round. The ring starts at a[0] and its nearest b vertex and always
    advances the loop whose step gives the shorter new diagonal (ties
    advance ``a``). Triangles (a_i, b_j, a_i+1) and (a_i, b_j, b_j+1) carry
    the edge a_i+1 -> a_i, opposite to the loop direction, so the ring closes
    against a surface that has ``a`` as a boundary with its interior on the
    left.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = len(a), len(b)
    if na < 3 or nb < 3:
        raise ValueError(f"degenerate loop: bridging needs at least 3 vertices per loop, got {na} and {nb}")
    j0 = int(np.argmin(np.linalg.norm(b - a[0], axis=1)))
    tris = []
    i = j = 0
    while i < na or j < nb:
        ai, ai1 = i % na, (i + 1) % na
        bj, bj1 = (j0 + j) % nb, (j0 + j + 1) % nb
        if i == na:
            advance_a = False
        elif j == nb:
            advance_a = True
        else:
            diag_a = np.linalg.norm(a[ai1] - b[bj])
            diag_b = np.linalg.norm(a[ai] - b[bj1])
            advance_a = diag_a <= diag_b
        if advance_a:
            tris.append((ai, na + bj, ai1))
            i += 1
        else:
            tris.append((ai, na + bj, na + bj1))
            j += 1
    return np.array(tris, dtype=np.int64)
