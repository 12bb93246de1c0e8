"""Joining the extracted joint mesh and the part meshes into one surface."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..meshkit import TriMesh, boundary_loops, merge_meshes, weld_vertices
from .blend import poisson_blend
from .bridge import bridge_loops
from .field import ScalarField, marching_cubes
from .loops import LoopCorrespondence, closed_neighborhoods, loop_correspondence, remove_redundant

log = logging.getLogger(__name__)


@dataclass
class StitchResult:
    mesh: TriMesh
    flagged: bool = False  # joint missing or no loop matched: output is not blended
    correspondences: list[LoopCorrespondence] = field(default_factory=list)
    raw_joint: TriMesh | None = None
    trimmed_joint: TriMesh | None = None
    blended_joint: TriMesh | None = None

    @property
    def matched(self) -> int:
        return sum(c.matched for c in self.correspondences)


def _compact(mesh: TriMesh) -> TriMesh:
    used = np.zeros(mesh.n_vertices, dtype=bool)
    used[mesh.triangles.ravel()] = True
    remap = np.cumsum(used) - 1
    return TriMesh(mesh.vertices[used], remap[mesh.triangles], mesh.face_labels)


def weld_tolerance(meshes: list[TriMesh], rel: float = 1e-6) -> float:
    pts = np.concatenate([m.vertices for m in meshes if m.n_vertices])
    return rel * float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


def stitch_meshes(parts: list[TriMesh], joint: TriMesh, weld_rel: float = 1e-6) -> StitchResult:
    """Correspond, trim, blend and bridge an already extracted joint mesh."""
    nonempty = [p for p in parts if not p.is_empty()]
    if joint.is_empty():
        merged = merge_meshes(nonempty)
        return StitchResult(weld_vertices(merged, weld_tolerance(nonempty, weld_rel)) if nonempty else merged,
                            flagged=True, raw_joint=joint)
    normals = joint.vertex_normals
    nbrs = closed_neighborhoods(joint)
    corrs = []
    for pi, part in enumerate(parts):
        if part.is_empty():
            continue
        pn = part.vertex_normals
        for li, loop in enumerate(boundary_loops(part)):
            ids = np.asarray(loop.vertex_ids)
            c = loop_correspondence(part.vertices[ids], pn[ids], joint, joint_normals=normals, neighborhoods=nbrs)
            c.part_id, c.loop_id = pi, li
            corrs.append(c)
    matched = [c for c in corrs if c.matched]
    if not matched:
        merged = merge_meshes(nonempty + [joint])
        return StitchResult(weld_vertices(merged, weld_tolerance(nonempty + [joint], weld_rel)), True, corrs, joint)
    trimmed = remove_redundant(joint, matched)
    blended = poisson_blend(trimmed, matched)

    # bridge rings: part loop vertices index into the parts block, T into the joint block
    offsets = np.cumsum([0] + [p.n_vertices for p in parts])
    joint_off = offsets[-1]
    rings = []
    for c in matched:
        loop = boundary_loops(parts[c.part_id])[c.loop_id]
        a_ids = offsets[c.part_id] + np.asarray(loop.vertex_ids)
        b_ids = joint_off + np.asarray(c.joint_loop)
        ring = bridge_loops(c.part_positions, blended.vertices[c.joint_loop])
        both = np.concatenate([a_ids, b_ids])
        rings.append(both[ring])
    verts = np.concatenate([p.vertices for p in parts] + [blended.vertices])
    tris = np.concatenate([p.triangles + offsets[i] for i, p in enumerate(parts)]
                          + [blended.triangles + joint_off] + rings)
    merged = _compact(TriMesh(verts, tris))
    out = weld_vertices(merged, weld_tolerance([merged], weld_rel))
    return StitchResult(_compact(out), False, corrs, joint, trimmed, blended)


def stitch(parts: list[TriMesh], joint_field: ScalarField, iso: float = 0.5, weld_rel: float = 1e-6) -> StitchResult:
    """Marching cubes on the joint field, then :func:`stitch_meshes`."""
    joint = marching_cubes(joint_field, iso)
    return stitch_meshes(parts, joint, weld_rel)
