"""ASCII OBJ reading and writing. Part labels travel as ``g <label>`` groups."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import DEGENERATE_AREA, TriMesh


class MeshFormatError(ValueError):
    pass


def load_mesh(path) -> TriMesh:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mesh file not found: {path}")
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    face_lines: list[int] = []
    labels: list[str] = []
    label = ""
    saw_group = False
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                try:
                    verts.append([float(x) for x in parts[1:4]])
                except ValueError:
                    raise MeshFormatError(f"{path}:{lineno}: cannot parse vertex {line.strip()!r}") from None
                if len(verts[-1]) != 3:
                    raise MeshFormatError(f"{path}:{lineno}: vertex needs 3 coordinates")
            elif tag == "f":
                if len(parts) < 4:
                    raise MeshFormatError(f"{path}:{lineno}: face needs at least 3 vertices")
                idx = []
                for tok in parts[1:]:
                    try:
                        i = int(tok.split("/")[0])
                    except ValueError:
                        raise MeshFormatError(f"{path}:{lineno}: cannot parse face index {tok!r}") from None
                    i = i - 1 if i > 0 else len(verts) + i
                    if i < 0 or i >= len(verts):
                        raise MeshFormatError(f"{path}:{lineno}: index out of range: vertex {tok} ({len(verts)} vertices defined)")
                    idx.append(i)
                # fan triangulation
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
                    face_lines.append(lineno)
                    labels.append(label)
            elif tag in ("g", "usemtl", "o"):
                if tag == "g" or not saw_group:
                    label = " ".join(parts[1:])
                saw_group = saw_group or tag == "g"
    if not faces:
        raise MeshFormatError(f"{path}: empty mesh (no faces)")
    mesh = TriMesh(np.array(verts), np.array(faces), labels if any(labels) else None)
    return mesh.remove_degenerate(DEGENERATE_AREA)


def save_mesh(path, mesh: TriMesh, precision: int = 10) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = f"v %.{precision}g %.{precision}g %.{precision}g\n"
    lines = [fmt % tuple(v) for v in mesh.vertices.tolist()]
    current = None
    for i, (a, b, c) in enumerate(mesh.triangles.tolist()):
        if mesh.face_labels is not None and mesh.face_labels[i] != current:
            current = mesh.face_labels[i]
            lines.append(f"g {current}\n")
        lines.append(f"f {a + 1} {b + 1} {c + 1}\n")
    path.write_text("".join(lines))
    return path


def split_by_label(mesh: TriMesh) -> dict[str, TriMesh]:
    if mesh.face_labels is None:
        return {"": mesh}
    labels = np.array(mesh.face_labels)
    out = {}
    for lab in dict.fromkeys(mesh.face_labels):
        sub = mesh.submesh(np.flatnonzero(labels == lab))
        sub.face_labels = None
        out[lab] = sub
    return out


def load_labeled_parts(path) -> dict[str, TriMesh]:
    return split_by_label(load_mesh(path))


def save_labeled_parts(path, parts: dict[str, TriMesh]) -> Path:
    from .mesh import merge_meshes

    tagged = []
    for label, m in parts.items():
        m = m.copy()
        m.face_labels = [label] * m.n_triangles
        tagged.append(m)
    return save_mesh(path, merge_meshes(tagged))


def save_polylines(path, polylines: list[np.ndarray]) -> Path:
    """Debug dump of closed polylines as OBJ ``l`` elements."""
    path = Path(path)
    lines, offset = [], 0
    for pl in polylines:
        pl = np.asarray(pl).reshape(-1, 3)
        lines += [f"v {x:.10g} {y:.10g} {z:.10g}\n" for x, y, z in pl.tolist()]
        ids = [str(offset + i + 1) for i in range(len(pl))]
        if ids:
            lines.append("l " + " ".join(ids + ids[:1]) + "\n")
        offset += len(pl)
    path.write_text("".join(lines))
    return path
