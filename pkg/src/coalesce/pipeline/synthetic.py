"""Parametric labeled shapes standing in for a real part-segmented dataset.

Chairlike shapes are boxes (seat, four legs, back, optional arms); muglike
shapes are a revolved cup with a rectangular-section handle. Parts overlap
slightly so that every joint is a genuine surface intersection, and no two
part faces are coplanar. Every shape is scaled to unit bounding-box
diagonal and centered on its bounding box. The y axis points up.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..meshkit import TriMesh, load_labeled_parts, merge_meshes, points_inside, save_labeled_parts
from ..meshkit.primitives import box, revolve, swept_rectangle

CATEGORIES = {
    "chairlike": ("back", "seat", "leg", "arm"),
    "muglike": ("body", "handle"),
}

OVERLAP = 0.02  # how far a part reaches into its neighbour, in raw units
SPACING = 0.02  # tessellation edge length, raw units


@dataclass
class LabeledShape:
    """Closed part meshes plus each part's segmentation boundary segments."""

    category: str
    parts: dict[str, TriMesh]
    boundaries: dict[str, np.ndarray] = field(default_factory=dict)  # label -> (K, 2, 3)
    name: str = ""

    @property
    def labels(self) -> list[str]:
        return list(self.parts)

    def mesh(self) -> TriMesh:
        labels = []
        for lab, m in self.parts.items():
            labels += [lab] * m.n_triangles
        merged = merge_meshes(list(self.parts.values()))
        return TriMesh(merged.vertices, merged.triangles, labels)

    def diameter(self) -> float:
        return self.mesh().diameter()


def _chair_parts(rng: np.random.Generator) -> dict[str, TriMesh]:
    W = rng.uniform(0.45, 0.6)
    D = rng.uniform(0.45, 0.6)
    t = rng.uniform(0.05, 0.08)
    h = rng.uniform(0.38, 0.5)
    a = rng.uniform(0.04, 0.06)
    inset = rng.uniform(0.012, 0.035)
    seat_lo = np.array([-W / 2, h, -D / 2])
    seat_hi = np.array([W / 2, h + t, D / 2])
    parts = {"seat": box(seat_lo, seat_hi, SPACING)}

    legs = []
    for sx in (-1, 1):
        for sz in (-1, 1):
            cx = sx * (W / 2 - inset - a / 2)
            cz = sz * (D / 2 - inset - a / 2)
            legs.append(box((cx - a / 2, 0.0, cz - a / 2), (cx + a / 2, h + OVERLAP, cz + a / 2), SPACING))
    parts["leg"] = merge_meshes(legs)

    tb = rng.uniform(0.04, 0.07)
    hb = rng.uniform(0.4, 0.6)
    wb = W - 2 * rng.uniform(0.012, 0.03)
    z0 = -D / 2 + rng.uniform(0.012, 0.025)
    parts["back"] = box((-wb / 2, h + t - OVERLAP, z0), (wb / 2, h + t + hb, z0 + tb), SPACING)

    if rng.random() < 0.5:
        aw = rng.uniform(0.04, 0.06)
        ha = rng.uniform(0.15, 0.25)
        zf = D / 2 - rng.uniform(0.015, 0.04)
        arms = []
        for sx in (-1, 1):
            cx = sx * (wb / 2 - aw / 2 - rng.uniform(0.012, 0.02))
            arms.append(box((cx - aw / 2, h + t - OVERLAP, z0 + tb - OVERLAP), (cx + aw / 2, h + t + ha, zf), SPACING))
        parts["arm"] = merge_meshes(arms)
    return parts


def _mug_parts(rng: np.random.Generator) -> dict[str, TriMesh]:
    R = rng.uniform(0.25, 0.35)
    H = rng.uniform(0.5, 0.8)
    w = rng.uniform(0.025, 0.04)
    b = rng.uniform(0.03, 0.05)
    profile = [(0.0, 0.0), (R, 0.0), (R, H), (R - w, H), (R - w, b), (0.0, b)]
    n_around = int(np.ceil(2 * np.pi * R / SPACING / 1.5))
    body = revolve(profile, n_around=n_around, spacing=SPACING)
    rho = rng.uniform(0.14, 0.2) * H / 0.65
    hw = rng.uniform(0.02, 0.03)
    hh = rng.uniform(0.03, 0.045)
    delta = np.arcsin(min(0.9, 0.5 * w / rho))
    yc = H * rng.uniform(0.45, 0.55)
    n_arc = int(np.ceil(np.pi * rho / SPACING))
    handle = swept_rectangle((R, yc, 0.0), rho, hw, hh, -np.pi / 2 - delta, np.pi / 2 + delta, n_arc=n_arc)
    return {"body": body, "handle": handle}


def normalize_parts(parts: dict[str, TriMesh]) -> dict[str, TriMesh]:
    """Center on the joint bounding box and scale its diagonal to 1."""
    allv = np.concatenate([m.vertices for m in parts.values()])
    lo, hi = allv.min(axis=0), allv.max(axis=0)
    s = 1.0 / np.linalg.norm(hi - lo)
    c = 0.5 * (lo + hi)
    return {k: TriMesh((m.vertices - c) * s, m.triangles) for k, m in parts.items()}


def segmentation_boundary(part: TriMesh, others: Sequence[TriMesh], iters: int = 40) -> np.ndarray:
    """Segments where the part surface crosses into the other parts.

    Every triangle whose corners disagree on inside/outside contributes the
    segment between its two crossing points, each located by bisection.
    """
    if not others or part.is_empty():
        return np.zeros((0, 2, 3))
    inside = points_inside(list(others), part.vertices)
    tri_in = inside[part.triangles]
    mixed = np.flatnonzero(tri_in.any(axis=1) & ~tri_in.all(axis=1))
    if len(mixed) == 0:
        return np.zeros((0, 2, 3))
    segs = []
    edges = []
    for f in mixed:
        t = part.triangles[f]
        cross = [(t[k], t[(k + 1) % 3]) for k in range(3) if tri_in[f, k] != tri_in[f, (k + 1) % 3]]
        edges.append(cross)
    flat = np.array([e for pair in edges for e in pair])
    a, b = part.vertices[flat[:, 0]].copy(), part.vertices[flat[:, 1]].copy()
    a_in = inside[flat[:, 0]]
    # bisection: keep ``a`` on the inside, ``b`` on the outside
    a, b = np.where(a_in[:, None], a, b), np.where(a_in[:, None], b, a)
    for _ in range(iters):
        m = 0.5 * (a + b)
        mi = points_inside(list(others), m)
        a = np.where(mi[:, None], m, a)
        b = np.where(mi[:, None], b, m)
    pts = 0.5 * (a + b)
    k = 0
    for cross in edges:
        if len(cross) == 2:
            segs.append((pts[k], pts[k + 1]))
        k += len(cross)
    return np.array(segs).reshape(-1, 2, 3)


def generate_shape(category: str, seed: int) -> LabeledShape:
    rng = np.random.default_rng(seed)
    if category == "chairlike":
        raw = _chair_parts(rng)
    elif category == "muglike":
        raw = _mug_parts(rng)
    else:
        raise ValueError(f"unknown category {category!r}; choose from {sorted(CATEGORIES)}")
    parts = normalize_parts(raw)
    order = [l for l in CATEGORIES[category] if l in parts]
    parts = {l: parts[l] for l in order}
    bounds = {}
    for lab, mesh in parts.items():
        others = [m for k, m in parts.items() if k != lab]
        bounds[lab] = segmentation_boundary(mesh, others)
    return LabeledShape(category, parts, bounds)


def save_shape(directory, shape: LabeledShape) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_labeled_parts(d / "shape.obj", shape.parts)
    meta = {
        "category": shape.category,
        "name": shape.name,
        "parts": list(shape.parts),
        "boundaries": {k: np.round(v, 12).tolist() for k, v in shape.boundaries.items()},
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
    return d


def load_shape(directory) -> LabeledShape:
    d = Path(directory)
    meta = json.loads((d / "meta.json").read_text())
    parts = load_labeled_parts(d / "shape.obj")
    ordered = {k: parts[k] for k in meta["parts"]}
    bounds = {k: np.asarray(v, dtype=np.float64).reshape(-1, 2, 3) for k, v in meta["boundaries"].items()}
    return LabeledShape(meta["category"], ordered, bounds, meta.get("name", d.name))


def generate_synthetic(category: str, count: int, seed: int, out_dir) -> Path:
    """Write ``count`` shapes as shape_XXX/ folders plus manifest.json."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if category not in CATEGORIES:
        raise ValueError(f"unknown category {category!r}; choose from {sorted(CATEGORIES)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(seed).generate_state(count)
    names = []
    for i in range(count):
        shape = generate_shape(category, int(seeds[i]))
        shape.name = f"shape_{i:03d}"
        save_shape(out / shape.name, shape)
        names.append(shape.name)
    manifest = {"category": category, "count": count, "seed": seed, "part_labels": list(CATEGORIES[category]),
                "shapes": names, "shape_seeds": [int(s) for s in seeds]}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return out


def load_dataset(directory) -> tuple[dict, list[LabeledShape]]:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    return manifest, [load_shape(d / n) for n in manifest["shapes"]]
