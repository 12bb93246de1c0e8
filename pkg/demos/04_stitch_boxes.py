"""Extract a joint from an occupancy field and stitch it to two open boxes.

Writes stitched.obj in the current directory.

    python3 demos/04_stitch_boxes.py
"""
import numpy as np

from coalesce.meshkit import GridSpec, save_mesh
from coalesce.meshkit.primitives import box
from coalesce.surfacing import ScalarField, stitch


def open_box(lo, hi, drop_above=None, drop_below=None):
    b = box(lo, hi, spacing=0.025)
    z = b.vertices[b.triangles][:, :, 2]
    keep = np.ones(b.n_triangles, bool)
    if drop_above is not None:
        keep &= ~(z > drop_above - 1e-9).all(1)
    if drop_below is not None:
        keep &= ~(z < drop_below + 1e-9).all(1)
    return b.submesh(np.flatnonzero(keep))


lower = open_box((-0.2, -0.2, -0.4), (0.2, 0.2, -0.05), drop_above=-0.05)
upper = open_box((-0.2, -0.2, 0.05), (0.2, 0.2, 0.4), drop_below=0.05)


def slab(p):
    d = np.minimum(np.minimum(0.2 - np.abs(p[:, 0]), 0.2 - np.abs(p[:, 1])), 0.15 - np.abs(p[:, 2]))
    return 1 / (1 + np.exp(-80 * d))


r = stitch([lower, upper], ScalarField.from_function(GridSpec.cube(64, 0.5), slab))
print(f"matched loops {r.matched}, boundary edges {r.mesh.boundary_edge_count()}, "
      f"euler {r.mesh.euler_characteristic()}")
save_mesh("stitched.obj", r.mesh)
