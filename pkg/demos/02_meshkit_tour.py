"""Boundary loops, erosion around a segmentation boundary, and voxelization.

    python3 demos/02_meshkit_tour.py
"""
import numpy as np

from coalesce.meshkit import ErosionConfig, GridSpec, boundary_loops, dilate, erode_part, voxel_occupancy
from coalesce.pipeline import generate_shape

shape = generate_shape("chairlike", 0)
print("parts:", ", ".join(f"{k} ({m.n_triangles} tris)" for k, m in shape.parts.items()))

seat = shape.parts["seat"]
eroded = erode_part(seat, shape.boundaries["seat"], ErosionConfig(0.05), shape.diameter())
loops = boundary_loops(eroded)
print(f"seat: {seat.n_triangles} -> {eroded.n_triangles} triangles after erosion, {len(loops)} open loops")

grid = voxel_occupancy(shape.mesh(), spec=GridSpec.cube(64, 0.55))
print(f"occupied cells at 64^3: {int(grid.occupancy.sum())}")
band = dilate(grid, 2)
print(f"after 2 dilation steps: {int(band.occupancy.sum())}")
