"""Mesh representation, OBJ I/O, boundary loops, erosion, sampling and voxels."""
from .erosion import (
    ErosionConfig,
    ErosionError,
    as_segments,
    distance_to_segments,
    erode_cloud,
    erode_part,
    polyline_segments,
)
from .io import (
    MeshFormatError,
    load_labeled_parts,
    load_mesh,
    save_labeled_parts,
    save_mesh,
    save_polylines,
    split_by_label,
)
from .mesh import (
    BoundaryLoop,
    NonManifoldError,
    PointCloud,
    TriMesh,
    boundary_loops,
    merge_meshes,
    weld_vertices,
)
from .sampling import normalize_cloud, normalizing_transform, poisson_disk_radius, resample_cloud, sample_surface
from .transform import SimilarityTransform
from .voxel import (
    GridSpec,
    OccupancyGrid,
    dilate,
    grid_from_bytes,
    grid_to_bytes,
    load_grid,
    points_inside,
    save_grid,
    voxel_occupancy,
)
