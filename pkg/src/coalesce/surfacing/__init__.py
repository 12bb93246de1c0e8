"""Joint surface extraction and seamless stitching onto the parts."""
from .blend import BlendError, harmonic_displacement, poisson_blend, uniform_laplacian
from .bridge import bridge_loops
from .field import ScalarField, marching_cubes
from .loops import (
    LoopCorrespondence,
    closed_neighborhoods,
    densify_loop,
    largest_subloop,
    loop_correspondence,
    metric_d,
    remove_redundant,
)
from .stitch import StitchResult, stitch, stitch_meshes
