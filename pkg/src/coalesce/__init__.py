"""Part assembly with learned joint synthesis.

Subpackages: ``autodiff`` (tensors, layers, Adam), ``meshkit`` (meshes and
voxels), ``encoders`` and ``align`` (point encoders and part alignment),
``jointsynth`` (the implicit joint decoder), ``refine`` (test-time
optimization), ``surfacing`` (extraction and stitching) and ``pipeline``.
"""
__version__ = "0.1.0"
