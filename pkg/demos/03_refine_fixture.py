"""Test-time refinement pulls displaced balls back into a chain.

The occupancy is analytic, so only the part transforms move.

    python3 demos/03_refine_fixture.py
"""
import numpy as np

from coalesce.pipeline.fixtures import misaligned_set
from coalesce.refine import RefineConfig, refine

for fx in misaligned_set(3):
    r = refine(fx.parts, fx.start, np.zeros(4), fx.field, RefineConfig(iterations=25))
    print(f"h {r.h_trace[0]:.4f} -> {r.h_trace[-1]:.4f}   "
          f"translation error {fx.translation_error(fx.start):.4f} -> {fx.translation_error(r.transforms):.4f}")
