from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SimilarityTransform:
    """Uniform scale followed by translation: ``p' = s * p + t``."""

    s: float = 1.0
    t: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        t = tuple(float(x) for x in np.asarray(self.t, dtype=np.float64).reshape(3))
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "s", float(self.s))
        if not (self.s > 0 and np.isfinite(self.s) and np.all(np.isfinite(t))):
            raise ValueError(f"invalid similarity transform s={self.s}, t={t}")

    @classmethod
    def identity(cls) -> SimilarityTransform:
        return cls()

    @property
    def translation(self) -> np.ndarray:
        return np.array(self.t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) * self.s + self.translation

    def inverse(self) -> SimilarityTransform:
        return SimilarityTransform(1.0 / self.s, -self.translation / self.s)

    def then(self, other: SimilarityTransform) -> SimilarityTransform:
        """Compose: apply ``self`` first, then ``other``."""
        return SimilarityTransform(other.s * self.s, other.s * self.translation + other.translation)

    def to_dict(self) -> dict:
        return {"s": self.s, "t": list(self.t)}

    @classmethod
    def from_dict(cls, d: dict) -> SimilarityTransform:
        return cls(d["s"], d["t"])
