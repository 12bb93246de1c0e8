"""Implicit occupancy decoder over concatenated part codes, and its losses."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..autodiff import Linear, Module, Tensor, absolute, concat, leaky_relu, matmul, no_grad, reduce_mean, sigmoid, square


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.2
    lam: float = 0.005

    def __post_init__(self):
        if self.alpha < 0 or not self.lam > 0:
            raise ValueError(f"need alpha >= 0 and lambda > 0, got {self}")


class ImplicitDecoder(Module):
    """f(codes, p) in (0, 1).

    The query point is concatenated to the input of the first two hidden
    layers. The first layer's code block is applied once per shape and
    broadcast over points, which is the same product as feeding the full
    concatenated vector per point.
    """

    def __init__(self, code_size: int, rng: np.random.Generator, hidden: Sequence[int] = (1024, 512, 256, 128)):
        hidden = list(hidden)
        self.code_size = code_size
        self.hidden = hidden
        first = Linear(code_size + 3, hidden[0], rng)
        self.w_code = Tensor(first.weight.data[:code_size], requires_grad=True)
        # the point block gets its own fan-in of 3; sized for the full
        # concatenated input it starts so small that the field barely varies
        # over the unit cube and fitting thin parts takes many more steps
        point_init = rng.normal(0.0, np.sqrt(2.0 / 3.0), size=(3, hidden[0]))
        self.w_point = Tensor(point_init.astype(first.weight.data.dtype), requires_grad=True)
        self.b0 = first.bias
        self.layers = [Linear(hidden[0] + 3, hidden[1], rng)]
        self.layers += [Linear(a, b, rng) for a, b in zip(hidden[1:-1], hidden[2:])]
        self.out = Linear(hidden[-1], 1, rng)
        # fixed affine map applied to codes before the first layer; saved
        # with the weights but never trained (see set_code_statistics)
        self.code_shift = np.zeros(code_size)
        self.code_scale = np.ones(code_size)

    def set_code_statistics(self, codes: np.ndarray, kappa: float, floor: float = 0.1):
        """Standardize each code dimension over a set of shapes, then scale by ``kappa``.

        Codes of similar training shapes can differ by a few thousandths per
        dimension, far below the first layer's initial weights, so the decoder
        cannot tell them apart early on. The standard deviation is floored at
        ``floor`` times its mean so near-constant dimensions are not blown up.
        """
        codes = np.asarray(codes, dtype=np.float64).reshape(-1, self.code_size)
        sd = codes.std(axis=0)
        sd = np.sqrt(sd**2 + (floor * sd.mean()) ** 2)
        if not np.all(sd > 0):
            raise ValueError("code statistics need at least two distinct codes")
        self.code_shift = codes.mean(axis=0)
        self.code_scale = kappa / sd

    def state_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = super().state_dict(prefix)
        out[prefix + "code_shift"] = self.code_shift.copy()
        out[prefix + "code_scale"] = self.code_scale.copy()
        return out

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        super().load_state_dict(state, prefix)
        for key in ("code_shift", "code_scale"):
            value = np.asarray(state[prefix + key], dtype=np.float64)
            if value.shape != (self.code_size,):
                raise ValueError(f"{key}: checkpoint shape {value.shape} != ({self.code_size},)")
            setattr(self, key, value)

    def __call__(self, codes, points) -> Tensor:
        """``codes`` (code_size,) and ``points`` (P, 3) -> occupancies (P,)."""
        codes = codes if isinstance(codes, Tensor) else Tensor(codes, dtype=self.w_code.dtype)
        if codes.shape != (self.code_size,):
            raise ValueError(f"decoder expects a code of size {self.code_size}, got shape {codes.shape}")
        codes = (codes - Tensor(self.code_shift, dtype=codes.dtype)) * Tensor(self.code_scale, dtype=codes.dtype)
        p = points if isinstance(points, Tensor) else Tensor(np.asarray(points), dtype=self.w_code.dtype)
        h = leaky_relu(matmul(p, self.w_point) + (matmul(codes.reshape(1, -1), self.w_code) + self.b0))
        h = leaky_relu(self.layers[0](concat([h, p], axis=-1)))
        for layer in self.layers[1:]:
            h = leaky_relu(layer(h))
        return sigmoid(self.out(h)).reshape(p.shape[0])

    def evaluate(self, codes, points: np.ndarray, chunk: int = 32768) -> np.ndarray:
        pts = np.asarray(points)
        out = np.empty(len(pts))
        with no_grad():
            for lo in range(0, len(pts), chunk):
                out[lo:lo + chunk] = self(codes, pts[lo:lo + chunk]).data
        return out


def loss_mse(f: Tensor, labels) -> Tensor:
    """Mean of |f(p) - F(p)|^2 over the sample set."""
    labels = np.asarray(labels)
    if f.shape[0] == 0:
        raise ValueError("loss_mse on an empty sample set")
    if f.shape != labels.shape:
        raise ValueError(f"output shape {f.shape} != label shape {labels.shape}")
    return reduce_mean(square(f - Tensor(labels, dtype=f.dtype)))


def probe_values(field: Callable[[Tensor], Tensor], points, normals, lam: float) -> tuple[Tensor, Tensor]:
    """Field just outside (p + lam n) and just inside (p - lam n) the part surface."""
    p = points if isinstance(points, Tensor) else Tensor(points)
    n = Tensor(np.asarray(normals) * lam, dtype=p.dtype)
    return field(p + n), field(p - n)


def loss_match(field: Callable[[Tensor], Tensor], points, normals, lam: float = 0.005) -> Tensor:
    """1/(2|N|) * sum(|f(p + lam n)|^2 + |f(p - lam n) - 1|^2)."""
    if len(points) == 0:
        raise ValueError("loss_match on an empty boundary set")
    out, inn = probe_values(field, points, normals, lam)
    return (reduce_mean(square(out)) + reduce_mean(square(inn - 1.0))) * 0.5


def objective_h(field: Callable[[Tensor], Tensor], points, normals, lam: float = 0.005) -> Tensor:
    """1/(2|N|) * sum(|f(p + lam n)| + |f(p - lam n) - 1|)."""
    if len(points) == 0:
        raise ValueError("objective h on an empty boundary set")
    out, inn = probe_values(field, points, normals, lam)
    return (reduce_mean(absolute(out)) + reduce_mean(absolute(inn - 1.0))) * 0.5


def total_loss(f: Tensor, labels, field, points, normals, cfg: LossConfig) -> Tensor:
    mse = loss_mse(f, labels)
    if cfg.alpha == 0:
        return mse
    return mse + loss_match(field, points, normals, cfg.lam) * cfg.alpha
