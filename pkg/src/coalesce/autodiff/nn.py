from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np

from .tensor import Tensor, default_dtype, leaky_relu, matmul, relu, sigmoid

ACTIVATIONS = {
    "relu": relu,
    "leaky_relu": leaky_relu,
    "sigmoid": sigmoid,
    "linear": None,
    None: None,
}


class Module:
    """Container that discovers parameters from its attributes.

    Attributes that are Tensors with ``requires_grad`` count as parameters;
    Modules, and lists/dicts of Modules, are searched recursively. Names are
    slash-joined attribute paths, which is also the checkpoint naming scheme.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key in sorted(vars(self)):
            value = vars(self)[key]
            yield from _walk(value, f"{prefix}{key}")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters(prefix)}

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        own = dict(self.named_parameters(prefix))
        missing = sorted(set(own) - set(state))
        if missing:
            raise KeyError(f"missing parameters in state: {missing[:5]}")
        for name, p in own.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ValueError(f"{name}: checkpoint shape {value.shape} != parameter shape {p.shape}")
            p.data = value.astype(p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())


def _walk(value, name: str):
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(name + "/")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}/{i}")
    elif isinstance(value, dict):
        for k in sorted(value):
            yield from _walk(value[k], f"{name}/{k}")


def xavier_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Linear(Module):
    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator):
        self.weight = Tensor(xavier_uniform(fan_in, fan_out, rng), requires_grad=True)
        self.bias = Tensor(np.zeros(fan_out), requires_grad=True)

    @property
    def fan_in(self) -> int:
        return self.weight.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        return matmul(x, self.weight) + self.bias


class MLP(Module):
    """Chain of affine layers.

    ``widths`` lists every layer boundary, input first: ``[3, 4, 1]`` is two
    affine layers. ``activation`` follows every hidden layer and
    ``final_activation`` the last one.
    """

    def __init__(
        self,
        widths: Sequence[int],
        rng: np.random.Generator,
        activation: str | None = "leaky_relu",
        final_activation: str | None = None,
    ):
        if len(widths) < 2:
            raise ValueError(f"an MLP needs at least input and output widths, got {list(widths)}")
        self.widths = list(widths)
        self.activation = activation
        self.final_activation = final_activation
        self.layers = [Linear(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.widths[0]:
            raise ValueError(f"MLP input width {x.shape[-1]} does not match first layer width {self.widths[0]}")
        act = ACTIVATIONS[self.activation]
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            fn = ACTIVATIONS[self.final_activation] if i == last else act
            if fn is not None:
                x = fn(x)
        return x


def mlp_forward(widths: Sequence[int], x: Tensor, rng=None, **kwargs) -> Tensor:
    """One-shot helper: build an MLP with fresh weights and run it."""
    rng = rng if rng is not None else np.random.default_rng(0)
    return MLP(widths, rng, **kwargs)(x)


def cast_module(module: Module, dtype) -> Module:
    for p in module.parameters():
        p.data = p.data.astype(dtype)
    return module


__all__ = ["Module", "Linear", "MLP", "mlp_forward", "xavier_uniform", "cast_module", "default_dtype"]
