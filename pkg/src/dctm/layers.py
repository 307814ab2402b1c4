"""Small module system: parameter registration plus the basic layers."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, layer_norm, xavier_uniform, zeros, ones


class Module:
    """Tracks parameters and submodules in attribute-assignment order.

    The resulting ``named_parameters()`` order is the checkpoint record
    order, so it must be deterministic for a given architecture.
    """

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield f"{prefix}{name}", p
        for name, child in self._children.items():
            yield from child.named_parameters(prefix=f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


class ModuleList(Module):
    def __init__(self, modules):
        super().__init__()
        self._items = []
        for i, m in enumerate(modules):
            setattr(self, str(i), m)
            self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


class Linear(Module):
    """y = x @ W + b with Xavier-uniform W.

    ``zero_init`` starts W at zero instead — used for residual-branch
    output projections and the scoring head, so deep post-norm stacks
    begin as identity maps and stay stable at large learning rates.
    """

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 bias: bool = True, dtype=np.float32, zero_init: bool = False):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        if zero_init:
            self.weight = zeros((in_dim, out_dim), dtype=dtype, requires_grad=True)
        else:
            self.weight = xavier_uniform(rng, (in_dim, out_dim), dtype=dtype)
        self.bias = zeros((out_dim,), dtype=dtype, requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        if self.bias is not None:
            y = y + self.bias
        return y


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.eps = eps
        self.gain = ones((dim,), dtype=dtype, requires_grad=True)
        self.bias = zeros((dim,), dtype=dtype, requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, eps=self.eps)


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or rate == 0."""
    if not training or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype)
    return x * Tensor(keep / np.asarray(1.0 - rate, dtype=x.dtype))
