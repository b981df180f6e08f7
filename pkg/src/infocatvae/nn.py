"""Dense layers, inverted dropout, parameter storage and Adam."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .rng import Rng


class ParameterStore(OrderedDict):
    """Insertion-ordered mapping ``name -> Tensor`` of trainable parameters."""

    def add(self, name: str, shape, dtype=np.float64) -> Tensor:
        if name in self:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.zeros(shape, dtype=dtype), requires_grad=True, name=name)
        self[name] = t
        return t

    def zero_grad(self):
        for p in self.values():
            p.grad = None

    def astype(self, dtype):
        for p in self.values():
            p.data = p.data.astype(dtype)
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.items():
            if name not in arrays:
                raise KeyError(f"missing parameter {name!r}")
            arr = np.asarray(arrays[name])
            if arr.shape != p.shape:
                raise ValueError(f"parameter {name!r}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.dtype, copy=True)


class Linear:
    """Fully connected layer ``x @ W + b`` with ``W`` of shape (in, out)."""

    def __init__(self, store: ParameterStore, name: str, in_dim: int, out_dim: int, dtype=np.float64):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = store.add(f"{name}.weight", (in_dim, out_dim), dtype)
        self.bias = store.add(f"{name}.bias", (out_dim,), dtype)

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.shape[1] != self.in_dim:
            raise ad.ShapeError("linear", x.shape, self.weight.shape)
        return ad.add_bias(ad.matmul(x, self.weight), self.bias)


class Dropout:
    """Inverted dropout; the identity in eval mode."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def __call__(self, x: Tensor, rng: Rng | None, train: bool) -> Tensor:
        if not train or self.rate == 0.0:
            return x
        if rng is None:
            raise ValueError("train-mode dropout needs an Rng")
        keep = rng.uniform(x.shape) >= self.rate
        mask = keep.astype(x.dtype) / (1.0 - self.rate)
        return ad.mul(x, Tensor(mask))


def dropout_forward(layer: Dropout, x: Tensor, rng: Rng | None, train: bool = True) -> Tensor:
    return layer(x, rng, train)


def init_parameters(store: ParameterStore, rng: Rng) -> None:
    """Fan-in uniform init: weights ~ U(-1/sqrt(in), 1/sqrt(in)), biases zero.

    Parameters are visited in store order, so the result depends only on the
    seed and the architecture.
    """
    for name, p in store.items():
        if name.endswith(".bias") or p.data.ndim == 1:
            p.data = np.zeros(p.shape, dtype=p.dtype)
        else:
            bound = 1.0 / np.sqrt(p.shape[0])
            u = rng.uniform(p.shape)
            p.data = ((2.0 * u - 1.0) * bound).astype(p.dtype)


class Adam:
    """Adam with bias correction (Kingma & Ba defaults)."""

    def __init__(self, store: ParameterStore, learning_rate=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.store = store
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in store.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in store.items()}

    def step(self) -> None:
        missing = [k for k, p in self.store.items() if p.grad is None]
        if missing:
            raise ValueError(f"parameter {missing[0]!r} has no gradient")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        step_size = self.learning_rate / (1.0 - b1**self.t)
        bc2 = 1.0 - b2**self.t
        for k, p in self.store.items():
            g = p.grad
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data = p.data - (step_size * m / (np.sqrt(v / bc2) + self.eps)).astype(p.dtype, copy=False)
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for k in self.store:
            out[f"adam.m/{k}"] = self.m[k].copy()
            out[f"adam.v/{k}"] = self.v[k].copy()
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for k, p in self.store.items():
            self.m[k] = np.asarray(arrays[f"adam.m/{k}"]).astype(p.dtype, copy=True)
            self.v[k] = np.asarray(arrays[f"adam.v/{k}"]).astype(p.dtype, copy=True)


def adam_step(state: Adam, store: ParameterStore | None = None) -> None:
    if store is not None and store is not state.store:
        raise ValueError("Adam state belongs to a different parameter store")
    state.step()
