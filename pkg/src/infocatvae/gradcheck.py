"""Finite-difference verification of every differentiable op and of the full
objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, finite_difference_check
from .model import CatVAENetwork, ModelConfig
from .objective import Betas, categorical_kl, total_loss
from .rng import Rng

OP_TOLERANCE = 1e-4
MODEL_TOLERANCE = 1e-3


@dataclass
class CheckResult:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}\t{self.name}\t{self.error:.3e}\t{self.tolerance:.0e}"


def _scalarize(out: Tensor, w: np.ndarray) -> Tensor:
    # weighted sum so that ops with constant row sums (softmax) still get a
    # non-trivial gradient
    return ad.sum(ad.mul(out, Tensor(w)))


def _away_from_zero(x, margin=0.05):
    return np.where(x >= 0, x + margin, x - margin)


def _op_cases(rng: Rng):
    """Yield ``(name, inputs, f)`` where ``f(inputs)`` is a scalar Tensor."""
    r, c, k = 3, 4, 2

    def normal(*shape):
        return Tensor(rng.standard_normal(shape))

    def weights(shape):
        return rng.standard_normal(shape)

    a, b = normal(r, c), normal(c, k)
    w = weights((r, k))
    yield "matmul", [a, b], lambda xs: _scalarize(ad.matmul(xs[0], xs[1]), w)
    for kind, fn in (("add", ad.add), ("sub", ad.sub), ("mul", ad.mul)):
        a, b = normal(r, c), normal(r, c)
        w = weights((r, c))
        yield kind, [a, b], (lambda fn, w: lambda xs: _scalarize(fn(xs[0], xs[1]), w))(fn, w)
    a, s = normal(r, c), Tensor(rng.standard_normal(()))
    w = weights((r, c))
    yield "mul_scalar_broadcast", [a, s], lambda xs: _scalarize(ad.mul(xs[0], xs[1]), w)
    a = normal(r, c)
    w = weights((r, c))
    factor = float(rng.standard_normal(()))
    yield "scalar_mul", [a], lambda xs: _scalarize(ad.scalar_mul(xs[0], factor), w)
    a = Tensor(_away_from_zero(rng.standard_normal((r, c))))
    w = weights((r, c))
    yield "relu", [a], lambda xs: _scalarize(ad.relu(xs[0]), w)
    for kind, fn in (("sigmoid", ad.sigmoid), ("softmax_rows", ad.softmax_rows),
                     ("log_softmax_rows", ad.log_softmax_rows), ("exp", ad.exp), ("square", ad.square)):
        a = normal(r, c)
        w = weights((r, c))
        yield kind, [a], (lambda fn, w: lambda xs: _scalarize(fn(xs[0]), w))(fn, w)
    a = Tensor(0.2 + rng.uniform((r, c)) * 2.0)
    w = weights((r, c))
    yield "log", [a], lambda xs: _scalarize(ad.log(xs[0]), w)
    a = normal(r, c)
    yield "sum", [a], lambda xs: ad.square(ad.sum(xs[0]))
    a = normal(r, c)
    w = weights((r, 1))
    yield "sum_axis1", [a], lambda xs: _scalarize(ad.sum(xs[0], axis=1), w)
    a = normal(r, c)
    yield "mean", [a], lambda xs: ad.square(ad.mean(xs[0]))
    a, b = normal(r, c), normal(r, k)
    w = weights((r, c + k))
    yield "concat_cols", [a, b], lambda xs: _scalarize(ad.concat_cols(xs), w)
    a = normal(r, c)
    w = weights((r, 2))
    yield "slice_cols", [a], lambda xs: _scalarize(ad.slice_cols(xs[0], 1, 3), w)
    a, bias = normal(r, c), normal(c)
    w = weights((r, c))
    yield "add_bias", [a, bias], lambda xs: _scalarize(ad.add_bias(xs[0], xs[1]), w)
    a = normal(r, c)
    target = rng.uniform((r, c))
    yield "bce_with_logits", [a], lambda xs: ad.sum(ad.bce_with_logits(xs[0], target))
    a = Tensor(rng.standard_normal((r, 5)) * 2.0)
    yield "categorical_kl_softmax", [a], lambda xs: categorical_kl(ad.softmax_rows(xs[0]))


def op_checks(trials: int = 20, seed: int = 0, h: float = 1e-6) -> list[CheckResult]:
    """Worst error per op over ``trials`` random draws."""
    worst: dict[str, float] = {}
    rng = Rng(seed)
    for _ in range(trials):
        for name, inputs, f in _op_cases(rng):
            err = finite_difference_check(f, inputs, h=h)
            worst[name] = max(worst.get(name, 0.0), err)
    return [CheckResult(name, err, OP_TOLERANCE) for name, err in worst.items()]


def model_check(
    n_params: int = 240,
    seed: int = 0,
    batch: int = 4,
    mode: str = "infocatvae",
    config: ModelConfig | None = None,
    h: float = 1e-5,
) -> CheckResult:
    """Finite differences of the full objective w.r.t. sampled parameters.

    Dropout is off and every random draw is replayed from a fixed seed, so
    the loss is a deterministic function of the parameters.
    """
    config = config or ModelConfig()
    rng = Rng(seed)
    model = CatVAENetwork(config).init(rng)
    # nonzero biases so their gradients are exercised away from init
    for name, p in model.params.items():
        if name.endswith(".bias"):
            p.data = 0.1 * rng.standard_normal(p.shape)
    x = rng.uniform((batch, config.input_dim))
    noise = rng.standard_normal((batch, config.latent_dim))
    names = list(model.params)
    tensors = [model.params[k] for k in names]
    per = max(1, -(-n_params // len(tensors)))
    coords = []
    for i, t in enumerate(tensors):
        picks = rng.integers(t.size, size=min(per, t.size))
        coords.extend((i, int(j)) for j in np.unique(picks))
    while len(coords) < n_params:
        i = int(rng.integers(len(tensors)))
        coords.append((i, int(rng.integers(tensors[i].size))))

    def f(_):
        loss, _bd = total_loss(model, x, Rng(seed + 1), mode=mode, betas=Betas(), train=False, noise=noise)
        return loss

    err = finite_difference_check(f, tensors, h=h, coords=coords)
    return CheckResult(f"total_loss[{mode}, {len(coords)} params]", err, MODEL_TOLERANCE)


def run_all(seed: int = 0) -> list[CheckResult]:
    results = op_checks(seed=seed)
    results.append(model_check(seed=seed, mode="infocatvae"))
    results.append(model_check(seed=seed, mode="vanilla_catvae", n_params=200))
    return results
