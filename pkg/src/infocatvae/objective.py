"""Training objective: weighted reconstruction, closed-form KL terms and the
information-maximisation term. Everything is a loss (minimised)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .model import CatVAENetwork, EncoderOutput, LatentPrior, reparameterize, sample_prior
from .rng import Rng

MODES = ("vanilla_catvae", "infocatvae")
LIKELIHOODS = ("bernoulli", "gaussian")


@dataclass(frozen=True)
class Betas:
    cont: float = 10.0
    cat: float = 10.0
    info: float = 100.0

    def __post_init__(self):
        for name in ("cont", "cat", "info"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"beta_{name} must be a finite nonnegative number, got {v}")


@dataclass
class LossBreakdown:
    recon: float
    kl_cat: float
    kl_gauss: float
    info: float
    total: float
    beta_cont: float
    beta_cat: float
    beta_info: float

    FIELDS = ("recon", "kl_cat", "kl_gauss", "info", "total")

    def recompose(self) -> float:
        return self.recon + self.beta_cat * self.kl_cat + self.beta_cont * self.kl_gauss + self.beta_info * self.info

    def as_dict(self) -> dict:
        return asdict(self)

    def is_finite(self) -> bool:
        return all(math.isfinite(getattr(self, f)) for f in self.FIELDS)


def _weight(enc: EncoderOutput, c: int) -> Tensor:
    return ad.slice_cols(enc.cat_probs, c, c + 1)


def reconstruction_term(
    model: CatVAENetwork,
    x,
    enc: EncoderOutput,
    rng: Rng | None = None,
    likelihood: str = "bernoulli",
    train: bool = False,
    noise=None,
) -> Tensor:
    """Batch mean of ``sum_c q(c|x) * loss(x, decode(z_c))``.

    ``z_c`` is one reparameterised draw from each category's posterior.
    ``noise`` fixes the standard-normal draws: a single (batch, d) array used
    for every category, or a sequence of K such arrays.
    """
    if likelihood not in LIKELIHOODS:
        raise ValueError(f"unknown likelihood {likelihood!r}")
    x = model._input(x)
    if likelihood == "bernoulli" and (x.data.min() < 0 or x.data.max() > 1):
        raise ValueError("bernoulli likelihood needs inputs in [0, 1]")
    K = model.config.n_categories
    total = None
    for c in range(K):
        eps = None
        if noise is not None:
            eps = noise if isinstance(noise, np.ndarray) else noise[c]
        z = reparameterize(enc.mu[c], enc.log_var[c], rng, eps=eps)
        logits = model.decode_logits(z, rng, train)
        if likelihood == "bernoulli":
            per_pixel = ad.bce_with_logits(logits, x)
        else:
            per_pixel = ad.square(ad.sub(ad.sigmoid(logits), x))
        term = ad.mul(_weight(enc, c), ad.sum(per_pixel, axis=1))
        total = term if total is None else ad.add(total, term)
    return ad.mean(total)


def categorical_kl(cat_probs: Tensor | EncoderOutput) -> Tensor:
    """Batch mean of KL(q(c|x) || Uniform(K)) = log K - H(q).

    Given an :class:`EncoderOutput` the log-probabilities come from a fused
    log-softmax; given bare probabilities, ``0 * log 0`` is taken as 0.
    """
    if isinstance(cat_probs, EncoderOutput):
        probs, logp = cat_probs.cat_probs, cat_probs.log_cat_probs
    else:
        probs = ad.as_tensor(cat_probs)
        zero = (probs.data <= 0).astype(probs.dtype)
        logp = ad.log(ad.add(probs, Tensor(zero)))
    K = probs.shape[1]
    neg_entropy = ad.sum(ad.mul(probs, logp), axis=1)
    return ad.add(ad.mean(neg_entropy), math.log(K))


def gaussian_kl_expected(enc: EncoderOutput, prior: LatentPrior) -> Tensor:
    """Batch mean of ``sum_c q(c|x) KL(N(mu_c(x), diag sigma^2_c(x)) || N(m_c, I))``."""
    K = prior.n_categories
    if len(enc.mu) != K:
        raise ad.ShapeError("gaussian_kl_expected", (len(enc.mu),), prior.means.shape)
    total = None
    for c in range(K):
        mu, lv = enc.mu[c], enc.log_var[c]
        if not np.all(np.isfinite(lv.data)):
            raise ad.NumericalError(f"non-finite log-variance for category {c}")
        if mu.shape[1] != prior.latent_dim:
            raise ad.ShapeError("gaussian_kl_expected", mu.shape, prior.means.shape)
        target = Tensor(np.broadcast_to(prior.means[c], mu.shape).astype(mu.dtype))
        inner = ad.sub(ad.add(ad.exp(lv), ad.square(ad.sub(mu, target))), ad.add(lv, 1.0))
        kl = ad.scalar_mul(ad.sum(inner, axis=1), 0.5)
        term = ad.mul(_weight(enc, c), kl)
        total = term if total is None else ad.add(total, term)
    return ad.mean(total)


def info_max_term(
    model: CatVAENetwork,
    rng: Rng,
    n_samples: int,
    train: bool = False,
    stop_decoder_grad: bool = False,
    prior: LatentPrior | None = None,
) -> Tensor:
    """``-(1/n) sum_i log q(c_i | decode(z_i))`` over fresh prior draws.

    The decoded pixel means are classified directly (no pixel sampling).
    ``stop_decoder_grad`` confines the gradient to the classifier.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    prior = model.prior if prior is None else prior
    cats, z = sample_prior(prior, rng=rng, n=n_samples)
    x_gen = model.decode(Tensor(z.astype(model.dtype)), rng, train)
    if stop_decoder_grad:
        x_gen = ad.detach(x_gen)
    logp = ad.log_softmax_rows(model.classify_logits(x_gen, rng, train))
    onehot = np.zeros(logp.shape, dtype=model.dtype)
    onehot[np.arange(n_samples), cats] = 1.0
    return ad.scalar_mul(ad.sum(ad.mul(logp, Tensor(onehot))), -1.0 / n_samples)


def total_loss(
    model: CatVAENetwork,
    x,
    rng: Rng | None,
    mode: str = "infocatvae",
    betas: Betas = Betas(),
    likelihood: str = "bernoulli",
    train: bool = True,
    info_samples: int | None = None,
    stop_decoder_grad: bool = False,
    noise=None,
) -> tuple[Tensor, LossBreakdown]:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    x = model._input(x)
    enc = model.encode(x, rng, train)
    recon = reconstruction_term(model, x, enc, rng, likelihood, train, noise=noise)
    kl_cat = categorical_kl(enc)
    kl_gauss = gaussian_kl_expected(enc, model.prior)
    total = ad.add(recon, ad.add(ad.scalar_mul(kl_cat, betas.cat), ad.scalar_mul(kl_gauss, betas.cont)))
    info_value = 0.0
    if mode == "infocatvae":
        n_info = x.shape[0] if info_samples is None else info_samples
        info = info_max_term(model, rng, n_info, train, stop_decoder_grad)
        total = ad.add(total, ad.scalar_mul(info, betas.info))
        info_value = info.item()
    breakdown = LossBreakdown(
        recon=recon.item(),
        kl_cat=kl_cat.item(),
        kl_gauss=kl_gauss.item(),
        info=info_value,
        total=total.item(),
        beta_cont=betas.cont,
        beta_cat=betas.cat,
        beta_info=betas.info,
    )
    return total, breakdown
