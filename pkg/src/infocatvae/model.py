"""Category-conditioned VAE networks and the fixed block prior.

Layout (defaults in parentheses)::

    encoder trunk    h = ReLU(Dropout(FC input->hidden))            (784 -> 400)
    classifier       q(c|x) = softmax(FC hidden->K)                 (400 -> 10)
    posterior heads  [h, onehot(c)] -> FC -> mu_c, FC -> logvar_c   (410 -> 20)
    decoder          ReLU(Dropout(FC d->hidden)) -> FC -> sigmoid   (20 -> 400 -> 784)

The prior is p(c) = 1/K and p(z|c) = N(mu_c, I) where mu_c is ``lambda`` on the
coordinate block ``[c*delta, (c+1)*delta)`` and zero elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Dropout, Linear, ParameterStore, init_parameters
from .rng import Rng


class ConfigError(ValueError):
    """Invalid model or training configuration."""


@dataclass
class ModelConfig:
    n_categories: int = 10
    delta: int = 2
    latent_dim: int | None = None
    prior_scale: float = 2.0
    input_dim: int = 784
    hidden_dim: int = 400
    dropout_rate: float = 0.25

    def __post_init__(self):
        if self.latent_dim is None:
            self.latent_dim = self.n_categories * self.delta
        self.validate()

    def validate(self):
        for name in ("n_categories", "delta", "latent_dim", "input_dim", "hidden_dim"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.latent_dim % self.n_categories != 0:
            raise ConfigError(
                f"latent_dim={self.latent_dim} is not divisible by n_categories={self.n_categories}"
            )
        if self.latent_dim != self.n_categories * self.delta:
            raise ConfigError(
                f"latent_dim={self.latent_dim} != n_categories*delta={self.n_categories * self.delta}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must be in [0, 1)")
        if self.prior_scale < 0:
            raise ConfigError("prior_scale must be nonnegative")


@dataclass
class LatentPrior:
    means: np.ndarray  # (K, d)
    scale: float

    @property
    def n_categories(self):
        return self.means.shape[0]

    @property
    def latent_dim(self):
        return self.means.shape[1]


def build_prior_means(config: ModelConfig, scale: float | None = None) -> LatentPrior:
    """Block prior means; ``scale`` overrides ``config.prior_scale``."""
    K, delta, d = config.n_categories, config.delta, config.latent_dim
    if d % K != 0 or d != K * delta:
        raise ConfigError(f"latent_dim={d} must equal n_categories*delta={K * delta}")
    lam = config.prior_scale if scale is None else float(scale)
    means = np.zeros((K, d))
    for c in range(K):
        means[c, c * delta:(c + 1) * delta] = lam
    return LatentPrior(means=means, scale=lam)


@dataclass
class EncoderOutput:
    """Classifier output plus one Gaussian posterior per category."""

    cat_logits: Tensor
    cat_probs: Tensor
    mu: list[Tensor] = field(default_factory=list)
    log_var: list[Tensor] = field(default_factory=list)

    @property
    def log_cat_probs(self) -> Tensor:
        return ad.log_softmax_rows(self.cat_logits)

    def mu_array(self) -> np.ndarray:
        """(batch, K, d) view of the posterior means."""
        return np.stack([m.data for m in self.mu], axis=1)

    def log_var_array(self) -> np.ndarray:
        return np.stack([v.data for v in self.log_var], axis=1)


class CatVAENetwork:
    """Parameters and forward passes of the encoder, classifier and decoder."""

    def __init__(self, config: ModelConfig, dtype=np.float64):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.prior = build_prior_means(config)
        self.params = ParameterStore()
        K, H, d, D = config.n_categories, config.hidden_dim, config.latent_dim, config.input_dim
        p = self.params
        self.enc_fc = Linear(p, "encoder.fc", D, H, self.dtype)
        self.cls_fc = Linear(p, "encoder.classifier", H, K, self.dtype)
        self.mu_fc = Linear(p, "encoder.mu", H + K, d, self.dtype)
        self.logvar_fc = Linear(p, "encoder.logvar", H + K, d, self.dtype)
        self.dec_fc = Linear(p, "decoder.fc", d, H, self.dtype)
        self.out_fc = Linear(p, "decoder.out", H, D, self.dtype)
        self.enc_drop = Dropout(config.dropout_rate)
        self.dec_drop = Dropout(config.dropout_rate)
        self._onehots = np.eye(K, dtype=self.dtype)

    def init(self, rng: Rng):
        init_parameters(self.params, rng)
        return self

    def _input(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.dtype))
        if x.data.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise ad.ShapeError("encode", x.shape, (None, self.config.input_dim))
        if x.dtype != self.dtype:
            x = Tensor(x.data.astype(self.dtype))
        return x

    def trunk(self, x, rng=None, train=False) -> Tensor:
        x = self._input(x)
        return ad.relu(self.enc_drop(self.enc_fc(x), rng, train))

    def classify_logits(self, x, rng=None, train=False) -> Tensor:
        """Logits of q(c|x)."""
        return self.cls_fc(self.trunk(x, rng, train))

    def encode(self, x, rng=None, train=False) -> EncoderOutput:
        h = self.trunk(x, rng, train)
        logits = self.cls_fc(h)
        probs = ad.softmax_rows(logits)
        n = h.shape[0]
        mus, logvars = [], []
        for c in range(self.config.n_categories):
            onehot = Tensor(np.broadcast_to(self._onehots[c], (n, self.config.n_categories)).copy())
            hc = ad.concat_cols([h, onehot])
            mus.append(self.mu_fc(hc))
            logvars.append(self.logvar_fc(hc))
        return EncoderOutput(cat_logits=logits, cat_probs=probs, mu=mus, log_var=logvars)

    def decode_logits(self, z, rng=None, train=False) -> Tensor:
        z = z if isinstance(z, Tensor) else Tensor(np.asarray(z, dtype=self.dtype))
        if z.data.ndim != 2 or z.shape[1] != self.config.latent_dim:
            raise ad.ShapeError("decode", z.shape, (None, self.config.latent_dim))
        h = ad.relu(self.dec_drop(self.dec_fc(z), rng, train))
        return self.out_fc(h)

    def decode(self, z, rng=None, train=False) -> Tensor:
        """Pixel means in (0, 1)."""
        return ad.sigmoid(self.decode_logits(z, rng, train))


def encode(x, model: CatVAENetwork, rng=None, train=False) -> EncoderOutput:
    return model.encode(x, rng, train)


def decode(z, model: CatVAENetwork, rng=None, train=False) -> Tensor:
    return model.decode(z, rng, train)


def reparameterize(mu: Tensor, log_var: Tensor, rng: Rng | None = None, eps=None) -> Tensor:
    """``z = mu + exp(log_var / 2) * eps``; ``eps`` is drawn from ``rng`` unless given."""
    if mu.shape != log_var.shape:
        raise ad.ShapeError("reparameterize", mu.shape, log_var.shape)
    if eps is None:
        if rng is None:
            raise ValueError("reparameterize needs an Rng or explicit eps")
        eps = rng.standard_normal(mu.shape)
    eps = np.asarray(eps, dtype=mu.dtype)
    if eps.shape != mu.shape:
        raise ad.ShapeError("reparameterize", mu.shape, eps.shape)
    std = ad.exp(ad.scalar_mul(log_var, 0.5))
    return ad.add(mu, ad.mul(std, Tensor(eps)))


def sample_prior(prior: LatentPrior, c=None, rng: Rng | None = None, n: int | None = None, noise=True):
    """Draw ``(c, z)`` with c ~ Uniform(K) unless given and z ~ N(mu_c, I).

    With ``n`` set, returns arrays of ``n`` categories and an (n, d) code
    matrix; otherwise a single ``(int, (d,) array)`` pair. ``noise=False``
    returns the centroids themselves.
    """
    K = prior.n_categories
    single = n is None
    count = 1 if single else int(n)
    if c is None:
        if rng is None:
            raise ValueError("sampling a category needs an Rng")
        cats = rng.integers(K, size=count)
    else:
        cats = np.broadcast_to(np.asarray(c, dtype=np.int64), (count,)).copy()
        if np.any(cats < 0) or np.any(cats >= K):
            raise ValueError(f"category index out of range [0, {K})")
    z = prior.means[cats].copy()
    if noise:
        if rng is None:
            raise ValueError("sampling z needs an Rng")
        z += rng.standard_normal(z.shape)
    if single:
        return int(cats[0]), z[0]
    return cats, z
