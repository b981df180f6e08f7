"""scikit-learn style wrapper around the training loop."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .autodiff import Tensor
from .model import ModelConfig, sample_prior
from .objective import Betas, total_loss
from .rng import Rng
from .train import TrainConfig, TrainState, train_loop


def check_unit_interval(X, name="X"):
    X = check_array(X, dtype=np.float64)
    if X.min() < 0.0 or X.max() > 1.0:
        raise ValueError(f"{name} must have values in [0, 1]")
    return X


class InfoCatVAE(TransformerMixin, BaseEstimator):
    """VAE with a fixed K-modal block prior and category-conditioned posteriors.

    ``transform`` returns the posterior code averaged over categories,
    ``predict_proba`` the soft cluster assignment q(c|x) and ``predict`` its
    argmax. Set ``mode="vanilla_catvae"`` to drop the information term.
    """

    def __init__(
        self,
        n_categories=10,
        delta=2,
        prior_scale=2.0,
        hidden_dim=400,
        dropout_rate=0.25,
        mode="infocatvae",
        beta_cont=10.0,
        beta_cat=10.0,
        beta_info=100.0,
        learning_rate=1e-4,
        epochs=20,
        batch_size=128,
        info_samples_per_step=None,
        likelihood="bernoulli",
        dtype="float64",
        random_state=0,
    ):
        self.n_categories = n_categories
        self.delta = delta
        self.prior_scale = prior_scale
        self.hidden_dim = hidden_dim
        self.dropout_rate = dropout_rate
        self.mode = mode
        self.beta_cont = beta_cont
        self.beta_cat = beta_cat
        self.beta_info = beta_info
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.info_samples_per_step = info_samples_per_step
        self.likelihood = likelihood
        self.dtype = dtype
        self.random_state = random_state

    def _configs(self, n_features):
        model_cfg = ModelConfig(
            n_categories=self.n_categories,
            delta=self.delta,
            prior_scale=self.prior_scale,
            input_dim=n_features,
            hidden_dim=self.hidden_dim,
            dropout_rate=self.dropout_rate,
        )
        train_cfg = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            mode=self.mode,
            betas=Betas(self.beta_cont, self.beta_cat, self.beta_info),
            seed=int(self.random_state or 0),
            info_samples_per_step=self.info_samples_per_step,
            likelihood=self.likelihood,
            dtype=self.dtype,
        )
        return model_cfg, train_cfg

    def _validate(self, X):
        if self.likelihood == "bernoulli":
            return check_unit_interval(X)
        return check_array(X, dtype=np.float64)

    def fit(self, X, y=None):
        X = self._validate(X)
        model_cfg, train_cfg = self._configs(X.shape[1])
        self.state_ = train_loop(train_cfg, X, model_cfg)
        self.model_ = self.state_.model
        self.history_ = list(self.state_.metrics)
        self.n_features_in_ = X.shape[1]
        return self

    def _check_X(self, X):
        check_is_fitted(self, "model_")
        X = self._validate(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def predict_proba(self, X):
        X = self._check_X(X)
        return self.model_.encode(X).cat_probs.data

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def transform(self, X):
        """Posterior mean code ``sum_c q(c|x) mu(c, x)``, shape (n, latent_dim)."""
        X = self._check_X(X)
        enc = self.model_.encode(X)
        return np.einsum("nk,nkd->nd", enc.cat_probs.data, enc.mu_array())

    def inverse_transform(self, Z):
        check_is_fitted(self, "model_")
        Z = check_array(Z, dtype=np.float64)
        return self.model_.decode(Tensor(Z.astype(self.model_.dtype))).data

    def sample(self, n_samples=1, category=None, random_state=None):
        """Decode prior draws; returns ``(X, categories)``."""
        check_is_fitted(self, "model_")
        rng = Rng(self.random_state if random_state is None else random_state)
        cats, z = sample_prior(self.model_.prior, c=category, rng=rng, n=n_samples)
        return self.inverse_transform(z), cats

    def score(self, X, y=None):
        """Single-sample ELBO estimate per example, averaged (higher is better)."""
        X = self._check_X(X)
        _, bd = total_loss(
            self.model_, X, Rng(self.random_state or 0), mode="vanilla_catvae",
            betas=Betas(1.0, 1.0, 0.0), likelihood=self.likelihood, train=False,
        )
        return -(bd.recon + bd.kl_cat + bd.kl_gauss)

    @classmethod
    def from_checkpoint(cls, path, **params):
        state = TrainState.load(path)
        cfg = state.model.config
        est = cls(
            n_categories=cfg.n_categories, delta=cfg.delta, prior_scale=cfg.prior_scale,
            hidden_dim=cfg.hidden_dim, dropout_rate=cfg.dropout_rate, **params,
        )
        est.state_ = state
        est.model_ = state.model
        est.history_ = list(state.metrics)
        est.n_features_in_ = cfg.input_dim
        return est
