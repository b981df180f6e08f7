"""Categorical-prior VAE (CatVAE / InfoCatVAE) on a small numpy autodiff engine."""

__version__ = "0.1.0"

from .autodiff import NumericalError, ShapeError, Tape, Tensor, finite_difference_check
from .estimator import InfoCatVAE
from .evaluation import GaussianKDE
from .model import CatVAENetwork, ConfigError, LatentPrior, ModelConfig, build_prior_means
from .objective import Betas, LossBreakdown, total_loss
from .rng import Rng
from .train import TrainConfig, TrainState, train_loop

__all__ = [
    "Betas",
    "CatVAENetwork",
    "ConfigError",
    "GaussianKDE",
    "InfoCatVAE",
    "LatentPrior",
    "LossBreakdown",
    "ModelConfig",
    "NumericalError",
    "Rng",
    "ShapeError",
    "Tape",
    "Tensor",
    "TrainConfig",
    "TrainState",
    "build_prior_means",
    "finite_difference_check",
    "total_loss",
    "train_loop",
]
