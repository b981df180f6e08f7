"""Plain-text ``key = value`` run configuration.

Lines starting with ``#`` (and trailing ``# ...``) are comments. Unknown keys
are rejected. Precedence: command-line overrides > file > defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .model import ConfigError, ModelConfig
from .objective import Betas
from .train import TrainConfig


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _opt_int(v: str):
    return None if v.strip().lower() in ("", "none", "auto") else int(v)


def _floats(v: str):
    return tuple(float(s) for s in v.replace(" ", "").split(",") if s)


@dataclass
class Config:
    # model
    n_categories: int = 10
    delta: int = 2
    latent_dim: int | None = None  # auto: n_categories * delta
    prior_scale: float = 2.0
    input_dim: int = 784
    hidden_dim: int = 400
    dropout_rate: float = 0.25
    # training
    epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 1e-4
    mode: str = "infocatvae"
    beta_cont: float = 10.0
    beta_cat: float = 10.0
    beta_info: float = 100.0
    seed: int = 0
    info_samples_per_step: int | None = None  # auto: batch size
    checkpoint_every: int = 0
    likelihood: str = "bernoulli"
    dtype: str = "float64"
    stop_decoder_grad: bool = False
    alternate_info: bool = False
    # data and output
    data_dir: str = "data/mnist5k"
    train_limit: int | None = 1000
    out: str = "runs/default"
    # evaluation
    kde_fit_size: int = 5000
    kde_eval_size: int = 1000
    kde_folds: int = 5
    kde_bandwidths: tuple = (0.05, 1.0, 20.0)  # start, stop, count (log-spaced)
    n: int = 10000
    per_class: int = 8
    steps: int = 9
    lambda_values: tuple = tuple(float(v) for v in range(10))
    sweep_category: int = 0

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            n_categories=self.n_categories,
            delta=self.delta,
            latent_dim=self.latent_dim,
            prior_scale=self.prior_scale,
            input_dim=self.input_dim,
            hidden_dim=self.hidden_dim,
            dropout_rate=self.dropout_rate,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            mode=self.mode,
            betas=Betas(cont=self.beta_cont, cat=self.beta_cat, info=self.beta_info),
            seed=self.seed,
            info_samples_per_step=self.info_samples_per_step,
            checkpoint_every=self.checkpoint_every,
            likelihood=self.likelihood,
            dtype=self.dtype,
            stop_decoder_grad=self.stop_decoder_grad,
            alternate_info=self.alternate_info,
        )

    def bandwidth_grid(self):
        import numpy as np

        start, stop, count = self.kde_bandwidths
        return tuple(np.logspace(np.log10(start), np.log10(stop), int(count)))

    def validate(self) -> "Config":
        try:
            self.model_config()
            Betas(cont=self.beta_cont, cat=self.beta_cat, info=self.beta_info)
            self.train_config()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for key in ("kde_fit_size", "kde_eval_size", "n", "per_class"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if len(self.kde_bandwidths) != 3 or min(self.kde_bandwidths) <= 0:
            raise ConfigError("kde_bandwidths must be 'start, stop, count' with positive values")
        return self


_PARSERS = {
    "latent_dim": _opt_int,
    "info_samples_per_step": _opt_int,
    "train_limit": _opt_int,
    "stop_decoder_grad": _bool,
    "alternate_info": _bool,
    "kde_bandwidths": _floats,
    "lambda_values": _floats,
}
ALIASES = {"K": "n_categories", "d": "latent_dim", "lambda": "prior_scale", "lr": "learning_rate"}
KEYS = tuple(f.name for f in fields(Config))


def _convert(key: str, raw: str):
    if key in _PARSERS:
        return _PARSERS[key](raw)
    default = getattr(Config, key)
    if isinstance(default, bool):
        return _bool(raw)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


def _set(values: dict, key: str, raw, source: str):
    name = ALIASES.get(key, key)
    if name not in KEYS:
        raise ConfigError(f"unknown config key {key!r} ({source})")
    if isinstance(raw, str):
        try:
            raw = _convert(name, raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r} ({source}): {exc}") from exc
    values[name] = raw


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        _set(values, key, raw, f"{source}:{lineno}")
    return values


def parse_config(path=None, overrides: dict | None = None) -> Config:
    """Build a validated :class:`Config`; errors name the offending key."""
    values = {}
    if path is not None:
        with open(path) as fh:
            values.update(parse_config_text(fh.read(), str(path)))
    for key, raw in (overrides or {}).items():
        if raw is not None:
            _set(values, key, raw, "command line")
    return Config(**values).validate()


def dump_config(cfg: Config) -> str:
    lines = ["# fully materialised run configuration"]
    for key in KEYS:
        v = getattr(cfg, key)
        if v is None:
            text = "auto"
        elif isinstance(v, tuple):
            text = ", ".join(repr(x) for x in v)
        elif isinstance(v, float):
            text = repr(v)
        else:
            text = str(v)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def replace(cfg: Config, **changes) -> Config:
    return dataclasses.replace(cfg, **changes).validate()
