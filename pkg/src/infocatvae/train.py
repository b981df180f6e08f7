"""Training loop, resumable state and metrics logging."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import checkpoint as ckpt
from .autodiff import Tape
from .data import IdxDataset, batch_iterator
from .model import CatVAENetwork, ConfigError, ModelConfig
from .nn import Adam
from .objective import LIKELIHOODS, MODES, Betas, LossBreakdown, info_max_term, total_loss
from .rng import Rng

log = logging.getLogger(__name__)

METRIC_FIELDS = ("recon", "kl_cat", "kl_gauss", "info", "total")


class TrainingDivergedError(ad.NumericalError):
    """Raised when a step produces a non-finite loss."""


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 1e-4
    mode: str = "infocatvae"
    betas: Betas = field(default_factory=Betas)
    seed: int = 0
    info_samples_per_step: int | None = None
    checkpoint_every: int = 0
    likelihood: str = "bernoulli"
    dtype: str = "float64"
    stop_decoder_grad: bool = False
    alternate_info: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.info_samples_per_step is not None and self.info_samples_per_step < 1:
            raise ConfigError("info_samples_per_step must be >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.likelihood not in LIKELIHOODS:
            raise ConfigError(f"likelihood must be one of {LIKELIHOODS}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")


def _model_config_vector(cfg: ModelConfig) -> np.ndarray:
    return np.array(
        [cfg.n_categories, cfg.delta, cfg.latent_dim, cfg.prior_scale, cfg.input_dim, cfg.hidden_dim, cfg.dropout_rate],
        dtype=np.float64,
    )


def _model_config_from_vector(v) -> ModelConfig:
    K, delta, d, lam, D, H, rate = (float(x) for x in v)
    return ModelConfig(int(K), int(delta), int(d), lam, int(D), int(H), rate)


@dataclass
class TrainState:
    model: CatVAENetwork
    optimizer: Adam
    rng: Rng
    epoch: int = 0
    step: int = 0
    metrics: list = field(default_factory=list)

    @classmethod
    def initialize(cls, model_config: ModelConfig, config: TrainConfig) -> "TrainState":
        rng = Rng(config.seed)
        model = CatVAENetwork(model_config, dtype=config.dtype).init(rng)
        return cls(model, Adam(model.params, learning_rate=config.learning_rate), rng)

    def to_entries(self):
        opt = self.optimizer
        seed, counter = self.rng.get_state()
        entries = {f"param/{k}": v for k, v in self.model.params.state_arrays().items()}
        entries.update(opt.state_arrays())
        entries["state/epoch"] = np.array([self.epoch], dtype=np.float64)
        entries["state/step"] = np.array([self.step], dtype=np.float64)
        entries["state/adam_t"] = np.array([opt.t], dtype=np.float64)
        entries["state/adam_hparams"] = np.array([opt.learning_rate, opt.beta1, opt.beta2, opt.eps])
        entries["state/rng"] = np.concatenate([ckpt.pack_u64(seed), ckpt.pack_u64(counter)])
        entries["state/model_config"] = _model_config_vector(self.model.config)
        rows = [[m[f] for f in METRIC_FIELDS] for m in self.metrics]
        entries["state/metrics"] = np.array(rows, dtype=np.float64).reshape(len(rows), len(METRIC_FIELDS))
        return entries

    @classmethod
    def from_entries(cls, entries) -> "TrainState":
        model_config = _model_config_from_vector(entries["state/model_config"])
        dtype = entries["param/encoder.fc.weight"].dtype
        model = CatVAENetwork(model_config, dtype=dtype)
        model.params.load_arrays({k[len("param/"):]: v for k, v in entries.items() if k.startswith("param/")})
        lr, b1, b2, eps = (float(v) for v in entries["state/adam_hparams"])
        opt = Adam(model.params, lr, b1, b2, eps)
        opt.load_arrays(entries)
        opt.t = int(entries["state/adam_t"][0])
        rng_words = entries["state/rng"]
        rng = Rng()
        rng.set_state((ckpt.unpack_u64(rng_words[:2]), ckpt.unpack_u64(rng_words[2:])))
        metrics = [dict(zip(METRIC_FIELDS, map(float, row))) for row in entries["state/metrics"]]
        for i, m in enumerate(metrics, start=1):
            m["epoch"] = i
        return cls(model, opt, rng, int(entries["state/epoch"][0]), int(entries["state/step"][0]), metrics)

    def save(self, path) -> None:
        ckpt.save(path, self.to_entries())

    @classmethod
    def load(cls, path) -> "TrainState":
        return cls.from_entries(ckpt.load(path))


def load_model(path) -> CatVAENetwork:
    return TrainState.load(path).model


def _check_finite(bd: LossBreakdown, step: int):
    if not bd.is_finite():
        terms = ", ".join(f"{f}={getattr(bd, f)!r}" for f in METRIC_FIELDS)
        raise TrainingDivergedError(f"non-finite loss at step {step}: {terms}")


def _fill_missing_grads(store):
    for p in store.values():
        if p.grad is None:
            p.grad = np.zeros_like(p.data)


def train_step(state: TrainState, x, config: TrainConfig) -> LossBreakdown:
    """One optimisation step on a batch; returns the pre-update breakdown."""
    model, rng = state.model, state.rng
    n_info = config.info_samples_per_step or len(x)
    joint_info = config.mode == "infocatvae" and not config.alternate_info
    try:
        with Tape() as tape:
            loss, bd = total_loss(
                model,
                x,
                rng,
                mode=config.mode if joint_info else "vanilla_catvae",
                betas=config.betas,
                likelihood=config.likelihood,
                train=True,
                info_samples=n_info,
                stop_decoder_grad=config.stop_decoder_grad,
            )
    except ad.NumericalError as exc:
        raise TrainingDivergedError(f"step {state.step + 1}: {exc}") from exc
    _check_finite(bd, state.step + 1)
    tape.backward(loss)
    state.optimizer.step()

    if config.mode == "infocatvae" and config.alternate_info:
        with Tape() as tape:
            info = info_max_term(model, rng, n_info, train=True, stop_decoder_grad=config.stop_decoder_grad)
            weighted = ad.scalar_mul(info, config.betas.info)
        tape.backward(weighted)
        _fill_missing_grads(model.params)
        state.optimizer.step()
        bd.info = info.item()
        bd.total = bd.total + config.betas.info * bd.info
        _check_finite(bd, state.step + 1)

    state.step += 1
    return bd


def format_metrics_line(record: dict) -> str:
    values = [str(int(record["epoch"]))] + [repr(float(record[f])) for f in METRIC_FIELDS]
    return "\t".join(values)


def parse_metrics_file(path) -> list[dict]:
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            rec = {"epoch": int(parts[0])}
            rec.update({f: float(v) for f, v in zip(METRIC_FIELDS, parts[1:])})
            out.append(rec)
    return out


def train_epoch(state: TrainState, data, config: TrainConfig) -> dict:
    images = data.images if isinstance(data, IdxDataset) else np.asarray(data)
    sums = dict.fromkeys(METRIC_FIELDS, 0.0)
    seen = 0
    for batch in batch_iterator(images, config.batch_size, state.rng, shuffle=True):
        bd = train_step(state, batch.x, config)
        n = len(batch.x)
        for f in METRIC_FIELDS:
            sums[f] += getattr(bd, f) * n
        seen += n
    state.epoch += 1
    record = {"epoch": state.epoch}
    record.update({f: sums[f] / max(seen, 1) for f in METRIC_FIELDS})
    state.metrics.append(record)
    return record


def train_loop(
    config: TrainConfig,
    data,
    model_config: ModelConfig | None = None,
    state: TrainState | None = None,
    out_dir=None,
) -> TrainState:
    """Train until ``state.epoch == config.epochs``.

    With ``out_dir`` set, appends one line per epoch to ``metrics.tsv``,
    writes ``checkpoint_epoch<k>.icv`` every ``checkpoint_every`` epochs and
    ``final.icv`` at the end. Passing a loaded ``state`` resumes training.
    """
    if state is None:
        state = TrainState.initialize(model_config or ModelConfig(), config)
    n = len(data.images if isinstance(data, IdxDataset) else data)
    if n == 0 and config.epochs > state.epoch:
        raise ValueError("training data is empty")
    metrics_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        metrics_path = os.path.join(out_dir, "metrics.tsv")
        # rewritten from the state so a resumed run never keeps stale epochs
        with open(metrics_path, "w") as fh:
            for record in state.metrics:
                fh.write(format_metrics_line(record) + "\n")
    while state.epoch < config.epochs:
        record = train_epoch(state, data, config)
        log.info(
            "epoch %d  total %.4f  recon %.4f  kl_cat %.4f  kl_gauss %.4f  info %.4f",
            record["epoch"], record["total"], record["recon"], record["kl_cat"], record["kl_gauss"], record["info"],
        )
        if metrics_path is not None:
            with open(metrics_path, "a") as fh:
                fh.write(format_metrics_line(record) + "\n")
            if config.checkpoint_every and state.epoch % config.checkpoint_every == 0:
                state.save(os.path.join(out_dir, f"checkpoint_epoch{state.epoch}.icv"))
    if out_dir is not None:
        state.save(os.path.join(out_dir, "final.icv"))
    return state
