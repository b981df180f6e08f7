"""``infocatvae`` command line.

Exit status: 0 success, 1 usage error, 2 validation or I/O error,
3 numerical failure (divergence, failed gradient check).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__
from .autodiff import NumericalError
from .checkpoint import CheckpointError
from .config import Config, dump_config, parse_config
from .data import IdxFormatError, load_mnist_dir
from .model import ConfigError
from .rng import Rng

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3

COMMANDS = ("train", "sample", "interpolate", "sweep", "eval-ll", "eval-ce", "gradcheck")

log = logging.getLogger("infocatvae")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n\n{self.format_usage()}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--mode", choices=("vanilla_catvae", "infocatvae"))
    common.add_argument("--epochs", type=int)
    common.add_argument("--batch-size", type=int)
    common.add_argument("--out", help="run directory (default from config: runs/default)")
    common.add_argument("--data-dir", help="directory holding train-images-idx3-ubyte[.gz]")
    common.add_argument("--likelihood", choices=("bernoulli", "gaussian"))
    common.add_argument("--checkpoint", help="checkpoint to evaluate (default: <out>/final.icv)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="infocatvae", description="Train and evaluate categorical-prior VAEs.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--resume", help="checkpoint to resume from")

    p = sub.add_parser("sample", parents=[common], help="K-row grid of prior samples (PGM)")
    p.add_argument("--per-class", type=int)
    p.add_argument("--output", help="PGM path (default: <out>/samples.pgm)")

    p = sub.add_parser("interpolate", parents=[common], help="centroid interpolation grid (PGM)")
    p.add_argument("--steps", type=int)
    p.add_argument("--output", help="PGM path (default: <out>/interpolation.pgm)")

    p = sub.add_parser("sweep", parents=[common], help="decode one centroid at several prior scales (PGM)")
    p.add_argument("--lambda-values", help="comma-separated scales, default 0..9")
    p.add_argument("--category", type=int)
    p.add_argument("--output", help="PGM path (default: <out>/sweep.pgm)")

    p = sub.add_parser("eval-ll", parents=[common], help="KDE log-likelihood of generated samples")
    p.add_argument("--n", type=int, help="number of generated samples scored")

    p = sub.add_parser("eval-ce", parents=[common], help="cross-entropy of generated samples")
    p.add_argument("--n", type=int)

    sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    return parser


def _overrides(args) -> dict:
    mapping = {
        "seed": "seed", "mode": "mode", "epochs": "epochs", "batch_size": "batch_size",
        "out": "out", "data_dir": "data_dir", "likelihood": "likelihood",
        "per_class": "per_class", "steps": "steps", "lambda_values": "lambda_values",
        "category": "sweep_category",
    }
    out = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = value
    if getattr(args, "n", None) is not None:
        if args.command == "eval-ll":
            out["kde_eval_size"] = args.n
        else:
            out["n"] = args.n
    return out


def _checkpoint_path(args, cfg: Config) -> str:
    return args.checkpoint or os.path.join(cfg.out, "final.icv")


def _load_model(args, cfg):
    from .train import TrainState

    return TrainState.load(_checkpoint_path(args, cfg)).model


def _write(path, payload: bytes):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(payload)
    print(path)


def _emit_metric(cfg: Config, name: str, value: float, n: int):
    line = f"{name}\t{value!r}\t{n}\t{cfg.seed}"
    print(line)
    if os.path.isdir(cfg.out):
        with open(os.path.join(cfg.out, "eval.tsv"), "a") as fh:
            fh.write(line + "\n")


def cmd_train(args, cfg: Config) -> int:
    from .train import TrainState, train_loop

    data = load_mnist_dir(cfg.data_dir, limit=cfg.train_limit)
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "config.txt"), "w") as fh:
        fh.write(dump_config(cfg))
    state = TrainState.load(args.resume) if args.resume else None
    state = train_loop(cfg.train_config(), data, cfg.model_config(), state=state, out_dir=cfg.out)
    last = state.metrics[-1] if state.metrics else None
    if last:
        print(f"epoch {last['epoch']}: total {last['total']:.4f}")
    print(os.path.join(cfg.out, "final.icv"))
    return EXIT_OK


def cmd_sample(args, cfg: Config) -> int:
    from .evaluation import render_sample_grid, sample_grid

    model = _load_model(args, cfg)
    grid = sample_grid(model, cfg.per_class, Rng(cfg.seed))
    K = model.config.n_categories
    _write(args.output or os.path.join(cfg.out, "samples.pgm"), render_sample_grid(grid, K, cfg.per_class))
    return EXIT_OK


def cmd_interpolate(args, cfg: Config) -> int:
    from .evaluation import interpolate_centroids, render_sample_grid

    model = _load_model(args, cfg)
    grid = interpolate_centroids(model, cfg.steps)
    _write(args.output or os.path.join(cfg.out, "interpolation.pgm"),
           render_sample_grid(grid, grid.shape[0], grid.shape[1]))
    return EXIT_OK


def cmd_sweep(args, cfg: Config) -> int:
    from .evaluation import lambda_sweep, render_sample_grid

    model = _load_model(args, cfg)
    row = lambda_sweep(model, cfg.sweep_category, cfg.lambda_values)
    _write(args.output or os.path.join(cfg.out, "sweep.pgm"), render_sample_grid(row, 1, len(row)))
    return EXIT_OK


def cmd_eval_ll(args, cfg: Config) -> int:
    from .evaluation import generate, kde_log_likelihood

    model = _load_model(args, cfg)
    real = load_mnist_dir(cfg.data_dir, limit=cfg.kde_fit_size).images
    _, fake = generate(model, cfg.kde_eval_size, Rng(cfg.seed))
    value, h = kde_log_likelihood(real, fake, cfg.bandwidth_grid(), cfg.kde_folds, cfg.seed)
    _emit_metric(cfg, "kde_bandwidth", h, len(real))
    _emit_metric(cfg, "kde_loglik", value, cfg.kde_eval_size)
    return EXIT_OK


def cmd_eval_ce(args, cfg: Config) -> int:
    from .evaluation import generated_crossentropy

    model = _load_model(args, cfg)
    value = generated_crossentropy(model, cfg.n, Rng(cfg.seed))
    _emit_metric(cfg, "generated_crossentropy", value, cfg.n)
    return EXIT_OK


def cmd_gradcheck(args, cfg: Config) -> int:
    from .gradcheck import run_all

    results = run_all(seed=cfg.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


HANDLERS = {
    "train": cmd_train,
    "sample": cmd_sample,
    "interpolate": cmd_interpolate,
    "sweep": cmd_sweep,
    "eval-ll": cmd_eval_ll,
    "eval-ce": cmd_eval_ce,
    "gradcheck": cmd_gradcheck,
}


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        overrides = _overrides(args)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = parse_config(args.config, overrides)
        return HANDLERS[args.command](args, cfg)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, CheckpointError, IdxFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
