import os

import pytest

from conftest import DATA_DIR
from infocatvae.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, run_command
from infocatvae.evaluation import read_pgm
from infocatvae.train import parse_metrics_file

SMALL = ["--data-dir", DATA_DIR, "--set", "hidden_dim=32", "--set", "train_limit=64"]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("cli") / "run")
    code = run_command(["train", "--out", out, "--epochs", "2", "--batch-size", "32", "--seed", "3"] + SMALL)
    assert code == EXIT_OK
    return out


def test_train_outputs(run_dir):
    assert len(parse_metrics_file(os.path.join(run_dir, "metrics.tsv"))) == 2
    assert os.path.exists(os.path.join(run_dir, "final.icv"))
    assert "hidden_dim = 32" in open(os.path.join(run_dir, "config.txt")).read()


def test_resume_extends_run(run_dir, tmp_path):
    out = str(tmp_path / "resumed")
    code = run_command(["train", "--out", out, "--epochs", "3", "--batch-size", "32", "--seed", "3",
                        "--resume", os.path.join(run_dir, "final.icv")] + SMALL)
    assert code == EXIT_OK
    metrics = parse_metrics_file(os.path.join(out, "metrics.tsv"))
    assert [m["epoch"] for m in metrics] == [1, 2, 3]
    assert metrics[:2] == parse_metrics_file(os.path.join(run_dir, "metrics.tsv"))


@pytest.mark.parametrize("cmd, extra, shape", [
    ("sample", ["--per-class", "3"], (10 * 28 + 18, 3 * 28 + 4)),
    ("interpolate", ["--steps", "4"], (10 * 28 + 18, 5 * 28 + 8)),
    ("sweep", ["--lambda-values", "0,1,2", "--category", "5"], (28, 3 * 28 + 4)),
])
def test_image_commands(run_dir, tmp_path, cmd, extra, shape):
    path = str(tmp_path / f"{cmd}.pgm")
    assert run_command([cmd, "--out", run_dir, "--output", path] + extra) == EXIT_OK
    assert read_pgm(open(path, "rb").read()).shape == shape


def test_eval_commands_emit_metric_lines(run_dir, capsys):
    args = ["--out", run_dir, "--data-dir", DATA_DIR, "--seed", "4"]
    assert run_command(["eval-ce", "--n", "300"] + args) == EXIT_OK
    first = capsys.readouterr().out.strip().splitlines()[-1]
    assert run_command(["eval-ce", "--n", "300"] + args) == EXIT_OK
    assert capsys.readouterr().out.strip().splitlines()[-1] == first
    name, value, n, seed = first.split("\t")
    assert (name, n, seed) == ("generated_crossentropy", "300", "4") and float(value) > 0

    assert run_command(["eval-ll", "--n", "50", "--set", "kde_fit_size=200",
                        "--set", "kde_bandwidths=0.1,1,4"] + args) == EXIT_OK
    names = [line.split("\t")[0] for line in capsys.readouterr().out.strip().splitlines()]
    assert names == ["kde_bandwidth", "kde_loglik"]
    logged = open(os.path.join(run_dir, "eval.tsv")).read().splitlines()
    assert [line.split("\t")[0] for line in logged[-3:]] == ["generated_crossentropy", "kde_bandwidth", "kde_loglik"]


def test_gradcheck_command(capsys):
    assert run_command(["gradcheck"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all("PASS" in line for line in lines)


def test_usage_errors(capsys):
    assert run_command([]) == EXIT_USAGE
    assert run_command(["fly"]) == EXIT_USAGE
    assert run_command(["train", "--epochs", "many"]) == EXIT_USAGE
    assert run_command(["train", "--set", "novalue"]) == EXIT_USAGE


def test_validation_errors(tmp_path, capsys):
    assert run_command(["eval-ce", "--out", str(tmp_path / "missing")]) == EXIT_VALIDATION
    assert run_command(["train", "--set", "bogus=1"]) == EXIT_VALIDATION
    assert "bogus" in capsys.readouterr().err
    bad = tmp_path / "bad.icv"
    bad.write_bytes(b"ICVAE1\x00\x00" + bytes(40))
    assert run_command(["sample", "--checkpoint", str(bad)]) == EXIT_VALIDATION
    assert run_command(["train", "--data-dir", str(tmp_path), "--out", str(tmp_path / "o")]) == EXIT_VALIDATION


def test_divergence_exit_code(tmp_path):
    code = run_command(["train", "--out", str(tmp_path / "d"), "--epochs", "2", "--set", "lr=1e6"] + SMALL)
    assert code == EXIT_NUMERICAL
