import os

import pytest

from infocatvae.data import load_mnist_dir
from infocatvae.train import TrainConfig, train_loop

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA_DIR = os.path.join(ROOT, "data", "mnist5k")
SEEDS = (0, 1, 2)
MODES = ("vanilla_catvae", "infocatvae")

ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail):
    line = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


@pytest.fixture(scope="session")
def mnist_subset():
    return load_mnist_dir(DATA_DIR, limit=1000)


@pytest.fixture(scope="session")
def desk_runs(mnist_subset, tmp_path_factory):
    """20-epoch default runs for every (mode, seed) pair, trained once per session."""
    runs = {}
    base = tmp_path_factory.mktemp("desk_runs")
    for mode in MODES:
        for seed in SEEDS:
            out = base / f"{mode}_{seed}"
            state = train_loop(TrainConfig(mode=mode, seed=seed), mnist_subset, out_dir=str(out))
            runs[mode, seed] = (state, out)
    return runs


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
