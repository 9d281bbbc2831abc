import numpy as np
import pytest

from son_adv import nn

_ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Register a one-line acceptance verdict for the terminal summary."""
    def record(tag: str, passed: bool, detail: str = ""):
        _ACCEPTANCE_LINES.append(f"{tag}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip())
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def toy_points(n=200, seed=0):
    """2-D points in [0, 1]^2 split by x0 + x1 = 1 with a margin.

    Sampled in [-2, 2]^2 with distance >= 0.5 from the line x0 + x1 = 0,
    then mapped affinely into the unit box (distance >= 0.125 there).
    """
    rng = np.random.default_rng(seed)
    pts = []
    while len(pts) < n:
        p = rng.uniform(-2, 2, size=2)
        if abs(p.sum()) / np.sqrt(2) >= 0.5:
            pts.append(p)
    raw = np.array(pts)
    x = (raw + 2.0) / 4.0
    y = (raw.sum(axis=1) > 0).astype(np.int64)
    return x, y


@pytest.fixture(scope="session")
def toy_data():
    return toy_points()


@pytest.fixture(scope="session")
def toy_model(toy_data):
    x, y = toy_data
    xv, yv = toy_points(60, seed=1)
    model = nn.init_model([2, 8, 8, 2], 0.0, seed=3)
    cfg = nn.TrainConfig(learning_rate=0.01, max_epochs=200, batch_size=16, early_stop_patience=30, seed=3)
    model, _ = nn.train(model, (x, y), (xv, yv), cfg)
    return model


def random_model(seed, dims=(6, 12, 10, 3)):
    model = nn.init_model(list(dims), 0.0, seed)
    rng = np.random.default_rng(seed + 1000)
    for b in model.biases:
        b[:] = rng.normal(0, 0.3, size=b.shape)
    return model
