import numpy as np
import pytest

from mixgraph.data import build_windows, synthetic_scene
from mixgraph.network import ModelConfig
from mixgraph.trainer import TrainConfig

# settings frozen from the overfit oracle runs (see tests/test_acceptance.py)
OVERFIT_TRAIN = TrainConfig(
    epochs=400,
    batch_windows=1,
    lr_initial=0.3,
    lr_late=0.03,
    lr_switch_epoch=300,
    grad_clip_norm=1.0,
    seed=0,
)


@pytest.fixture(scope="session")
def synthetic_windows():
    return build_windows(synthetic_scene())


@pytest.fixture(scope="session")
def window3(synthetic_windows):
    """Three agents (two classes plus the turning agent) from the synthetic scene."""
    return synthetic_windows[0].permuted([0, 1, 5])


@pytest.fixture
def default_config():
    return ModelConfig(num_classes=6)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_window(rng, m, obs_len=8, pred_len=12, n_classes=6):
    from mixgraph.data import SceneWindow, compute_velocities

    steps = rng.normal(scale=2.0, size=(obs_len + pred_len, m, 2))
    xy = np.cumsum(steps, axis=0) + rng.uniform(0, 100, size=(1, m, 2))
    obs = xy[:obs_len]
    return SceneWindow(
        agent_ids=list(range(m)),
        class_indices=list(rng.integers(0, n_classes, size=m)),
        obs_positions=obs,
        pred_positions=xy[obs_len:],
        obs_velocities=compute_velocities(obs),
    )


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
