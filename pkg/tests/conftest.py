import numpy as np
import pytest

from scripts.config import WorldConfig, load_config


SMALL_RUN = {
    "episodes": 30,
    "seed": 3,
    "world": {"resolution": 8},
    "predictor": {"hidden": [8]},
    "hyperparams": {"pretrain_samples": 12, "pretrain_epochs": 2},
    "metrics": {"window": 10, "final_window": 10},
}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def quiet_world():
    """Small, noise-free world."""
    return WorldConfig(resolution=8, depth_sigma=0.0, wrench_sigma=0.0, force_sigma=0.0, tau_threshold=1.0)


@pytest.fixture
def small_config():
    return load_config(overrides=dict(SMALL_RUN, scenario="dynamic_linear", learner="ssl"))
