import numpy as np
import pytest
import torch

from depthscape.config import ModelConfig
from depthscape.data import DEFAULT_LABEL_SET, Dataset, SceneParams, generate_scene

torch.set_num_threads(2)


@pytest.fixture(scope="session")
def tiny_cfg() -> ModelConfig:
    """16x16 two-layer config for fast numeric checks."""
    return ModelConfig(output_resolution=16, z_dim=32, channels=(64, 32))


@pytest.fixture(scope="session")
def desk_cfg() -> ModelConfig:
    return ModelConfig(output_resolution=64)


@pytest.fixture(scope="session")
def scene_triplets():
    return [generate_scene(SceneParams.sample(0, i), 64) for i in range(8)]


@pytest.fixture(scope="session")
def scene_dataset(scene_triplets) -> Dataset:
    return Dataset(root=None, label_set=DEFAULT_LABEL_SET, triplets=scene_triplets)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
