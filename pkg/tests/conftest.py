import numpy as np
import pytest
import torch

from camchex.config import ModelConfig
from camchex.data import Split, SynthSpec, generate_synthetic, vocabulary_from_datasets

# Single-threaded keeps run-to-run loss traces bitwise comparable.
torch.set_num_threads(1)


MIXED_SPEC = SynthSpec(
    num_classes=8,
    prevalence=(0.30, 0.25, 0.20, 0.30, 0.25, 0.20, 0.25, 0.30),
    signals=("image", "image", "image", "image", "image", "text", "text", "vitals"),
    n_train=48,
    n_val=24,
    n_test=24,
    n_pool=24,
    resolution=64,
)


@pytest.fixture(scope="session")
def desk8_config() -> ModelConfig:
    return ModelConfig(num_classes=8)


@pytest.fixture(scope="session")
def mixed_splits():
    return generate_synthetic(MIXED_SPEC, seed=11)


@pytest.fixture(scope="session")
def mixed_vocab(mixed_splits):
    return vocabulary_from_datasets(mixed_splits.values())


@pytest.fixture(scope="session")
def train_set(mixed_splits):
    return mixed_splits[Split.TRAIN]


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
