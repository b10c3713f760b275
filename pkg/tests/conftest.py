import numpy as np
import pytest

from geomotion.model import ModelConfig
from geomotion.providers import ProviderSpec
from geomotion.synth import SceneConfig, generate_sequence


@pytest.fixture(scope="session")
def toy_scene():
    return SceneConfig()


@pytest.fixture(scope="session")
def toy_sequence(toy_scene):
    seq = generate_sequence(toy_scene, 0)
    seq.name = "seq_000"
    return seq


@pytest.fixture(scope="session")
def toy_model_config():
    return ModelConfig()


@pytest.fixture(scope="session")
def clean_provider():
    return ProviderSpec(kind="synthetic", noise_amplitude=0.0)


def random_binary_mask(rng, shape, p=0.4):
    return (rng.random(shape) < p).astype(np.uint8)
