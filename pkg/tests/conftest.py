import numpy as np
import pytest

from eegdg.data import GeneratorConfig, generate_synthetic, load_dataset, synthesize


@pytest.fixture(scope="session")
def tiny_dataset():
    """Two subjects, four trials per class: enough for a LOSO split and a sampler."""
    return synthesize(GeneratorConfig(subjects=2, sessions=2, trials_per_class=4, seed=1))


@pytest.fixture(scope="session")
def small_dataset():
    """Three subjects at full trial count, used for split and sampler accounting."""
    return synthesize(GeneratorConfig(subjects=3, sessions=2, seed=0))


@pytest.fixture(scope="session")
def desk_dir(tmp_path_factory):
    """The default 15-subject synthetic dataset written to disk once per session."""
    out = tmp_path_factory.mktemp("desk")
    generate_synthetic(out, GeneratorConfig(seed=0, shift_strength=0.1, noise_level=0.5))
    return out


@pytest.fixture(scope="session")
def desk_dataset(desk_dir):
    return load_dataset(desk_dir)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
