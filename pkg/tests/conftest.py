import numpy as np
import pytest

from dartclean.model import ModelConfig, Vae


def tiny_model(window=6, hidden=(5,), latent=4, seed=0, **kw):
    return Vae(ModelConfig(window=window, hidden=hidden, latent=latent, **kw), seed=seed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
