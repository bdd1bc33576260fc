import numpy as np
import pytest

from gga import data
from gga.nn import Model, TrainConfig, accuracy, train
from gga.nn.layers import Dense, Rectifier


@pytest.fixture(scope="session")
def blobs_ds():
    return data.gen_blobs(n=800, classes=5, dim=10, sigma=0.05, seed=0)


@pytest.fixture(scope="session")
def blobs_model(blobs_ds):
    model = Model.build(
        [Dense(10, 24), Rectifier(), Dense(24, 5)], (10,), seed=0
    )
    train(model, blobs_ds.x, blobs_ds.y,
          TrainConfig(epochs=15, batch_size=64, lr=0.1, seed=0))
    assert accuracy(model, blobs_ds.x, blobs_ds.y) > 0.99
    return model


@pytest.fixture(scope="session")
def softplus_model(blobs_model):
    return blobs_model.swap_activations("softplus", beta=10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
