import numpy as np
import pytest

from evofuse.image import ImageGray, ImagePair, Task
from evofuse.niqe import default_niqe_model
from evofuse.synth import toy_pairs


@pytest.fixture(scope="session")
def niqe_model():
    return default_niqe_model()


@pytest.fixture(scope="session")
def toy_dataset():
    return toy_pairs(n=4, size=96, seed=5)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


def random_image(rng, h=16, w=16) -> ImageGray:
    return ImageGray(rng.random((h, w)))


def random_pair(rng, h=16, w=16, pair_id="p", task=Task.IR_VISIBLE) -> ImagePair:
    return ImagePair(random_image(rng, h, w), random_image(rng, h, w), pair_id, task)
