"""
Fixtures compartilhadas: amostras sintéticas, faixas simples e modelos pequenos
"""

import numpy as np
import pytest
import torch

from pinet.models.grid import IMAGE_HEIGHT, IMAGE_WIDTH
from pinet.models.lane import LaneInstance, Sample
from pinet.models.params import ModelSpec, SyntheticSceneConfig
from pinet.services.network import PINet
from pinet.services.synthetic import generate_dataset


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="rodar os experimentos marcados como slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="experimento longo; use --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def make_lane(points, instance_id=1) -> LaneInstance:
    xs, ys = zip(*points)
    return LaneInstance.from_xy(xs, ys, instance_id)


def make_sample(lanes=(), source_id="frame.png", image=None) -> Sample:
    if image is None:
        image = np.zeros((IMAGE_HEIGHT, IMAGE_WIDTH, 3), dtype=np.float32)
    return Sample(image=image, lanes=list(lanes), source_id=source_id)


@pytest.fixture
def blank_image():
    return np.zeros((IMAGE_HEIGHT, IMAGE_WIDTH, 3), dtype=np.float32)


@pytest.fixture
def synthetic_pool():
    return generate_dataset(SyntheticSceneConfig(seed=11), 6)


@pytest.fixture
def random_images():
    generator = torch.Generator().manual_seed(1234)
    return torch.rand(2, 3, IMAGE_HEIGHT, IMAGE_WIDTH, generator=generator)


@pytest.fixture(scope="module")
def model_4h():
    torch.manual_seed(0)
    return PINet(ModelSpec(n_hourglass=4)).eval()


@pytest.fixture
def model_1h():
    torch.manual_seed(0)
    return PINet(ModelSpec(n_hourglass=1))
