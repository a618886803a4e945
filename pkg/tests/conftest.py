import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_image(width=64, height=48, color=(10, 20, 30)):
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[:] = np.array(color, dtype=np.uint8)
    return img


@pytest.fixture
def image():
    return make_image(100, 100)
