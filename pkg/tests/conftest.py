import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from swarmplan.voxel_grid import Box, WorldModel


@pytest.fixture
def empty_world():
    return WorldModel([], Box([-50, -50, -50], [50, 50, 50]))


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


def random_world(rng, n_boxes=6, span=6.0):
    boxes = []
    for _ in range(n_boxes):
        lo = rng.uniform(-span, span - 1.0, size=3)
        size = rng.uniform(0.2, 1.5, size=3)
        boxes.append(Box(lo, lo + size))
    return WorldModel(boxes, Box([-50, -50, -50], [50, 50, 50]))
