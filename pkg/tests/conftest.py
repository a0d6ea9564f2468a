import numpy as np
import pytest

from visual_roadmap.dataset import simulate
from visual_roadmap.imaging import obstacle_image
from visual_roadmap.planners import ObstacleMask
from visual_roadmap.robots import ArmSpec
from visual_roadmap.scene import scene_from_dict

SMALL_SCENE = {
    "name": "small",
    "seed": 11,
    "image": {"rows": 40, "cols": 40},
    "robot": {
        "type": "arm",
        "link_lengths": [1.2, 1.0],
        "link_widths": [0.35, 0.25],
        "link_colors": [[200, 40, 40], [40, 150, 60]],
    },
    "obstacles": {"rectangles": [[0.9, 0.6, 0.4, 1.4]], "colors": [[90, 90, 90]]},
    "cameras": [{"extent": 2.6}],
}


@pytest.fixture
def arm2():
    return ArmSpec((1.0, 0.8), (0.3, 0.2), ((200, 40, 40), (40, 150, 60)))


@pytest.fixture
def arm3():
    return ArmSpec((0.7, 0.6, 1.1), (0.45, 0.35, 0.08), ((200, 40, 40), (40, 150, 60), (30, 60, 220)))


@pytest.fixture(scope="session")
def small_scene():
    return scene_from_dict(SMALL_SCENE)


@pytest.fixture(scope="session")
def small_ds(small_scene):
    return simulate(small_scene, 160, seed=3)


@pytest.fixture(scope="session")
def small_mask(small_scene):
    return ObstacleMask(obstacle_image(small_scene.obstacles, small_scene.cameras, small_scene.background))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
