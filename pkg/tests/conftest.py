import math

import pytest

from parkbench.env import ParkingEnv, ParkingScene, ParkingSlot
from parkbench.geometry import Polygon
from parkbench.vehicle import VehicleParams


def rect(cx, cy, hx, hy):
    return Polygon([(cx - hx, cy - hy), (cx + hx, cy - hy),
                    (cx + hx, cy + hy), (cx - hx, cy + hy)])


def make_open_scene(resolution=0.1, with_block=True):
    """24x24 m walled lot, one slot on the east side opening west."""
    boundary = rect(0, 0, 12, 12)
    obstacles = [rect(0.0, 7.0, 1.0, 1.0)] if with_block else []
    slot = ParkingSlot(rect(8.0, 0.0, 2.7, 1.35), heading=math.pi)
    return ParkingScene(boundary, obstacles, [slot], resolution=resolution)


@pytest.fixture(scope="session")
def open_scene():
    return make_open_scene()


@pytest.fixture
def env(open_scene):
    return ParkingEnv(open_scene, VehicleParams(), seed=0)
