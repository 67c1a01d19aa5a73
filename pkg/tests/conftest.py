import numpy as np
import pytest

from multires_ipp.camera import CameraModel, GsdLadder
from multires_ipp.field import FieldSpec, LabelGrid, generate_field
from multires_ipp.oracle import OracleParams

SMALL_CAM = CameraModel(image_width_px=100, image_height_px=100)


def random_grid(rng, shape, res=0.005, origin=(0.0, 0.0), p=None):
    return LabelGrid(rng.choice(3, size=shape, p=p).astype(np.uint8), res, origin)


@pytest.fixture
def cam():
    return SMALL_CAM


@pytest.fixture
def ladder():
    return GsdLadder()


@pytest.fixture
def params():
    return OracleParams()


@pytest.fixture(scope="session")
def small_field():
    # 9 m x 6 m: a 3 x 2 survey grid at 3.0 cm/px with the 100 px camera
    spec = FieldSpec(extent=(9.0, 6.0), weed_cluster_count=2, weed_cluster_radius_m=1.5, seed=3)
    return generate_field(spec)


@pytest.fixture(scope="session")
def soil_field():
    return LabelGrid(np.zeros((1200, 1800), np.uint8), 0.005)


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
