import numpy as np
import pytest

from rsgrasp.calibration import CalibrationSettings, calibrate_finger
from rsgrasp.cli import finger_seed
from rsgrasp.config import load_params, load_scene
from rsgrasp.optimizer import Proprioception


@pytest.fixture(scope="session")
def scene():
    return load_scene()


@pytest.fixture(scope="session")
def params():
    return load_params()


@pytest.fixture(scope="session")
def fingers(scene):
    return scene.fingers.build()


@pytest.fixture(scope="session")
def calibrated(scene, params, fingers):
    """(model, dataset) per finger under the default settings."""
    return [calibrate_finger(scene.objects, f, params.calibration, finger_seed(params.seed, k))
            for k, f in enumerate(fingers, start=1)]


@pytest.fixture(scope="session")
def hand(calibrated, fingers, params):
    return Proprioception(fingers, [m for m, _ in calibrated], params.calibration.dead_band,
                          samples=params.scans_per_reading)


@pytest.fixture(scope="session")
def ideal_hand(fingers):
    return Proprioception(fingers)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
