import numpy as np
import pytest

from adists.backbone import Backbone, synthetic_archive
from adists.texture import load_params
from adists.synthetic import natural_crop

try:
    from importlib import resources

    _PARAMS_PATH = resources.files("adists") / "data" / "default_params.txt"
except Exception:  # pragma: no cover
    _PARAMS_PATH = None


@pytest.fixture(scope="session")
def archive():
    return synthetic_archive(seed=0)


@pytest.fixture(scope="session")
def backbone(archive):
    return Backbone(archive)


@pytest.fixture(scope="session")
def params():
    return load_params(str(_PARAMS_PATH))


@pytest.fixture(scope="session")
def crop_pair():
    rng = np.random.default_rng(2024)
    x = natural_crop(rng, 64)
    y = np.clip(x + rng.normal(0.0, 0.05, x.shape), 0.0, 1.0)
    return x, y
