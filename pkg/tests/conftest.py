import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from statestream.modelio import init_random_weights, toy_config

TOY_SEED = 7


@pytest.fixture(scope="session")
def cfg():
    return toy_config()


@pytest.fixture(scope="session")
def weights(cfg):
    return init_random_weights(cfg, TOY_SEED)


@pytest.fixture(scope="session")
def toy_assets(tmp_path_factory, cfg, weights):
    """Config + weight files on disk, shared across CLI tests."""
    from statestream.modelio import save_config, save_weights
    root = tmp_path_factory.mktemp("assets")
    cfg_path = root / "toy.cfg"
    w_path = root / "toy.sstw"
    save_config(str(cfg_path), cfg)
    save_weights(str(w_path), weights)
    return {"config": str(cfg_path), "weights": str(w_path)}
