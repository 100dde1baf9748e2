import numpy as np
import pytest

from solarbess.data import synth_generate
from solarbess.env import EnvConfig, SpotMarketEnv


@pytest.fixture(scope="session")
def env_cfg() -> EnvConfig:
    return EnvConfig()


@pytest.fixture(scope="session")
def synth_pair(env_cfg):
    """Five synthetic days shared by the faster tests."""
    return synth_generate(seed=11, days=5, cfg=env_cfg)


@pytest.fixture()
def make_env(synth_pair, env_cfg):
    market, solar = synth_pair

    def factory(start: int = 0, horizon: int | None = None) -> SpotMarketEnv:
        return SpotMarketEnv(market.timestamps, market.prices, solar.availability,
                             solar.actual, env_cfg, start=start, horizon=horizon)

    return factory


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
