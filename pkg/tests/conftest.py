import pytest

from jsqlab.regen import RegenConfig, collect_cycles
from jsqlab.sde_core import DiffusionParams

BETA = 1.0
B = 1.0
DT = 1e-3
SEED = 20240811


@pytest.fixture(scope="session")
def small_cycles():
    """Shared 1500-cycle run at beta=1, B=1 (a few seconds once)."""
    params = DiffusionParams(beta=BETA, dt=DT, seed=SEED, q1_init=0.0, q2_init=2.0 * B)
    config = RegenConfig(B=B, max_cycles=1500)
    return collect_cycles(params, config)


@pytest.fixture(scope="session")
def small_config():
    return RegenConfig(B=B, max_cycles=1500)
