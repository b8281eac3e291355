"""Time-step refinement stability: halving dt moves stationary estimates
by less than 2 combined SE.  The projected-reflection local time has no
published convergence rate, so this is the stability proxy for the
discretization."""

import math

import pytest

from jsqlab.regen import RegenConfig, collect_cycles, q2_above, regenerative_estimate
from jsqlab.sde_core import DiffusionParams


@pytest.mark.slow
def test_halving_dt_is_stable():
    estimates = []
    for dt, stream in ((1e-3, 0), (5e-4, 1)):
        params = DiffusionParams(beta=1.0, dt=dt, seed=90, q1_init=0.0, q2_init=2.0)
        cycles = collect_cycles(params, RegenConfig(B=1.0, max_cycles=2_000),
                                stream=stream)
        estimates.append(regenerative_estimate(cycles, q2_above(2.0)))
    coarse, fine = estimates
    combined = math.hypot(coarse.std_err, fine.std_err)
    assert abs(coarse.value - fine.value) <= 2.0 * combined
