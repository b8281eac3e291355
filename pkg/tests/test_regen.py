import math
import random

import numpy as np
import pytest

from jsqlab.errors import ConfigurationError, InsufficientDataError
from jsqlab import regen
from jsqlab.regen import (Cycle, RegenConfig, WHOLE_SPACE, cycle_diagnostics,
                          cycles_to_csv_rows, default_regen_level, detect_cycles,
                          drift_length_scale, ergodic_average, event_indicator,
                          q1_below, q2_above, regenerative_estimate,
                          time_average_probability)
from jsqlab.sde_core import DiffusionParams, PathChunk, iter_path_chunks

from conftest import B, BETA, DT, SEED


def linear_chunk(q2_knots, t_knots, dt=0.01, q1_value=0.0):
    """PathChunk sampling a piecewise-linear q2 path, q1 constant."""
    n = int(round(t_knots[-1] / dt))
    t = np.arange(1, n + 1) * dt
    q2 = np.interp(t, t_knots, q2_knots)
    q1 = np.full(n, q1_value)
    return PathChunk(t_start=0.0, dt=dt, q1_prev=q1_value, q2_prev=q2_knots[0],
                     q1=q1, q2=q2, dl=np.zeros(n), t_end=n * dt,
                     local_time_end=0.0, xi_last=0.0)


class TestLevelScale:
    def test_drift_length_scale(self):
        assert drift_length_scale(1.0) == 1.0
        # max(0.5, 1/0.5, 2*log 2) = 2
        assert drift_length_scale(0.5) == 2.0
        assert drift_length_scale(2.0) == 2.0
        # small beta: the log term dominates
        assert drift_length_scale(0.1) == pytest.approx(10.0 * math.log(10.0))

    def test_default_regen_level(self):
        assert default_regen_level(1.0) == 1.0
        assert default_regen_level(0.5) == 2.0
        assert default_regen_level(2.0) == 2.0


class TestDetection:
    def test_constant_path_has_no_cycles(self):
        chunk = linear_chunk([2.0, 2.0], [0.0, 2.0])
        assert detect_cycles([chunk], RegenConfig(B=1.0, max_cycles=5,
                                                  tolerance_q1=0.01)) == []

    def test_single_interpolated_cycle(self):
        # q2: 2B -> B/2 over [0,1], then up to 2.5B over [1,2]
        chunk = linear_chunk([2.0, 0.5, 2.5], [0.0, 1.0, 2.0])
        cycles = detect_cycles([chunk], RegenConfig(B=1.0, max_cycles=5,
                                                    tolerance_q1=0.01))
        assert len(cycles) == 1
        c = cycles[0]
        # up-crossing of 2 on the rising leg: 1 + (2 - 0.5)/2 = 1.75
        assert c.start_t == 0.0
        assert c.end_t == pytest.approx(1.75, abs=1e-9)
        assert c.duration == pytest.approx(1.75, abs=1e-9)
        assert c.max_q2 >= 2.0
        assert c.q1_at_start == 0.0

    def test_down_and_up_within_one_chunk_sequence(self):
        # two full cycles: 2 -> 0.9 -> 2.1 -> 0.9 -> 2.1
        chunk = linear_chunk([2.0, 0.9, 2.1, 0.9, 2.1], [0.0, 1.0, 2.0, 3.0, 4.0])
        cycles = detect_cycles([chunk], RegenConfig(B=1.0, max_cycles=5,
                                                    tolerance_q1=0.01))
        assert len(cycles) == 2

    def test_wrong_start_rejected(self):
        chunk = linear_chunk([1.0, 2.5], [0.0, 2.0])  # starts at q2 = B, not 2B
        with pytest.raises(ConfigurationError):
            detect_cycles([chunk], RegenConfig(B=1.0, max_cycles=5))

    def test_q1_interpolated_at_regeneration(self):
        # q1 climbing linearly to 0 while q2 crosses 2B mid-step
        dt = 0.5
        first = linear_chunk([2.0, 0.4], [0.0, 1.0], dt=dt)
        q2 = np.array([0.5, 2.5, 0.9, 2.1])
        q1 = np.array([-0.04, 0.0, 0.0, 0.0])
        second = PathChunk(t_start=1.0, dt=dt, q1_prev=0.0, q2_prev=0.4,
                           q1=q1, q2=q2, dl=np.zeros(4), t_end=3.0,
                           local_time_end=0.0, xi_last=0.0)
        cfg = RegenConfig(B=1.0, max_cycles=5, tolerance_q1=1.0)
        cycles = detect_cycles([first, second], cfg)
        assert len(cycles) == 2
        c = cycles[0]
        # 2B-crossing inside the second step of chunk two: theta = 0.75
        assert c.end_t == pytest.approx(1.5 + 0.75 * dt)
        assert c.min_q1 == pytest.approx(-0.04)
        # the next cycle starts at the interpolated q1 = -0.04 + 0.75*0.04
        c2 = cycles[1]
        assert c2.q1_at_start == pytest.approx(-0.01)
        assert c2.start_t == pytest.approx(c.end_t)
        assert c2.end_t == pytest.approx(2.5 + dt * (2.0 - 0.9) / 1.2)

    def test_max_cycles_truncation(self):
        chunk = linear_chunk([2.0, 0.9, 2.1, 0.9, 2.1, 0.9, 2.1],
                             [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        cycles = detect_cycles([chunk], RegenConfig(B=1.0, max_cycles=2,
                                                    tolerance_q1=0.01))
        assert len(cycles) == 2


class TestEstimator:
    def test_whole_space_exact(self, small_cycles):
        est = regenerative_estimate(small_cycles, WHOLE_SPACE)
        assert est.value == 1.0
        assert est.std_err == 0.0
        assert est.n == len(small_cycles)

    def test_level_below_minimum_is_one(self, small_cycles):
        # 2B is never exceeded by... all cycles contain values above 2B at
        # the start; the lowest configured q2 level is 2B itself
        est = regenerative_estimate(small_cycles, q2_above(2.0 * B))
        assert est.value < 1.0  # strictly above 2B only part of the time
        # q1 grid at the shallow end is visited in almost every cycle
        est_q1 = regenerative_estimate(small_cycles, q1_below(0.25))
        assert 0.0 < est_q1.value < 1.0

    def test_permutation_invariance(self, small_cycles):
        event = q2_above(2.0)
        base = regenerative_estimate(small_cycles, event)
        shuffled = list(small_cycles)
        random.Random(4).shuffle(shuffled)
        perm = regenerative_estimate(shuffled, event)
        assert perm.value == pytest.approx(base.value, rel=1e-12)
        assert perm.std_err == pytest.approx(base.std_err, rel=1e-12)

    def test_too_few_cycles(self, small_cycles):
        with pytest.raises(InsufficientDataError):
            regenerative_estimate(small_cycles[:1], WHOLE_SPACE)

    def test_unknown_level_rejected(self, small_cycles):
        with pytest.raises(ConfigurationError):
            regenerative_estimate(small_cycles, q2_above(2.013))

    def test_occupations_within_duration(self, small_cycles):
        for c in small_cycles[:200]:
            assert (c.occ_q1 >= 0).all() and (c.occ_q2 >= 0).all()
            assert (c.occ_q1 <= c.duration + 1e-9).all()
            assert (c.occ_q2 <= c.duration + 1e-9).all()

    def test_boundary_and_extrema_invariants(self, small_cycles, small_config):
        tol = small_config.resolved_tolerance(DT)
        for c in small_cycles:
            assert abs(c.q1_at_start) <= tol
            assert c.max_q2 >= 2.0 * B - 1e-9
            assert c.min_q1 <= 0.0


class TestErgodic:
    def test_constant_functional(self):
        p = DiffusionParams(beta=BETA, dt=DT, seed=1)
        val = ergodic_average(iter_path_chunks(p, 10.0),
                              lambda q1, q2: np.ones_like(q1))
        assert val == 1.0

    def test_exponential_decay_oracle(self):
        # no-kick synthetic decay from y: left sum of y*exp(-t) over [0, T]
        y, T, dt = 2.0, 5.0, 1e-3
        n = int(T / dt)
        t = np.arange(1, n + 1) * dt
        q2 = y * np.exp(-t)
        chunk = PathChunk(t_start=0.0, dt=dt, q1_prev=-1.0, q2_prev=y,
                          q1=np.full(n, -1.0), q2=q2, dl=np.zeros(n),
                          t_end=T, local_time_end=0.0, xi_last=0.0)
        val = ergodic_average([chunk], lambda q1, q2: q2)
        exact = (y / T) * (1.0 - math.exp(-T))
        assert val == pytest.approx(exact, rel=2e-3)
        # and matches the discrete left-endpoint sum exactly
        discrete = float(np.concatenate(([y], q2[:-1])).sum()) / n
        assert val == pytest.approx(discrete, rel=1e-12)

    def test_cross_estimator_agreement(self, small_cycles):
        # regenerative vs time-average on the same trajectory prefix
        p = DiffusionParams(beta=BETA, dt=DT, seed=SEED, q1_init=0.0, q2_init=2.0 * B)
        event = q2_above(2.0)
        reg_est = regenerative_estimate(small_cycles, event)
        ta_est = time_average_probability(iter_path_chunks(p, 10_000.0), event)
        combined = math.hypot(reg_est.std_err, ta_est.std_err)
        assert abs(reg_est.value - ta_est.value) <= 3.0 * combined

    def test_event_indicator_kinds(self):
        q1 = np.array([-1.0, -0.1])
        q2 = np.array([3.0, 1.0])
        assert event_indicator(q1_below(0.5))(q1, q2).tolist() == [1.0, 0.0]
        assert event_indicator(q2_above(2.0))(q1, q2).tolist() == [1.0, 0.0]
        assert event_indicator(WHOLE_SPACE)(q1, q2).tolist() == [1.0, 1.0]


class TestDiagnostics:
    def _fake_cycles(self, durations):
        lv = np.array([1.0])
        occ = np.array([0.0])
        return [Cycle(start_t=0.0, end_t=d, duration=float(d), q1_at_start=0.0,
                      min_q1=-1.0, max_q2=2.0, q1_levels=lv, q2_levels=lv,
                      occ_q1=occ, occ_q2=occ) for d in durations]

    def test_iid_exponential_lag1(self):
        rng = np.random.default_rng(5)
        durations = rng.exponential(scale=3.0, size=4000)
        diag = cycle_diagnostics(self._fake_cycles(durations))
        assert abs(diag.lag1_autocorr) <= 3.0 / math.sqrt(diag.n)
        assert diag.mean_duration == pytest.approx(durations.mean())

    def test_insufficient_cycles(self):
        with pytest.raises(InsufficientDataError):
            cycle_diagnostics(self._fake_cycles(np.ones(10)))

    def test_duration_tail_monotone(self, small_cycles):
        diag = cycle_diagnostics(small_cycles)
        assert (np.diff(diag.tail_p) <= 1e-12).all()
        assert diag.mean_duration > 0
        # doubling the sample moves the mean by a few SE at most
        half = cycle_diagnostics(small_cycles[: len(small_cycles) // 2])
        delta = abs(half.mean_duration - diag.mean_duration)
        assert delta <= 3.0 * half.se_mean_duration

    def test_cycle_count_consistent_with_mean_duration(self):
        p = DiffusionParams(beta=BETA, dt=DT, seed=77, q1_init=0.0, q2_init=2.0 * B)
        horizon = 10_000.0
        cycles = detect_cycles(iter_path_chunks(p, horizon),
                               RegenConfig(B=B, max_cycles=100_000))
        d = np.array([c.duration for c in cycles])
        n = d.size
        mean, var = d.mean(), d.var(ddof=1)
        expected = horizon / mean
        se = math.sqrt(horizon * var / mean**3)  # renewal CLT
        assert abs(n - expected) <= 3.0 * se + 1.0


class TestCsv:
    def test_rows_shape(self, small_cycles):
        header, rows = cycles_to_csv_rows(small_cycles)
        rows = list(rows)
        assert header[:6] == ["start_t", "end_t", "duration", "q1_at_start",
                              "min_q1", "max_q2"]
        assert any(h.startswith("occ_q1_lt_") for h in header)
        assert any(h.startswith("occ_q2_gt_") for h in header)
        assert len(rows) == len(small_cycles)
        assert len(rows[0]) == len(header)

    def test_empty_raises(self):
        with pytest.raises(InsufficientDataError):
            cycles_to_csv_rows([])


class TestConfig:
    def test_validation(self):
        with pytest.raises(ConfigurationError):
            RegenConfig(B=0.0)
        with pytest.raises(ConfigurationError):
            RegenConfig(B=1.0, max_cycles=0)
        with pytest.raises(ConfigurationError):
            RegenConfig(B=1.0, q1_levels=[2.0, 1.0])

    def test_default_tolerance(self):
        cfg = RegenConfig(B=1.0)
        assert cfg.resolved_tolerance(1e-3) == pytest.approx(5.0 * math.sqrt(1e-3))
        cfg2 = RegenConfig(B=1.0, tolerance_q1=0.2)
        assert cfg2.resolved_tolerance(1e-3) == 0.2

    def test_default_grids_cover_fit_windows(self):
        cfg = RegenConfig(B=1.0)
        assert cfg.q2_levels[0] == 2.0 and cfg.q2_levels[-1] == 6.0
        assert cfg.q1_levels[0] == 0.25 and cfg.q1_levels[-1] == 4.0
