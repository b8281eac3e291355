"""Stationary tail curves, tail-model fits, and pathwise extrema scaling.

Tail curves are built from regenerative estimates of nested level events on
identical cycles, so monotonicity in the level is exact rather than
statistical.  Fits are weighted least squares of log probability on the
level (exponential model) or the squared level (Gaussian model), with
inverse-variance-of-log weights.  Extrema tracking follows the running
min of q1 and max of q2 along one long path and reports the normalized
ratios min q1 / sqrt(log t) and max q2 / log t at geometric checkpoints.
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Iterator, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InsufficientDataError
from .regen import Cycle, q1_below, q2_above, regenerative_estimate
from .sde_core import DiffusionParams, iter_path_chunks

__all__ = [
    "ExtremaSeries",
    "FitResult",
    "TailCurve",
    "default_checkpoints",
    "extrema_from_chunks",
    "extrema_track",
    "fit_exponential",
    "fit_gaussian",
    "tail_curve",
]

MIN_CYCLES_FOR_CURVE = 100
MIN_FIT_POINTS = 4


@dataclass(frozen=True)
class TailCurve:
    """Tail points (level, prob, std_err) for one coordinate.

    coordinate "q1_lower" holds pi(Q1 < -x) against x; "q2_upper" holds
    pi(Q2 > y) against y.  Levels are strictly increasing and the
    probabilities are non-increasing because the points come from nested
    events on the same cycles.
    """

    coordinate: str  # "q1_lower" | "q2_upper"
    levels: np.ndarray
    probs: np.ndarray
    std_errs: np.ndarray

    def __post_init__(self) -> None:
        if self.coordinate not in ("q1_lower", "q2_upper"):
            raise ConfigurationError(f"unknown coordinate {self.coordinate!r}")
        if not np.all(np.diff(self.levels) > 0):
            raise ConfigurationError("levels must be strictly increasing")
        if np.any(self.probs <= 0) or np.any(self.probs > 1):
            raise ConfigurationError("probs must lie in (0, 1]")
        if np.any(np.diff(self.probs) > 0):
            raise ConfigurationError("probs must be non-increasing in level")

    @property
    def n_points(self) -> int:
        return int(self.levels.size)

    def restrict(self, lo: float, hi: float) -> "TailCurve":
        """Sub-curve with levels in [lo, hi]."""
        m = (self.levels >= lo - 1e-12) & (self.levels <= hi + 1e-12)
        return TailCurve(self.coordinate, self.levels[m], self.probs[m], self.std_errs[m])


@dataclass(frozen=True)
class FitResult:
    """Weighted log-linear fit; slope < 0 for any genuine tail."""

    model: str  # "exp_in_level" | "gauss_in_level_squared"
    slope: float
    intercept: float
    r_squared: float
    level_range: tuple[float, float]


def tail_curve(cycles: Sequence[Cycle], coordinate: str, levels) -> TailCurve:
    """Regenerative tail estimates at nested levels on identical cycles.

    Levels whose occupation is identically zero are dropped with a warning
    (a zero estimate has no log and carries no fit information).
    """
    if len(cycles) < MIN_CYCLES_FOR_CURVE:
        raise InsufficientDataError(
            f"need >= {MIN_CYCLES_FOR_CURVE} cycles for a tail curve, got {len(cycles)}")
    if coordinate not in ("q1_lower", "q2_upper"):
        raise ConfigurationError(f"unknown coordinate {coordinate!r}")
    event = q1_below if coordinate == "q1_lower" else q2_above
    lv, pr, se = [], [], []
    for level in np.asarray(levels, dtype=float):
        est = regenerative_estimate(cycles, event(level))
        if est.value <= 0.0:
            warnings.warn(f"level {level:g} never visited; point dropped", stacklevel=2)
            continue
        lv.append(float(level))
        pr.append(est.value)
        se.append(est.std_err)
    return TailCurve(coordinate, np.array(lv), np.array(pr), np.array(se))


def _weighted_loglinear(x: np.ndarray, probs: np.ndarray, std_errs: np.ndarray,
                        ) -> tuple[float, float, float]:
    """WLS of log(probs) on x; weights 1/(relative SE)^2. Returns
    (slope, intercept, weighted R^2)."""
    logp = np.log(probs)
    rel = np.where(probs > 0, std_errs / probs, np.inf)
    rel = np.maximum(rel, 1e-12)
    w = 1.0 / rel**2
    sw = w.sum()
    xbar = float((w * x).sum() / sw)
    ybar = float((w * logp).sum() / sw)
    sxx = float((w * (x - xbar) ** 2).sum())
    sxy = float((w * (x - xbar) * (logp - ybar)).sum())
    if sxx <= 0:
        raise ConfigurationError("degenerate regressor values")
    slope = sxy / sxx
    intercept = ybar - slope * xbar
    resid = logp - (intercept + slope * x)
    ss_res = float((w * resid**2).sum())
    ss_tot = float((w * (logp - ybar) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return slope, intercept, r2


def _check_points(curve: TailCurve) -> None:
    if curve.n_points < MIN_FIT_POINTS:
        raise InsufficientDataError(
            f"need >= {MIN_FIT_POINTS} usable points, got {curve.n_points}")


def fit_exponential(curve: TailCurve) -> FitResult:
    """Fit log prob = intercept + slope * level."""
    _check_points(curve)
    slope, intercept, r2 = _weighted_loglinear(curve.levels, curve.probs, curve.std_errs)
    return FitResult("exp_in_level", slope, intercept, r2,
                     (float(curve.levels[0]), float(curve.levels[-1])))


def fit_gaussian(curve: TailCurve) -> FitResult:
    """Fit log prob = intercept + slope * level^2."""
    _check_points(curve)
    slope, intercept, r2 = _weighted_loglinear(curve.levels**2, curve.probs, curve.std_errs)
    return FitResult("gauss_in_level_squared", slope, intercept, r2,
                     (float(curve.levels[0]), float(curve.levels[-1])))


@dataclass(frozen=True)
class ExtremaSeries:
    """Running extrema and their normalized ratios at checkpoint times."""

    t: np.ndarray
    running_min_q1: np.ndarray
    running_max_q2: np.ndarray
    min_q1_over_sqrt_log_t: np.ndarray
    max_q2_over_log_t: np.ndarray

    def __post_init__(self) -> None:
        if not np.all(np.diff(self.t) > 0):
            raise ConfigurationError("checkpoints must be strictly increasing")
        if float(self.t[0]) < 3.0:
            raise ConfigurationError("checkpoints must satisfy t >= 3 (log t > 1)")
        if np.any(np.diff(self.running_min_q1) > 0):
            raise ConfigurationError("running min must be non-increasing")
        if np.any(np.diff(self.running_max_q2) < 0):
            raise ConfigurationError("running max must be non-decreasing")


def default_checkpoints(horizon: float) -> np.ndarray:
    """Geometric checkpoints 10^(j/2) in [3, horizon]."""
    js = np.arange(1, int(math.floor(2.0 * math.log10(horizon) + 1e-9)) + 1)
    t = 10.0 ** (js / 2.0)
    return t[t >= 3.0]


def extrema_from_chunks(chunks, checkpoints, q1_init: float, q2_init: float,
                        dt: float) -> ExtremaSeries:
    """Running extrema of a chunk stream at the given checkpoint times.

    The extremum at checkpoint t covers the initial state and every sample
    with time <= t.
    """
    cps = np.asarray(checkpoints, dtype=float)
    if cps.size == 0 or not np.all(np.diff(cps) > 0):
        raise ConfigurationError("checkpoints must be non-empty and strictly increasing")
    if cps[0] < 3.0:
        raise ConfigurationError(f"checkpoints must satisfy t >= 3, got {cps[0]:g}")
    idx = np.floor(cps / dt + 1e-9).astype(np.int64)
    run_min = q1_init
    run_max = q2_init
    mins = np.empty(cps.size)
    maxs = np.empty(cps.size)
    next_cp = 0
    done = 0
    for chunk in chunks:
        if next_cp >= cps.size:
            break
        cmin = np.minimum.accumulate(chunk.q1)
        cmax = np.maximum.accumulate(chunk.q2)
        while next_cp < cps.size and idx[next_cp] <= done + chunk.n_steps:
            k = idx[next_cp] - done  # samples 1..k of this chunk are included
            if k <= 0:
                mins[next_cp] = run_min
                maxs[next_cp] = run_max
            else:
                mins[next_cp] = min(run_min, float(cmin[k - 1]))
                maxs[next_cp] = max(run_max, float(cmax[k - 1]))
            next_cp += 1
        run_min = min(run_min, float(cmin[-1]))
        run_max = max(run_max, float(cmax[-1]))
        done += chunk.n_steps
    if next_cp < cps.size:
        raise ConfigurationError("stream ended before the last checkpoint")
    log_t = np.log(cps)
    return ExtremaSeries(t=cps, running_min_q1=mins, running_max_q2=maxs,
                         min_q1_over_sqrt_log_t=mins / np.sqrt(log_t),
                         max_q2_over_log_t=maxs / log_t)


def extrema_track(params: DiffusionParams, horizon: float, checkpoints,
                  stream: int = 0) -> ExtremaSeries:
    """Track running extrema of one simulated path at checkpoint times."""
    cps = np.asarray(checkpoints, dtype=float)
    if cps.size and cps[-1] > horizon + 1e-9:
        raise ConfigurationError("checkpoints must not exceed the horizon")
    return extrema_from_chunks(iter_path_chunks(params, horizon, stream=stream),
                               cps, params.q1_init, params.q2_init, params.dt)


def tail_curve_csv_rows(curve: TailCurve) -> tuple[list[str], Iterator[list]]:
    header = ["coordinate", "level", "prob", "std_err"]

    def rows() -> Iterator[list]:
        for i in range(curve.n_points):
            yield [curve.coordinate, curve.levels[i], curve.probs[i], curve.std_errs[i]]

    return header, rows()


def extrema_csv_rows(series: ExtremaSeries) -> tuple[list[str], Iterator[list]]:
    header = ["t", "running_min_q1", "running_max_q2",
              "min_q1_over_sqrt_log_t", "max_q2_over_log_t"]

    def rows() -> Iterator[list]:
        for i in range(series.t.size):
            yield [series.t[i], series.running_min_q1[i], series.running_max_q2[i],
                   series.min_q1_over_sqrt_log_t[i], series.max_q2_over_log_t[i]]

    return header, rows()
