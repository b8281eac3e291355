"""Regeneration structure of the diffusion and ratio estimators.

The path regenerates every time q2, having first dropped to the level B,
climbs back to 2B: at that instant q1 is at its boundary (a consequence of
q2 only increasing through the local time), so the process restarts from
(0, 2B) and the segments between successive regenerations are i.i.d.

Stationary probabilities are then ratios
    pi(A) = E[occupation of A per cycle] / E[cycle duration],
estimated over i.i.d. cycles with a delta-method standard error.  The
long-run time average of the same indicator is the consistency oracle.

Crossings of B and 2B are located by linear interpolation between samples;
occupation times are recorded as histograms over configured level grids so
one pass yields every level event at once.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .errors import ConfigurationError, InsufficientDataError
from .sde_core import DiffusionParams, PathChunk, iter_path_chunks

__all__ = [
    "Cycle",
    "CycleDiagnostics",
    "LevelEvent",
    "ProbEstimate",
    "RegenConfig",
    "WHOLE_SPACE",
    "collect_cycles",
    "cycle_diagnostics",
    "cycles_to_csv_rows",
    "default_regen_level",
    "default_q1_levels",
    "default_q2_levels",
    "detect_cycles",
    "drift_length_scale",
    "ergodic_average",
    "q1_below",
    "q2_above",
    "regenerative_estimate",
    "time_average_probability",
]


def drift_length_scale(beta: float) -> float:
    """Characteristic level scale max(beta, 1/beta, log(1/beta)/beta)."""
    if beta <= 0:
        raise ConfigurationError(f"beta must be > 0, got {beta}")
    return max(beta, 1.0 / beta, math.log(1.0 / beta) / beta)


def default_regen_level(beta: float) -> float:
    """Default regeneration level B = max(1, drift length scale)."""
    return max(1.0, drift_length_scale(beta))


def default_q1_levels() -> np.ndarray:
    """Default x grid for events {Q1 < -x}."""
    return np.round(np.arange(0.25, 4.0001, 0.25), 12)


def default_q2_levels(B: float) -> np.ndarray:
    """Default y grid for events {Q2 > y}, anchored at the restart level 2B."""
    return np.round(2.0 * B + np.arange(0.0, 4.0001, 0.5), 12)


def _as_level_grid(levels, name: str) -> np.ndarray:
    arr = np.asarray(levels, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ConfigurationError(f"{name} must be a non-empty 1-d grid")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} must be finite")
    if not np.all(np.diff(arr) > 0):
        raise ConfigurationError(f"{name} must be strictly increasing")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RegenConfig:
    """Cycle-detection configuration.

    B > 0 is the down level; cycles regenerate at 2B.  Any B works; small
    B keeps cycles short.  tolerance_q1 bounds |q1| at detected
    regeneration instants and defaults to 5*sqrt(dt) of the scanned path.
    The level grids fix which occupation events each cycle records.
    """

    B: float
    max_cycles: int = 10_000
    tolerance_q1: Optional[float] = None
    q1_levels: np.ndarray = field(default_factory=default_q1_levels)
    q2_levels: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.B) and self.B > 0):
            raise ConfigurationError(f"B must be a positive real, got {self.B}")
        if int(self.max_cycles) < 1:
            raise ConfigurationError(f"max_cycles must be >= 1, got {self.max_cycles}")
        if self.tolerance_q1 is not None and not self.tolerance_q1 > 0:
            raise ConfigurationError(f"tolerance_q1 must be > 0, got {self.tolerance_q1}")
        object.__setattr__(self, "q1_levels", _as_level_grid(self.q1_levels, "q1_levels"))
        q2 = self.q2_levels if self.q2_levels is not None else default_q2_levels(self.B)
        object.__setattr__(self, "q2_levels", _as_level_grid(q2, "q2_levels"))

    def resolved_tolerance(self, dt: float) -> float:
        return self.tolerance_q1 if self.tolerance_q1 is not None else 5.0 * math.sqrt(dt)


@dataclass(frozen=True)
class Cycle:
    """One regeneration cycle.

    occ_q1[j] is the time spent with Q1 < -q1_levels[j] inside the cycle,
    occ_q2[j] the time with Q2 > q2_levels[j]; both lie in [0, duration]
    up to float rounding of the accumulated pieces.  min_q1/max_q2 include
    the interpolated cycle endpoints, so max_q2 >= 2B by construction.
    """

    start_t: float
    end_t: float
    duration: float
    q1_at_start: float
    min_q1: float
    max_q2: float
    q1_levels: np.ndarray
    q2_levels: np.ndarray
    occ_q1: np.ndarray
    occ_q2: np.ndarray


@dataclass(frozen=True)
class ProbEstimate:
    """Monte Carlo estimate with standard error and replication count."""

    value: float
    std_err: float
    n: int


@dataclass(frozen=True)
class LevelEvent:
    """Level event on the cycle grids: {Q1 < -level}, {Q2 > level}, or all."""

    kind: str  # "q1_below" | "q2_above" | "all"
    level: float = math.nan

    def __post_init__(self) -> None:
        if self.kind not in ("q1_below", "q2_above", "all"):
            raise ConfigurationError(f"unknown event kind {self.kind!r}")


def q1_below(x: float) -> LevelEvent:
    """Event {Q1 < -x}; x must sit on the configured q1 grid."""
    return LevelEvent("q1_below", float(x))


def q2_above(y: float) -> LevelEvent:
    """Event {Q2 > y}; y must sit on the configured q2 grid."""
    return LevelEvent("q2_above", float(y))


WHOLE_SPACE = LevelEvent("all")


@njit(cache=True)
def _scan_kernel(a1, a2, start_idx, pq1, pq2, pt, dt, b_lo, b_hi, phase, have_cycle,
                 cyc_start, cyc_q1s, cur_min, cur_max, hist1, hist2,
                 x_levels, y_levels,
                 out_start, out_end, out_q1s, out_min, out_max, out_h1, out_h2,
                 ):  # pragma: no cover - jitted
    """Scan one chunk; returns (consumed, n_emitted, carried scalars...)."""
    k1 = x_levels.shape[0]
    k2 = y_levels.shape[0]
    cap = out_start.shape[0]
    n_out = 0
    i = start_idx
    n = a1.shape[0]
    while i < n:
        q1 = a1[i]
        q2 = a2[i]
        if phase == 0 and pq2 > b_lo and q2 <= b_lo:
            phase = 1
            crossed = False
        elif phase == 1 and pq2 < b_hi and q2 >= b_hi:
            crossed = True
        else:
            crossed = False

        if not crossed:
            if have_cycle == 1:
                # left-endpoint occupation for the full step
                v = -pq1
                k = 0
                while k < k1 and x_levels[k] < v:
                    k += 1
                hist1[k] += dt
                v = pq2
                k = 0
                while k < k2 and y_levels[k] < v:
                    k += 1
                hist2[k] += dt
                if q1 < cur_min:
                    cur_min = q1
                if q2 > cur_max:
                    cur_max = q2
        else:
            theta = (b_hi - pq2) / (q2 - pq2)
            t_cross = pt + theta * dt
            q1_cross = pq1 + theta * (q1 - pq1)
            if have_cycle == 1:
                if n_out >= cap:
                    # caller must drain outputs and re-enter at this step
                    return (i, n_out, pq1, pq2, pt, phase, have_cycle,
                            cyc_start, cyc_q1s, cur_min, cur_max)
                v = -pq1
                k = 0
                while k < k1 and x_levels[k] < v:
                    k += 1
                hist1[k] += theta * dt
                v = pq2
                k = 0
                while k < k2 and y_levels[k] < v:
                    k += 1
                hist2[k] += theta * dt
                if q1_cross < cur_min:
                    cur_min = q1_cross
                if b_hi > cur_max:
                    cur_max = b_hi
                out_start[n_out] = cyc_start
                out_end[n_out] = t_cross
                out_q1s[n_out] = cyc_q1s
                out_min[n_out] = cur_min
                out_max[n_out] = cur_max
                for k in range(k1 + 1):
                    out_h1[n_out, k] = hist1[k]
                for k in range(k2 + 1):
                    out_h2[n_out, k] = hist2[k]
                n_out += 1
            # start the next cycle at the interpolated regeneration instant
            have_cycle = 1
            cyc_start = t_cross
            cyc_q1s = q1_cross
            cur_min = q1_cross if q1_cross < q1 else q1
            cur_max = b_hi if b_hi > q2 else q2
            for k in range(k1 + 1):
                hist1[k] = 0.0
            for k in range(k2 + 1):
                hist2[k] = 0.0
            v = -q1_cross
            k = 0
            while k < k1 and x_levels[k] < v:
                k += 1
            hist1[k] += (1.0 - theta) * dt
            v = b_hi
            k = 0
            while k < k2 and y_levels[k] < v:
                k += 1
            hist2[k] += (1.0 - theta) * dt
            phase = 0

        pq1 = q1
        pq2 = q2
        pt = pt + dt
        i += 1
    return (i, n_out, pq1, pq2, pt, phase, have_cycle,
            cyc_start, cyc_q1s, cur_min, cur_max)


class _CycleScanner:
    """Incremental cycle detector over a chunk stream."""

    def __init__(self, config: RegenConfig):
        self.config = config
        self.x_levels = config.q1_levels
        self.y_levels = config.q2_levels
        self.hist1 = np.zeros(self.x_levels.size + 1)
        self.hist2 = np.zeros(self.y_levels.size + 1)
        self.phase = 0
        self.have_cycle = 0
        self.cyc_start = 0.0
        self.cyc_q1s = 0.0
        self.cur_min = 0.0
        self.cur_max = 0.0
        self.prev: Optional[tuple[float, float, float]] = None  # (q1, q2, t)
        self.dt: Optional[float] = None
        self._rows: list[tuple] = []
        self.n_cycles = 0

    def _validate_start(self, chunk: PathChunk) -> None:
        tol = self.config.resolved_tolerance(chunk.dt)
        b_hi = 2.0 * self.config.B
        if abs(chunk.q1_prev) > tol or abs(chunk.q2_prev - b_hi) > 1e-9 * (1.0 + b_hi):
            raise ConfigurationError(
                f"path must start at the regeneration state (0, {b_hi:g}); "
                f"got ({chunk.q1_prev:g}, {chunk.q2_prev:g})")

    def feed(self, chunk: PathChunk) -> None:
        if self.n_cycles >= self.config.max_cycles:
            return
        if self.prev is None:
            self._validate_start(chunk)
            self.prev = (chunk.q1_prev, chunk.q2_prev, chunk.t_start)
            self.dt = chunk.dt
            # the validated start is itself a regeneration instant, so the
            # segment up to the first detected regeneration is a full cycle
            self.have_cycle = 1
            self.cyc_start = chunk.t_start
            self.cyc_q1s = chunk.q1_prev
            self.cur_min = chunk.q1_prev
            self.cur_max = chunk.q2_prev
        pq1, pq2, pt = self.prev
        i = 0
        n = chunk.n_steps
        while i < n and self.n_cycles < self.config.max_cycles:
            cap = min(self.config.max_cycles - self.n_cycles, 4096)
            out_start = np.empty(cap)
            out_end = np.empty(cap)
            out_q1s = np.empty(cap)
            out_min = np.empty(cap)
            out_max = np.empty(cap)
            out_h1 = np.empty((cap, self.hist1.size))
            out_h2 = np.empty((cap, self.hist2.size))
            (i, n_out, pq1, pq2, pt, self.phase, self.have_cycle,
             self.cyc_start, self.cyc_q1s, self.cur_min, self.cur_max) = _scan_kernel(
                chunk.q1, chunk.q2, i, pq1, pq2, pt, chunk.dt,
                self.config.B, 2.0 * self.config.B, self.phase, self.have_cycle,
                self.cyc_start, self.cyc_q1s, self.cur_min, self.cur_max,
                self.hist1, self.hist2, self.x_levels, self.y_levels,
                out_start, out_end, out_q1s, out_min, out_max, out_h1, out_h2)
            if n_out:
                self._rows.append((out_start[:n_out].copy(), out_end[:n_out].copy(),
                                   out_q1s[:n_out].copy(), out_min[:n_out].copy(),
                                   out_max[:n_out].copy(), out_h1[:n_out].copy(),
                                   out_h2[:n_out].copy()))
                self.n_cycles += n_out
        self.prev = (pq1, pq2, pt)

    def cycles(self) -> list[Cycle]:
        out: list[Cycle] = []
        for start, end, q1s, mn, mx, h1, h2 in self._rows:
            # occupation above level j = suffix histogram sum from bin j+1
            occ1 = np.cumsum(h1[:, ::-1], axis=1)[:, ::-1][:, 1:]
            occ2 = np.cumsum(h2[:, ::-1], axis=1)[:, ::-1][:, 1:]
            for r in range(start.size):
                o1 = occ1[r].copy()
                o2 = occ2[r].copy()
                o1.setflags(write=False)
                o2.setflags(write=False)
                out.append(Cycle(start_t=float(start[r]), end_t=float(end[r]),
                                 duration=float(end[r] - start[r]),
                                 q1_at_start=float(q1s[r]), min_q1=float(mn[r]),
                                 max_q2=float(mx[r]), q1_levels=self.x_levels,
                                 q2_levels=self.y_levels, occ_q1=o1, occ_q2=o2))
        return out


def detect_cycles(chunks: Iterable[PathChunk], config: RegenConfig) -> list[Cycle]:
    """Detect regeneration cycles on a path stream started at (0, 2B).

    Starting anywhere else is a configuration error (a segment from an
    arbitrary start would have a different law than the i.i.d. cycles and
    would have to be discarded); the enforced start is itself a
    regeneration instant, so the segment up to the first detected
    regeneration is already a full cycle.  Returns at most
    config.max_cycles cycles; an empty list signals that no cycle
    completed within the stream.
    """
    scanner = _CycleScanner(config)
    for chunk in chunks:
        scanner.feed(chunk)
        if scanner.n_cycles >= config.max_cycles:
            break
    return scanner.cycles()


def collect_cycles(params: DiffusionParams, config: RegenConfig, stream: int = 0,
                   max_horizon: Optional[float] = None) -> list[Cycle]:
    """Simulate from (0, 2B) until config.max_cycles cycles are collected.

    Raises InsufficientDataError if max_horizon elapses first.
    """
    if abs(params.q2_init - 2.0 * config.B) > 1e-9 * (1.0 + 2.0 * config.B) or params.q1_init != 0.0:
        params = DiffusionParams(beta=params.beta, dt=params.dt, seed=params.seed,
                                 q1_init=0.0, q2_init=2.0 * config.B)
    scanner = _CycleScanner(config)
    for chunk in iter_path_chunks(params, None, stream=stream):
        scanner.feed(chunk)
        if scanner.n_cycles >= config.max_cycles:
            break
        if max_horizon is not None and chunk.t_end >= max_horizon:
            raise InsufficientDataError(
                f"only {scanner.n_cycles} of {config.max_cycles} cycles within "
                f"horizon {max_horizon:g}")
    return scanner.cycles()


def _occupations(cycles: Sequence[Cycle], event: LevelEvent) -> np.ndarray:
    if event.kind == "all":
        return np.array([c.duration for c in cycles])
    first = cycles[0]
    levels = first.q1_levels if event.kind == "q1_below" else first.q2_levels
    idx = np.nonzero(np.isclose(levels, event.level, rtol=0.0, atol=1e-9))[0]
    if idx.size != 1:
        raise ConfigurationError(
            f"level {event.level:g} is not on the configured {event.kind} grid")
    j = int(idx[0])
    if event.kind == "q1_below":
        return np.array([c.occ_q1[j] for c in cycles])
    return np.array([c.occ_q2[j] for c in cycles])


def regenerative_estimate(cycles: Sequence[Cycle], event: LevelEvent) -> ProbEstimate:
    """Ratio-of-means stationary estimate of a level event over i.i.d. cycles.

    Value is mean(occupation)/mean(duration), clamped to [0, 1]; the
    standard error is the delta-method expansion of the ratio of means.
    The whole-space event returns exactly (1.0, 0.0).
    """
    n = len(cycles)
    if n < 2:
        raise InsufficientDataError(f"need >= 2 cycles for a ratio estimate, got {n}")
    x = _occupations(cycles, event)
    y = np.array([c.duration for c in cycles])
    xbar = float(x.mean())
    ybar = float(y.mean())
    ratio = xbar / ybar
    cov = np.cov(x, y, ddof=1)
    var = (cov[0, 0] - 2.0 * ratio * cov[0, 1] + ratio * ratio * cov[1, 1]) / (n * ybar * ybar)
    se = math.sqrt(var) if var > 0.0 else 0.0
    return ProbEstimate(value=min(max(ratio, 0.0), 1.0), std_err=se, n=n)


StateFunctional = Callable[[np.ndarray, np.ndarray], np.ndarray]


def event_indicator(event: LevelEvent) -> StateFunctional:
    """Vectorized indicator of a level event, for time averages."""
    if event.kind == "all":
        return lambda q1, q2: np.ones_like(q1)
    if event.kind == "q1_below":
        x = event.level
        return lambda q1, q2: (q1 < -x).astype(float)
    y = event.level
    return lambda q1, q2: (q2 > y).astype(float)


def ergodic_average(chunks: Iterable[PathChunk], f: StateFunctional) -> float:
    """Left-endpoint time average (1/t) * integral of f along the path.

    f maps (q1, q2) sample arrays to values; the sum uses the state at the
    left endpoint of each step, matching the stepping scheme.  The horizon
    should cover at least ~10 expected cycles for a stable average.
    """
    total = 0.0
    n = 0
    prev: Optional[tuple[float, float]] = None
    for chunk in chunks:
        if prev is None:
            prev = (chunk.q1_prev, chunk.q2_prev)
        lq1 = np.concatenate(([prev[0]], chunk.q1[:-1]))
        lq2 = np.concatenate(([prev[1]], chunk.q2[:-1]))
        total += float(np.sum(f(lq1, lq2)))
        n += chunk.n_steps
        prev = (float(chunk.q1[-1]), float(chunk.q2[-1]))
    if n == 0:
        raise InsufficientDataError("empty path stream")
    return total / n


def time_average_probability(chunks: Iterable[PathChunk], event: LevelEvent,
                             n_batches: int = 50) -> ProbEstimate:
    """Time-average estimate of a level event with a batch-means error bar."""
    f = event_indicator(event)
    sums: list[float] = []
    counts: list[int] = []
    prev: Optional[tuple[float, float]] = None
    for chunk in chunks:
        if prev is None:
            prev = (chunk.q1_prev, chunk.q2_prev)
        lq1 = np.concatenate(([prev[0]], chunk.q1[:-1]))
        lq2 = np.concatenate(([prev[1]], chunk.q2[:-1]))
        sums.append(float(np.sum(f(lq1, lq2))))
        counts.append(chunk.n_steps)
        prev = (float(chunk.q1[-1]), float(chunk.q2[-1]))
    total_n = sum(counts)
    if total_n == 0:
        raise InsufficientDataError("empty path stream")
    value = sum(sums) / total_n
    n_batches = max(2, min(n_batches, len(sums))) if len(sums) > 1 else 1
    if n_batches < 2:
        return ProbEstimate(value=value, std_err=float("nan"), n=1)
    edges = np.linspace(0, len(sums), n_batches + 1).astype(int)
    batch_means = []
    for b in range(n_batches):
        lo, hi = edges[b], edges[b + 1]
        cnt = sum(counts[lo:hi])
        if cnt:
            batch_means.append(sum(sums[lo:hi]) / cnt)
    bm = np.array(batch_means)
    se = float(bm.std(ddof=1) / math.sqrt(bm.size)) if bm.size >= 2 else float("nan")
    return ProbEstimate(value=value, std_err=se, n=bm.size)


@dataclass(frozen=True)
class CycleDiagnostics:
    n: int
    mean_duration: float
    se_mean_duration: float
    var_duration: float
    lag1_autocorr: float
    tail_t: np.ndarray  # log-spaced duration grid
    tail_p: np.ndarray  # empirical P(duration > t)


def cycle_diagnostics(cycles: Sequence[Cycle]) -> CycleDiagnostics:
    """Duration statistics: mean with SE, lag-1 autocorrelation, tail curve."""
    n = len(cycles)
    if n < 30:
        raise InsufficientDataError(f"need >= 30 cycles for diagnostics, got {n}")
    d = np.array([c.duration for c in cycles])
    mean = float(d.mean())
    var = float(d.var(ddof=1))
    se = math.sqrt(var / n)
    dc = d - mean
    lag1 = float(np.dot(dc[:-1], dc[1:]) / ((n - 1) * d.var()))
    t_grid = np.geomspace(max(float(np.quantile(d, 0.05)), 1e-12), float(d.max()), 16)
    tail = np.array([(d > t).mean() for t in t_grid])
    return CycleDiagnostics(n=n, mean_duration=mean, se_mean_duration=se,
                            var_duration=var, lag1_autocorr=lag1,
                            tail_t=t_grid, tail_p=tail)


def cycles_to_csv_rows(cycles: Sequence[Cycle]) -> tuple[list[str], Iterator[list[float]]]:
    """Header and row iterator for the one-row-per-cycle CSV export."""
    if not cycles:
        raise InsufficientDataError("no cycles to export")
    first = cycles[0]
    header = (["start_t", "end_t", "duration", "q1_at_start", "min_q1", "max_q2"]
              + [f"occ_q1_lt_{-x:g}" for x in first.q1_levels]
              + [f"occ_q2_gt_{y:g}" for y in first.q2_levels])

    def rows() -> Iterator[list[float]]:
        for c in cycles:
            yield ([c.start_t, c.end_t, c.duration, c.q1_at_start, c.min_q1, c.max_q2]
                   + list(c.occ_q1) + list(c.occ_q2))

    return header, rows()
