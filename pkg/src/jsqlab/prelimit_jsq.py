"""Event-driven CTMC of the N-server JSQ system and its scaled occupancy.

State is the occupancy vector q where q[i] counts servers with at least
i+1 tasks, which makes all shortest-queue servers exchangeable and
implements arbitrary tie-breaking canonically.  Arrivals occur at rate
lam = N - beta*sqrt(N); each busy server completes work at unit rate, so
the departure rate is q[0].  An arrival joins a server with the current
minimum queue length m (incrementing q[m]); a departure removes one task
from a server of queue-length class j chosen proportionally to the class
count q[j-1] - q[j] (decrementing q[j-1]).

Every event consumes exactly three uniforms (holding time, event type,
departure class) from the keyed Philox stream, so the jitted kernel and
the pure-Python observer loop reproduce identical event sequences.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .errors import ConfigurationError, InsufficientDataError
from .regen import ProbEstimate
from .rng import philox_stream

__all__ = [
    "JsqParams",
    "OccupancyState",
    "PrelimitComparison",
    "PrelimitStats",
    "ScaledOccupancy",
    "apply_arrival",
    "apply_departure",
    "measure_occupancy",
    "scale_occupancy",
    "simulate_jsq",
    "steady_state_compare",
]

_MAX_QUEUE_LEN = 128
_UNIFORM_BLOCK = 3 * (1 << 20)


@dataclass(frozen=True)
class JsqParams:
    """N-server JSQ system under the heavy-traffic arrival rate."""

    n_servers: int
    beta: float
    horizon: float
    seed: int = 0

    def __post_init__(self) -> None:
        if int(self.n_servers) < 1:
            raise ConfigurationError(f"n_servers must be >= 1, got {self.n_servers}")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ConfigurationError(f"beta must be a positive real, got {self.beta}")
        if self.arrival_rate <= 0:
            raise ConfigurationError(
                f"arrival rate N - beta*sqrt(N) = {self.arrival_rate:g} must be positive")
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ConfigurationError(f"horizon must be positive, got {self.horizon}")

    @property
    def arrival_rate(self) -> float:
        return self.n_servers - self.beta * math.sqrt(self.n_servers)


@dataclass(frozen=True)
class OccupancyState:
    """CTMC state: q[i] = number of servers with queue length >= i+1."""

    q: tuple[int, ...]
    t: float

    def __post_init__(self) -> None:
        prev = None
        for v in self.q:
            if v < 0 or (prev is not None and v > prev):
                raise ConfigurationError(f"occupancy must be non-increasing, got {self.q}")
            prev = v

    @property
    def total_tasks(self) -> int:
        return sum(self.q)


@dataclass(frozen=True)
class ScaledOccupancy:
    """Centered/scaled occupancy: bar_q1 <= 0, bar_q2 and bar_q3 >= 0."""

    bar_q1: float
    bar_q2: float
    bar_q3: float


def scale_occupancy(state: OccupancyState, n_servers: int) -> ScaledOccupancy:
    """bar_q1 = -(N - q[0])/sqrt(N); bar_qi = q[i-1]/sqrt(N) for i >= 2."""
    sq = math.sqrt(n_servers)
    q = state.q
    q1 = q[0] if len(q) > 0 else 0
    q2 = q[1] if len(q) > 1 else 0
    q3 = q[2] if len(q) > 2 else 0
    return ScaledOccupancy(bar_q1=-(n_servers - q1) / sq, bar_q2=q2 / sq, bar_q3=q3 / sq)


#: Called after every event with the post-event state.
JsqObserver = Callable[[OccupancyState], None]


def apply_arrival(q: np.ndarray, n_servers: int) -> int:
    """Apply one arrival in place; returns the queue length m of the
    shortest-queue server that received it (q[m] is incremented)."""
    if q[0] < n_servers:
        q[0] += 1
        return 0
    j = 1
    while j < q.size and q[j] >= q[j - 1]:
        j += 1
    if j >= q.size:
        raise ConfigurationError(f"queue length exceeded the supported maximum {q.size}")
    q[j] += 1
    return j


def apply_departure(q: np.ndarray, u: float) -> int:
    """Apply one departure in place, picking queue-length class j >= 1 with
    probability (q[j-1] - q[j]) / q[0] from uniform u; returns j."""
    target = u * q[0]
    c = 0.0
    j = 1
    while True:
        nxt = q[j] if j < q.size else 0
        c += q[j - 1] - nxt
        if target < c or j + 1 >= q.size:
            break
        j += 1
    q[j - 1] -= 1
    return j


@njit(cache=True)
def _jsq_kernel(q, t, lam, n_servers, u, t_stop, sqn,
                accumulate, y_levels, acc, batch_edges, warm_t,
                sample_interval, next_sample, trace, n_trace):  # pragma: no cover - jitted
    """Advance until t >= t_stop or the uniform block runs dry.

    acc rows are time batches over [warm_t, t_stop); columns are
    [occupation above each y level (bar_q2), integral of bar_q3,
    integral of q[0], elapsed time].  trace rows are
    (t, bar_q1, bar_q2, bar_q3) at the sampling grid.
    """
    n_levels = y_levels.shape[0]
    n_batches = acc.shape[0]
    i = 0
    n_u = u.shape[0]
    while i + 3 <= n_u and t < t_stop:
        rate = lam + q[0]
        dtau = -np.log(u[i]) / rate
        t_next = t + dtau
        seg_end = t_next if t_next < t_stop else t_stop
        if accumulate == 1 and seg_end > warm_t:
            lo = t if t > warm_t else warm_t
            seg = seg_end - lo
            b = int((lo - warm_t) / (batch_edges[1] - batch_edges[0]))
            if b >= n_batches:
                b = n_batches - 1
            barq2 = q[1] / sqn
            for j in range(n_levels):
                if barq2 > y_levels[j]:
                    acc[b, j] += seg
            acc[b, n_levels] += seg * (q[2] / sqn)
            acc[b, n_levels + 1] += seg * q[0]
            acc[b, n_levels + 2] += seg
        while next_sample <= seg_end and n_trace < trace.shape[0]:
            trace[n_trace, 0] = next_sample
            trace[n_trace, 1] = -(n_servers - q[0]) / sqn
            trace[n_trace, 2] = q[1] / sqn
            trace[n_trace, 3] = q[2] / sqn
            n_trace += 1
            next_sample += sample_interval
        if t_next >= t_stop:
            # the event lands past the horizon: stop without applying it
            return t_stop, i, next_sample, n_trace, 0
        t = t_next
        if u[i + 1] < lam / rate:
            # arrival joins a shortest-queue server (m = its queue length)
            if q[0] < n_servers:
                q[0] += 1
            else:
                j = 1
                while j < q.shape[0] and q[j] >= q[j - 1]:
                    j += 1
                if j >= q.shape[0]:
                    return t, i, next_sample, n_trace, 1
                q[j] += 1
        else:
            # departure from queue-length class j >= 1
            target = u[i + 2] * q[0]
            c = 0.0
            j = 1
            while True:
                nxt = q[j] if j < q.shape[0] else 0
                c += q[j - 1] - nxt
                if target < c or j + 1 >= q.shape[0]:
                    break
                j += 1
            q[j - 1] -= 1
        i += 3
    return t, i, next_sample, n_trace, 0


def _run_kernel(params: JsqParams, t_stop: float, accumulate: bool,
                y_levels: np.ndarray, acc: np.ndarray, warm_t: float,
                sample_interval: float, trace: np.ndarray, stream: int,
                q: np.ndarray, t: float, gen, pending: Optional[np.ndarray],
                next_sample: float, n_trace: int):
    """Drive the kernel across uniform blocks; returns carried state."""
    lam = params.arrival_rate
    sqn = math.sqrt(params.n_servers)
    n_batches = acc.shape[0]
    batch_edges = np.linspace(0.0, max(t_stop - warm_t, 1e-12), n_batches + 1)
    while t < t_stop:
        if pending is None or pending.size < 3:
            fresh = gen.random(_UNIFORM_BLOCK)
            pending = fresh if pending is None or pending.size == 0 else np.concatenate(
                [pending, fresh])
        t, used, next_sample, n_trace, err = _jsq_kernel(
            q, t, lam, params.n_servers, pending, t_stop, sqn,
            1 if accumulate else 0, y_levels, acc, batch_edges, warm_t,
            sample_interval, next_sample, trace, n_trace)
        if err:
            raise ConfigurationError(
                f"queue length exceeded the supported maximum {_MAX_QUEUE_LEN}")
        pending = pending[used:]
    return q, t, pending, next_sample, n_trace


def simulate_jsq(params: JsqParams, observer: Optional[JsqObserver] = None,
                 stream: int = 0) -> OccupancyState:
    """Run the CTMC from the empty system to the horizon; final state.

    With an observer the pure-Python loop is used and the observer is
    invoked after every event; both routes consume identical draws and
    produce identical event sequences for a given (seed, stream).
    """
    if observer is not None:
        return _simulate_python(params, observer, stream)
    q = np.zeros(_MAX_QUEUE_LEN, dtype=np.int64)
    gen = philox_stream(params.seed, stream)
    acc = np.zeros((1, 4))
    trace = np.empty((0, 4))
    y_levels = np.empty(0)
    q, t, _, _, _ = _run_kernel(params, params.horizon, False, y_levels, acc, 0.0,
                                math.inf, trace, stream, q, 0.0, gen, None, math.inf, 0)
    nz = int(np.nonzero(q)[0].max()) + 1 if q.any() else 0
    return OccupancyState(q=tuple(int(v) for v in q[:nz]), t=float(t))


@dataclass(frozen=True)
class PrelimitStats:
    """Time-average measurements over [warmup, warmup + horizon]."""

    levels: np.ndarray
    probs: list[ProbEstimate]      # P(bar_q2 > level), batch-means SE
    mean_bar_q3: ProbEstimate
    busy_fraction: ProbEstimate    # time-average q[0]/N
    trace: np.ndarray              # rows (t, bar_q1, bar_q2, bar_q3)
    final_state: OccupancyState


def measure_occupancy(params: JsqParams, levels, warmup: float = 1e3,
                      n_batches: int = 50, sample_interval: Optional[float] = None,
                      stream: int = 0) -> PrelimitStats:
    """Run the CTMC from empty for warmup + horizon and time-average the
    scaled occupancy over the measurement window with batch-means errors."""
    lv = np.asarray(levels, dtype=float)
    if lv.size and not np.all(np.diff(lv) > 0):
        raise ConfigurationError("levels must be strictly increasing")
    if warmup < 0:
        raise ConfigurationError("warmup must be >= 0")
    t_stop = warmup + params.horizon
    if sample_interval is None:
        sample_interval = max(params.horizon / 2000.0, 1e-3)
    n_samples = int(t_stop / sample_interval) + 2
    trace = np.zeros((n_samples, 4))
    acc = np.zeros((max(n_batches, 2), lv.size + 3))
    q = np.zeros(_MAX_QUEUE_LEN, dtype=np.int64)
    gen = philox_stream(params.seed, stream)
    q, t, _, _, n_trace = _run_kernel(params, t_stop, True, lv, acc, warmup,
                                      sample_interval, trace, stream, q, 0.0, gen,
                                      None, sample_interval, 0)
    times = acc[:, -1]
    total_t = float(times.sum())
    if total_t <= 0:
        raise InsufficientDataError("no measurement time accumulated")
    used = times > 0

    def batch_est(col: np.ndarray, scale: float = 1.0) -> ProbEstimate:
        value = float(col.sum() / total_t) * scale
        bm = (col[used] / times[used]) * scale
        se = float(bm.std(ddof=1) / math.sqrt(bm.size)) if bm.size >= 2 else float("nan")
        return ProbEstimate(value=value, std_err=se, n=int(bm.size))

    probs = [batch_est(acc[:, j]) for j in range(lv.size)]
    mean_q3 = batch_est(acc[:, lv.size])
    busy = batch_est(acc[:, lv.size + 1], scale=1.0 / params.n_servers)
    nz = int(np.nonzero(q)[0].max()) + 1 if q.any() else 0
    final = OccupancyState(q=tuple(int(v) for v in q[:nz]), t=float(t))
    return PrelimitStats(levels=lv, probs=probs, mean_bar_q3=mean_q3,
                         busy_fraction=busy, trace=trace[:n_trace], final_state=final)


@dataclass(frozen=True)
class PrelimitComparison:
    """Finite-N versus diffusion stationary estimates, with combined SEs."""

    n_servers: int
    beta: float
    horizon: float
    warmup: float
    seed: int
    levels: np.ndarray
    finite: list[ProbEstimate]
    diffusion: list[ProbEstimate]
    mean_bar_q3: ProbEstimate
    busy_fraction: ProbEstimate

    def combined_se(self, j: int) -> float:
        return math.hypot(self.finite[j].std_err, self.diffusion[j].std_err)

    def ratio(self, j: int) -> float:
        d = self.diffusion[j].value
        return self.finite[j].value / d if d > 0 else math.inf

    def to_dict(self) -> dict:
        def pe(e: ProbEstimate) -> dict:
            return {"value": e.value, "std_err": e.std_err, "n": e.n}

        return {
            "n_servers": self.n_servers, "beta": self.beta, "horizon": self.horizon,
            "warmup": self.warmup, "seed": self.seed,
            "levels": [float(v) for v in self.levels],
            "finite": [pe(e) for e in self.finite],
            "diffusion": [pe(e) for e in self.diffusion],
            "ratio": [self.ratio(j) for j in range(self.levels.size)],
            "mean_bar_q3": pe(self.mean_bar_q3),
            "busy_fraction": pe(self.busy_fraction),
        }


def steady_state_compare(params: JsqParams, diffusion_estimates: dict[float, ProbEstimate],
                         warmup: float = 1e3, n_batches: int = 50,
                         stream: int = 0) -> PrelimitComparison:
    """Compare time-average P(bar_q2 > y) against the diffusion's
    regenerative estimates on the same level grid.

    params.horizon is the measurement window and must be >= 1e4; the
    warmup burn-in precedes it.
    """
    if params.horizon < 1e4:
        raise InsufficientDataError(
            f"measurement horizon must be >= 1e4, got {params.horizon:g}")
    levels = np.array(sorted(diffusion_estimates.keys()), dtype=float)
    stats = measure_occupancy(params, levels, warmup=warmup, n_batches=n_batches,
                              stream=stream)
    return PrelimitComparison(
        n_servers=params.n_servers, beta=params.beta, horizon=params.horizon,
        warmup=warmup, seed=params.seed, levels=levels, finite=stats.probs,
        diffusion=[diffusion_estimates[float(v)] for v in levels],
        mean_bar_q3=stats.mean_bar_q3, busy_fraction=stats.busy_fraction)


def _simulate_python(params: JsqParams, observer: JsqObserver, stream: int,
                     ) -> OccupancyState:
    q = np.zeros(_MAX_QUEUE_LEN, dtype=np.int64)
    gen = philox_stream(params.seed, stream)
    lam = params.arrival_rate
    n = params.n_servers
    t = 0.0
    buf = gen.random(3 * 4096)
    i = 0
    while True:
        if i + 3 > buf.size:
            buf = np.concatenate([buf[i:], gen.random(3 * 4096)])
            i = 0
        rate = lam + q[0]
        dtau = -float(np.log(buf[i])) / rate
        if t + dtau >= params.horizon:
            t = params.horizon
            break
        t = t + dtau
        if buf[i + 1] < lam / rate:
            apply_arrival(q, n)
        else:
            apply_departure(q, float(buf[i + 2]))
        i += 3
        nz = int(np.nonzero(q)[0].max()) + 1 if q.any() else 0
        observer(OccupancyState(q=tuple(int(v) for v in q[:nz]), t=t))
    nz = int(np.nonzero(q)[0].max()) + 1 if q.any() else 0
    return OccupancyState(q=tuple(int(v) for v in q[:nz]), t=float(t))
