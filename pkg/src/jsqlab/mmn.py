"""One-dimensional comparison diffusion for the M/M/N total-task count.

The process has drift -beta above zero (all servers busy) and OU pull
-(x + beta) at or below zero (idle servers), with constant variance 2.
Solving the stationary Fokker-Planck balance p ~ exp(integral of drift)
gives the piecewise density

    p(x) ~ exp(-beta x)              for x > 0,
    p(x) ~ exp(-x^2/2 - beta x)      for x <= 0,

continuous at 0; the module normalizes it by numerical quadrature.  The
contrast report puts simulated tails, the explicit stationary law, and the
two-coordinate JSQ diffusion's total-task tails side by side; the
qualitative contrast is that the M/M/N path keeps crossing zero while the
JSQ diffusion's waiting coordinate never does.

Slope conventions in the report: the upper tail of log P(S > x) is affine
in x with slope exactly -beta under the stationary law.  The lower tail's
Gaussian coefficient is extracted by fitting the log of the binned density
(finite differences of the tail curve) on {x^2, x}: the exact law makes
the x^2 coefficient -1/2, whereas a fit of the log tail probability on
x^2 alone never approaches -1/2 on any reachable window because of the
exp(-beta x) factor and the Mills-ratio correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from numba import njit
from scipy import integrate

from .errors import ConfigurationError, NumericsError
from .regen import ProbEstimate
from .rng import philox_stream
from .sde_core import DiffusionParams, iter_path_chunks

__all__ = [
    "MmnContrastReport",
    "MmnParams",
    "mmn_stationary_tail",
    "mmn_step",
    "mmn_tail_compare",
    "stationary_density",
]

DEFAULT_LEVELS = np.round(np.arange(-3.5, 4.0001, 0.25), 12)
_GAUSS_FIT_RANGE = (0.5, 3.5)


@dataclass(frozen=True)
class MmnParams:
    """Parameters of the comparison diffusion path."""

    beta: float
    dt: float = 1e-3
    horizon: float = 1e4
    seed: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ConfigurationError(f"beta must be a positive real, got {self.beta}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigurationError(f"dt must be a positive real, got {self.dt}")
        if not (math.isfinite(self.horizon) and self.horizon >= self.dt):
            raise ConfigurationError(f"horizon must be >= dt, got {self.horizon}")


def _drift(x: float, beta: float) -> float:
    return -beta if x > 0.0 else -(x + beta)


def mmn_step(x: float, params: MmnParams, xi: float) -> float:
    """Euler step with the drift evaluated at the pre-step point."""
    if not (math.isfinite(x) and math.isfinite(xi)):
        raise NumericsError(f"non-finite input: x={x}, xi={xi}")
    return x + _drift(x, params.beta) * params.dt + math.sqrt(2.0 * params.dt) * xi


@njit(cache=True)
def _mmn_chunk(x, beta, dt, sig, xi, out):  # pragma: no cover - jitted
    for i in range(xi.shape[0]):
        m = -beta if x > 0.0 else -(x + beta)
        x = x + m * dt + sig * xi[i]
        out[i] = x
    return x


def stationary_density(params: MmnParams, x: float) -> float:
    """Normalized stationary density (quadrature normalization)."""
    z, _ = _normalization(params.beta)
    return _unnormalized_density(x, params.beta) / z


def _unnormalized_density(x: float, beta: float) -> float:
    if x > 0.0:
        return math.exp(-beta * x)
    return math.exp(-x * x / 2.0 - beta * x)


@lru_cache(maxsize=64)
def _normalization(beta: float) -> tuple[float, float]:
    """(total mass, positive-side mass) of the unnormalized density."""
    pos, pos_err = integrate.quad(lambda u: math.exp(-beta * u), 0.0, np.inf,
                                  epsabs=0.0, epsrel=1e-12)
    neg, neg_err = integrate.quad(lambda u: math.exp(-u * u / 2.0 - beta * u),
                                  -np.inf, 0.0, epsabs=0.0, epsrel=1e-12)
    total = pos + neg
    if not math.isfinite(total) or (pos_err + neg_err) > 1e-9 * total:
        raise NumericsError("stationary normalization quadrature failed")
    return total, pos


def mmn_stationary_tail(params: MmnParams, x: float) -> float:
    """P(stationary S > x), normalized by numerical quadrature."""
    if not math.isfinite(x):
        raise ConfigurationError(f"x must be finite, got {x}")
    beta = params.beta
    z, pos_mass = _normalization(beta)
    if x >= 0.0:
        val, _ = integrate.quad(lambda u: math.exp(-beta * u), x, np.inf,
                                epsabs=0.0, epsrel=1e-12)
    else:
        mid, _ = integrate.quad(lambda u: math.exp(-u * u / 2.0 - beta * u), x, 0.0,
                                epsabs=0.0, epsrel=1e-12)
        val = mid + pos_mass
    return min(max(val / z, 0.0), 1.0)


@dataclass(frozen=True)
class MmnContrastReport:
    """Simulated vs explicit stationary law, plus the JSQ-diffusion contrast."""

    beta: float
    dt: float
    horizon: float
    seed: int
    levels: np.ndarray
    sim_tail: np.ndarray          # time-average P(S > level)
    exact_tail: np.ndarray        # quadrature-normalized stationary tail
    p_positive: ProbEstimate      # simulated P(S > 0), batch-means SE
    p_positive_exact: float
    upper_slope: float            # log P(S > x) on x over [0.5, 3.5]; target -beta
    upper_r_squared: float
    lower_gauss_slope: float      # x^2 coefficient of log-density fit; target -1/2
    lower_linear_coef: float      # x coefficient of the same fit; target +beta
    mmn_path_min: float
    mmn_zero_crossings: int       # sign changes along the simulated path
    jsq_s_tail: np.ndarray        # JSQ diffusion time-average P(S > level)
    jsq_q2_min: float             # strictly positive along every path

    def to_dict(self) -> dict:
        return {
            "beta": self.beta, "dt": self.dt, "horizon": self.horizon, "seed": self.seed,
            "levels": [float(v) for v in self.levels],
            "sim_tail": [float(v) for v in self.sim_tail],
            "exact_tail": [float(v) for v in self.exact_tail],
            "p_positive": {"value": self.p_positive.value,
                           "std_err": self.p_positive.std_err, "n": self.p_positive.n},
            "p_positive_exact": self.p_positive_exact,
            "upper_slope": self.upper_slope,
            "upper_r_squared": self.upper_r_squared,
            "lower_gauss_slope": self.lower_gauss_slope,
            "lower_linear_coef": self.lower_linear_coef,
            "mmn_path_min": self.mmn_path_min,
            "mmn_zero_crossings": self.mmn_zero_crossings,
            "jsq_s_tail": [float(v) for v in self.jsq_s_tail],
            "jsq_q2_min": self.jsq_q2_min,
        }


def _simulate_tail(params: MmnParams, levels: np.ndarray, stream: int,
                   n_batches: int) -> tuple[np.ndarray, list[float], float, int]:
    """Left-endpoint occupation fractions above each level, per-batch
    fractions above zero, path minimum, and zero-crossing count."""
    n_total = math.ceil(params.horizon / params.dt - 1e-9)
    chunk_steps = 1 << 20
    gen = philox_stream(params.seed, stream)
    sig = math.sqrt(2.0 * params.dt)
    x = 0.0
    counts = np.zeros(levels.size, dtype=np.int64)
    batch_pos: list[float] = []
    batch_edges = np.linspace(0, n_total, n_batches + 1).astype(np.int64)
    cur_batch = 0
    cur_pos = 0
    cur_n = 0
    path_min = x
    crossings = 0
    done = 0
    out = np.empty(chunk_steps)
    while done < n_total:
        m = min(chunk_steps, n_total - done)
        xi = gen.standard_normal(m)
        prev = x
        x = _mmn_chunk(x, params.beta, params.dt, sig, xi[:m], out[:m])
        a = out[:m]
        left = np.concatenate(([prev], a[:-1]))
        counts += np.array([np.count_nonzero(left > lv) for lv in levels])
        path_min = min(path_min, float(a.min()))
        crossings += int(np.count_nonzero(np.signbit(left) != np.signbit(a)))
        # batch accumulation of the positive-side indicator
        pos = (left > 0.0).astype(np.int64)
        offs = 0
        while offs < m:
            lim = int(min(batch_edges[cur_batch + 1] - done, m) - offs)
            cur_pos += int(pos[offs:offs + lim].sum())
            cur_n += lim
            offs += lim
            if done + offs >= batch_edges[cur_batch + 1] and cur_batch < n_batches - 1:
                batch_pos.append(cur_pos / cur_n)
                cur_pos = cur_n = 0
                cur_batch += 1
        done += m
    if cur_n:
        batch_pos.append(cur_pos / cur_n)
    return counts / n_total, batch_pos, path_min, crossings


def _ols_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    xbar, ybar = x.mean(), y.mean()
    sxx = float(((x - xbar) ** 2).sum())
    slope = float(((x - xbar) * (y - ybar)).sum() / sxx)
    intercept = float(ybar - slope * xbar)
    resid = y - (intercept + slope * x)
    ss_tot = float(((y - ybar) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return slope, intercept, r2


def mmn_tail_compare(params: MmnParams, levels: Optional[np.ndarray] = None,
                     stream: int = 0, n_batches: int = 50) -> MmnContrastReport:
    """Simulate the comparison diffusion and report tails against the
    explicit stationary law and against the JSQ diffusion's total-task
    coordinate (same beta, horizon, and seed family)."""
    if params.horizon < 1e4:
        raise ConfigurationError(f"horizon must be >= 1e4, got {params.horizon:g}")
    lv = DEFAULT_LEVELS if levels is None else np.asarray(levels, dtype=float)
    if not np.all(np.diff(lv) > 0):
        raise ConfigurationError("levels must be strictly increasing")
    if not np.any(np.isclose(lv, 0.0)):
        raise ConfigurationError("levels must include 0 (delay-probability point)")

    sim_tail, batch_pos, path_min, crossings = _simulate_tail(params, lv, stream, n_batches)
    exact_tail = np.array([mmn_stationary_tail(params, v) for v in lv])

    i_zero = int(np.nonzero(np.isclose(lv, 0.0))[0][0])
    bp = np.array(batch_pos)
    p_pos = ProbEstimate(value=float(sim_tail[i_zero]),
                         std_err=float(bp.std(ddof=1) / math.sqrt(bp.size)),
                         n=int(bp.size))

    # upper tail: log P(S > x) affine in x with slope -beta exactly
    lo, hi = _GAUSS_FIT_RANGE
    m_up = (lv >= lo) & (lv <= hi) & (sim_tail > 0)
    upper_slope, _, upper_r2 = _ols_line(lv[m_up], np.log(sim_tail[m_up]))

    # lower tail: Gaussian coefficient from the binned density on {x^2, x}
    m_dn = (lv >= -hi - 1e-12) & (lv <= -lo + 1e-12)
    zl = lv[m_dn]
    tl = sim_tail[m_dn]
    mass = tl[:-1] - tl[1:]
    if np.any(mass <= 0):
        raise NumericsError("empty lower-tail density bins; horizon too short")
    mids = -(zl[:-1] + zl[1:]) / 2.0  # positive depth x of each bin midpoint
    a = np.vstack([mids**2, mids, np.ones_like(mids)]).T
    coef, *_ = np.linalg.lstsq(a, np.log(mass / np.diff(zl)), rcond=None)

    # JSQ diffusion contrast on the same grid
    jsq = DiffusionParams(beta=params.beta, dt=params.dt, seed=params.seed)
    s_counts = np.zeros(lv.size, dtype=np.int64)
    q2_min = math.inf
    n_steps = 0
    for chunk in iter_path_chunks(jsq, params.horizon, stream=stream + 1):
        s = chunk.q1 + chunk.q2
        s_counts += np.array([np.count_nonzero(s > v) for v in lv])
        q2_min = min(q2_min, float(chunk.q2.min()))
        n_steps += chunk.n_steps

    return MmnContrastReport(
        beta=params.beta, dt=params.dt, horizon=params.horizon, seed=params.seed,
        levels=lv, sim_tail=sim_tail, exact_tail=exact_tail,
        p_positive=p_pos, p_positive_exact=float(exact_tail[i_zero]),
        upper_slope=float(upper_slope), upper_r_squared=float(upper_r2),
        lower_gauss_slope=float(coef[0]), lower_linear_coef=float(coef[1]),
        mmn_path_min=path_min, mmn_zero_crossings=crossings,
        jsq_s_tail=s_counts / n_steps, jsq_q2_min=q2_min)
