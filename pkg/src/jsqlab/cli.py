"""Experiment orchestration: config, seeded replication, file outputs.

Six experiments: tails, extrema, hitting, prelimit, mmn, validate.  Each
writes plot-ready CSV data plus a summary JSON echoing the resolved
config, the seeds/streams used, the estimates, and pass/fail flags
against the acceptance brackets; the process exits 0 iff every enabled
check passes.  Identical config and seed reproduce byte-identical files.

Config files are flat key-value JSON; command-line flags override file
values.  The output directory resolves flag > JSQLAB_OUTPUT_DIR > ./out.
beta may be a list, which fans out into suffixed sub-experiments.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import hitting, mmn, prelimit_jsq, tails
from . import regen
from .csvio import write_csv, write_json
from .errors import ConfigurationError
from .regen import RegenConfig, default_regen_level
from .sde_core import DiffusionParams, reflection_report, iter_path_chunks

EXPERIMENTS = ("tails", "extrema", "hitting", "prelimit", "mmn", "validate")
ENV_OUTPUT_DIR = "JSQLAB_OUTPUT_DIR"

# acceptance brackets (slopes are magnitudes; slack documented in README)
Q2_SLOPE_BRACKET = (1.0 / 16.0, 2.0)       # per unit beta
Q1_SLOPE_BRACKET = (1.0 / 16.0, 4.0)       # beta-free
Q2_FIT_MIN_R2 = 0.98
Q1_FIT_MIN_R2 = 0.95
EXTREMA_Q1_BRACKET = (-2.0 * math.sqrt(2.0) * 1.25, -0.5)
EXTREMA_Q2_BRACKET = (0.5, 40.0)           # per unit 1/beta
MMN_UPPER_SLOPE_RTOL = 0.10
MMN_GAUSS_SLOPE_RTOL = 0.15
PRELIMIT_RATIO_BRACKET = (0.5, 2.0)
PRELIMIT_BARQ3_MAX = 0.1


@dataclass
class ExperimentConfig:
    """Resolved experiment configuration (flat, JSON-serializable)."""

    experiment: str = "validate"
    beta: list[float] = field(default_factory=lambda: [1.0])
    dt: float = 1e-3
    horizon: float = 1e5
    cycles: int = 20_000
    replicas: int = 1
    seed: int = 0
    B: Optional[float] = None
    q1_levels: Optional[list[float]] = None
    q2_levels: Optional[list[float]] = None
    n_servers: int = 400
    warmup: float = 1e3
    sample_interval: Optional[float] = None
    workers: int = 1
    out_dir: str = ""

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"experiment: unknown value {self.experiment!r}")
        if isinstance(self.beta, (int, float)):
            self.beta = [float(self.beta)]
        for b in self.beta:
            if not (isinstance(b, (int, float)) and math.isfinite(b) and b > 0):
                raise ConfigurationError(f"beta: must be positive, got {b}")
        if not (self.dt > 0):
            raise ConfigurationError(f"dt: must be positive, got {self.dt}")
        if not (self.horizon >= self.dt):
            raise ConfigurationError(f"horizon: must be >= dt, got {self.horizon}")
        if int(self.cycles) < 2:
            raise ConfigurationError(f"cycles: must be >= 2, got {self.cycles}")
        if int(self.replicas) < 1:
            raise ConfigurationError(f"replicas: must be >= 1, got {self.replicas}")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigurationError(f"seed: must be a 64-bit unsigned, got {self.seed}")
        if self.B is not None and not self.B > 0:
            raise ConfigurationError(f"B: must be positive, got {self.B}")
        for name in ("q1_levels", "q2_levels"):
            grid = getattr(self, name)
            if grid is not None:
                arr = np.asarray(grid, dtype=float)
                if arr.size == 0 or not np.all(np.diff(arr) > 0):
                    raise ConfigurationError(f"{name}: must be strictly increasing")
        if int(self.n_servers) < 1:
            raise ConfigurationError(f"n_servers: must be >= 1, got {self.n_servers}")
        if self.warmup < 0:
            raise ConfigurationError(f"warmup: must be >= 0, got {self.warmup}")
        if self.sample_interval is not None and not self.sample_interval > 0:
            raise ConfigurationError(
                f"sample_interval: must be positive, got {self.sample_interval}")
        if int(self.workers) < 1:
            raise ConfigurationError(f"workers: must be >= 1, got {self.workers}")

    def regen_level(self, beta: float) -> float:
        return self.B if self.B is not None else default_regen_level(beta)

    def echo(self) -> dict:
        out = {}
        for f in fields(self):
            out[f.name] = getattr(self, f.name)
        return out


def load_config(path: Path | str) -> ExperimentConfig:
    """Parse a flat key-value JSON config; validation errors name the field."""
    raw = Path(path).read_text(encoding="utf-8").strip()
    data = json.loads(raw) if raw else {}
    if not isinstance(data, dict):
        raise ConfigurationError("config: top level must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"config: unknown field(s) {sorted(unknown)}")
    return ExperimentConfig(**data)


def _ols_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Plain least squares; returns (slope, intercept, R^2)."""
    xbar, ybar = x.mean(), y.mean()
    sxx = float(((x - xbar) ** 2).sum())
    slope = float(((x - xbar) * (y - ybar)).sum() / sxx)
    intercept = float(ybar - slope * xbar)
    ss_tot = float(((y - ybar) ** 2).sum())
    ss_res = float(((y - intercept - slope * x) ** 2).sum())
    return slope, intercept, 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def _collect_replica(args) -> list[regen.Cycle]:
    params, rcfg, stream = args
    return regen.collect_cycles(params, rcfg, stream=stream)


def _collect(params: DiffusionParams, rcfg: RegenConfig, replicas: int,
             workers: int, stream_base: int) -> tuple[list[regen.Cycle], list[int]]:
    """Cycles from `replicas` streams merged in stream order."""
    quota = math.ceil(rcfg.max_cycles / replicas)
    per = RegenConfig(B=rcfg.B, max_cycles=quota, tolerance_q1=rcfg.tolerance_q1,
                      q1_levels=rcfg.q1_levels, q2_levels=rcfg.q2_levels)
    streams = [stream_base + r for r in range(replicas)]
    jobs = [(params, per, s) for s in streams]
    if workers > 1 and replicas > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_collect_replica, jobs))
    else:
        chunks = [_collect_replica(j) for j in jobs]
    merged: list[regen.Cycle] = []
    for c in chunks:
        merged.extend(c)
    return merged[: rcfg.max_cycles], streams


def _beta_suffix(cfg: ExperimentConfig, beta: float) -> str:
    return "" if len(cfg.beta) == 1 else f"_beta{beta:g}"


def _fit_to_dict(f: tails.FitResult) -> dict:
    return {"model": f.model, "slope": f.slope, "intercept": f.intercept,
            "r_squared": f.r_squared, "level_range": list(f.level_range)}


def _run_tails(cfg: ExperimentConfig, out: Path) -> tuple[dict, dict]:
    results: dict = {}
    checks: dict = {}
    slopes = []
    for i, beta in enumerate(cfg.beta):
        B = cfg.regen_level(beta)
        suffix = _beta_suffix(cfg, beta)
        params = DiffusionParams(beta=beta, dt=cfg.dt, seed=cfg.seed,
                                 q1_init=0.0, q2_init=2.0 * B)
        q1_grid = (np.asarray(cfg.q1_levels, dtype=float) if cfg.q1_levels
                   else regen.default_q1_levels())
        q2_grid = (np.asarray(cfg.q2_levels, dtype=float) if cfg.q2_levels
                   else regen.default_q2_levels(B))
        rcfg = RegenConfig(B=B, max_cycles=cfg.cycles, q1_levels=q1_grid, q2_levels=q2_grid)
        cycles, streams = _collect(params, rcfg, cfg.replicas, cfg.workers, i * 10_000)
        q2_curve = tails.tail_curve(cycles, "q2_upper", q2_grid)
        q1_curve = tails.tail_curve(cycles, "q1_lower", q1_grid)
        hdr, rows = tails.tail_curve_csv_rows(q1_curve)
        write_csv(out / f"tails_q1{suffix}.csv", hdr, rows)
        hdr, rows = tails.tail_curve_csv_rows(q2_curve)
        write_csv(out / f"tails_q2{suffix}.csv", hdr, rows)

        fit_q2 = tails.fit_exponential(q2_curve.restrict(2 * B, 2 * B + 4))
        q1_window = q1_curve.restrict(1.0, 3.0)
        fit_q1_gauss = tails.fit_gaussian(q1_window)
        fit_q1_exp = tails.fit_exponential(q1_window)
        slopes.append(-fit_q2.slope)
        results[f"beta={beta:g}"] = {
            "B": B, "n_cycles": len(cycles), "streams": streams,
            "fit_q2_exponential": _fit_to_dict(fit_q2),
            "fit_q1_gaussian": _fit_to_dict(fit_q1_gauss),
            "fit_q1_exponential": _fit_to_dict(fit_q1_exp),
        }
        lo, hi = Q2_SLOPE_BRACKET
        checks[f"q2_slope_in_bracket_beta={beta:g}"] = lo * beta <= -fit_q2.slope <= hi * beta
        checks[f"q2_fit_r2_beta={beta:g}"] = fit_q2.r_squared >= Q2_FIT_MIN_R2
        lo, hi = Q1_SLOPE_BRACKET
        checks[f"q1_slope_in_bracket_beta={beta:g}"] = lo <= -fit_q1_gauss.slope <= hi
        checks[f"q1_gauss_beats_exp_beta={beta:g}"] = (
            fit_q1_gauss.r_squared > fit_q1_exp.r_squared)
        checks[f"q1_fit_r2_beta={beta:g}"] = fit_q1_gauss.r_squared >= Q1_FIT_MIN_R2
    if len(cfg.beta) > 1:
        checks["q2_slopes_increasing_in_beta"] = all(
            b > a for a, b in zip(slopes, slopes[1:]))
    write_json(out / "fits.json", results)
    return results, checks


def _run_extrema(cfg: ExperimentConfig, out: Path) -> tuple[dict, dict]:
    results: dict = {}
    checks: dict = {}
    for beta in cfg.beta:
        suffix = _beta_suffix(cfg, beta)
        B = cfg.regen_level(beta)
        params = DiffusionParams(beta=beta, dt=cfg.dt, seed=cfg.seed,
                                 q1_init=0.0, q2_init=2.0 * B)
        cps = tails.default_checkpoints(cfg.horizon)
        series = tails.extrema_track(params, cfg.horizon, cps)
        hdr, rows = tails.extrema_csv_rows(series)
        write_csv(out / f"extrema{suffix}.csv", hdr, rows)
        r_q1 = float(series.min_q1_over_sqrt_log_t[-1])
        r_q2 = float(series.max_q2_over_log_t[-1])
        results[f"beta={beta:g}"] = {
            "final_min_q1_over_sqrt_log_t": r_q1,
            "final_max_q2_over_log_t": r_q2,
            "checkpoints": [float(v) for v in series.t],
        }
        checks[f"q1_ratio_contained_beta={beta:g}"] = (
            EXTREMA_Q1_BRACKET[0] <= r_q1 <= EXTREMA_Q1_BRACKET[1])
        checks[f"q2_ratio_contained_beta={beta:g}"] = (
            EXTREMA_Q2_BRACKET[0] / beta <= r_q2 <= EXTREMA_Q2_BRACKET[1] / beta)
        if series.t.size >= 2:
            for name, arr in (("q1", series.min_q1_over_sqrt_log_t),
                              ("q2", series.max_q2_over_log_t)):
                a, b = float(arr[-2]), float(arr[-1])
                checks[f"{name}_ratio_stabilized_beta={beta:g}"] = (
                    abs(b - a) < 0.25 * abs(a))
    return results, checks


def _run_hitting(cfg: ExperimentConfig, out: Path) -> tuple[dict, dict]:
    results: dict = {}
    checks: dict = {}
    csv_rows: list[list] = []
    for i, beta in enumerate(cfg.beta):
        B = cfg.regen_level(beta)
        params = DiffusionParams(beta=beta, dt=cfg.dt, seed=cfg.seed,
                                 q1_init=0.0, q2_init=2.0 * B)
        # closed-form oracle vs direct bridge-corrected MC
        query = hitting.HitQuery(start=0.0, up_level=1.0, down_level=-1.0)
        oracle = hitting.hit_up_before_down(hitting.bm_drift(-beta), query)
        mc = hitting.mc_hit_bm(-beta, query, n_paths=100_000, dt=cfg.dt,
                               seed=cfg.seed, stream=90_000 + i)
        z = (mc.value - oracle) / mc.std_err
        rcfg = RegenConfig(B=B, max_cycles=cfg.cycles)
        cycles, streams = _collect(params, rcfg, cfg.replicas, cfg.workers, i * 10_000)
        y_targets = [hitting.q2_up(2 * B + d) for d in np.arange(1.0, 5.0001, 0.5)]
        x_targets = [hitting.q1_down(x) for x in np.arange(1.5, 3.5001, 0.5)]
        prof_y = hitting.hit_profile(cycles, y_targets)
        prof_x = hitting.hit_profile(cycles, x_targets)
        for tgt, est in prof_y + prof_x:
            csv_rows.append([f"{tgt.kind}_beta{beta:g}", tgt.level, est.value, est.std_err])
        # closed-form lower bound (1-e^{-bB}) e^{-b(y-2B)} at y = 2B + 2
        y_probe = 2 * B + 2.0
        est_probe = next(e for t, e in prof_y if abs(t.level - y_probe) < 1e-9)
        bound = (1.0 - math.exp(-beta * B)) * math.exp(-beta * (y_probe - 2 * B))
        # regression diagnostics on the hit profiles
        ly = np.log([e.value for _, e in prof_y])
        yv = np.array([t.level for t, _ in prof_y])
        _, _, r2_y = _ols_line(yv, ly)
        lx = np.log([e.value for _, e in prof_x])
        xv = np.array([t.level for t, _ in prof_x])
        _, _, r2_x = _ols_line(xv**2, lx)
        results[f"beta={beta:g}"] = {
            "oracle": oracle, "mc": {"value": mc.value, "std_err": mc.std_err, "n": mc.n},
            "z_score": z, "n_cycles": len(cycles), "streams": streams,
            "lower_bound_probe": {"y": y_probe, "bound": bound,
                                  "estimate": est_probe.value, "std_err": est_probe.std_err},
            "r2_log_affine_q2": r2_y, "r2_log_gauss_q1": r2_x,
        }
        checks[f"oracle_mc_within_3se_beta={beta:g}"] = abs(z) <= 3.0
        checks[f"q2_hit_above_lower_bound_beta={beta:g}"] = (
            est_probe.value >= bound - 3.0 * est_probe.std_err)
        checks[f"q2_hit_log_affine_beta={beta:g}"] = r2_y >= 0.95
        checks[f"q1_hit_log_gauss_beta={beta:g}"] = r2_x >= 0.90
        vals_y = [e.value for _, e in prof_y]
        checks[f"q2_hit_nested_monotone_beta={beta:g}"] = all(
            a >= b for a, b in zip(vals_y, vals_y[1:]))
    write_csv(out / "hitting.csv", ["family", "level", "estimate", "std_err"], csv_rows)
    return results, checks


def _run_prelimit(cfg: ExperimentConfig, out: Path) -> tuple[dict, dict]:
    beta = cfg.beta[0]
    B = cfg.regen_level(beta)
    levels = [1.0, 2.0, 3.0]
    params = DiffusionParams(beta=beta, dt=cfg.dt, seed=cfg.seed,
                             q1_init=0.0, q2_init=2.0 * B)
    q2_grid = np.asarray(levels, dtype=float)
    rcfg = RegenConfig(B=B, max_cycles=cfg.cycles, q2_levels=q2_grid)
    cycles, streams = _collect(params, rcfg, cfg.replicas, cfg.workers, 0)
    diffusion = {lv: regen.regenerative_estimate(cycles, regen.q2_above(lv))
                 for lv in levels}
    horizon = max(cfg.horizon, 1e4)
    jp = prelimit_jsq.JsqParams(n_servers=cfg.n_servers, beta=beta,
                                horizon=horizon, seed=cfg.seed)
    stats = prelimit_jsq.measure_occupancy(jp, levels, warmup=cfg.warmup,
                                           sample_interval=cfg.sample_interval)
    comp = prelimit_jsq.PrelimitComparison(
        n_servers=cfg.n_servers, beta=beta, horizon=horizon, warmup=cfg.warmup,
        seed=cfg.seed, levels=q2_grid, finite=stats.probs,
        diffusion=[diffusion[lv] for lv in levels],
        mean_bar_q3=stats.mean_bar_q3, busy_fraction=stats.busy_fraction)
    write_csv(out / "prelimit_trace.csv", ["t", "bar_q1", "bar_q2", "bar_q3"],
              (list(r) for r in stats.trace))
    j2 = levels.index(2.0)
    ratio = comp.ratio(j2)
    results = comp.to_dict()
    checks = {
        "mean_bar_q3_small": comp.mean_bar_q3.value <= PRELIMIT_BARQ3_MAX,
        "ratio_at_2_in_bracket": PRELIMIT_RATIO_BRACKET[0] <= ratio <= PRELIMIT_RATIO_BRACKET[1],
    }
    results["streams"] = streams
    return results, checks


def _run_mmn(cfg: ExperimentConfig, out: Path) -> tuple[dict, dict]:
    results: dict = {}
    checks: dict = {}
    for beta in cfg.beta:
        suffix = _beta_suffix(cfg, beta)
        params = mmn.MmnParams(beta=beta, dt=cfg.dt, horizon=max(cfg.horizon, 1e4),
                               seed=cfg.seed)
        rep = mmn.mmn_tail_compare(params)
        rows = [[rep.levels[i], rep.sim_tail[i], rep.exact_tail[i], rep.jsq_s_tail[i]]
                for i in range(rep.levels.size)]
        write_csv(out / f"mmn_tails{suffix}.csv",
                  ["level", "sim_tail", "exact_tail", "jsq_s_tail"], rows)
        results[f"beta={beta:g}"] = rep.to_dict()
        z = (rep.p_positive.value - rep.p_positive_exact) / rep.p_positive.std_err
        checks[f"p_positive_within_3se_beta={beta:g}"] = abs(z) <= 3.0
        checks[f"upper_slope_within_10pct_beta={beta:g}"] = (
            abs(-rep.upper_slope - beta) <= MMN_UPPER_SLOPE_RTOL * beta)
        checks[f"gauss_slope_within_15pct_beta={beta:g}"] = (
            abs(-rep.lower_gauss_slope - 0.5) <= MMN_GAUSS_SLOPE_RTOL * 0.5)
        checks[f"jsq_q2_stays_positive_beta={beta:g}"] = rep.jsq_q2_min > 0.0
        checks[f"mmn_crosses_zero_beta={beta:g}"] = rep.mmn_zero_crossings >= 1
    return results, checks


def _run_validate(cfg: ExperimentConfig, out: Path) -> tuple[dict, dict]:
    beta = cfg.beta[0]
    results: dict = {}
    checks: dict = {}
    # 1. scale-function oracle vs bridge-corrected Monte Carlo
    query = hitting.HitQuery(start=0.0, up_level=1.0, down_level=-1.0)
    oracle = hitting.hit_up_before_down(hitting.bm_drift(-beta), query)
    mc = hitting.mc_hit_bm(-beta, query, n_paths=20_000, dt=cfg.dt, seed=cfg.seed)
    z = (mc.value - oracle) / mc.std_err
    results["oracle_vs_mc"] = {"oracle": oracle, "mc": mc.value, "z": z}
    checks["oracle_vs_mc_within_3se"] = abs(z) <= 3.0
    # 2. reflection invariants
    params = DiffusionParams(beta=beta, dt=cfg.dt, seed=cfg.seed)
    rep = reflection_report(params, 1_000.0)
    results["reflection"] = {
        "n_steps": rep.n_steps, "clean": rep.clean,
        "max_s_identity_residual": rep.max_s_identity_residual,
    }
    checks["reflection_invariants"] = rep.clean
    # 3. regeneration boundary invariant
    B = cfg.regen_level(beta)
    params_b = DiffusionParams(beta=beta, dt=cfg.dt, seed=cfg.seed,
                               q1_init=0.0, q2_init=2.0 * B)
    rcfg = RegenConfig(B=B, max_cycles=300)
    cyc = regen.collect_cycles(params_b, rcfg)
    tol = rcfg.resolved_tolerance(cfg.dt)
    worst = max(abs(c.q1_at_start) for c in cyc)
    results["regen_boundary"] = {"n_cycles": len(cyc), "max_abs_q1": worst, "tol": tol}
    checks["regen_boundary_within_tol"] = worst <= tol
    # 4. estimator cross-validation on one trajectory
    event = regen.q2_above(2.0 * B)
    est_r = regen.regenerative_estimate(cyc, event)
    horizon = 1e4
    est_t = regen.time_average_probability(
        iter_path_chunks(params_b, horizon), event)
    comb = math.hypot(est_r.std_err, est_t.std_err)
    results["cross_validation"] = {
        "regenerative": est_r.value, "time_average": est_t.value,
        "combined_se": comb,
    }
    checks["estimators_agree_3se"] = abs(est_r.value - est_t.value) <= 3.0 * comb
    # 5. comparison diffusion sanity
    mrep = mmn.mmn_tail_compare(mmn.MmnParams(beta=beta, dt=cfg.dt, horizon=1e4,
                                              seed=cfg.seed))
    zp = (mrep.p_positive.value - mrep.p_positive_exact) / mrep.p_positive.std_err
    results["mmn"] = {"p_positive": mrep.p_positive.value,
                      "p_positive_exact": mrep.p_positive_exact, "z": zp,
                      "jsq_q2_min": mrep.jsq_q2_min,
                      "mmn_zero_crossings": mrep.mmn_zero_crossings}
    checks["mmn_delay_prob_within_3se"] = abs(zp) <= 3.0
    checks["mmn_contrast"] = mrep.jsq_q2_min > 0.0 and mrep.mmn_zero_crossings >= 1
    # 6. single-server reduction
    jp = prelimit_jsq.JsqParams(n_servers=1, beta=0.5, horizon=5_000.0, seed=cfg.seed)
    st = prelimit_jsq.measure_occupancy(jp, [], warmup=100.0)
    rho = jp.arrival_rate
    zb = (st.busy_fraction.value - rho) / st.busy_fraction.std_err
    results["mm1"] = {"busy_fraction": st.busy_fraction.value, "target": rho, "z": zb}
    checks["mm1_busy_fraction_within_3se"] = abs(zb) <= 3.0
    return results, checks


_RUNNERS = {
    "tails": _run_tails,
    "extrema": _run_extrema,
    "hitting": _run_hitting,
    "prelimit": _run_prelimit,
    "mmn": _run_mmn,
    "validate": _run_validate,
}


def run(cfg: ExperimentConfig) -> int:
    """Execute the configured experiment; 0 iff all checks passed."""
    out = Path(cfg.out_dir or os.environ.get(ENV_OUTPUT_DIR, "out"))
    out.mkdir(parents=True, exist_ok=True)
    results, checks = _RUNNERS[cfg.experiment](cfg, out)
    summary = {
        "config": cfg.echo(),
        "results": results,
        "checks": checks,
        "pass": all(checks.values()) if checks else True,
    }
    write_json(out / f"{cfg.experiment}_summary.json", summary)
    for name, ok in sorted(checks.items()):
        print(f"[{'PASS' if ok else 'FAIL'}] {cfg.experiment}: {name}")
    return 0 if summary["pass"] else 1


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, default=None, help="flat JSON config file")
    p.add_argument("--beta", type=str, default=None,
                   help="drift coefficient, or comma list for fan-out")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--cycles", type=int, default=None)
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--B", type=float, default=None, help="regeneration level override")
    p.add_argument("--q1-levels", type=str, default=None, help="comma list")
    p.add_argument("--q2-levels", type=str, default=None, help="comma list")
    p.add_argument("--n", "--n-servers", dest="n_servers", type=int, default=None)
    p.add_argument("--warmup", type=float, default=None)
    p.add_argument("--sample-interval", dest="sample_interval", type=float, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", dest="out_dir", type=str, default=None)


def _parse_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def build_config(argv: list[str]) -> ExperimentConfig:
    parser = argparse.ArgumentParser(
        prog="jsqlab", description="JSQ diffusion-limit simulation lab")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        _add_common_flags(sub.add_parser(name, help=f"run the {name} experiment"))
    ns = parser.parse_args(argv)

    values: dict = {}
    if ns.config:
        file_cfg = load_config(ns.config)
        values.update(file_cfg.echo())
    values["experiment"] = ns.experiment
    overrides = {
        "dt": ns.dt, "horizon": ns.horizon, "cycles": ns.cycles,
        "replicas": ns.replicas, "seed": ns.seed, "B": ns.B,
        "n_servers": ns.n_servers, "warmup": ns.warmup,
        "sample_interval": ns.sample_interval, "workers": ns.workers,
        "out_dir": ns.out_dir,
    }
    if ns.beta is not None:
        overrides["beta"] = _parse_list(ns.beta)
    if ns.q1_levels is not None:
        overrides["q1_levels"] = _parse_list(ns.q1_levels)
    if ns.q2_levels is not None:
        overrides["q2_levels"] = _parse_list(ns.q2_levels)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def main(argv: Optional[list[str]] = None) -> int:
    try:
        cfg = build_config(sys.argv[1:] if argv is None else argv)
        return run(cfg)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
