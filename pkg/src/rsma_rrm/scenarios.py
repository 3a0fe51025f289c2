"""Channel generators, baseline solver variants and the scenario runner.

Two channel families cover the desk-scale experiments: a deterministic
two-user pair whose phase increment controls correlation, and a seeded
geometric multipath generator (uniform linear array, per-user distances and
sector-constrained path angles) whose sector width gives a correlated (10
degree) or uncorrelated (120 degree) regime.  The runner sweeps one axis,
draws seeded channels, dispatches to the configured solver variants,
validates every discrete solution against the original constraints and
aggregates means over draws.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import misocp, sca
from .mcs import default_table
from .model import (
    AT_MOST_K,
    EXACT_K,
    PowerModel,
    SystemInstance,
    dbm_to_watt,
    validate_solution,
)

DETERMINISTIC = "deterministic-two-user"
GEOMETRIC = "geometric"
EXPLICIT = "explicit"

SOLVERS = (
    "opt-misocp", "rnd-misocp",
    "opt-sca-sdr", "rnd-sca-sdr",
    "pr-opt-sca-sdr", "pr-rnd-sca-sdr",
)

CORRELATED_SECTOR_DEG = 10.0
UNCORRELATED_SECTOR_DEG = 120.0


@dataclass(frozen=True)
class ChannelGenConfig:
    kind: str = DETERMINISTIC
    phi: float = math.pi / 9            # deterministic: phase increment
    user_scale: Optional[tuple] = None  # deterministic: per-user amplitude
    n_paths: int = 4
    sector_width_deg: float = UNCORRELATED_SECTOR_DEG
    min_distance_m: float = 10.0
    max_distance_m: float = 60.0
    pathloss_exponent: float = 3.0
    snr_target_db: float = 20.0         # median receive SNR at full power
    explicit: Optional[np.ndarray] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (DETERMINISTIC, GEOMETRIC, EXPLICIT):
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.kind == DETERMINISTIC and not 0.0 < self.phi <= math.pi / 2:
            raise ValueError("phi must lie in (0, pi/2]")
        if self.n_paths < 1:
            raise ValueError("need at least one path")


def gen_channels(config: ChannelGenConfig, n_tx: int, n_users: int,
                 p_tx_max: float = 1.0, sigma2: float = 1.0,
                 rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Draw a U x N_tx channel matrix; identical seed gives identical draws."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if config.kind == EXPLICIT:
        ch = np.asarray(config.explicit, dtype=complex)
        if ch.shape != (n_users, n_tx):
            raise ValueError("explicit channel shape mismatch")
        return ch
    if config.kind == DETERMINISTIC:
        if n_users != 2:
            raise ValueError("the deterministic pair needs exactly two users")
        k = np.arange(n_tx)
        h = np.stack([np.ones(n_tx, dtype=complex),
                      np.exp(1j * config.phi * k)])
        if config.user_scale is not None:
            h = h * np.asarray(config.user_scale, dtype=float)[:, None]
        return h
    # geometric: superposed steering vectors with distance pathloss
    half = math.radians(config.sector_width_deg) / 2.0
    k = np.arange(n_tx)
    h = np.zeros((n_users, n_tx), dtype=complex)
    for u in range(n_users):
        d = rng.uniform(config.min_distance_m, config.max_distance_m)
        pl = (d / config.min_distance_m) ** (-config.pathloss_exponent)
        gains = (rng.standard_normal(config.n_paths)
                 + 1j * rng.standard_normal(config.n_paths))
        gains *= math.sqrt(pl / (2.0 * config.n_paths))
        angles = rng.uniform(-half, half, size=config.n_paths)
        steer = np.exp(1j * math.pi * np.outer(np.sin(angles), k))
        h[u] = gains @ steer
    snr = p_tx_max / sigma2 * np.sum(np.abs(h) ** 2, axis=1)
    target = 10.0 ** (config.snr_target_db / 10.0)
    med = float(np.median(snr))
    if med > 0.0:
        h *= math.sqrt(target / med)
    return h


@dataclass(frozen=True)
class ScenarioSpec:
    scenario_id: str = "custom"
    objective: str = "wsr"                   # or "wee"
    solvers: tuple = ("opt-misocp",)
    variant: str = misocp.RSMA               # or sdma
    sweep_axis: str = "p_tx_max_dbm"
    sweep_values: tuple = (40.0,)
    n_channel_draws: int = 1
    seed: int = 0
    n_tx: int = 4
    n_users: int = 2
    k_admit: int = 2
    sigma2_dbm: float = 30.0
    p_tx_max_dbm: float = 40.0
    delta_sic: float = 0.0
    eta_eff: float = 1.0
    p_dyn_dbm: Optional[float] = None
    p_sta_dbm: Optional[float] = None
    weights: Optional[tuple] = None          # None: uniform
    weight_ratio: float = 1.0
    r_min: Optional[float] = None            # None: smallest table rate
    admission_mode: str = EXACT_K
    channels: ChannelGenConfig = field(default_factory=ChannelGenConfig)
    mcs_j: Optional[int] = None              # truncate the table for speed
    misocp_options: Optional[misocp.MisocpOptions] = None
    sca_config: Optional[sca.ScaConfig] = None

    def __post_init__(self):
        for s in self.solvers:
            if s not in SOLVERS:
                raise ValueError(f"unknown solver {s!r}")
        if self.objective not in ("wsr", "wee"):
            raise ValueError("objective must be wsr or wee")
        if self.sweep_axis not in ("p_tx_max_dbm", "n_users", "phi",
                                   "delta_sic", "weight_ratio"):
            raise ValueError(f"unknown sweep axis {self.sweep_axis!r}")


@dataclass
class ResultRow:
    scenario_id: str
    sweep_axis: str
    sweep_value: float
    draw: int
    solver: str
    variant: str
    objective: str
    status: str
    objective_value: float
    per_user_rates: tuple
    common_rate: float
    power_used: float
    lambda_metric: Optional[float]
    nodes_or_iters: int
    wallclock: float
    feasible: Optional[bool]

    CSV_HEADER = ("scenario,sweep_axis,sweep_value,draw,solver,variant,objective,"
                  "status,objective_value,per_user_rates,common_rate,power_used,"
                  "lambda,nodes_or_iters,wallclock,feasible")

    def csv_line(self) -> str:
        rates = "|".join(f"{r:.6g}" for r in self.per_user_rates)
        lam = "" if self.lambda_metric is None else f"{self.lambda_metric:.6g}"
        feas = "" if self.feasible is None else str(self.feasible).lower()
        return (f"{self.scenario_id},{self.sweep_axis},{self.sweep_value:.6g},"
                f"{self.draw},{self.solver},{self.variant},{self.objective},"
                f"{self.status},{self.objective_value:.10g},{rates},"
                f"{self.common_rate:.6g},{self.power_used:.6g},{lam},"
                f"{self.nodes_or_iters},{self.wallclock:.3f},{feas}")


def _spec_at(spec: ScenarioSpec, value: float) -> ScenarioSpec:
    axis = spec.sweep_axis
    if axis == "p_tx_max_dbm":
        return dataclasses.replace(spec, p_tx_max_dbm=float(value))
    if axis == "n_users":
        return dataclasses.replace(spec, n_users=int(value))
    if axis == "phi":
        return dataclasses.replace(
            spec, channels=dataclasses.replace(spec.channels, phi=float(value)))
    if axis == "delta_sic":
        return dataclasses.replace(spec, delta_sic=float(value))
    return dataclasses.replace(spec, weight_ratio=float(value))


def build_instance(spec: ScenarioSpec, channels: np.ndarray) -> SystemInstance:
    table = default_table()
    if spec.mcs_j is not None:
        table = table.truncated(spec.mcs_j)
    power = PowerModel(
        p_tx_max=dbm_to_watt(spec.p_tx_max_dbm),
        eta_eff=spec.eta_eff,
        p_dyn=dbm_to_watt(spec.p_dyn_dbm) if spec.p_dyn_dbm is not None else 0.0,
        p_sta=dbm_to_watt(spec.p_sta_dbm) if spec.p_sta_dbm is not None else 0.0,
    )
    if spec.weights is not None:
        weights = np.asarray(spec.weights, dtype=float)
    elif spec.weight_ratio != 1.0:
        weights = np.ones(spec.n_users)
        weights[0] = spec.weight_ratio
    else:
        weights = np.ones(spec.n_users)
    r_min = spec.r_min if spec.r_min is not None else table.entries[0].rate
    return SystemInstance(
        channels=channels,
        sigma2=dbm_to_watt(spec.sigma2_dbm),
        power=power,
        k_admit=min(spec.k_admit, spec.n_users),
        weights=weights,
        delta_sic=spec.delta_sic,
        r_min=r_min,
        mcs=table,
        admission_mode=spec.admission_mode,
    )


def _draw_channels(base: ScenarioSpec, local: ScenarioSpec, draw: int) -> np.ndarray:
    """Channel draw for one cell.

    Keyed on the draw index and user count only, and normalized at the base
    spec's power, so a power/residual/weight sweep sees the same channel set
    at every sweep value (the usual way such curves are averaged).
    """
    rng = np.random.default_rng((base.seed, 1009, local.n_users, draw))
    return gen_channels(local.channels, local.n_tx, local.n_users,
                        p_tx_max=dbm_to_watt(base.p_tx_max_dbm),
                        sigma2=dbm_to_watt(base.sigma2_dbm), rng=rng)


def _random_admission(spec: ScenarioSpec, draw: int) -> tuple:
    rng = np.random.default_rng((spec.seed, 7919, spec.n_users, draw))
    k = min(spec.k_admit, spec.n_users)
    return tuple(sorted(rng.choice(spec.n_users, size=k, replace=False).tolist()))


def _solve_cell(spec: ScenarioSpec, solver: str, instance: SystemInstance,
                admission: tuple) -> dict:
    """Dispatch one (instance, solver) cell; returns the row payload."""
    t0 = time.monotonic()
    opts = spec.misocp_options or misocp.MisocpOptions(variant=spec.variant)
    if opts.variant != spec.variant:
        opts = dataclasses.replace(opts, variant=spec.variant)
    cfg = spec.sca_config or sca.ScaConfig(psi0=1 if spec.variant == misocp.RSMA else 0)
    out = dict(status="optimal", lambda_metric=None, feasible=None)
    if solver in ("opt-misocp", "rnd-misocp"):
        fixed = admission if solver == "rnd-misocp" else None
        if spec.objective == "wsr":
            sol = misocp.solve_dwsr(instance, opts, fixed_admission=fixed)
        else:
            sol = misocp.solve_dwee(instance, opts, fixed_admission=fixed)
        out["status"] = sol.status
        if sol.assignment is None:
            out.update(objective_value=-math.inf, per_user_rates=(),
                       common_rate=0.0, power_used=0.0, nodes_or_iters=0)
        else:
            rep = validate_solution(instance, sol.assignment, sol.precoders)
            rates = tuple(float(sol.precoders.rate(u)) for u in range(instance.n_users))
            out.update(objective_value=sol.objective, per_user_rates=rates,
                       common_rate=float(np.sum(sol.precoders.c)),
                       power_used=sol.precoders.tx_power(),
                       nodes_or_iters=sol.stats.nodes_explored,
                       feasible=rep.passed)
    else:
        subsets = [admission] if solver.endswith("rnd-sca-sdr") else None
        solve = sca.solve_cwsr if spec.objective == "wsr" else sca.solve_cwee
        try:
            best, table = solve(instance, cfg, subsets=subsets)
        except RuntimeError as exc:
            return dict(status=f"error:{exc}", objective_value=-math.inf,
                        per_user_rates=(), common_rate=0.0, power_used=0.0,
                        nodes_or_iters=0, lambda_metric=None, feasible=None,
                        wallclock=time.monotonic() - t0)
        if solver.startswith("pr-"):
            pick = sca.best_projected(table)
            rates = tuple(float(pick.projected_private[u] + pick.projected_c[u])
                          for u in range(instance.n_users))
            out.update(objective_value=pick.projected_objective,
                       per_user_rates=rates,
                       common_rate=float(np.sum(pick.projected_c)),
                       power_used=pick.precoders.tx_power(),
                       nodes_or_iters=pick.iterations)
            pick_for_lambda = pick
        else:
            rates = tuple(float(best.private_rates[u] + best.c[u])
                          for u in range(instance.n_users))
            out.update(objective_value=best.evaluated_objective,
                       per_user_rates=rates,
                       common_rate=float(np.sum(best.c)),
                       power_used=best.precoders.tx_power(),
                       nodes_or_iters=best.iterations)
            pick_for_lambda = best
        mats = list(pick_for_lambda.W) + (
            [pick_for_lambda.M] if pick_for_lambda.M is not None else [])
        out["lambda_metric"] = sca.rank_oneness(
            mats, trace_tol=1e-6 * max(1.0, instance.power.p_tx_max))
    out["wallclock"] = time.monotonic() - t0
    return out


def run_scenario(spec: ScenarioSpec, threads: int = 1) -> list[ResultRow]:
    """Execute the sweep x draws x solvers grid; failures become rows."""
    cells = [(si, v, d) for si, v in enumerate(spec.sweep_values)
             for d in range(spec.n_channel_draws)]

    def run_cell(cell):
        si, value, draw = cell
        local = _spec_at(spec, value)
        channels = _draw_channels(spec, local, draw)
        instance = build_instance(local, channels)
        admission = _random_admission(local, draw)
        rows = []
        for solver in spec.solvers:
            payload = _solve_cell(local, solver, instance, admission)
            rows.append(ResultRow(
                scenario_id=spec.scenario_id, sweep_axis=spec.sweep_axis,
                sweep_value=float(value), draw=draw, solver=solver,
                variant=spec.variant, objective=spec.objective, **payload))
        return rows

    results: list[ResultRow] = []
    if threads <= 1:
        for cell in cells:
            results.extend(run_cell(cell))
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            for rows in pool.map(run_cell, cells):
                results.extend(rows)
    return results


def rows_to_csv(rows: Sequence[ResultRow]) -> str:
    return "\n".join([ResultRow.CSV_HEADER] + [r.csv_line() for r in rows]) + "\n"


def summarize(rows: Sequence[ResultRow]) -> dict:
    """Per-solver means over draws plus the headline solver deltas."""
    groups: dict = {}
    for r in rows:
        if not math.isfinite(r.objective_value):
            continue
        groups.setdefault((r.solver, r.sweep_value), []).append(r.objective_value)
    means = {f"{s}@{v:g}": float(np.mean(vals)) for (s, v), vals in groups.items()}
    deltas = {}
    by_value: dict = {}
    for (s, v), vals in groups.items():
        by_value.setdefault(v, {})[s] = float(np.mean(vals))
    for v, sols in by_value.items():
        opt = sols.get("opt-misocp")
        if opt is None:
            continue
        for other, label in (("rnd-misocp", "opt_vs_rnd_pct"),
                             ("pr-opt-sca-sdr", "opt_vs_pr_pct")):
            if other in sols and sols[other] > 0:
                deltas.setdefault(label, {})[f"{v:g}"] = (
                    100.0 * (opt - sols[other]) / sols[other])
    return {"means": means, "gains": deltas}


def rate_region_sweep(instance: SystemInstance, weight_ratios: Sequence[float],
                      objective: str = "wsr",
                      options: Optional[misocp.MisocpOptions] = None) -> list[tuple]:
    """Sampled boundary of the two-user rate region.

    Solves with weights (r, 1) for each ratio and returns
    (ratio, rate_user1, rate_user2, objective_value) tuples.
    """
    if instance.n_users != 2:
        raise ValueError("rate regions are drawn for two-user instances")
    points = []
    for r in weight_ratios:
        inst = dataclasses.replace(instance, weights=np.array([float(r), 1.0]))
        sol = (misocp.solve_dwsr(inst, options) if objective == "wsr"
               else misocp.solve_dwee(inst, options))
        if sol.assignment is None:
            points.append((float(r), math.nan, math.nan, math.nan))
            continue
        points.append((float(r), sol.precoders.rate(0), sol.precoders.rate(1),
                       sol.objective))
    return points


def default_weight_ratios(n: int = 25) -> np.ndarray:
    return np.geomspace(1e-3, 1e3, n)


def compare_upper_bound(instance: SystemInstance,
                        options: Optional[misocp.MisocpOptions] = None) -> dict:
    """Exact discrete optimum against its rank-relaxed upper bound."""
    sol = misocp.solve_dwsr(instance, options)
    bound, lam, _ = misocp.sdr_upper_bound(instance, options)
    gap = (bound - sol.objective) / bound if bound > 0 else 0.0
    return {
        "misocp_objective": sol.objective,
        "sdr_bound": bound,
        "gap_pct": 100.0 * max(gap, 0.0),
        "lambda": lam,
    }
