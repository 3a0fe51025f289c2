"""Radio-resource management for rate-splitting downlink systems.

Two solver pipelines over one system model:

* a globally optimal branch-and-bound mixed-integer SOCP for discrete rates
  (weighted sum rate and, via a parametric outer loop, weighted energy
  efficiency), plus an SDP-relaxation upper bound and a brute-force oracle;
* an iterative inner-approximation SDP pipeline for continuous rates with
  admission-subset enumeration, rank-one recovery and rate projection.

A scenario harness and a CLI drive both on deterministic two-user and
seeded geometric multiuser channels.
"""

from .mcs import McsEntry, McsTable, default_table, mcs_best_for_sinr, mcs_lookup
from .model import (
    AT_MOST_K,
    EXACT_K,
    BinaryAssignment,
    FeasibilityReport,
    PowerModel,
    PrecoderSolution,
    SystemInstance,
    db_to_lin,
    dbm_to_watt,
    l_max,
    s_max,
    sinr_common,
    sinr_private,
    validate_solution,
    watt_to_dbm,
    wee,
    wsr,
)
from .misocp import (
    BnBStats,
    MisocpOptions,
    MisocpSolution,
    brute_force_dwsr,
    build_dwsr_relaxation,
    sdr_upper_bound,
    solve_dwee,
    solve_dwsr,
    worst_case_complexity_misocp,
)
from .sca import (
    ScaConfig,
    ScaState,
    SubsetSolution,
    build_cwsr_sdp,
    enumerate_subsets,
    project_rates,
    rank_oneness,
    recover_precoders,
    sca_iterate,
    solve_cwee,
    solve_cwsr,
    worst_case_complexity_sca,
)
from .scenarios import (
    ChannelGenConfig,
    ResultRow,
    ScenarioSpec,
    compare_upper_bound,
    gen_channels,
    rate_region_sweep,
    run_scenario,
)

__all__ = [
    "AT_MOST_K", "EXACT_K",
    "BinaryAssignment", "BnBStats", "ChannelGenConfig", "FeasibilityReport",
    "McsEntry", "McsTable", "MisocpOptions", "MisocpSolution", "PowerModel",
    "PrecoderSolution", "ResultRow", "ScaConfig", "ScaState", "ScenarioSpec",
    "SubsetSolution", "SystemInstance",
    "brute_force_dwsr", "build_cwsr_sdp", "build_dwsr_relaxation",
    "compare_upper_bound", "db_to_lin", "dbm_to_watt", "default_table",
    "enumerate_subsets", "gen_channels", "l_max", "mcs_best_for_sinr",
    "mcs_lookup", "project_rates", "rank_oneness", "rate_region_sweep",
    "recover_precoders", "run_scenario", "s_max", "sca_iterate",
    "sdr_upper_bound", "sinr_common", "sinr_private", "solve_cwee",
    "solve_cwsr", "solve_dwee", "solve_dwsr", "validate_solution",
    "watt_to_dbm", "wee", "worst_case_complexity_misocp",
    "worst_case_complexity_sca", "wsr",
]
