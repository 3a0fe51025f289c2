"""Command-line front end.

Verbs: solve (single instance), region (two-user rate region), scenario
(sweep harness), complexity (worst-case size estimators), validate (audit a
solution file), dump-mcs (write the built-in rate table).  Configs are JSON
whose keys mirror the simulation-parameter names (P_tx_max_dBm, sigma2_dBm,
N_tx, U, K, Delta_SIC, eta_eff, P_dyn_dBm, P_sta_dBm, weights, channels).
Exit codes: 0 solved/passed, 1 usage or config error, 2 infeasible or
validation failure, 3 node/time limit hit.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import misocp, sca, scenarios
from .mcs import McsTable, default_table
from .model import (
    AT_MOST_K,
    EXACT_K,
    BinaryAssignment,
    PowerModel,
    PrecoderSolution,
    SystemInstance,
    dbm_to_watt,
    validate_solution,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_LIMIT = 3

OUTDIR_ENV = "RSMA_RRM_OUTDIR"


class ConfigError(Exception):
    pass


def _load_config(path: str, overrides) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return cfg


def _channel_config(cfg: dict, seed: int) -> scenarios.ChannelGenConfig:
    ch = dict(cfg.get("channels") or {"kind": scenarios.DETERMINISTIC})
    kind = ch.pop("kind", scenarios.DETERMINISTIC)
    if kind == scenarios.EXPLICIT:
        re = np.asarray(ch.pop("re"))
        im = np.asarray(ch.pop("im", np.zeros_like(re)))
        ch["explicit"] = re + 1j * im
    known = {f.name for f in scenarios.ChannelGenConfig.__dataclass_fields__.values()}
    bad = set(ch) - known
    if bad:
        raise ConfigError(f"unknown channel keys: {sorted(bad)}")
    return scenarios.ChannelGenConfig(kind=kind, seed=seed, **ch)


def _mcs_table(cfg: dict) -> McsTable:
    table = (McsTable.from_file(cfg["mcs_file"]) if cfg.get("mcs_file")
             else default_table())
    if cfg.get("mcs_j"):
        table = table.truncated(int(cfg["mcs_j"]))
    return table


def parse_instance(cfg: dict, seed: int = 0) -> SystemInstance:
    """Build a SystemInstance from a config dict; names a bad key on error."""
    try:
        n_tx = int(cfg["N_tx"])
        n_users = int(cfg["U"])
        k = int(cfg.get("K", n_users))
    except KeyError as exc:
        raise ConfigError(f"missing required key {exc.args[0]!r}") from exc
    table = _mcs_table(cfg)
    gen = _channel_config(cfg, seed)
    p_tx = dbm_to_watt(float(cfg.get("P_tx_max_dBm", 40.0)))
    sigma2 = dbm_to_watt(float(cfg.get("sigma2_dBm", 30.0)))
    channels = scenarios.gen_channels(gen, n_tx, n_users, p_tx_max=p_tx,
                                      sigma2=sigma2)
    weights = cfg.get("weights", "uniform")
    if weights == "uniform":
        weights = np.ones(n_users)
    power = PowerModel(
        p_tx_max=p_tx,
        eta_eff=float(cfg.get("eta_eff", 1.0)),
        p_dyn=dbm_to_watt(float(cfg["P_dyn_dBm"])) if "P_dyn_dBm" in cfg else 0.0,
        p_sta=dbm_to_watt(float(cfg["P_sta_dBm"])) if "P_sta_dBm" in cfg else 0.0,
    )
    r_min = cfg.get("R_min", "R1")
    r_min = table.entries[0].rate if r_min == "R1" else float(r_min)
    try:
        return SystemInstance(
            channels=channels, sigma2=sigma2, power=power, k_admit=k,
            weights=np.asarray(weights, dtype=float),
            delta_sic=float(cfg.get("Delta_SIC", 0.0)),
            r_min=r_min, mcs=table,
            admission_mode=cfg.get("admission", EXACT_K),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _misocp_options(cfg: dict, variant: str) -> misocp.MisocpOptions:
    opts = dict(cfg.get("options") or {})
    opts["variant"] = variant
    known = {f.name for f in misocp.MisocpOptions.__dataclass_fields__.values()}
    bad = set(opts) - known
    if bad:
        raise ConfigError(f"unknown solver options: {sorted(bad)}")
    return misocp.MisocpOptions(**opts)


def _sca_config(cfg: dict, variant: str) -> sca.ScaConfig:
    pars = dict(cfg.get("sca") or {})
    pars.setdefault("psi0", 1 if variant == misocp.RSMA else 0)
    known = {f.name for f in sca.ScaConfig.__dataclass_fields__.values()}
    bad = set(pars) - known
    if bad:
        raise ConfigError(f"unknown sca keys: {sorted(bad)}")
    return sca.ScaConfig(**pars)


def _solution_record_misocp(instance, sol: misocp.MisocpSolution, report) -> dict:
    a, p = sol.assignment, sol.precoders
    return {
        "kind": "discrete",
        "status": sol.status,
        "objective": sol.objective,
        "certificate_gap": sol.certificate_gap,
        "assignment": {
            "chi": a.chi.tolist(), "mu": a.mu.tolist(), "psi": a.psi,
            "alpha": a.alpha.tolist(), "kappa": a.kappa.tolist(),
            "pi": a.pi.tolist(),
        },
        "precoders": {
            "w_re": p.w.real.tolist(), "w_im": p.w.imag.tolist(),
            "m_re": p.m.real.tolist(), "m_im": p.m.imag.tolist(),
            "c": p.c.tolist(),
        },
        "private_rates": p.private_rates.tolist(),
        "power_used": p.tx_power(),
        "stats": {
            "nodes_explored": sol.stats.nodes_explored,
            "nodes_pruned": sol.stats.nodes_pruned,
            "incumbent_updates": sol.stats.incumbent_updates,
            "early_stop_hit": sol.stats.early_stop_hit,
            "wallclock": sol.stats.wallclock,
        },
        "feasibility": {"passed": report.passed,
                        "worst_violation": report.worst_violation},
    }


def _solution_record_sca(instance, best: sca.SubsetSolution) -> dict:
    p = best.precoders
    return {
        "kind": "continuous",
        "status": "optimal" if best.converged else "limit",
        "objective": best.objective,
        "evaluated_objective": best.evaluated_objective,
        "subset": list(best.subset),
        "psi0": best.psi0,
        "iterations": best.iterations,
        "converged": best.converged,
        "precoders": {
            "w_re": p.w.real.tolist(), "w_im": p.w.imag.tolist(),
            "m_re": p.m.real.tolist(), "m_im": p.m.imag.tolist(),
            "c": best.c.tolist(),
        },
        "private_rates": best.private_rates.tolist(),
        "projected": {
            "private": best.projected_private.tolist(),
            "c": best.projected_c.tolist(),
            "objective": best.projected_objective,
        },
        "power_used": p.tx_power(),
        "trace": [list(t) for t in best.trace],
    }


def _out_path(args, default_name: str) -> str:
    if args.out:
        return args.out
    outdir = os.environ.get(OUTDIR_ENV, ".")
    return os.path.join(outdir, default_name)


def cmd_solve(args) -> int:
    cfg = _load_config(args.config, args.set)
    if args.solver:
        cfg["solver"] = args.solver
    if args.variant:
        cfg["variant"] = args.variant
    solver = cfg.get("solver", "opt-misocp")
    variant = cfg.get("variant", misocp.RSMA)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    instance = parse_instance(cfg, seed)
    objective = cfg.get("objective", "wsr")
    if solver == "opt-misocp":
        opts = _misocp_options(cfg, variant)
        sol = (misocp.solve_dwsr(instance, opts) if objective == "wsr"
               else misocp.solve_dwee(instance, opts))
        if sol.assignment is None:
            print(f"infeasible: {sol.status}")
            return EXIT_INFEASIBLE if sol.status == "infeasible" else EXIT_LIMIT
        report = validate_solution(instance, sol.assignment, sol.precoders)
        record = _solution_record_misocp(instance, sol, report)
        code = EXIT_OK if sol.status == "optimal" else EXIT_LIMIT
    elif solver == "opt-sca-sdr":
        cfg_sca = _sca_config(cfg, variant)
        solve = sca.solve_cwsr if objective == "wsr" else sca.solve_cwee
        try:
            best, _ = solve(instance, cfg_sca)
        except RuntimeError as exc:
            print(f"infeasible: {exc}")
            return EXIT_INFEASIBLE
        record = _solution_record_sca(instance, best)
        code = EXIT_OK if best.converged else EXIT_LIMIT
    else:
        raise ConfigError(f"unknown solver {solver!r} for solve")
    record["config"] = cfg
    path = _out_path(args, "solution.json")
    with open(path, "w") as fh:
        json.dump(record, fh, indent=1)
    print(f"objective {record['objective']:.6f} -> {path}")
    return code


def cmd_validate(args) -> int:
    try:
        with open(args.solution) as fh:
            record = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read solution: {exc}") from exc
    cfg = record.get("config")
    if cfg is None:
        cfg = _load_config(args.config, args.set) if args.config else None
    if cfg is None:
        raise ConfigError("solution has no embedded config; pass --config")
    instance = parse_instance(cfg, int(cfg.get("seed", 0)))
    p = record["precoders"]
    prec = PrecoderSolution(
        w=np.asarray(p["w_re"]) + 1j * np.asarray(p["w_im"]),
        m=np.asarray(p["m_re"]) + 1j * np.asarray(p["m_im"]),
        c=np.asarray(p["c"]),
        private_rates=np.asarray(record.get("private_rates")),
    )
    if record.get("kind") == "discrete":
        a = record["assignment"]
        assignment = BinaryAssignment(
            chi=a["chi"], mu=a["mu"], psi=a["psi"], alpha=a["alpha"],
            kappa=a["kappa"], pi=a["pi"])
        report = validate_solution(instance, assignment, prec, tol=args.tol)
        print(report.summary())
        return EXIT_OK if report.passed else EXIT_INFEASIBLE
    # continuous record: power budget and projection soundness
    ok = prec.tx_power() <= instance.power.p_tx_max * (1.0 + args.tol)
    subset = tuple(record["subset"])
    proj_p, proj_c = sca.project_rates(instance, subset, prec, np.asarray(p["c"]))
    stored = np.asarray(record["projected"]["private"])
    ok = ok and bool(np.allclose(proj_p, stored, atol=1e-9))
    print(f"power within budget and projection reproducible: {ok}")
    return EXIT_OK if ok else EXIT_INFEASIBLE


def cmd_region(args) -> int:
    cfg = _load_config(args.config, args.set)
    if args.variant:
        cfg["variant"] = args.variant
    instance = parse_instance(cfg, int(cfg.get("seed", 0)))
    objective = cfg.get("objective", "wsr")
    ratios = (np.asarray(json.loads(args.ratios))
              if args.ratios else scenarios.default_weight_ratios(args.n_ratios))
    opts = _misocp_options(cfg, cfg.get("variant", misocp.RSMA))
    points = scenarios.rate_region_sweep(instance, ratios, objective, opts)
    lines = ["ratio,rate_user1,rate_user2,objective"]
    lines += [f"{r:.6g},{a:.6g},{b:.6g},{o:.6g}" for r, a, b, o in points]
    path = _out_path(args, "region.csv")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"{len(points)} region points -> {path}")
    return EXIT_OK


def _scenario_spec(cfg: dict, seed) -> scenarios.ScenarioSpec:
    sweep = cfg.get("sweep") or {}
    solvers = cfg.get("solvers")
    if not solvers:
        raise ConfigError("scenario needs a non-empty 'solvers' list")
    chan = _channel_config(cfg, 0)
    variant = cfg.get("variant", misocp.RSMA)
    kwargs = dict(
        scenario_id=str(cfg.get("scenario", "custom")),
        objective=cfg.get("objective", "wsr"),
        solvers=tuple(solvers),
        variant=variant,
        sweep_axis=sweep.get("axis", "p_tx_max_dbm"),
        sweep_values=tuple(sweep.get("values", [cfg.get("P_tx_max_dBm", 40.0)])),
        n_channel_draws=int(cfg.get("n_channel_draws", 1)),
        seed=seed if seed is not None else int(cfg.get("seed", 0)),
        n_tx=int(cfg["N_tx"]),
        n_users=int(cfg["U"]),
        k_admit=int(cfg.get("K", cfg["U"])),
        sigma2_dbm=float(cfg.get("sigma2_dBm", 30.0)),
        p_tx_max_dbm=float(cfg.get("P_tx_max_dBm", 40.0)),
        delta_sic=float(cfg.get("Delta_SIC", 0.0)),
        eta_eff=float(cfg.get("eta_eff", 1.0)),
        channels=chan,
        admission_mode=cfg.get("admission", EXACT_K),
        mcs_j=cfg.get("mcs_j"),
    )
    if "P_dyn_dBm" in cfg:
        kwargs["p_dyn_dbm"] = float(cfg["P_dyn_dBm"])
    if "P_sta_dBm" in cfg:
        kwargs["p_sta_dbm"] = float(cfg["P_sta_dBm"])
    if isinstance(cfg.get("weights"), list):
        kwargs["weights"] = tuple(cfg["weights"])
    if cfg.get("R_min") not in (None, "R1"):
        kwargs["r_min"] = float(cfg["R_min"])
    if cfg.get("options"):
        kwargs["misocp_options"] = _misocp_options(cfg, variant)
    if cfg.get("sca"):
        kwargs["sca_config"] = _sca_config(cfg, variant)
    try:
        return scenarios.ScenarioSpec(**kwargs)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def cmd_scenario(args) -> int:
    cfg = _load_config(args.config, args.set)
    spec = _scenario_spec(cfg, args.seed)
    rows = scenarios.run_scenario(spec, threads=args.threads)
    outdir = args.out or os.environ.get(OUTDIR_ENV, ".")
    os.makedirs(outdir, exist_ok=True)
    csv_path = os.path.join(outdir, f"scenario_{spec.scenario_id}.csv")
    json_path = os.path.join(outdir, f"scenario_{spec.scenario_id}_summary.json")
    with open(csv_path, "w") as fh:
        fh.write(scenarios.rows_to_csv(rows))
    with open(json_path, "w") as fh:
        json.dump(scenarios.summarize(rows), fh, indent=1)
    n_bad = sum(1 for r in rows if r.status.startswith("error")
                or r.feasible is False)
    print(f"{len(rows)} rows -> {csv_path}; {n_bad} failures; summary -> {json_path}")
    return EXIT_OK if n_bad == 0 else EXIT_LIMIT


def cmd_complexity(args) -> int:
    try:
        mc = misocp.worst_case_complexity_misocp(args.U, args.K, args.J, args.N_tx)
        sc = sca.worst_case_complexity_sca(args.U, args.K, args.N_tx)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"discrete-rate pipeline (U={args.U} K={args.K} J={args.J} N_tx={args.N_tx})")
    print(f"  continuous variables   N_v     = {mc.n_v}")
    print(f"  constraints            N_c     = {mc.n_c}")
    print(f"  cone dimension         N_d     = {mc.n_d}")
    print(f"  worst-case patterns    N_p_all = {mc.n_p_all}")
    print(f"continuous-rate pipeline (U={args.U} K={args.K} N_tx={args.N_tx})")
    print(f"  subset programs        N_q = {sc.n_q}")
    print(f"  constraints            N_c = {sc.n_c}")
    print(f"  variables              N_v = {sc.n_v}")
    print(f"  program dimension      N_d = {sc.n_d}")
    return EXIT_OK


def cmd_dump_mcs(args) -> int:
    text = default_table().to_text()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"table -> {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rsma-rrm",
        description="Beamforming, user admission and rate selection for "
                    "rate-splitting downlink systems.")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="JSON config path")
        p.add_argument("--out", help="output path (or directory for scenario)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry (dotted keys allowed)")

    p = sub.add_parser("solve", help="solve one instance")
    common(p)
    p.add_argument("--solver", choices=("opt-misocp", "opt-sca-sdr"))
    p.add_argument("--variant", choices=(misocp.RSMA, misocp.SDMA))
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("region", help="two-user rate region sweep")
    common(p)
    p.add_argument("--variant", choices=(misocp.RSMA, misocp.SDMA))
    p.add_argument("--ratios", help="JSON list of weight ratios")
    p.add_argument("--n-ratios", type=int, default=25)
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("scenario", help="run a sweep scenario")
    common(p)
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("complexity", help="worst-case size estimators")
    p.add_argument("U", type=int)
    p.add_argument("K", type=int)
    p.add_argument("J", type=int)
    p.add_argument("N_tx", type=int)
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser("validate", help="audit a solution file")
    p.add_argument("--solution", required=True)
    p.add_argument("--config", help="needed when the record has no config")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("dump-mcs", help="write the built-in MCS table")
    p.add_argument("--out")
    p.set_defaults(func=cmd_dump_mcs)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
