"""Command-line entry point.

    dpformation simulate         --preset ifac3robot --seed 1 --out out/
    dpformation monte-carlo      --config cfg.json --runs 200 --workers 4
    dpformation privacy-audit    --preset ifac3robot --from 0 --to 100
    dpformation validate-schedule --preset ifac3robot [--mode partial-sum]
    dpformation gains            --preset ifac3robot

Exit codes: 0 success, 2 validation error, 3 runtime error. Failures print
``{"error": ..., "field": ..., "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import engine, export
from .config import PRESETS, SimConfig, load_config, load_preset
from .errors import FormationError, ValidationError
from .privacy import build_ledger, compose, validate_schedules

log = logging.getLogger("dpformation")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3
SUBCOMMANDS = ("simulate", "monte-carlo", "privacy-audit", "validate-schedule", "gains")


def _resolve_config(args) -> SimConfig:
    if (args.config is None) == (args.preset is None):
        raise ValidationError("give exactly one of --config or --preset", "config")
    cfg = load_config(args.config) if args.config else load_preset(args.preset)
    overrides = {}
    for name in ("seed", "horizon", "runs", "workers"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if args.out is not None:
        overrides["out_dir"] = args.out
    for flag in ("zero_noise", "realized_audit", "global_rho"):
        if getattr(args, flag):
            overrides[flag] = True
    return replace(cfg, **overrides) if overrides else cfg


def audit(cfg: SimConfig, t1: int, t2: int, global_rho: bool = False, realized: bool = False) -> tuple[dict, object]:
    """Privacy ledger over ``[t1, t2]`` with both rho readings and both delta index conventions."""
    gains = cfg.gain_schedule(t2 + 1)
    r_floor = cfg.channel.r_floor
    theta = cfg.formation.theta
    realized_var = None
    if realized:
        horizon = max(cfg.horizon, t2)
        realized_var = engine.run(cfg, horizon=horizon).min_variance
    ledger = build_ledger(cfg.c, cfg.delta, gains.rho_K_t, theta, r_floor, (t1, t2),
                          global_rho=global_rho, realized_variance=realized_var)
    eps, delta = compose(ledger)
    per_time = build_ledger(cfg.c, cfg.delta, gains.rho_K_t, theta, r_floor, (t1, t2))
    glob = build_ledger(cfg.c, cfg.delta, gains.rho_K_t, theta, r_floor, (t1, t2), global_rho=True)
    d_all = [float(cfg.delta(t)) for t in range(t1, t2 + 1)]
    payload = {
        "window": [t1, t2],
        "rho_mode": ledger.rho_mode,
        "realized_audit": realized,
        "r_floor": r_floor,
        "theta": theta,
        "rho_K_global": float(gains.rho_K_t[t1:t2 + 1].max()),
        "eps_total": eps,
        "delta_total": delta,
        "eps_total_per_time_rho": compose(per_time)[0],
        "eps_total_global_rho": compose(glob)[0],
        "delta_total_from_0": math.fsum(d_all),
        "delta_total_from_1": math.fsum(d for t, d in zip(range(t1, t2 + 1), d_all) if t >= 1),
        "per_step": export.ledger_payload(ledger),
    }
    if realized:
        payload["note"] = "realized audit uses the smallest link variance seen on one trajectory; not a worst-case bound"
    return payload, ledger


def cmd_simulate(cfg: SimConfig, args) -> dict:
    out = Path(cfg.out_dir)
    traj = engine.run(cfg)
    files = [
        export.write_trajectory(traj, out),
        export.write_edge_errors(traj, cfg.graph, out),
        export.export_plot_data(traj, "fig1a", out, cfg.graph),
        export.export_plot_data(traj, "fig2", out),
    ]
    n = cfg.dim
    final = traj.xi[-1].reshape(-1, n)
    return {
        "seed": cfg.seed,
        "horizon": cfg.horizon,
        "final_edge_error_norms": {f"{i}-{j}": float(np.linalg.norm(final[k]))
                                   for k, (i, j) in enumerate(cfg.graph.edges)},
        "sq_norm_initial": float(traj.sq_norm[0]),
        "sq_norm_final": float(traj.sq_norm[-1]),
        "files": [str(f) for f in files],
    }


def cmd_monte_carlo(cfg: SimConfig, args) -> dict:
    stats = engine.monte_carlo(cfg, workers=cfg.workers)
    payload = export.stats_payload(stats)
    path = export.write_json(Path(cfg.out_dir) / "stats.json", payload)
    return {
        "runs": stats.runs,
        "mean_sq_initial": float(stats.mean_sq[0]),
        "mean_sq_final": float(stats.mean_sq[-1]),
        "max_mean_sq": float(stats.mean_sq.max()),
        "mean_xi_final": stats.mean_xi_final.tolist(),
        "std_err_final": stats.std_err_final.tolist(),
        "files": [str(path)],
    }


def cmd_privacy_audit(cfg: SimConfig, args) -> dict:
    t1 = 0 if args.t_from is None else args.t_from
    t2 = cfg.horizon if args.t_to is None else args.t_to
    payload, ledger = audit(cfg, t1, t2, cfg.global_rho, cfg.realized_audit)
    out = Path(cfg.out_dir)
    files = [export.write_json(out / "ledger.json", payload), export.write_ledger_csv(ledger, out),
             export.export_plot_data(ledger, "fig1b", out)]
    summary = {k: v for k, v in payload.items() if k != "per_step"}
    summary["files"] = [str(f) for f in files]
    return summary


def cmd_validate_schedule(cfg: SimConfig, args) -> dict:
    report = validate_schedules(cfg.c, cfg.delta, args.mode)
    payload = export.jsonable(report.to_dict())
    path = export.write_json(Path(cfg.out_dir) / "admissibility.json", payload)
    payload["files"] = [str(path)]
    return payload


def cmd_gains(cfg: SimConfig, args) -> dict:
    steps = max(cfg.horizon, 1)
    gs = cfg.gain_schedule(steps)
    out = Path(cfg.out_dir)
    n = cfg.dim
    rows = ((t, i + 1, a + 1, b + 1, repr(float(gs.gains[t, i, a, b])))
            for t in range(steps) for i in range(cfg.n_agents) for a in range(n) for b in range(n))
    f1 = export._write_rows(out / "gains.csv", ["t", "agent", "row", "col", "K"], rows)
    f2 = export._write_rows(out / "rho.csv", ["t", "c", "rho_K"],
                            ((t, repr(float(gs.c[t])), repr(float(gs.rho_K_t[t]))) for t in range(steps)))
    return {"steps": steps, "rho_K": gs.rho_K, "rho_K_t0": float(gs.rho_K_t[0]),
            "files": [str(f1), str(f2)]}


COMMANDS = {
    "simulate": cmd_simulate,
    "monte-carlo": cmd_monte_carlo,
    "privacy-audit": cmd_privacy_audit,
    "validate-schedule": cmd_validate_schedule,
    "gains": cmd_gains,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("input")
    src.add_argument("--config", metavar="PATH", help="JSON experiment config")
    src.add_argument("--preset", choices=PRESETS, help="built-in experiment config")
    opt = common.add_argument_group("overrides")
    opt.add_argument("--seed", type=int)
    opt.add_argument("--out", metavar="DIR")
    opt.add_argument("--horizon", type=int)
    opt.add_argument("--runs", type=int)
    opt.add_argument("--workers", type=int, help="threads for monte-carlo")
    opt.add_argument("--zero-noise", action="store_true", help="exact receptions (test hook)")
    opt.add_argument("--realized-audit", action="store_true",
                     help="audit against realised link variances of one trajectory")
    opt.add_argument("--global-rho", action="store_true", help="use one gain bound over the whole window")
    opt.add_argument("--from", dest="t_from", type=int, metavar="T1")
    opt.add_argument("--to", dest="t_to", type=int, metavar="T2")
    opt.add_argument("--mode", choices=("analytic", "partial-sum"), default="analytic",
                     help="validate-schedule method")
    opt.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dpformation", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _error(kind: str, message: str, field: str | None = None) -> None:
    print(json.dumps({"error": kind, "field": field, "message": message}), file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve_config(args)
        result = COMMANDS[args.command](cfg, args)
    except ValidationError as exc:
        _error(type(exc).__name__, exc.reason, exc.field)
        return EXIT_VALIDATION
    except FormationError as exc:
        _error(type(exc).__name__, str(exc))
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - any crash must still exit 3 with a reason
        log.debug("unhandled error", exc_info=True)
        _error(type(exc).__name__, str(exc))
        return EXIT_RUNTIME
    print(json.dumps(export.jsonable(result), indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
