"""CSV/JSON writers for trajectories, ledgers and per-figure plot data.

Floats are written with ``repr`` so files are byte-identical across runs
with the same inputs.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .engine import TrajectoryLog
from .errors import UnknownFigure
from .graph import Graph
from .privacy import PrivacyLedger

FIGURES = ("fig1a", "fig1b", "fig2")


def _f(v) -> str:
    return repr(float(v))


def _write_rows(path: Path, header: list[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def write_json(path: Path, payload) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def write_trajectory(log: TrajectoryLog, out_dir) -> Path:
    """``t, agent, dim, x`` with 1-based agent and dimension indices."""
    T1, N, n = log.x.shape
    rows = ((t, i + 1, k + 1, _f(log.x[t, i, k])) for t in range(T1) for i in range(N) for k in range(n))
    return _write_rows(Path(out_dir) / "trajectory.csv", ["t", "agent", "dim", "x"], rows)


def write_edge_errors(log: TrajectoryLog, graph: Graph, out_dir) -> Path:
    """``t, edge, dim, xi`` with edges written as ``i-j``."""
    n = log.x.shape[2]
    names = [f"{i}-{j}" for i, j in graph.edges]
    rows = ((t, names[e], k + 1, _f(log.xi[t, e * n + k]))
            for t in range(log.x.shape[0]) for e in range(graph.n_edges) for k in range(n))
    return _write_rows(Path(out_dir) / "edge_errors.csv", ["t", "edge", "dim", "xi"], rows)


def ledger_payload(ledger: PrivacyLedger) -> list[dict]:
    return [{"t": r.t, "delta_sens": r.sensitivity, "eps": r.eps, "delta": r.delta} for r in ledger.records]


def write_ledger_csv(ledger: PrivacyLedger, out_dir) -> Path:
    rows = ((r.t, _f(r.c), _f(r.rho_K), _f(r.sensitivity), _f(r.eps), _f(r.delta)) for r in ledger.records)
    return _write_rows(Path(out_dir) / "ledger.csv", ["t", "c", "rho_K", "delta_sens", "eps", "delta"], rows)


def _dim_names(n: int) -> list[str]:
    return ["x", "y", "z"][:n] if n <= 3 else [f"x{k + 1}" for k in range(n)]


def export_plot_data(obj, figure: str, out_dir, graph: Graph | None = None) -> Path:
    """Write the data behind one figure.

    * ``fig1a``: relative states ``x_i - x_j`` per edge over time (needs ``graph``).
    * ``fig1b``: per-step and cumulative epsilon from a ``PrivacyLedger``.
    * ``fig2``: agent paths from a ``TrajectoryLog``.
    """
    out = Path(out_dir)
    if figure == "fig1a":
        if not isinstance(obj, TrajectoryLog) or graph is None:
            raise TypeError("fig1a needs a TrajectoryLog and the graph")
        n = obj.x.shape[2]
        dims = _dim_names(n)
        rows = []
        for t in range(obj.x.shape[0]):
            for i, j in graph.edges:
                rel = obj.x[t, i - 1] - obj.x[t, j - 1]
                rows.append([t, f"{i}-{j}"] + [_f(v) for v in rel])
        return _write_rows(out / "fig1a.csv", ["t", "edge"] + dims, rows)
    if figure == "fig1b":
        if not isinstance(obj, PrivacyLedger):
            raise TypeError("fig1b needs a PrivacyLedger")
        cum = obj.cumulative_eps()
        rows = ([r.t, _f(r.eps), _f(c)] for r, c in zip(obj.records, cum))
        return _write_rows(out / "fig1b.csv", ["t", "eps_t", "eps_cumulative"], rows)
    if figure == "fig2":
        if not isinstance(obj, TrajectoryLog):
            raise TypeError("fig2 needs a TrajectoryLog")
        T1, N, n = obj.x.shape
        rows = ([t, i + 1] + [_f(v) for v in obj.x[t, i]] for i in range(N) for t in range(T1))
        return _write_rows(out / "fig2.csv", ["t", "agent"] + _dim_names(n), rows)
    raise UnknownFigure(f"unknown figure {figure!r}; expected one of {FIGURES}")


def stats_payload(stats) -> dict:
    d = stats.to_dict()
    d["mean_sq_ratio_final"] = float(stats.mean_sq[-1] / stats.mean_sq[0]) if stats.mean_sq[0] > 0 else None
    return d


def jsonable(obj):
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj
