"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary (see ``conftest.py``). Run directly with ``python3 -m tests.test_acceptance``
to print the lines without pytest.
"""

import json
import math
import time

import mpmath
import numpy as np
import pytest

from dpformation import cli, engine
from dpformation.channel import stream_key
from dpformation.config import load_preset
from dpformation.control import batch_qp_oracle, lqr_gain
from dpformation.engine import SimState, edge_errors, psi_matrix, step
from dpformation.graph import build_graph, incidence_rank, random_tree
from dpformation.privacy import gaussian_sigma_for, q_tail, q_tail_inv
from dpformation.schedules import Schedule

from .conftest import mp_q_tail, random_spd

RESULTS: dict[int, str] = {}


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def _cli_json(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    assert code == 0, err
    return json.loads(out)


def test_criterion_01_delta_composition(tmp_path, capsys):
    t0 = time.perf_counter()
    res = _cli_json(capsys, "privacy-audit", "--preset", "ifac3robot", "--from", "0", "--to", "100",
                    "--out", str(tmp_path))
    elapsed = time.perf_counter() - t0
    with mpmath.workdps(50):
        s1 = mpmath.fsum(mpmath.mpf("0.001") * mpmath.exp(-mpmath.sqrt(t)) for t in range(1, 101))
        s0 = s1 + mpmath.mpf("0.001")
    d1, d0 = res["delta_total_from_1"], res["delta_total_from_0"]
    ok = (0.00160 <= d1 <= 0.00175 and 0.00260 <= d0 <= 0.00275
          and abs(d1 - float(s1)) <= 1e-15 and abs(d0 - float(s0)) <= 1e-15 and elapsed < 1.0)
    report(1, ok, f"sum_1^100 = {d1:.10f}, sum_0^100 = {d0:.10f} (oracle {mpmath.nstr(s1, 12)}, "
                  f"{mpmath.nstr(s0, 12)}), {elapsed:.2f} s")


def test_criterion_02_epsilon_composition(tmp_path, capsys):
    target = 29.9587
    t0 = time.perf_counter()
    res = _cli_json(capsys, "privacy-audit", "--preset", "ifac3robot", "--from", "0", "--to", "100",
                    "--out", str(tmp_path))
    elapsed = time.perf_counter() - t0
    eps = res["eps_total"]
    rel = abs(eps - target) / target
    ok = math.isfinite(eps) and rel <= 0.25 and elapsed < 5.0
    report(2, ok, f"eps(0..100) = {eps:.4f} (per-time rho), target {target} +-25%, off by {rel:.1%}; "
                  f"global rho gives {res['eps_total_global_rho']:.4f}; {elapsed:.2f} s")


def test_criterion_03_formation_convergence(tmp_path, capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(10):
        res = _cli_json(capsys, "simulate", "--preset", "ifac3robot", "--seed", str(seed),
                        "--out", str(tmp_path / str(seed)))
        worst = max(worst, *res["final_edge_error_norms"].values())
    cfg = load_preset("ifac3robot")
    stats = engine.monte_carlo(cfg, n_runs=200, horizon=100, base_seed=1)
    ratio = stats.mean_sq[-1] / stats.mean_sq[0]
    elapsed = time.perf_counter() - t0
    ok = worst <= 2.0 and ratio <= 0.05 and elapsed < 30.0
    report(3, ok, f"worst final edge error over seeds 0..9 = {worst:.3f} (<= 2.0); "
                  f"mean_sq(100)/mean_sq(0) = {ratio:.2e} (<= 0.05); {elapsed:.2f} s")


def test_criterion_04_mean_square_boundedness():
    cfg = load_preset("ifac3robot")
    stats = engine.monte_carlo(cfg, n_runs=200, horizon=100, base_seed=1)
    peak = stats.mean_sq.max() / stats.mean_sq[0]
    xi0 = math.sqrt(stats.mean_sq[0])  # xi(0) is deterministic
    frac = float(np.mean(stats.tail_increment < 0.1 * xi0))
    ok = peak <= 1.05 and frac >= 0.95 and stats.tail_window == (90, 100)
    report(4, ok, f"max_t mean_sq / mean_sq(0) = {peak:.4f} (<= 1.05); "
                  f"tail increment < 10% of |xi(0)| in {frac:.1%} of runs (>= 95%)")


@pytest.mark.slow
def test_criterion_05_zero_mean_limit():
    cfg = engine.with_schedule(load_preset("ifac3robot"), Schedule.power(1 / 7, 0.9))
    t0 = time.perf_counter()
    stats = engine.monte_carlo(cfg, n_runs=500, horizon=2000, base_seed=2024, workers=4)
    elapsed = time.perf_counter() - t0
    z = np.abs(stats.mean_xi_final) / stats.std_err_final
    ok = bool(np.all(z <= 3.0)) and elapsed < 300.0
    report(5, ok, f"|mean xi(2000)| / SE = {np.array2string(z, precision=2)} (all <= 3); {elapsed:.1f} s")


def test_criterion_06_oracle_equivalence():
    rng = np.random.default_rng(606)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 4))
        T = int(rng.integers(2, 13))
        deg = int(rng.integers(1, 4))
        c = float(rng.uniform(1e-3, 1.0))
        Q, R = random_spd(rng, n), random_spd(rng, n)
        x0, ybar = rng.standard_normal(n) * 5, rng.standard_normal(n) * 5
        u_qp = batch_qp_oracle(Q, R, c, deg, T, x0, ybar)
        u_dp = c * lqr_gain(Q, R, c, deg, T) @ (deg * (ybar - x0))
        worst = max(worst, np.linalg.norm(u_dp - u_qp) / np.linalg.norm(u_qp))
    closed = 0.0
    for q in (0.5, 8.0, 40.0):
        for r in (0.1, 3.0):
            for c in (1e-3, 1 / 7, 1.0):
                K = lqr_gain(q * np.eye(2), r * np.eye(2), c, 1, 2)
                closed = max(closed, np.abs(K - q / (r + c * q) * np.eye(2)).max() / (q / (r + c * q)))
    ok = worst <= 1e-9 and closed <= 1e-12
    report(6, ok, f"DP vs batch QP worst relative gap {worst:.1e} (<= 1e-9); "
                  f"T=2 closed form worst relative gap {closed:.1e} (<= 1e-12)")


def test_criterion_07_tail_accuracy():
    worst = 0.0
    for p in (0.4, 0.1, 0.01, 0.001, 1e-6):
        x = q_tail_inv(p)
        worst = max(worst, abs(float(mp_q_tail(x, 50)) - p) / p, abs(q_tail(x) - p) / p)
    ref = float(mp_q_tail(3.0902323, 50))
    err = abs(q_tail(3.0902323) - 0.001)
    ok = worst <= 1e-10 and err <= 1e-7 and abs(q_tail(3.0902323) - ref) <= 1e-15
    report(7, ok, f"worst |Q(Qinv(p)) - p| / p = {worst:.1e} (<= 1e-10); "
                  f"Q(3.0902323) = {q_tail(3.0902323):.12f}, oracle {ref:.12f}")


def test_criterion_08_sigma_round_trip():
    rng = np.random.default_rng(808)
    worst = 0.0
    for _ in range(1000):
        d2 = 10 ** rng.uniform(-3, 2)
        eps = 10 ** rng.uniform(-3, 2)
        delta = float(rng.uniform(1e-9, 0.5))
        sigma = gaussian_sigma_for(d2, eps, delta)
        a = d2 / sigma
        worst = max(worst, abs(a * a / 2 + a * q_tail_inv(delta) - eps) / eps)
    report(8, worst <= 1e-10, f"worst relative round-trip error over 1000 triples {worst:.1e} (<= 1e-10)")


def test_criterion_09_structural_invariants():
    rng = np.random.default_rng(909)
    rank_ok = True
    for _ in range(500):
        N = int(rng.integers(2, 13))
        g = build_graph(N, random_tree(N, rng))
        rank_ok &= incidence_rank(g) == N - 1
    min_eig = math.inf
    for _ in range(200):
        N = int(rng.integers(2, 10))
        n = int(rng.integers(1, 4))
        g = build_graph(N, random_tree(N, rng))
        psi = psi_matrix(g, np.stack([random_spd(rng, n) for _ in range(N)]))
        min_eig = min(min_eig, np.linalg.eigvalsh((psi + psi.T) / 2).min())
    cfg = load_preset("ifac3robot")
    gains = cfg.gain_schedule(50)
    x = np.asarray(cfg.x0, dtype=float)
    hook = 0.0
    for t in range(50):
        eta = rng.standard_normal((cfg.graph.n_edges, cfg.dim))
        c_t = float(gains.c[t])
        xi = edge_errors(x, cfg.graph, cfg.formation)
        x = step(SimState(t, x), gains, c_t, cfg.graph, cfg.formation, cfg.channel, edge_noise=eta).x
        stacked = xi - c_t * psi_matrix(cfg.graph, gains.gains[t]) @ (xi - eta.reshape(-1))
        hook = max(hook, np.abs(edge_errors(x, cfg.graph, cfg.formation) - stacked).max())
    ok = rank_ok and min_eig > 0 and hook <= 1e-12
    report(9, ok, f"500 Pruefer trees rank N-1: {rank_ok}; min sym-part eigenvalue of Psi {min_eig:.2e} (> 0); "
                  f"agent vs stacked step gap {hook:.1e} (<= 1e-12)")


def test_criterion_10_determinism(tmp_path, capsys):
    names = ("trajectory.csv", "edge_errors.csv", "fig1a.csv", "fig2.csv")
    for d in ("a", "b"):
        _cli_json(capsys, "simulate", "--preset", "ifac3robot", "--seed", "42", "--out", str(tmp_path / d))
    sim_same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in names)
    for w in ("1", "3", "8"):
        _cli_json(capsys, "monte-carlo", "--preset", "ifac3robot", "--runs", "50", "--workers", w,
                  "--out", str(tmp_path / f"mc{w}"))
    blobs = {(tmp_path / f"mc{w}" / "stats.json").read_bytes() for w in ("1", "3", "8")}
    ok = sim_same and len(blobs) == 1
    report(10, ok, f"simulate CSVs byte-identical: {sim_same}; monte-carlo stats.json identical "
                   f"for 1/3/8 workers: {len(blobs) == 1}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
