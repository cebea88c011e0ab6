"""Finite-horizon LQ gains for the distributed formation law.

Agent ``i`` with neighbour targets ``y_j = xhat_ij + d_ij`` (frozen over the
horizon) minimises

    sum_{k=0}^{T-1}  u_k' R u_k + c * sum_j (x_k - y_j)' Q (x_k - y_j)

subject to ``x_{k+1} = x_k + u_k``. Summing the quadratic over neighbours
gives weight ``c * deg * Q`` toward the mean target, so the first optimal
input is ``G (ybar - x)`` for a matrix ``G`` from a backward Riccati
recursion. The law is written as ``u = c K sum_j (y_j - x)``, i.e.
``K = G / (c * deg)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    EmptyWindow,
    GainMissing,
    HorizonTooShort,
    NeighborMismatch,
    NonPositiveParameter,
    NotPositiveDefinite,
    SingularSystem,
)

PD_TOL = 1e-12


def check_spd(M, name: str = "matrix") -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NotPositiveDefinite(f"{name} must be square, got shape {M.shape}")
    if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise NotPositiveDefinite(f"{name} must be symmetric")
    if np.linalg.eigvalsh(M).min() <= PD_TOL:
        raise NotPositiveDefinite(f"{name} must be positive definite")
    return M


@dataclass(frozen=True)
class ControlConfig:
    Q: np.ndarray
    R: np.ndarray
    T: int
    theta: float

    def __post_init__(self):
        Q = check_spd(self.Q, "Q")
        R = check_spd(self.R, "R")
        if Q.shape != R.shape:
            raise NotPositiveDefinite(f"Q {Q.shape} and R {R.shape} differ in size")
        if int(self.T) < 2:
            raise HorizonTooShort(f"horizon T={self.T} < 2 gives the zero gain")
        if not self.theta > 0:
            raise NonPositiveParameter(f"theta must be positive, got {self.theta}")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", int(self.T))


def _check_gain_inputs(Q, R, c_t, degree, T):
    Q = check_spd(Q, "Q")
    R = check_spd(R, "R")
    if Q.shape != R.shape:
        raise NotPositiveDefinite(f"Q {Q.shape} and R {R.shape} differ in size")
    if not c_t > 0:
        raise NonPositiveParameter(f"c_t must be positive, got {c_t}")
    if int(degree) < 1:
        raise NonPositiveParameter(f"degree must be >= 1, got {degree}")
    if int(T) < 2:
        raise HorizonTooShort(f"horizon T={T} < 2 gives the zero gain")
    return Q, R


def lqr_gain(Q, R, c_t: float, degree: int, T: int) -> np.ndarray:
    """Gain ``K`` with first optimal input ``c_t * K * sum_j (y_j - x)``.

    Backward recursion on the tracking error ``e = x - ybar`` with stage
    weight ``Qs = c_t * degree * Q``, no terminal weight. The last input never
    affects a penalised state, so ``P_{T-1} = Qs`` and ``T - 1`` Riccati steps
    reach ``P_1``; the first input is ``-(R + P_1)^{-1} P_1 e``.
    """
    Q, R = _check_gain_inputs(Q, R, c_t, degree, T)
    Qs = c_t * degree * Q
    P = np.zeros_like(Qs)
    for _ in range(int(T) - 1):
        P = Qs + P - P @ np.linalg.solve(R + P, P)
        P = 0.5 * (P + P.T)
    G = np.linalg.solve(R + P, P)
    return G / (c_t * degree)


def batch_qp_oracle(Q, R, c_t: float, degree: int, T: int, x0, target_mean) -> np.ndarray:
    """First input of the T-step problem solved as one dense QP (test oracle).

    Stacks ``U = (u_0, ..., u_{T-1})``, writes ``x_k = x0 + L_k U`` and solves
    the normal equations ``H U = -g`` directly.
    """
    Q, R = _check_gain_inputs(Q, R, c_t, degree, T)
    n = Q.shape[0]
    T = int(T)
    Qs = c_t * degree * Q
    e0 = np.asarray(x0, dtype=float) - np.asarray(target_mean, dtype=float)
    H = np.kron(np.eye(T), R)
    g = np.zeros(n * T)
    for k in range(T):
        L = np.zeros((n, n * T))
        for m in range(k):
            L[:, m * n:(m + 1) * n] = np.eye(n)
        H += L.T @ Qs @ L
        g += L.T @ Qs @ e0
    try:
        U = np.linalg.solve(H, -g)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    return U[:n]


def control_input(K, c_t: float, receptions: Mapping[int, np.ndarray],
                  d: Mapping[int, np.ndarray], x_i, neighbors: Sequence[int] | None = None) -> np.ndarray:
    """``c_t K sum_j (xhat_ij + d_ij - x_i)`` over the received neighbours."""
    if set(receptions) != set(d) or (neighbors is not None and set(receptions) != set(neighbors)):
        raise NeighborMismatch(
            f"receptions {sorted(receptions)} do not match neighbours {sorted(d if neighbors is None else neighbors)}"
        )
    x_i = np.asarray(x_i, dtype=float)
    total = np.zeros_like(x_i)
    for j in sorted(receptions):
        total = total + (np.asarray(receptions[j], dtype=float) + np.asarray(d[j], dtype=float) - x_i)
    return c_t * (np.asarray(K, dtype=float) @ total)


@dataclass(frozen=True)
class GainSchedule:
    """Precomputed ``K_{i,t}`` for ``t = 0 .. n_steps - 1``.

    ``gains`` has shape ``(n_steps, N, n, n)``; ``rho_K_t[t]`` is the largest
    spectral norm over agents at time ``t``.
    """

    gains: np.ndarray
    c: np.ndarray
    rho_K_t: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.gains.shape[0]

    @property
    def rho_K(self) -> float:
        return float(self.rho_K_t.max())

    def at(self, t: int) -> np.ndarray:
        if not 0 <= t < self.n_steps:
            raise GainMissing(f"no gains for t={t}; schedule covers 0..{self.n_steps - 1}")
        return self.gains[t]


def precompute_gains(Qs: Sequence[np.ndarray], Rs: Sequence[np.ndarray], degrees: Sequence[int],
                     c: Callable[[np.ndarray], np.ndarray], T: int, n_steps: int) -> GainSchedule:
    """Gains for every agent and every ``t < n_steps``.

    Agents sharing ``(Q, R, degree)`` share one recursion per time step.
    """
    N = len(degrees)
    n = np.atleast_2d(Qs[0]).shape[0]
    c_vals = np.asarray(c(np.arange(n_steps)), dtype=float)
    gains = np.empty((n_steps, N, n, n))
    groups: dict[tuple, list[int]] = {}
    for i in range(N):
        key = (np.asarray(Qs[i], dtype=float).tobytes(), np.asarray(Rs[i], dtype=float).tobytes(), int(degrees[i]))
        groups.setdefault(key, []).append(i)
    for members in groups.values():
        i0 = members[0]
        for t in range(n_steps):
            gains[t, members] = lqr_gain(Qs[i0], Rs[i0], c_vals[t], degrees[i0], T)
    rho = np.linalg.norm(gains, ord=2, axis=(2, 3)).max(axis=1) if n_steps else np.zeros(0)
    gains.setflags(write=False)
    return GainSchedule(gains, c_vals, rho)


def gain_bound(schedule: GainSchedule, window: tuple[int, int]) -> float:
    """Largest ``rho_{K,t}`` over the inclusive window ``[t1, t2]``."""
    t1, t2 = window
    if t1 > t2 or t1 < 0:
        raise EmptyWindow(f"window [{t1}, {t2}] is empty")
    if t2 >= schedule.n_steps:
        raise GainMissing(f"window end {t2} beyond precomputed gains (0..{schedule.n_steps - 1})")
    return float(schedule.rho_K_t[t1:t2 + 1].max())
