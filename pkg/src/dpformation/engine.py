"""Closed-loop simulation of the noisy formation law and Monte-Carlo statistics.

All agents receive their neighbours' time-``t`` states over independent
directed links, compute ``u_i = c(t) K_{i,t} sum_j (xhat_ij + d_ij - x_i)``
and move synchronously. Runs are batched along a leading axis; every
per-run quantity is computed elementwise, so a run's trajectory does not
depend on which batch or worker thread it was simulated in.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from .channel import ChannelParams, step_normals, stream_key
from .control import GainSchedule
from .errors import DimensionMismatch, GainMissing, ValidationError
from .graph import Graph

if TYPE_CHECKING:
    from .config import SimConfig


@dataclass(frozen=True)
class FormationSpec:
    """Desired relative states ``d_{l_k}`` in edge-label order, plus the adjacency bound."""

    offsets: np.ndarray
    theta: float = 1.0

    def __post_init__(self):
        off = np.atleast_2d(np.asarray(self.offsets, dtype=float))
        off.setflags(write=False)
        object.__setattr__(self, "offsets", off)

    @classmethod
    def from_pairs(cls, graph: Graph, pairs: Mapping[tuple[int, int], Sequence[float]],
                   theta: float = 1.0) -> "FormationSpec":
        """Build from ``{(i, j): d_ij}`` with 1-based nodes; ``(j, i)`` entries are negated."""
        dims = {len(v) for v in pairs.values()}
        if len(dims) != 1:
            raise DimensionMismatch("formation offsets have inconsistent dimensions")
        n = dims.pop()
        offsets = np.full((graph.n_edges, n), np.nan)
        for (i, j), d in pairs.items():
            k = graph.edge_index(i, j)
            if not np.isnan(offsets[k, 0]):
                raise ValidationError(f"edge ({i},{j}) given twice")
            offsets[k] = d if i < j else -np.asarray(d, dtype=float)
        missing = [graph.edges[k] for k in range(graph.n_edges) if np.isnan(offsets[k, 0])]
        if missing:
            raise ValidationError(f"no desired offset for edges {missing}")
        return cls(offsets, theta)

    @property
    def dim(self) -> int:
        return self.offsets.shape[1]

    def d(self, graph: Graph, i: int, j: int) -> np.ndarray:
        """``d_ij`` for 0-based agents ``i``, ``j``, with ``d_ji = -d_ij``."""
        k = graph.edge_index(i + 1, j + 1)
        return self.offsets[k] if i < j else -self.offsets[k]

    @property
    def stacked(self) -> np.ndarray:
        return self.offsets.reshape(-1)


@dataclass
class SimState:
    t: int
    x: np.ndarray
    key: int = 0


@dataclass
class TrajectoryLog:
    """States and edge errors for ``t = 0 .. horizon``.

    ``min_variance[t]`` is the smallest reception variance over all directed
    links at time ``t``, used by the realized privacy audit.
    """

    x: np.ndarray
    xi: np.ndarray
    min_variance: np.ndarray
    seed: int | None = None

    @property
    def horizon(self) -> int:
        return self.x.shape[0] - 1

    @property
    def sq_norm(self) -> np.ndarray:
        return np.einsum("ti,ti->t", self.xi, self.xi)


@dataclass
class MCStats:
    runs: int
    mean_sq: np.ndarray
    mean_xi_final: np.ndarray
    var_xi_final: np.ndarray
    xi_final: np.ndarray
    tail_increment: np.ndarray
    tail_window: tuple[int, int]
    base_seed: int
    max_increment_series: np.ndarray = field(repr=False, default=None)

    @property
    def std_err_final(self) -> np.ndarray:
        return np.sqrt(self.var_xi_final / self.runs)

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "base_seed": self.base_seed,
            "mean_sq": self.mean_sq.tolist(),
            "mean_xi_final": self.mean_xi_final.tolist(),
            "var_xi_final": self.var_xi_final.tolist(),
            "std_err_final": self.std_err_final.tolist(),
            "tail_window": list(self.tail_window),
            "tail_increment": self.tail_increment.tolist(),
            "xi_final": self.xi_final.tolist(),
        }


# --- kernels ----------------------------------------------------------------

@dataclass(frozen=True)
class _LinkTable:
    recv: np.ndarray
    send: np.ndarray
    edge: np.ndarray
    sign: np.ndarray
    d: np.ndarray
    sigma: np.ndarray
    r: np.ndarray
    alpha: float

    @classmethod
    def build(cls, graph: Graph, formation: FormationSpec, channel: ChannelParams) -> "_LinkTable":
        if channel.sigma.shape[0] != graph.n_edges or channel.r.shape[0] != graph.n_agents:
            raise DimensionMismatch(
                f"channel has {channel.sigma.shape[0]} edge constants and {channel.r.shape[0]} receiver floors "
                f"for a graph with {graph.n_edges} edges and {graph.n_agents} agents"
            )
        if formation.offsets.shape[0] != graph.n_edges:
            raise DimensionMismatch(f"{formation.offsets.shape[0]} offsets for {graph.n_edges} edges")
        links = graph.directed_links()
        recv = np.array([l[0] for l in links], dtype=int)
        send = np.array([l[1] for l in links], dtype=int)
        edge = np.array([l[2] for l in links], dtype=int)
        # +1 when the receiver is the lower-index endpoint of its edge
        sign = np.where(recv < send, 1.0, -1.0)
        d = sign[:, None] * formation.offsets[edge]
        return cls(recv, send, edge, sign, d, channel.sigma[edge], channel.r[recv], channel.alpha)


def _link_variances(x: np.ndarray, links: _LinkTable) -> np.ndarray:
    diff = x[:, links.recv] - x[:, links.send]
    dist2 = np.sum(diff * diff, axis=-1)
    return links.sigma * dist2**links.alpha + links.r


def _advance(x: np.ndarray, K_t: np.ndarray, c_t: float, links: _LinkTable,
             noise: np.ndarray) -> np.ndarray:
    """One synchronous step for a batch ``x`` of shape ``(R, N, n)``.

    ``noise`` has shape ``(R, L, n)`` and is the realised reception noise per
    directed link.
    """
    terms = x[:, links.send] + noise + links.d - x[:, links.recv]
    total = np.zeros_like(x)
    for l, i in enumerate(links.recv):
        total[:, i] += terms[:, l]
    u = c_t * np.sum(K_t[None] * total[:, :, None, :], axis=-1)
    return x + u


def _edge_errors_batch(x: np.ndarray, graph: Graph, formation: FormationSpec) -> np.ndarray:
    lo = np.array([i - 1 for i, _ in graph.edges], dtype=int)
    hi = np.array([j - 1 for _, j in graph.edges], dtype=int)
    xi = x[..., lo, :] - x[..., hi, :] - formation.offsets
    return xi.reshape(*x.shape[:-2], -1)


def edge_errors(x, graph: Graph, formation: FormationSpec) -> np.ndarray:
    """Stacked ``xi = (B kron I) vec(x) - d`` in edge-label order."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != graph.n_agents or x.shape[1] != formation.dim:
        raise DimensionMismatch(
            f"x has shape {x.shape}, expected ({graph.n_agents}, {formation.dim})"
        )
    return _edge_errors_batch(x, graph, formation)


def psi_matrix(graph: Graph, K_t) -> np.ndarray:
    """``(B kron I) blockdiag(K_1..K_N) (B' kron I)``; ``K_t`` has shape ``(N, n, n)``."""
    K_t = np.asarray(K_t, dtype=float)
    N, n, _ = K_t.shape
    if N != graph.n_agents:
        raise DimensionMismatch(f"{N} gain blocks for {graph.n_agents} agents")
    Bk = np.kron(graph.incidence.astype(float), np.eye(n))
    Kbd = np.zeros((N * n, N * n))
    for i in range(N):
        Kbd[i * n:(i + 1) * n, i * n:(i + 1) * n] = K_t[i]
    BtW = np.kron(graph.incidence.T.astype(float) @ graph.edge_weights, np.eye(n))
    return Bk @ Kbd @ BtW


def step(state: SimState, gains: GainSchedule, c_t: float, graph: Graph, formation: FormationSpec,
         channel: ChannelParams, *, zero_noise: bool = False, noise=None, edge_noise=None) -> SimState:
    """Advance one synchronous step.

    By default the reception noise is drawn from the counter-based stream of
    ``state.key`` at time ``state.t``. Test hooks:

    * ``zero_noise``: every reception is exact.
    * ``noise``: explicit directed-link noise of shape ``(L, n)``.
    * ``edge_noise``: one vector per edge, shape ``(N_E, n)``; the lower
      endpoint receives ``+eta`` and the higher endpoint ``-eta``, which is
      exactly the stacked edge-error recursion
      ``xi+ = xi - c Psi (xi - eta)``.
    """
    links = _LinkTable.build(graph, formation, channel)
    x = np.asarray(state.x, dtype=float)[None]
    K_t = gains.at(state.t)
    n = x.shape[-1]
    if edge_noise is not None:
        eta = np.asarray(edge_noise, dtype=float)
        z = (links.sign[:, None] * eta[links.edge])[None]
    elif noise is not None:
        z = np.asarray(noise, dtype=float)[None]
    elif zero_noise:
        z = np.zeros((1, len(links.recv), n))
    else:
        var = _link_variances(x, links)
        z = np.sqrt(var)[..., None] * step_normals(state.key, state.t, len(links.recv), n)[None]
    x_next = _advance(x, K_t, c_t, links, z)[0]
    return SimState(state.t + 1, x_next, state.key)


def simulate_batch(x0, gains: GainSchedule, graph: Graph, formation: FormationSpec,
                   channel: ChannelParams, keys: Sequence[int], horizon: int,
                   zero_noise: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Trajectories for several runs at once.

    Returns ``(x, min_variance)`` with shapes ``(R, horizon + 1, N, n)`` and
    ``(R, horizon + 1)``.
    """
    if horizon > gains.n_steps:
        raise GainMissing(f"horizon {horizon} needs gains for t < {horizon}, have {gains.n_steps}")
    links = _LinkTable.build(graph, formation, channel)
    x0 = np.asarray(x0, dtype=float)
    R = len(keys)
    L = len(links.recv)
    n = x0.shape[-1]
    xs = np.empty((R, horizon + 1) + x0.shape)
    min_var = np.empty((R, horizon + 1))
    x = np.broadcast_to(x0, (R,) + x0.shape).copy()
    xs[:, 0] = x
    for t in range(horizon + 1):
        var = _link_variances(x, links)
        min_var[:, t] = var.min(axis=1)
        if t == horizon:
            break
        if zero_noise:
            noise = np.zeros((R, L, n))
        else:
            z = np.stack([step_normals(k, t, L, n) for k in keys])
            noise = np.sqrt(var)[..., None] * z
        x = _advance(x, gains.gains[t], float(gains.c[t]), links, noise)
        xs[:, t + 1] = x
    return xs, min_var


def run(config: "SimConfig", seed: int | None = None, horizon: int | None = None,
        zero_noise: bool | None = None) -> TrajectoryLog:
    """Single trajectory; identical ``(config, seed)`` give identical logs."""
    seed = config.seed if seed is None else seed
    horizon = config.horizon if horizon is None else horizon
    zero_noise = config.zero_noise if zero_noise is None else zero_noise
    gains = config.gain_schedule(max(horizon, 1))
    xs, min_var = simulate_batch(config.x0, gains, config.graph, config.formation, config.channel,
                                 [stream_key(seed)], horizon, zero_noise)
    return TrajectoryLog(xs[0], _edge_errors_batch(xs[0], config.graph, config.formation), min_var[0], seed)


def monte_carlo(config: "SimConfig", n_runs: int | None = None, horizon: int | None = None,
                base_seed: int | None = None, zero_noise: bool | None = None,
                workers: int = 1, tail: int = 10) -> MCStats:
    """Independent runs keyed by ``(base_seed, run index)``, split across ``workers`` threads.

    ``tail_increment[r]`` is ``max ||xi(t+1) - xi(t)||`` over the last
    ``tail`` steps of run ``r``.
    """
    n_runs = config.runs if n_runs is None else n_runs
    horizon = config.horizon if horizon is None else horizon
    base_seed = config.seed if base_seed is None else base_seed
    zero_noise = config.zero_noise if zero_noise is None else zero_noise
    if n_runs < 2:
        raise ValidationError("monte_carlo needs at least 2 runs", "simulation.runs")
    gains = config.gain_schedule(max(horizon, 1))
    keys = [stream_key(base_seed, r) for r in range(n_runs)]
    chunks = [c for c in np.array_split(np.arange(n_runs), max(1, min(workers, n_runs))) if len(c)]

    def work(idx):
        xs, _ = simulate_batch(config.x0, gains, config.graph, config.formation, config.channel,
                               [keys[i] for i in idx], horizon, zero_noise)
        return _edge_errors_batch(xs, config.graph, config.formation)

    if len(chunks) == 1:
        parts = [work(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(work, chunks))
    xi = np.concatenate(parts, axis=0)
    sq = np.einsum("rti,rti->rt", xi, xi)
    t0 = max(0, horizon - tail)
    inc = np.linalg.norm(np.diff(xi[:, t0:], axis=1), axis=-1) if horizon > 0 else np.zeros((n_runs, 0))
    final = xi[:, -1]
    return MCStats(
        runs=n_runs,
        mean_sq=sq.mean(axis=0),
        mean_xi_final=final.mean(axis=0),
        var_xi_final=final.var(axis=0, ddof=1),
        xi_final=final,
        tail_increment=inc.max(axis=1) if inc.shape[1] else np.zeros(n_runs),
        tail_window=(t0, horizon),
        base_seed=base_seed,
        max_increment_series=inc,
    )


def with_schedule(config: "SimConfig", c) -> "SimConfig":
    """Copy of ``config`` using gain weight schedule ``c``."""
    return replace(config, c=c)
