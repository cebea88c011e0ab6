"""JSON experiment configuration.

Layout (1-based node indices, matrices as row-major nested lists)::

    {
      "graph": {"n_agents": 3, "edges": [[1, 2], [2, 3]]},
      "initial_states": [[1, 19], [14, 10], [20, 21]],
      "formation": {"theta": 1, "offsets": [{"edge": [1, 2], "d": [-10, -10]}, ...]},
      "channel": {"sigma": 0.01, "r": [0.1, 0.1, 0.1], "alpha": 1,
                  "links": [{"edge": [1, 2], "k1": 1.0, "k2": 10.0}]},
      "control": {"Q": [[8, 0], [0, 8]], "R": [[3, 0], [0, 3]], "T": 10,
                  "agents": {"2": {"Q": ..., "R": ...}}},
      "schedules": {"c": {"family": "power", "a": 0.142857, "p": 1.26},
                    "delta": {"family": "exp_sqrt", "b": 0.001}},
      "simulation": {"horizon": 100, "seed": 0, "runs": 1, "workers": 1, "out_dir": "out",
                     "zero_noise": false, "realized_audit": false, "global_rho": false}
    }

``channel.sigma`` may also be a per-edge list. ``links`` entries override
``sigma`` for their edge with ``k1 / k2**2``. ``control.agents`` is optional.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .channel import ChannelParams, derive_sigma
from .control import ControlConfig, GainSchedule, check_spd, precompute_gains
from .engine import FormationSpec
from .errors import OutOfDomain, ParseError, ValidationError
from .graph import Graph, build_graph
from .schedules import Schedule

PRESETS = ("ifac3robot",)


@contextmanager
def _field(path: str):
    """Attach a config path to validation errors raised inside the block."""
    try:
        yield
    except ValidationError as exc:
        if exc.field is None:
            raise type(exc)(exc.reason, path) from None
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ValidationError(f"malformed value ({exc.__class__.__name__}: {exc})", path) from None


@dataclass
class SimConfig:
    graph: Graph
    x0: np.ndarray
    formation: FormationSpec
    channel: ChannelParams
    control: ControlConfig
    c: Schedule
    delta: Schedule
    agent_weights: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    horizon: int = 100
    seed: int = 0
    runs: int = 1
    workers: int = 1
    out_dir: str = "out"
    zero_noise: bool = False
    realized_audit: bool = False
    global_rho: bool = False
    _gain_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self._gain_cache = {}
        with _field("initial_states"):
            x0 = np.asarray(self.x0, dtype=float)
            if x0.shape != (self.graph.n_agents, self.formation.dim):
                raise ValidationError(
                    f"expected shape ({self.graph.n_agents}, {self.formation.dim}), got {x0.shape}")
            if not np.all(np.isfinite(x0)):
                raise ValidationError("initial states must be finite")
            self.x0 = x0
        with _field("control.Q"):
            if self.control.Q.shape[0] != self.formation.dim:
                raise ValidationError(f"weights are {self.control.Q.shape}, state dimension is {self.formation.dim}")
        with _field("schedules.delta"):
            d0 = self.delta(0)
            if not 0.0 < d0 < 0.5:
                raise OutOfDomain(f"delta_0 = {d0} must lie in (0, 1/2)")
            if self.delta.family == "table" and any(not 0.0 < v < 0.5 for v in self.delta.values):
                raise OutOfDomain("every delta_t must lie in (0, 1/2)")
        with _field("simulation.horizon"):
            if int(self.horizon) < 0:
                raise ValidationError("horizon must be non-negative")
        with _field("simulation.runs"):
            if int(self.runs) < 1:
                raise ValidationError("runs must be positive")
        with _field("simulation.workers"):
            if int(self.workers) < 1:
                raise ValidationError("workers must be positive")

    @property
    def n_agents(self) -> int:
        return self.graph.n_agents

    @property
    def dim(self) -> int:
        return self.formation.dim

    def weights(self, agent: int) -> tuple[np.ndarray, np.ndarray]:
        """``(Q_i, R_i)`` for 0-based ``agent``."""
        return self.agent_weights.get(agent, (self.control.Q, self.control.R))

    def gain_schedule(self, n_steps: int) -> GainSchedule:
        """Gains for ``t < n_steps`` (cached; recomputed only for longer spans)."""
        cached = self._gain_cache.get("gains")
        if cached is not None and cached.n_steps >= n_steps:
            if cached.n_steps == n_steps:
                return cached
            return GainSchedule(cached.gains[:n_steps], cached.c[:n_steps], cached.rho_K_t[:n_steps])
        ws = [self.weights(i) for i in range(self.n_agents)]
        gs = precompute_gains([w[0] for w in ws], [w[1] for w in ws], self.graph.degrees.tolist(),
                              self.c, self.control.T, n_steps)
        self._gain_cache["gains"] = gs
        return gs

    def to_dict(self) -> dict:
        offsets = [{"edge": list(e), "d": self.formation.offsets[k].tolist()}
                   for k, e in enumerate(self.graph.edges)]
        channel: dict[str, Any] = {"sigma": self.channel.sigma.tolist(), "r": self.channel.r.tolist(),
                                   "alpha": self.channel.alpha}
        if self.channel.k1 is not None:
            channel["links"] = [{"edge": list(e), "k1": float(a), "k2": float(b)}
                                for e, a, b in zip(self.graph.edges, self.channel.k1, self.channel.k2)]
            del channel["sigma"]
        control: dict[str, Any] = {"Q": self.control.Q.tolist(), "R": self.control.R.tolist(), "T": self.control.T}
        if self.agent_weights:
            control["agents"] = {str(i + 1): {"Q": q.tolist(), "R": r.tolist()}
                                 for i, (q, r) in sorted(self.agent_weights.items())}
        return {
            "graph": {"n_agents": self.graph.n_agents, "edges": [list(e) for e in self.graph.edges]},
            "initial_states": self.x0.tolist(),
            "formation": {"theta": self.formation.theta, "offsets": offsets},
            "channel": channel,
            "control": control,
            "schedules": {"c": self.c.to_dict(), "delta": self.delta.to_dict()},
            "simulation": {
                "horizon": self.horizon, "seed": self.seed, "runs": self.runs, "workers": self.workers,
                "out_dir": self.out_dir, "zero_noise": self.zero_noise,
                "realized_audit": self.realized_audit, "global_rho": self.global_rho,
            },
        }


def _require(doc: dict, key: str, path: str):
    if not isinstance(doc, dict) or key not in doc:
        raise ValidationError("missing required key", f"{path}.{key}" if path else key)
    return doc[key]


def config_from_dict(doc: dict) -> SimConfig:
    """Validate a parsed config document. Errors carry the offending field path."""
    if not isinstance(doc, dict):
        raise ValidationError("config root must be an object")

    g = _require(doc, "graph", "")
    with _field("graph"):
        graph = build_graph(int(_require(g, "n_agents", "graph")), _require(g, "edges", "graph"))

    f = _require(doc, "formation", "")
    with _field("formation.theta"):
        theta = float(f.get("theta", 1.0))
        if not theta > 0:
            raise ValidationError("theta must be positive")
    pairs = {}
    for idx, item in enumerate(_require(f, "offsets", "formation")):
        with _field(f"formation.offsets[{idx}]"):
            i, j = (int(v) for v in item["edge"])
            pairs[(i, j)] = [float(v) for v in item["d"]]
    with _field("formation.offsets"):
        for i, j in pairs:
            if (min(i, j), max(i, j)) not in graph.edges:
                raise ValidationError(f"({i},{j}) is not an edge of the graph")
        formation = FormationSpec.from_pairs(graph, pairs, theta)

    ch = _require(doc, "channel", "")
    with _field("channel.r"):
        r_raw = _require(ch, "r", "channel")
        r = np.full(graph.n_agents, float(r_raw)) if np.isscalar(r_raw) else np.asarray(r_raw, dtype=float)
        if r.shape != (graph.n_agents,):
            raise ValidationError(f"need one floor per agent ({graph.n_agents}), got {r.size}")
    with _field("channel.sigma"):
        s_raw = ch.get("sigma", None)
        if s_raw is None and "links" not in ch:
            raise ValidationError("missing required key")
        sigma = np.full(graph.n_edges, np.nan) if s_raw is None else (
            np.full(graph.n_edges, float(s_raw)) if np.isscalar(s_raw) else np.asarray(s_raw, dtype=float))
        if sigma.shape != (graph.n_edges,):
            raise ValidationError(f"need one value per edge ({graph.n_edges}), got {sigma.size}")
    k1 = k2 = None
    if "links" in ch:
        k1 = np.full(graph.n_edges, np.nan)
        k2 = np.full(graph.n_edges, np.nan)
        for idx, link in enumerate(ch["links"]):
            with _field(f"channel.links[{idx}]"):
                k = graph.edge_index(*(int(v) for v in link["edge"]))
                k1[k], k2[k] = float(link["k1"]), float(link["k2"])
                sigma[k] = derive_sigma(k1[k], k2[k])
        if np.isnan(k1).any():
            k1 = k2 = None
    with _field("channel"):
        if np.isnan(sigma).any():
            raise ValidationError("sigma missing for some edges")
        channel = ChannelParams(sigma, r, float(ch.get("alpha", 1.0)), k1, k2)

    ct = _require(doc, "control", "")
    with _field("control"):
        control = ControlConfig(np.asarray(_require(ct, "Q", "control"), dtype=float),
                                np.asarray(_require(ct, "R", "control"), dtype=float),
                                int(_require(ct, "T", "control")), theta)
    agent_weights = {}
    for key, w in (ct.get("agents") or {}).items():
        with _field(f"control.agents.{key}"):
            agent = int(key) - 1
            if not 0 <= agent < graph.n_agents:
                raise ValidationError(f"agent {key} out of range")
            q = check_spd(w.get("Q", control.Q), "Q")
            rr = check_spd(w.get("R", control.R), "R")
            if q.shape != control.Q.shape or rr.shape != control.Q.shape:
                raise ValidationError("override weights must match the state dimension")
            agent_weights[agent] = (q, rr)

    sc = _require(doc, "schedules", "")
    with _field("schedules.c"):
        c = Schedule.from_dict(_require(sc, "c", "schedules"))
    with _field("schedules.delta"):
        delta = Schedule.from_dict(_require(sc, "delta", "schedules"))

    sim = doc.get("simulation", {}) or {}
    with _field("simulation"):
        opts = dict(
            horizon=int(sim.get("horizon", 100)),
            seed=int(sim.get("seed", 0)),
            runs=int(sim.get("runs", 1)),
            workers=int(sim.get("workers", 1)),
            out_dir=str(sim.get("out_dir", "out")),
            zero_noise=bool(sim.get("zero_noise", False)),
            realized_audit=bool(sim.get("realized_audit", False)),
            global_rho=bool(sim.get("global_rho", False)),
        )
    return SimConfig(graph, _require(doc, "initial_states", ""), formation, channel, control, c, delta,
                     agent_weights, **opts)


def parse_config(text: str) -> SimConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    return config_from_dict(doc)


def load_config(path) -> SimConfig:
    """Read and validate a JSON config file.

    Raises:
        ParseError: unreadable file or invalid JSON.
        ValidationError: any semantic problem, with ``field`` set.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}", "preset")
    return resources.files("dpformation").joinpath("presets", f"{name}.json").read_text()


def load_preset(name: str) -> SimConfig:
    return parse_config(preset_text(name))


def dump_config(config: SimConfig) -> str:
    return json.dumps(config.to_dict(), indent=2)


__all__ = ["SimConfig", "config_from_dict", "load_config", "load_preset", "parse_config",
           "dump_config", "preset_text", "PRESETS"]
