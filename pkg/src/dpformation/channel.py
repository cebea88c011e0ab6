"""Relative-state-dependent AWGN reception.

Agent ``i`` receiving agent ``j``'s state sees ``x_j + eta_ij`` with
``eta_ij ~ N(0, (sigma_ij * ||x_i - x_j||^(2 alpha) + r_i) I)``. The channel
term and the receiver floor are folded into a single Gaussian draw.

Randomness is counter-based: the standard normals used at time ``t`` of a run
come from a Philox stream whose key is derived from the run seed and whose
counter starts at ``t << 128``. Within one step, directed links are laid out
in ``Graph.directed_links`` order, so every draw is a pure function of
``(seed, t, link)`` and independent of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, NonPositiveParameter


def derive_sigma(k1: float, k2: float) -> float:
    """Effective channel constant ``k1 / k2**2``."""
    if not (k1 > 0 and k2 > 0):
        raise NonPositiveParameter(f"k1 and k2 must be positive, got k1={k1}, k2={k2}")
    return k1 / k2**2


@dataclass(frozen=True)
class LinkChannel:
    """Noise constants of one directed link, including the receiver's floor."""

    sigma: float
    r: float
    alpha: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise NonPositiveParameter(f"sigma must be positive, got {self.sigma}")
        if not self.r > 0:
            raise NonPositiveParameter(f"receiver floor r must be positive, got {self.r}")
        if not self.alpha >= 1:
            raise NonPositiveParameter(f"alpha must be >= 1, got {self.alpha}")


@dataclass(frozen=True)
class ChannelParams:
    """Per-edge ``sigma`` (edge label order) and per-receiver ``r`` floors."""

    sigma: np.ndarray
    r: np.ndarray
    alpha: float = 1.0
    k1: np.ndarray | None = None
    k2: np.ndarray | None = None

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        r = np.asarray(self.r, dtype=float)
        if sigma.ndim != 1 or r.ndim != 1:
            raise DimensionMismatch("sigma and r must be 1-d arrays")
        if np.any(~(sigma > 0)):
            raise NonPositiveParameter(f"sigma must be positive, got {sigma.tolist()}")
        if np.any(~(r > 0)):
            raise NonPositiveParameter(f"r must be positive, got {r.tolist()}")
        if not self.alpha >= 1:
            raise NonPositiveParameter(f"alpha must be >= 1, got {self.alpha}")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "r", r)

    @classmethod
    def uniform(cls, n_edges: int, sigma: float, r: float | Sequence[float], n_agents: int | None = None,
                alpha: float = 1.0) -> "ChannelParams":
        """Same ``sigma`` on every edge; a scalar ``r`` is shared by ``n_agents`` (default: a tree's ``n_edges + 1``)."""
        if np.isscalar(r):
            r_arr = np.full(n_edges + 1 if n_agents is None else n_agents, float(r))
        else:
            r_arr = np.asarray(r, dtype=float)
        return cls(np.full(n_edges, float(sigma)), r_arr, alpha)

    @classmethod
    def from_gains(cls, k1: Sequence[float], k2: Sequence[float], r: Sequence[float],
                   alpha: float = 1.0) -> "ChannelParams":
        sigma = np.array([derive_sigma(a, b) for a, b in zip(k1, k2)])
        return cls(sigma, np.asarray(r, dtype=float), alpha,
                   np.asarray(k1, dtype=float), np.asarray(k2, dtype=float))

    @property
    def r_floor(self) -> float:
        return float(self.r.min())

    def link(self, edge: int, receiver: int) -> LinkChannel:
        """Constants for the link on ``edge`` (0-based) received by ``receiver`` (0-based)."""
        return LinkChannel(float(self.sigma[edge]), float(self.r[receiver]), self.alpha)


@dataclass(frozen=True)
class Reception:
    value: np.ndarray
    noise: np.ndarray
    variance: float


def link_variance(link: LinkChannel, x_i, x_j) -> float:
    """Scalar noise variance on the link between ``x_i`` (receiver) and ``x_j``."""
    diff = np.asarray(x_i, dtype=float) - np.asarray(x_j, dtype=float)
    dist2 = float(diff @ diff)
    return link.sigma * dist2**link.alpha + link.r


def sample_reception(rng: np.random.Generator, link: LinkChannel, x_j, x_i) -> Reception:
    """Draw what the receiver at ``x_i`` gets when the sender at ``x_j`` transmits."""
    x_j = np.asarray(x_j, dtype=float)
    var = link_variance(link, x_i, x_j)
    noise = np.sqrt(var) * rng.standard_normal(x_j.shape)
    return Reception(x_j + noise, noise, var)


def stream_key(seed: int, run: int | None = None) -> int:
    """128-bit Philox key for a run. ``run=None`` is the single-run key."""
    entropy = [int(seed)] if run is None else [int(seed), int(run)]
    words = np.random.SeedSequence(entropy).generate_state(2, np.uint64)
    return int(words[0]) | (int(words[1]) << 64)


def step_normals(key: int, t: int, n_links: int, dim: int) -> np.ndarray:
    """Standard normals for all directed links at time ``t``, shape ``(n_links, dim)``."""
    gen = np.random.Generator(np.random.Philox(key=key, counter=int(t) << 128))
    return gen.standard_normal((n_links, dim))


def link_rng(key: int, t: int, link: int) -> np.random.Generator:
    """Dedicated generator for one ``(t, link)`` pair, for standalone sampling."""
    return np.random.Generator(np.random.Philox(key=key, counter=(int(t) << 128) | (int(link) << 64)))
