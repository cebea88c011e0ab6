"""Distributed formation control over noisy channels with differential-privacy accounting."""

from .channel import ChannelParams, LinkChannel, Reception, derive_sigma, link_variance, sample_reception
from .config import SimConfig, load_config, load_preset
from .control import ControlConfig, GainSchedule, batch_qp_oracle, control_input, gain_bound, lqr_gain
from .engine import FormationSpec, MCStats, SimState, TrajectoryLog, edge_errors, monte_carlo, psi_matrix, run, step
from .graph import Graph, build_graph, incidence_rank, is_tree
from .privacy import (
    PrivacyLedger,
    build_ledger,
    compose,
    gaussian_sigma_for,
    q_tail,
    q_tail_inv,
    step_epsilon,
    step_sensitivity,
    validate_schedules,
)
from .schedules import Schedule

__version__ = "0.1.0"
