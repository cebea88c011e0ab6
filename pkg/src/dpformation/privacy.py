"""Gaussian-mechanism accounting for the formation law.

Each step ``t`` is treated as a Gaussian mechanism on the formation offsets:
changing one offset by at most ``theta`` (l1) moves the two endpoint agents'
next states by at most ``Delta_t = 2 c(t) rho_{K,t} theta`` in l2, and the
reception noise has per-component variance at least ``r_floor``. The
per-step budget is

    eps_t = Delta_t**2 / (2 r_floor) + Delta_t / sqrt(r_floor) * Qinv(delta_t)

and budgets over a window compose by plain summation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .errors import EmptyWindow, MissingRecords, NonPositiveParameter, OutOfDomain, UnknownFamily
from .schedules import Schedule

_SQRT2 = math.sqrt(2.0)


def q_tail(x):
    """Upper tail of the standard normal, ``0.5 * erfc(x / sqrt(2))``."""
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(float(x) / _SQRT2)
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / _SQRT2)


def log_q_tail(x):
    return special.log_ndtr(-np.asarray(x, dtype=float))


def q_tail_inv_log(log_p: float) -> float:
    """Inverse tail from ``log p``; usable where ``p`` itself underflows."""
    if not log_p < math.log(0.5):
        raise OutOfDomain(f"tail probability must lie in (0, 1/2), got log p = {log_p}")
    # Q(x) <= exp(-x^2/2) / 2, so the root sits below sqrt(-2 log p)
    hi = max(40.0, math.sqrt(-2.0 * log_p) + 1.0)
    return optimize.brentq(lambda x: float(log_q_tail(x)) - log_p, 0.0, hi,
                           xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def q_tail_inv(p: float) -> float:
    """``x >= 0`` with ``q_tail(x) == p`` for ``0 < p < 1/2``.

    Bracketed root search on the log-tail over ``[0, 40]``.
    """
    if not 0.0 < p < 0.5:
        raise OutOfDomain(f"tail probability must lie in (0, 1/2), got {p}")
    return q_tail_inv_log(math.log(p))


def q_tail_inv_array(log_p) -> np.ndarray:
    """Vectorised inverse tail from log-probabilities, for long partial sums."""
    log_p = np.asarray(log_p, dtype=float)
    if np.any(~(log_p < math.log(0.5))):
        raise OutOfDomain("tail probabilities must lie in (0, 1/2)")
    return -special.ndtri_exp(log_p)


def _check_delta(delta: float):
    if not 0.0 < delta < 0.5:
        raise OutOfDomain(f"delta must lie in (0, 1/2), got {delta}")


def gaussian_sigma_for(delta2: float, eps: float, delta: float) -> float:
    """Smallest noise scale that makes a sensitivity-``delta2`` query ``(eps, delta)``-DP."""
    if delta2 < 0:
        raise OutOfDomain(f"sensitivity must be non-negative, got {delta2}")
    if not eps > 0:
        raise OutOfDomain(f"eps must be positive, got {eps}")
    _check_delta(delta)
    z = q_tail_inv(delta)
    # sqrt(z^2 + 2 eps) - z, rearranged to avoid cancellation
    return delta2 * (math.sqrt(z * z + 2.0 * eps) + z) / (2.0 * eps)


def epsilon_for_sigma(delta2: float, sigma: float, delta: float) -> float:
    """Budget of a sensitivity-``delta2`` Gaussian mechanism with noise scale ``sigma``."""
    if delta2 < 0:
        raise OutOfDomain(f"sensitivity must be non-negative, got {delta2}")
    if not sigma > 0:
        raise OutOfDomain(f"sigma must be positive, got {sigma}")
    _check_delta(delta)
    a = delta2 / sigma
    return 0.5 * a * a + a * q_tail_inv(delta)


def step_sensitivity(c_t: float, rho_K_t: float, theta: float) -> float:
    """l2-sensitivity bound ``2 c_t rho_K_t theta`` of one control step."""
    if not (c_t > 0 and rho_K_t > 0):
        raise NonPositiveParameter(f"c_t and rho_K_t must be positive, got {c_t}, {rho_K_t}")
    if theta < 0:
        raise NonPositiveParameter(f"theta must be non-negative, got {theta}")
    return 2.0 * c_t * rho_K_t * theta


def step_epsilon(delta_t_sens: float, r_floor: float, delta_t: float) -> float:
    """Per-step budget against the worst-case (floor) reception variance."""
    if not r_floor > 0:
        raise OutOfDomain(f"r_floor must be positive, got {r_floor}")
    return epsilon_for_sigma(delta_t_sens, math.sqrt(r_floor), delta_t)


@dataclass(frozen=True)
class StepRecord:
    t: int
    c: float
    rho_K: float
    sensitivity: float
    eps: float
    delta: float
    variance: float


@dataclass
class PrivacyLedger:
    """Per-step ``(Delta_t, eps_t, delta_t)`` records over ``window`` (inclusive).

    ``rho_mode`` is ``"per-time"`` (``rho_{K,t}``) or ``"global"`` (one bound
    over the window). ``realized`` ledgers replace the floor variance with the
    smallest variance actually seen on any link at time ``t``.
    """

    records: list[StepRecord]
    r_floor: float
    theta: float
    window: tuple[int, int]
    rho_mode: str = "per-time"
    realized: bool = False
    _by_t: dict[int, StepRecord] = field(init=False, repr=False)

    def __post_init__(self):
        self._by_t = {rec.t: rec for rec in self.records}

    def record(self, t: int) -> StepRecord:
        return self._by_t[t]

    def cumulative_eps(self) -> np.ndarray:
        return np.cumsum([rec.eps for rec in self.records])


def build_ledger(c: Schedule, delta: Schedule, rho_K_t, theta: float, r_floor: float,
                 window: tuple[int, int], global_rho: bool = False,
                 realized_variance=None) -> PrivacyLedger:
    """Assemble per-step records for ``t = t1 .. t2``.

    ``rho_K_t`` is indexed by absolute time and must cover the window.
    ``realized_variance[t]``, if given, is the smallest link variance at time
    ``t`` on some trajectory; it replaces ``r_floor`` (a trajectory-dependent
    audit, tighter than the floor bound).
    """
    t1, t2 = window
    if t1 < 0 or t1 > t2:
        raise EmptyWindow(f"window [{t1}, {t2}] is empty")
    rho_K_t = np.asarray(rho_K_t, dtype=float)
    if len(rho_K_t) <= t2:
        raise MissingRecords(f"gain bounds cover t < {len(rho_K_t)}, window ends at {t2}")
    if realized_variance is not None and len(realized_variance) <= t2:
        raise MissingRecords(f"realized variances cover t < {len(realized_variance)}, window ends at {t2}")
    if not r_floor > 0:
        raise OutOfDomain(f"r_floor must be positive, got {r_floor}")
    rho_global = float(rho_K_t[t1:t2 + 1].max())
    records = []
    for t in range(t1, t2 + 1):
        c_t = float(c(t))
        rho = rho_global if global_rho else float(rho_K_t[t])
        sens = step_sensitivity(c_t, rho, theta)
        var = float(realized_variance[t]) if realized_variance is not None else r_floor
        d_t = float(delta(t))
        records.append(StepRecord(t, c_t, rho, sens, step_epsilon(sens, var, d_t), d_t, var))
    return PrivacyLedger(records, r_floor, theta, (t1, t2),
                         "global" if global_rho else "per-time", realized_variance is not None)


def compose(ledger: PrivacyLedger, window: tuple[int, int] | None = None) -> tuple[float, float]:
    """Sequential composition: ``(sum eps_t, sum delta_t)`` over the window."""
    t1, t2 = ledger.window if window is None else window
    if t1 > t2:
        raise EmptyWindow(f"window [{t1}, {t2}] is empty")
    try:
        recs = [ledger.record(t) for t in range(t1, t2 + 1)]
    except KeyError as exc:
        raise MissingRecords(f"ledger has no record for t={exc.args[0]}") from None
    return math.fsum(r.eps for r in recs), math.fsum(r.delta for r in recs)


# --- schedule admissibility -------------------------------------------------

PARTIAL_SUM_HORIZONS = (10**3, 10**4, 10**5, 10**6)


@dataclass
class AdmissibilityReport:
    c: str
    delta: str
    mode: str
    c_positive: bool
    c_in_l2: bool | None
    c_in_l1: bool | None
    delta_in_l1: bool | None
    cross_in_l1: bool | None
    delta_domain_ok: bool
    admissible: bool | None
    zero_mean_limit: bool | None
    reasons: list[str] = field(default_factory=list)
    partial_sums: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _c_membership(c: Schedule) -> tuple[bool, bool, float | None, list[str]]:
    if c.family == "power":
        return (c.p > 0.5, c.p > 1.0, c.p,
                [f"c(t) = a/(t+1)^p with p = {c.p:g}: in l2 iff p > 1/2, in l1 iff p > 1"])
    if c.family == "exp_sqrt":
        return True, True, None, ["c(t) = b exp(-sqrt t) decays faster than any power"]
    if c.family == "constant":
        return False, False, 0.0, ["constant c(t) is in neither l1 nor l2"]
    raise UnknownFamily(f"no closed-form test for c family {c.family!r}; use partial-sum mode")


def _delta_membership(delta: Schedule) -> tuple[bool, float | None, list[str]]:
    """Returns (delta in l1, growth exponent g of Qinv(delta_t) ~ t^g, reasons)."""
    if delta.family == "exp_sqrt":
        return True, 0.25, ["delta_t = b exp(-sqrt t) is summable; Qinv(delta_t) ~ sqrt(2 ln 1/delta_t) ~ sqrt(2) t^(1/4)"]
    if delta.family == "power":
        return delta.p > 1.0, 0.0, [f"delta_t = a/(t+1)^{delta.p:g}: in l1 iff exponent > 1; Qinv grows like sqrt(log t)"]
    if delta.family == "constant":
        return False, 0.0, ["constant delta_t is not summable"]
    raise UnknownFamily(f"no closed-form test for delta family {delta.family!r}; use partial-sum mode")


def _analytic(c: Schedule, delta: Schedule) -> dict:
    c_l2, c_l1, p, reasons = _c_membership(c)
    d_l1, g, more = _delta_membership(delta)
    reasons = reasons + more
    if c.family == "exp_sqrt":
        cross = True
        reasons.append("c(t) Qinv(delta_t): exponential decay times polynomial growth is summable")
    elif c.family == "constant":
        cross = False
        reasons.append("c(t) Qinv(delta_t) does not decay")
    else:
        # log growth (g == 0) still needs p > 1 strictly
        cross = p - g > 1.0
        reasons.append(f"c(t) Qinv(delta_t) ~ t^({g:g} - {p:g}) up to log factors: summable iff p - {g:g} > 1")
    return {"c_in_l2": c_l2, "c_in_l1": c_l1, "delta_in_l1": d_l1, "cross_in_l1": cross}, reasons


def _series_terms(c: Schedule, delta: Schedule, n: int) -> dict[str, np.ndarray]:
    t = np.arange(n)
    c_t = np.asarray(c(t), dtype=float)
    log_d = np.asarray(delta.log(t), dtype=float)
    return {
        "c": c_t,
        "c_sq": c_t * c_t,
        "delta": np.exp(log_d),
        "c_qinv_delta": c_t * q_tail_inv_array(log_d),
    }


def _partial_sums(c: Schedule, delta: Schedule, horizons=PARTIAL_SUM_HORIZONS) -> dict:
    n_max = int(min(max(horizons), c.length, delta.length))
    hs = [h for h in horizons if h <= n_max] or [n_max]
    terms = _series_terms(c, delta, n_max)
    out = {}
    for name, vals in terms.items():
        cs = np.cumsum(vals)
        sums = [float(cs[h - 1]) for h in hs]
        verdict = "undetermined"
        if len(sums) >= 3:
            inc_prev = sums[-2] - sums[-3]
            inc_last = sums[-1] - sums[-2]
            ratio = inc_last / inc_prev if inc_prev > 0 else 0.0
            verdict = "likely convergent" if ratio < 0.99 else "likely divergent"
        out[name] = {"horizons": hs, "sums": sums, "verdict": verdict}
    return out


def validate_schedules(c: Schedule, delta: Schedule, mode: str = "analytic") -> AdmissibilityReport:
    """Check ``c > 0``, ``c in l2``, ``delta in l1`` and ``c * Qinv(delta) in l1``.

    ``analytic`` decides membership from the family parameters and raises
    ``UnknownFamily`` for tables. ``partial-sum`` evaluates partial sums at
    ``10^3 .. 10^6`` and calls convergence from the decay of decade
    increments; that verdict is a heuristic, not a proof.
    """
    if mode not in ("analytic", "partial-sum"):
        raise OutOfDomain(f"mode must be 'analytic' or 'partial-sum', got {mode!r}")
    try:
        d0 = float(delta(0))
    except OutOfDomain:
        d0 = math.nan
    domain_ok = 0.0 < d0 < 0.5
    reasons = []
    if not domain_ok:
        reasons.append(f"delta_0 = {d0:g} outside (0, 1/2)")
    if mode == "analytic":
        m, why = _analytic(c, delta)
        reasons.extend(why)
        partial = {}
    else:
        partial = _partial_sums(c, delta)
        conv = {k: v["verdict"] == "likely convergent" for k, v in partial.items()}
        m = {"c_in_l2": conv["c_sq"], "c_in_l1": conv["c"],
             "delta_in_l1": conv["delta"], "cross_in_l1": conv["c_qinv_delta"]}
        reasons.append("partial-sum verdicts are diagnostic only")
    admissible = bool(domain_ok and m["c_in_l2"] and m["delta_in_l1"] and m["cross_in_l1"])
    return AdmissibilityReport(
        c=c.description, delta=delta.description, mode=mode, c_positive=True,
        delta_domain_ok=domain_ok, admissible=admissible,
        zero_mean_limit=bool(m["c_in_l2"] and not m["c_in_l1"]),
        reasons=reasons, partial_sums=partial, **m,
    )

