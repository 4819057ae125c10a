"""Pre-training schedule construction.

The full per-round plan (noise multipliers, sampling rates, clip norms, RDP
spends) is computed before any data is touched; it depends only on budgets,
rates, and transition rounds, never on updates. Training then replays the
schedule, so privacy adherence can be audited from the plan alone.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .accounting import dp_to_rdp, rdp_to_dp, sgm_rdp_cost, solve_noise_multiplier
from .errors import ConfigError, DomainError, InvalidSavingRateError

DEFAULT_GROUP_FRACTIONS = (0.34, 0.43, 0.23)

SCHEDULE_CSV_COLUMNS = [
    "round", "client", "mode", "q", "sigma", "clip",
    "rdp_spent_this_round", "rdp_remaining",
]


@dataclass(frozen=True)
class PrivacySpec:
    """Run-wide privacy parameters shared by every client."""

    order: float            # Renyi order alpha
    delta: float
    spending_rate: float    # sampling rate q once a client is spending
    clip_mean: float        # target mean of per-client clip norms
    rounds: int
    client_count: int

    def __post_init__(self):
        if not self.order > 1.0:
            raise DomainError(f"RDP order must exceed 1, got {self.order}")
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0.0 < self.spending_rate <= 1.0:
            raise DomainError(f"spending rate must lie in (0, 1], got {self.spending_rate}")
        if not self.clip_mean > 0.0:
            raise DomainError(f"clip mean must be positive, got {self.clip_mean}")
        if self.rounds < 1 or self.client_count < 1:
            raise DomainError("rounds and client count must be at least 1")


@dataclass
class ClientBudgetState:
    """Per-client budget and schedule shape.

    rdp_total may be given directly; otherwise it is derived once from
    dp_epsilon at the spec's (order, delta). An infinite budget marks a
    non-private client (zero noise, unaccounted spend).
    """

    client_id: int
    dp_epsilon: float | None
    saving_rate: float          # q_n used while t < transition_round
    transition_round: int
    rdp_total: float | None = None
    spent_rdp: float = 0.0

    def __post_init__(self):
        if self.saving_rate <= 0.0:
            raise InvalidSavingRateError(
                f"saving rate must be positive, got {self.saving_rate}"
            )
        if self.transition_round < 1:
            raise DomainError(
                f"transition round must be at least 1, got {self.transition_round}"
            )


def mode(client: ClientBudgetState, t: int) -> int:
    """0 while the client is still saving (t before its transition), else 1."""
    return 0 if t < client.transition_round else 1


@dataclass
class RoundPlan:
    """Per-client plan for one round; remaining_rdp is the budget still
    available for this round onwards (before this round's spend)."""

    round_index: int
    sigma: np.ndarray
    rate: np.ndarray
    clip: np.ndarray
    mode: np.ndarray
    spent_rdp: np.ndarray
    remaining_rdp: np.ndarray
    sigma_global: float
    mean_rate: float


@dataclass
class Schedule:
    spec: PrivacySpec
    clients: list
    rdp_budgets: np.ndarray
    rounds: list
    final_remaining: np.ndarray

    def spent_per_client(self) -> np.ndarray:
        return np.array([p.spent_rdp for p in self.rounds]).sum(axis=0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SCHEDULE_CSV_COLUMNS)
            for k, p in enumerate(self.rounds):
                if k + 1 < len(self.rounds):
                    after = self.rounds[k + 1].remaining_rdp
                else:
                    after = self.final_remaining
                for i in range(len(p.sigma)):
                    w.writerow([
                        p.round_index, i, int(p.mode[i]), repr(float(p.rate[i])),
                        repr(float(p.sigma[i])), repr(float(p.clip[i])),
                        repr(float(p.spent_rdp[i])), repr(float(after[i])),
                    ])


def _resolve_budgets(spec: PrivacySpec, clients) -> np.ndarray:
    budgets = np.empty(len(clients))
    for i, c in enumerate(clients):
        if c.rdp_total is not None:
            budgets[i] = c.rdp_total
        elif c.dp_epsilon is None:
            raise ConfigError(f"client {c.client_id} has neither a DP nor an RDP budget")
        elif math.isinf(c.dp_epsilon):
            budgets[i] = math.inf
        else:
            budgets[i] = dp_to_rdp(c.dp_epsilon, spec.order, spec.delta)
    return budgets


def build_schedule(spec: PrivacySpec, clients) -> Schedule:
    """Compute the complete round-by-round plan for all clients.

    Pure function of (spec, clients): no data, no randomness. Clients are
    processed in list order and must carry ids 0..N-1 exactly once.
    """
    if len(clients) != spec.client_count:
        raise ConfigError(
            f"spec expects {spec.client_count} clients, got {len(clients)}"
        )
    ids = [c.client_id for c in clients]
    if sorted(ids) != list(range(spec.client_count)):
        raise ConfigError(f"client ids must be 0..{spec.client_count - 1}, got {ids}")
    for c in clients:
        if c.saving_rate > spec.spending_rate:
            raise InvalidSavingRateError(
                f"client {c.client_id}: saving rate {c.saving_rate} exceeds "
                f"spending rate {spec.spending_rate}"
            )
        if c.transition_round > spec.rounds:
            raise DomainError(
                f"client {c.client_id}: transition round {c.transition_round} "
                f"beyond horizon {spec.rounds}"
            )

    budgets = _resolve_budgets(spec, clients)
    infinite = np.isinf(budgets)
    if infinite.any() and not infinite.all():
        raise ConfigError("mixed finite and infinite budgets are not supported")
    non_private = bool(infinite.all())

    n = spec.client_count
    remaining = budgets.copy()
    plans = []
    for t in range(1, spec.rounds + 1):
        sigma = np.zeros(n)
        rate = np.zeros(n)
        spent = np.zeros(n)
        clip = np.zeros(n)
        modes = np.zeros(n, dtype=np.int64)
        before = remaining.copy()
        for i, c in enumerate(clients):
            modes[i] = mode(c, t)
            rate[i] = spec.spending_rate if modes[i] else c.saving_rate
            if non_private:
                sigma[i] = 0.0
                spent[i] = 0.0
                continue
            sigma[i] = solve_noise_multiplier(
                remaining[i], spec.rounds - t + 1, spec.spending_rate, spec.order
            )
            spent[i] = sgm_rdp_cost(rate[i], sigma[i], spec.order)
            rem = remaining[i] - spent[i]
            if rem < 0.0:
                # sqrt round trips can overshoot by an ulp in the final round
                if t == spec.rounds and rem >= -1e-12 * max(budgets[i], 1.0):
                    rem = 0.0
                else:
                    raise ConfigError(
                        f"internal: client {i} overspent at round {t} by {-rem:.3g}"
                    )
            remaining[i] = rem

        if non_private:
            sigma_global = 0.0
            clip[:] = math.inf
        else:
            sigma_global = n / float(np.sum(1.0 / sigma))
            clip = spec.clip_mean * sigma_global / sigma
        plans.append(RoundPlan(
            round_index=t,
            sigma=sigma,
            rate=rate,
            clip=clip,
            mode=modes,
            spent_rdp=spent,
            remaining_rdp=before,
            sigma_global=sigma_global,
            mean_rate=float(rate.mean()),
        ))
    return Schedule(spec, list(clients), budgets, plans, remaining.copy())


@dataclass(frozen=True)
class AdherenceRow:
    client_id: int
    rdp_budget: float
    rdp_spent: float
    dp_budget: float
    dp_spent: float
    slack_dp: float
    status: str  # ok | violation | non_private


@dataclass(frozen=True)
class AdherenceReport:
    rows: tuple
    slack_tolerance: float

    @property
    def all_ok(self) -> bool:
        return all(r.status != "violation" for r in self.rows)


def verify_budget_adherence(schedule: Schedule, slack_tolerance: float = 1e-6) -> AdherenceReport:
    """Audit realized spends in a schedule against each client's budget.

    Infinite budgets are flagged non_private (their leakage is unaccounted,
    reported as infinite spend) rather than counted as violations.
    """
    spec = schedule.spec
    spent = schedule.spent_per_client()
    rows = []
    for i, c in enumerate(schedule.clients):
        budget_rdp = float(schedule.rdp_budgets[i])
        if math.isinf(budget_rdp):
            rows.append(AdherenceRow(c.client_id, budget_rdp, math.inf, math.inf,
                                     math.inf, math.inf, "non_private"))
            continue
        dp_budget = (c.dp_epsilon if c.dp_epsilon is not None
                     else rdp_to_dp(budget_rdp, spec.order, spec.delta))
        dp_spent = rdp_to_dp(float(spent[i]), spec.order, spec.delta)
        slack = dp_budget - dp_spent
        status = "ok" if slack >= -slack_tolerance else "violation"
        rows.append(AdherenceRow(c.client_id, budget_rdp, float(spent[i]),
                                 dp_budget, dp_spent, slack, status))
    return AdherenceReport(tuple(rows), slack_tolerance)


def assign_privacy_groups(n_clients: int, fractions=DEFAULT_GROUP_FRACTIONS, *, seed: int) -> np.ndarray:
    """Assign each client a privacy-group index by seeded shuffle.

    Group sizes come from largest-remainder apportionment of the fractions,
    so they sum to n_clients exactly.
    """
    fr = np.asarray(fractions, dtype=float)
    if fr.ndim != 1 or fr.size < 1 or np.any(fr < 0):
        raise DomainError("fractions must be a nonnegative vector")
    if abs(fr.sum() - 1.0) > 1e-9:
        raise DomainError(f"fractions must sum to 1, got {fr.sum()}")
    raw = fr * n_clients
    counts = np.floor(raw).astype(int)
    shortfall = n_clients - counts.sum()
    # hand leftovers to largest fractional parts; ties go to lower index
    order = np.argsort(-(raw - counts), kind="stable")
    for k in range(shortfall):
        counts[order[k]] += 1
    labels = np.repeat(np.arange(fr.size), counts)
    gen = rngmod.RngStreams(seed).stream(rngmod.GROUP_ASSIGN)
    return labels[gen.permutation(n_clients)]
