"""Renyi-DP accounting for subsampled Gaussian steps.

Everything here is exact algebra on the quadratic SGM cost bound
2*alpha*q^2/sigma^2, so budget conservation is testable at tight tolerances:
the per-round spend recursion, its closed form, the noise multiplier that
spreads a remaining budget evenly over remaining rounds, and the affine
RDP<->DP conversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import (
    BudgetExhaustedError,
    BudgetTooSmallForOrderError,
    DomainError,
    InvalidSavingRateError,
)

# dp_to_rdp results this far below zero still count as "boundary": they arise
# from budgets quoted at limited precision, not from genuinely infeasible ones.
_BOUNDARY_CLAMP = 1e-6


@dataclass(frozen=True)
class RdpOrder:
    """A Renyi divergence order; must exceed 1."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 1.0:
            raise DomainError(f"RDP order must exceed 1, got {self.alpha}")


@dataclass(frozen=True)
class DpBudget:
    epsilon: float
    delta: float

    def __post_init__(self):
        if self.epsilon < 0:
            raise DomainError(f"DP epsilon must be nonnegative, got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class RdpBudget:
    epsilon_rdp: float
    order: RdpOrder

    def __post_init__(self):
        if self.epsilon_rdp < 0:
            raise DomainError(f"RDP epsilon must be nonnegative, got {self.epsilon_rdp}")


@dataclass(frozen=True)
class SpendSchedule:
    """Per-round RDP spends for one client, rounds indexed 1..len."""

    per_round_spend: tuple
    transition_round: int
    saving_rate_ratio: float
    total_rdp: float

    @property
    def rounds(self) -> int:
        return len(self.per_round_spend)


def _alpha(order) -> float:
    a = order.alpha if isinstance(order, RdpOrder) else float(order)
    if not a > 1.0:
        raise DomainError(f"RDP order must exceed 1, got {a}")
    return a


def sgm_rdp_cost(q: float, sigma: float, order) -> float:
    """RDP cost of one subsampled Gaussian step at sampling rate q."""
    alpha = _alpha(order)
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"sampling rate must lie in [0, 1], got {q}")
    if not sigma > 0.0:
        raise DomainError(f"noise multiplier must be positive, got {sigma}")
    return 2.0 * alpha * q * q / (sigma * sigma)


def solve_noise_multiplier(remaining_rdp: float, rounds_remaining: int, q: float, order) -> float:
    """Noise multiplier that spends remaining_rdp evenly over the remaining rounds.

    Inverts the per-step cost at rate q: rounds * 2*alpha*q^2/sigma^2 = remaining.
    """
    alpha = _alpha(order)
    if remaining_rdp <= 0.0:
        raise BudgetExhaustedError(
            f"no RDP budget remains ({remaining_rdp}); cannot solve for noise"
        )
    if rounds_remaining < 1:
        raise DomainError(f"rounds remaining must be at least 1, got {rounds_remaining}")
    if not 0.0 < q <= 1.0:
        raise DomainError(f"sampling rate must lie in (0, 1], got {q}")
    return q * math.sqrt(2.0 * alpha * rounds_remaining / remaining_rdp)


def _check_spend_args(total_rdp, rounds, transition_round, ratio):
    if total_rdp <= 0.0:
        raise DomainError(f"total RDP budget must be positive, got {total_rdp}")
    if rounds < 1:
        raise DomainError(f"round count must be at least 1, got {rounds}")
    if not 0.0 < ratio <= 1.0:
        raise InvalidSavingRateError(f"saving rate ratio must lie in (0, 1], got {ratio}")
    if not 1 <= transition_round <= rounds:
        raise DomainError(
            f"transition round must lie in [1, {rounds}], got {transition_round}"
        )


def spend_recursive(total_rdp: float, rounds: int, transition_round: int, ratio: float) -> SpendSchedule:
    """Per-round spends: an even share of what remains, damped by ratio^2
    while the round still samples at the reduced saving rate."""
    _check_spend_args(total_rdp, rounds, transition_round, ratio)
    r2 = ratio * ratio
    spends = []
    remaining = total_rdp
    for t in range(1, rounds + 1):
        share = remaining / (rounds - t + 1)
        spend = share * r2 if t < transition_round else share
        spends.append(spend)
        remaining -= spend
    return SpendSchedule(tuple(spends), transition_round, ratio, total_rdp)


def spend_closed_form(total_rdp: float, rounds: int, transition_round: int, ratio: float, t: int) -> float:
    """Closed form for the round-t spend of the recursion above."""
    _check_spend_args(total_rdp, rounds, transition_round, ratio)
    if not 1 <= t <= rounds:
        raise DomainError(f"round index must lie in [1, {rounds}], got {t}")
    r2 = ratio * ratio
    if t < transition_round:
        prod = 1.0
        for i in range(1, t):
            prod *= 1.0 - r2 / (rounds - t + 1 + i)
        return total_rdp / (rounds - t + 1) * r2 * prod
    prod = 1.0
    for i in range(1, transition_round):
        prod *= 1.0 - r2 / (rounds - transition_round + 1 + i)
    return total_rdp / (rounds - transition_round + 1) * prod


def rdp_to_dp(eps_rdp, order, delta: float = None) -> float:
    """Convert an RDP guarantee at one order to (epsilon, delta)-DP.

    May return a negative epsilon for large delta; callers decide whether
    that is meaningful for them.
    """
    if isinstance(eps_rdp, RdpBudget):
        if delta is None:
            raise DomainError("delta is required when converting an RdpBudget")
        order = eps_rdp.order
        eps_rdp = eps_rdp.epsilon_rdp
    alpha = _alpha(order)
    if eps_rdp < 0:
        raise DomainError(f"RDP epsilon must be nonnegative, got {eps_rdp}")
    if delta is None or not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    return eps_rdp + math.log((alpha - 1.0) / alpha) - (math.log(delta) + math.log(alpha)) / (alpha - 1.0)


def dp_to_rdp(budget, order, delta: float = None) -> float:
    """Exact inverse of rdp_to_dp: the RDP budget at `order` that converts to
    the given DP budget.

    Results within 1e-6 below zero clamp to 0.0 (budgets quoted at limited
    precision land there); anything lower raises, since the order cannot
    certify the requested epsilon at all.
    """
    if isinstance(budget, DpBudget):
        epsilon, delta = budget.epsilon, budget.delta
    else:
        epsilon = float(budget)
        if delta is None:
            raise DomainError("delta is required when the budget is a bare epsilon")
    alpha = _alpha(order)
    if epsilon < 0:
        raise DomainError(f"DP epsilon must be nonnegative, got {epsilon}")
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    eps_rdp = epsilon - math.log((alpha - 1.0) / alpha) + (math.log(delta) + math.log(alpha)) / (alpha - 1.0)
    if eps_rdp < 0.0:
        if eps_rdp >= -_BOUNDARY_CLAMP:
            return 0.0
        raise BudgetTooSmallForOrderError(
            f"epsilon={epsilon} at delta={delta} is below what order alpha={alpha} "
            f"can certify (shortfall {-eps_rdp:.3g}); use a different order"
        )
    return eps_rdp
