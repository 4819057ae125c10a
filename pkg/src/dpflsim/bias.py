"""Aggregation-bias bounds and the sampling-rate assignment optimizer.

Non-uniform sampling rates plus clipping bias the aggregated update two
ways: rate mismatch reweights client means, and clipping shrinks heavy
tails. The bounds here cost both effects from per-client moments; the
optimizer picks which client gets which sampling rate to minimize the
moment-weighted clipping term, which by the rearrangement inequality is
smallest when rates and clip norms are sorted the same way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .errors import DomainError


def clipping_bias_bound(moment: float, clip: float, rho: float) -> float:
    """Bias bound moment / clip^(rho-1) for clipping at norm `clip`, given the
    rho-th absolute moment of the update norm."""
    if not rho > 1.0:
        raise DomainError(f"moment order rho must exceed 1, got {rho}")
    if not clip > 0.0:
        raise DomainError(f"clip norm must be positive, got {clip}")
    if moment < 0.0:
        raise DomainError(f"moment must be nonnegative, got {moment}")
    # 0-d array power keeps this on the same ufunc path as the vector bounds,
    # so the single-client reduction of the symmetric bound is bit-exact
    return float(np.asarray(moment, dtype=np.float64)
                 * np.asarray(clip, dtype=np.float64) ** (1.0 - rho))


def _check_per_client(rates, clips, moments, rho):
    rates = np.asarray(rates, dtype=float)
    clips = np.asarray(clips, dtype=float)
    moments = np.asarray(moments, dtype=float)
    if not rho > 1.0:
        raise DomainError(f"moment order rho must exceed 1, got {rho}")
    if not (rates.shape == clips.shape == moments.shape) or rates.ndim != 1 or rates.size == 0:
        raise DomainError("rates, clips, and moments must be equal-length nonempty vectors")
    if np.any(rates <= 0) or np.any(rates > 1):
        raise DomainError("sampling rates must lie in (0, 1]")
    if np.any(clips <= 0):
        raise DomainError("clip norms must be positive")
    if np.any(moments < 0):
        raise DomainError("moments must be nonnegative")
    return rates, clips, moments


def bias_bound_thm2(rates, clips, means, moments, rho: float) -> float:
    """Mean-aware aggregation-bias bound.

    Needs each client's expected update and rho-th norm moment. The first
    term prices sampling-rate mismatch against the mean rate; the second
    prices clipping, reweighted by relative rate.
    """
    rates, clips, moments = _check_per_client(rates, clips, moments, rho)
    means = np.asarray(means, dtype=float)
    if means.ndim != 2 or means.shape[0] != rates.size:
        raise DomainError("means must be a (clients, dim) matrix")
    n = rates.size
    qbar = float(np.mean(rates))
    rel = rates / qbar
    term1 = float(np.linalg.norm(((1.0 - rel)[:, None] * means).sum(axis=0))) / n
    term2 = float(np.sum(rel * moments * clips ** (1.0 - rho))) / n
    return term1 + term2


def bias_bound_thm3(rates, clips, moments, rho: float) -> float:
    """Moment-only bound, valid when budget-derived (rate, clip) pairs are
    assigned to clients uniformly at random; with one client it reduces to
    clipping_bias_bound exactly."""
    rates, clips, moments = _check_per_client(rates, clips, moments, rho)
    n = rates.size
    qbar = float(np.mean(rates))
    inner = np.sum((rates / qbar) * clips ** (1.0 - rho))
    return float(np.sum(moments) * inner / (n * n))


@dataclass(frozen=True)
class PermutationAssignment:
    """rate_to_client[i] is the client receiving the i-th rate; objective is
    sum over clients of assigned_rate * clip^(1-rho) (the mean-rate factor is
    constant over permutations and omitted)."""

    rate_to_client: np.ndarray
    objective: float


def optimize_rate_permutation(clips, rates, rho: float) -> PermutationAssignment:
    """Assign sampling rates to clients to minimize the clipping-bias term.

    Optimal pairing sorts both: smallest rate with smallest clip. Fully tied
    clips or rates make every assignment optimal; the identity is returned.
    """
    clips = np.asarray(clips, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if not rho > 1.0:
        raise DomainError(f"moment order rho must exceed 1, got {rho}")
    if clips.shape != rates.shape or clips.ndim != 1 or clips.size == 0:
        raise DomainError("clips and rates must be equal-length nonempty vectors")
    if np.any(clips <= 0):
        raise DomainError("clip norms must be positive")
    if np.any(rates <= 0) or np.any(rates > 1):
        raise DomainError("sampling rates must lie in (0, 1]")

    n = clips.size
    if np.all(clips == clips[0]) or np.all(rates == rates[0]):
        perm = np.arange(n)
    else:
        perm = np.empty(n, dtype=np.int64)
        perm[np.argsort(rates, kind="stable")] = np.argsort(clips, kind="stable")

    assigned = np.empty(n)
    assigned[perm] = rates
    # fsum gives the correctly rounded sum, so tied-optimal assignments
    # (duplicate clips or rates) score bitwise identically regardless of
    # which client position each product lands in
    objective = math.fsum(assigned * clips ** (1.0 - rho))
    return PermutationAssignment(perm, objective)


def gaussian_moments(means, stds) -> np.ndarray:
    """Exact second norm moments E|X|^2 = |mu|^2 + d*std^2 for isotropic
    Gaussian updates; pairs with the rho=2 bounds."""
    means = np.asarray(means, dtype=float)
    stds = np.asarray(stds, dtype=float)
    if means.ndim != 2 or stds.shape != (means.shape[0],):
        raise DomainError("means must be (clients, dim) and stds (clients,)")
    d = means.shape[1]
    return (means * means).sum(axis=1) + d * stds * stds


def estimate_bias_mc(means, stds, rates, clips, *, n_draws: int, seed: int,
                     n_replicas: int = 1, permute_budgets: bool = False):
    """Monte Carlo estimate of the aggregation bias norm.

    Per draw: sample isotropic Gaussian updates per client, Bernoulli
    participation at each client's rate, clip, aggregate with the engine's
    1/(mean_rate * N) scaling, and compare against the unclipped full mean.
    With permute_budgets the (rate, clip) pairs are reassigned uniformly at
    random every draw, matching the symmetric bound's setting.

    Draws are split across `n_replicas` independent substreams and merged in
    replica order, so the result is bit-identical for a fixed
    (seed, n_replicas) pair no matter how replicas are executed.

    Returns (norm of mean error, conservative standard error).
    """
    means = np.asarray(means, dtype=float)
    stds = np.asarray(stds, dtype=float)
    rates = np.asarray(rates, dtype=float)
    clips = np.asarray(clips, dtype=float)
    n = means.shape[0]
    if means.ndim != 2 or stds.shape != (n,) or rates.shape != (n,) or clips.shape != (n,):
        raise DomainError("means must be (clients, dim); stds/rates/clips (clients,)")
    if np.any(rates <= 0) or np.any(rates > 1):
        raise DomainError("sampling rates must lie in (0, 1]")
    if np.any(clips <= 0) or np.any(stds < 0):
        raise DomainError("clips must be positive and stds nonnegative")
    if n_draws < 1:
        raise DomainError(f"draw count must be positive, got {n_draws}")
    if n_replicas < 1:
        raise DomainError(f"replica count must be positive, got {n_replicas}")

    d = means.shape[1]
    qbar = float(np.mean(rates))
    streams = rngmod.RngStreams(seed)

    base, extra = divmod(n_draws, n_replicas)
    sum_err = np.zeros(d)
    sum_sq = np.zeros(d)
    for r in range(n_replicas):
        m = base + (1 if r < extra else 0)
        if m == 0:
            continue
        gen = streams.stream(rngmod.MC, client=r)
        x = means + stds[:, None] * gen.standard_normal((m, n, d))
        if permute_budgets:
            perms = np.argsort(gen.uniform(size=(m, n)), axis=1)
            rates_used = rates[perms]
            clips_used = clips[perms]
        else:
            rates_used = np.broadcast_to(rates, (m, n))
            clips_used = np.broadcast_to(clips, (m, n))
        participates = gen.uniform(size=(m, n)) < rates_used
        norms = np.linalg.norm(x, axis=2)
        scale = np.where(norms > clips_used, clips_used / np.maximum(norms, 1e-300), 1.0)
        est = (participates[:, :, None] * x * scale[:, :, None]).sum(axis=1) / (qbar * n)
        err = est - x.mean(axis=1)
        sum_err += err.sum(axis=0)
        sum_sq += (err * err).sum(axis=0)

    mean = sum_err / n_draws
    var = np.maximum(sum_sq - n_draws * mean * mean, 0.0) / max(n_draws - 1, 1)
    se = math.sqrt(float(var.sum()) / n_draws)
    return float(np.linalg.norm(mean)), se
