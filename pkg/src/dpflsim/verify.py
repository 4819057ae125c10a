"""Registered verification suites behind `dpflsim verify`.

Each check recomputes an expected value by an independent route (recursion
vs closed form, exhaustive search, Monte Carlo, duplicated runs) and
reports the measured deviation next to its allowed budget.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import rng as rngmod
from .accounting import dp_to_rdp, rdp_to_dp, spend_closed_form, spend_recursive
from .errors import BudgetTooSmallForOrderError
from .bias import optimize_rate_permutation
from .data import SyntheticTaskSpec, make_synthetic
from .engine import TrainerConfig, run_round, train
from .models import LinearRegression, make_model
from .scheduling import PrivacySpec
from .schemes import (
    schedule_dp_fedavg,
    schedule_fedavg,
    schedule_idp_fedavg,
    schedule_time_adaptive,
)


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    delta: float    # measured worst deviation
    budget: float   # allowed deviation
    detail: str = ""


def _check(suite, name, delta, budget, detail=""):
    return CheckResult(suite, name, bool(delta <= budget), float(delta),
                       float(budget), detail)


# ------------------------------------------------------------- accounting

def suite_accounting(n_tuples: int = 500) -> list:
    """Closed form vs recursion on a random grid, plus conversion round trips."""
    gen = np.random.default_rng(20260819)
    started = time.monotonic()
    worst_match = 0.0
    worst_conserve = 0.0
    worst_monotone = 0.0       # most negative spend increment, sign-flipped
    worst_constancy = 0.0
    for _ in range(n_tuples):
        rounds = int(gen.integers(1, 201))
        transition = int(gen.integers(1, rounds + 1))
        ratio = float(gen.uniform(0.05, 1.0))
        budget = float(10.0 ** gen.uniform(-3, 2))
        sched = spend_recursive(budget, rounds, transition, ratio)
        spends = np.array(sched.per_round_spend)
        for t in range(1, rounds + 1):
            cf = spend_closed_form(budget, rounds, transition, ratio, t)
            worst_match = max(worst_match, abs(cf - spends[t - 1]) / spends[t - 1])
        worst_conserve = max(worst_conserve, abs(spends.sum() - budget) / budget)
        if rounds > 1:
            steps = np.diff(spends) / spends[:-1]
            worst_monotone = max(worst_monotone, float(-steps.min()))
        tail = spends[transition - 1:]
        worst_constancy = max(
            worst_constancy, float(np.abs(tail - tail[0]).max() / tail[0])
        )
    elapsed = time.monotonic() - started

    worst_rt = 0.0
    for _ in range(100):
        alpha = float(gen.uniform(1.5, 64.0))
        delta = float(10.0 ** gen.uniform(-8, -3))
        eps = float(10.0 ** gen.uniform(-2, 1.5))
        try:
            rdp = dp_to_rdp(eps, alpha, delta)
        except BudgetTooSmallForOrderError:
            continue  # epsilon below what this order can certify: not a round trip
        if rdp == 0.0:
            continue
        back = rdp_to_dp(rdp, alpha, delta)
        worst_rt = max(worst_rt, abs(back - eps) / eps)

    s = "accounting"
    return [
        _check(s, "closed_form_matches_recursive", worst_match, 1e-12,
               f"{n_tuples} tuples, T <= 200"),
        _check(s, "budget_conserved", worst_conserve, 1e-9),
        _check(s, "spend_monotone_nondecreasing", worst_monotone, 1e-12),
        _check(s, "spend_constant_after_transition", worst_constancy, 1e-9),
        _check(s, "dp_rdp_round_trip", worst_rt, 1e-12),
        _check(s, "grid_runtime_seconds", elapsed, 10.0),
    ]


# ------------------------------------------------------------ permutation

def suite_permutation(n_instances: int = 1000) -> list:
    """Optimizer vs exhaustive search; objectives must match exactly."""
    gen = np.random.default_rng(31415)
    perm_cache = {}
    mism = 0
    bad_bijection = 0
    for _ in range(n_instances):
        n = int(gen.integers(2, 9))
        clips = 10.0 ** gen.uniform(-2, 2, n)
        rates = gen.uniform(0.05, 1.0, n)
        if gen.uniform() < 0.3:  # inject ties
            clips[int(gen.integers(n))] = clips[int(gen.integers(n))]
            rates[int(gen.integers(n))] = rates[int(gen.integers(n))]
        rho = float(gen.uniform(1.1, 4.0))
        res = optimize_rate_permutation(clips, rates, rho)
        if sorted(res.rate_to_client) != list(range(n)):
            bad_bijection += 1
            continue
        if n not in perm_cache:
            perm_cache[n] = np.array(list(itertools.permutations(range(n))))
        perms = perm_cache[n]
        w = clips ** (1.0 - rho)
        assigned = np.empty((len(perms), n))
        assigned[np.arange(len(perms))[:, None], perms] = rates[None, :]
        prods = assigned * w
        approx = prods.sum(axis=1)
        # exact (correctly rounded) objective on the near-minimal rows only;
        # vectorized sums of <= 8 terms sit within ~2e-15 relative of fsum
        cand = np.nonzero(approx <= approx.min() * (1.0 + 1e-12))[0]
        best = min(math.fsum(prods[r]) for r in cand)
        if res.objective != best:
            mism += 1
    s = "permutation"
    return [
        _check(s, "matches_exhaustive_search", mism, 0,
               f"{n_instances} instances, N <= 8"),
        _check(s, "returns_bijection", bad_bijection, 0),
    ]


# ------------------------------------------------------------------ noise

def _noise_setup():
    n, dim = 4, 7  # params: 6 features + bias
    spec = PrivacySpec(order=8.0, delta=1e-5, spending_rate=0.9, clip_mean=1.0,
                       rounds=3, client_count=n)
    schedule = schedule_idp_fedavg(spec, [2.0, 5.0, 10.0, 4.0])
    plan = schedule.rounds[0]
    gen = np.random.default_rng(99)
    shards = []
    for _ in range(n):
        X = gen.standard_normal((8, dim - 1))
        shards.append((X, np.zeros(8)))  # zero labels: zero params fit exactly
    return spec, plan, shards, n, dim


def _simulated_aggregate(streams, plan, clip_mean, rates, n, dim, t):
    """The aggregation noise rule, written out independently of run_round."""
    u = streams.stream(rngmod.SAMPLING, 0, t).uniform(size=n)
    sampled = u < rates
    sqrt_n = math.sqrt(n)
    comp_std = clip_mean * plan.sigma_global / sqrt_n
    acc = np.zeros(dim)
    for i in range(n):
        if sampled[i]:
            std = plan.clip[i] * plan.sigma[i] / sqrt_n
            acc += std * streams.stream(rngmod.CLIENT_NOISE, i, t).standard_normal(dim)
        else:
            acc += comp_std * streams.stream(rngmod.SERVER_NOISE, i, t).standard_normal(dim)
    return acc


def suite_noise(n_draws: int = 10000) -> list:
    """Aggregate noise power is (c sigma_global)^2 per coordinate, for any
    sampling pattern; engine rounds reproduce the written-out rule bitwise."""
    spec, plan, shards, n, dim = _noise_setup()
    target = (spec.clip_mean * plan.sigma_global) ** 2
    model = LinearRegression(dim - 1)
    cfg = TrainerConfig(local_epochs=1, batch_size=8, learning_rate=0.1)
    streams = rngmod.RngStreams(2024)

    coupling_bad = 0
    mixed = np.array([1.0, 0.0, 1.0, 0.0])
    for t in range(1, 51):
        p = replace(plan, rate=mixed, round_index=t)
        new_params, _ = run_round(model, np.zeros(dim), p, spec.clip_mean,
                                  shards, cfg, streams, lr=0.1)
        sim = _simulated_aggregate(streams, p, spec.clip_mean, mixed, n, dim, t)
        if not np.array_equal(new_params, sim / (p.mean_rate * n)):
            coupling_bad += 1

    patterns = {
        "all_sampled": np.ones(n),
        "none_sampled": np.zeros(n),
        "half_sampled": mixed,
    }
    worst = 0.0
    detail = []
    for name, rates in patterns.items():
        draws = np.empty((n_draws, dim))
        for k in range(n_draws):
            draws[k] = _simulated_aggregate(streams, plan, spec.clip_mean,
                                            rates, n, dim, k + 1)
        var = float(draws.var(axis=0).mean())
        rel = abs(var - target) / target
        worst = max(worst, rel)
        detail.append(f"{name}:{rel:.4f}")
    s = "noise"
    return [
        _check(s, "engine_matches_aggregation_rule", coupling_bad, 0,
               "50 engine rounds, bitwise"),
        _check(s, "variance_pattern_invariant", worst, 0.05,
               f"{n_draws} draws/pattern; " + ", ".join(detail)),
    ]


# ---------------------------------------------------------------- lattice

def _plan_gap(a, b):
    gap = 0.0
    for pa, pb in zip(a.rounds, b.rounds):
        for fa, fb in ((pa.sigma, pb.sigma), (pa.rate, pb.rate),
                       (pa.clip, pb.clip), (pa.spent_rdp, pb.spent_rdp),
                       (pa.remaining_rdp, pb.remaining_rdp)):
            gap = max(gap, float(np.abs(fa - fb).max()))
    return gap


def suite_lattice() -> list:
    """Scheme reductions: immediate transitions, uniform budgets, no privacy."""
    n = 5
    spec = PrivacySpec(order=8.0, delta=1e-5, spending_rate=0.9, clip_mean=1.0,
                       rounds=4, client_count=n)
    eps = [2.0, 5.0, 10.0, 5.0, 2.0]
    q = spec.spending_rate

    gap_ta_idp = _plan_gap(
        schedule_time_adaptive(spec, eps, [q] * n, [1] * n),
        schedule_idp_fedavg(spec, eps),
    )
    gap_idp_dp = _plan_gap(
        schedule_idp_fedavg(spec, [4.0] * n),
        schedule_dp_fedavg(spec, 4.0),
    )
    fa = schedule_fedavg(spec)
    gap_dpinf_fa = 0.0
    for pa, pb in zip(schedule_dp_fedavg(spec, math.inf).rounds, fa.rounds):
        same = (np.array_equal(pa.sigma, pb.sigma)
                and np.array_equal(pa.clip, pb.clip)
                and np.array_equal(pa.rate, pb.rate))
        gap_dpinf_fa = max(gap_dpinf_fa, 0.0 if same else 1.0)

    # q_n = q with a late transition must already act like IDP: constant sigma
    ta_q = schedule_time_adaptive(spec, eps, [q] * n, [3] * n)
    sig = np.array([p.sigma for p in ta_q.rounds])
    sigma_drift = float((np.abs(sig - sig[0]) / sig[0]).max())

    ds = make_synthetic(SyntheticTaskSpec(
        dimension=3, classes=2, separation=4.0, noise_scale=1.0,
        samples_per_client=16, client_count=n, seed=11))
    model = make_model("logistic", 3, n_classes=2)
    cfg = TrainerConfig(local_epochs=1, batch_size=8, learning_rate=0.3)

    def run(schedule):
        streams = rngmod.RngStreams(11)
        p0 = model.init_params(streams.stream(rngmod.PARAM_INIT))
        return train(model, p0, schedule, ds, cfg, streams).final_params

    traj_gap = 0.0 if np.array_equal(
        run(schedule_time_adaptive(spec, eps, [q] * n, [1] * n)),
        run(schedule_idp_fedavg(spec, eps)),
    ) else 1.0
    traj_gap_fa = 0.0 if np.array_equal(
        run(schedule_dp_fedavg(spec, math.inf)), run(fa)
    ) else 1.0

    s = "lattice"
    return [
        _check(s, "ta_immediate_equals_idp_schedule", gap_ta_idp, 1e-9),
        _check(s, "idp_uniform_equals_dp_schedule", gap_idp_dp, 1e-9),
        _check(s, "dp_infinite_equals_fedavg_schedule", gap_dpinf_fa, 0),
        _check(s, "saving_at_spending_rate_keeps_sigma_constant",
               sigma_drift, 1e-9),
        _check(s, "ta_immediate_equals_idp_trajectory_bitwise", traj_gap, 0),
        _check(s, "dp_infinite_equals_fedavg_trajectory_bitwise",
               traj_gap_fa, 0),
    ]


# --------------------------------------------------------------- registry

SUITES = {
    "accounting": suite_accounting,
    "permutation": suite_permutation,
    "noise": suite_noise,
    "lattice": suite_lattice,
}


def run_suites(names, *, accounting_tuples: int = 500,
               permutation_instances: int = 1000,
               noise_draws: int = 10000) -> list:
    if names == ["all"] or names == "all":
        names = list(SUITES)
    sizes = {
        "accounting": {"n_tuples": accounting_tuples},
        "permutation": {"n_instances": permutation_instances},
        "noise": {"n_draws": noise_draws},
    }
    results = []
    for name in names:
        if name not in SUITES:
            raise KeyError(f"unknown suite {name!r}; have {sorted(SUITES)} or 'all'")
        results.extend(SUITES[name](**sizes.get(name, {})))
    return results


def format_report(results) -> str:
    lines = ["# verification report"]
    for r in results:
        tag = "PASS" if r.passed else "FAIL"
        line = f"{tag} {r.suite}.{r.name} delta={r.delta!r} budget={r.budget!r}"
        if r.detail:
            line += f"  ({r.detail})"
        lines.append(line)
    n_fail = sum(not r.passed for r in results)
    lines.append(f"# {len(results)} checks: {len(results) - n_fail} passed, "
                 f"{n_fail} failed")
    return "\n".join(lines)


def report_dict(results) -> dict:
    return {
        "all_passed": all(r.passed for r in results),
        "checks": [asdict(r) for r in results],
    }
