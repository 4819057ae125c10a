"""The five training schemes and the run-level orchestration.

Every scheme reduces to a schedule plus the shared engine. The non-adaptive
baselines reuse build_schedule directly, so their pairwise reductions
(uniform budgets, immediate transitions, infinite budgets) hold bit for bit
rather than approximately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import rng as rngmod
from .accounting import dp_to_rdp, sgm_rdp_cost, solve_noise_multiplier
from .config import RunConfig
from .data import (
    CsvSchema,
    FederatedDataset,
    SyntheticTaskSpec,
    load_csv,
    make_synthetic,
    partition_dirichlet,
    partition_iid,
)
from .engine import RoundMetrics, TrainResult, lr_for_round, run_round, train
from .errors import BudgetExhaustedError, ConfigError
from .models import evaluate, make_model
from .scheduling import (
    AdherenceReport,
    ClientBudgetState,
    PrivacySpec,
    RoundPlan,
    Schedule,
    assign_privacy_groups,
    build_schedule,
    verify_budget_adherence,
)


# ------------------------------------------------------ schedule builders

def schedule_fedavg(spec: PrivacySpec) -> Schedule:
    """No privacy: zero noise, unbounded clips, every round at full rate."""
    clients = [ClientBudgetState(i, math.inf, spec.spending_rate, 1)
               for i in range(spec.client_count)]
    return build_schedule(spec, clients)


def schedule_dp_fedavg(spec: PrivacySpec, epsilon: float) -> Schedule:
    """One shared DP budget, spent uniformly from round 1."""
    clients = [ClientBudgetState(i, float(epsilon), spec.spending_rate, 1)
               for i in range(spec.client_count)]
    return build_schedule(spec, clients)


def schedule_idp_fedavg(spec: PrivacySpec, epsilons) -> Schedule:
    """Per-client budgets, all spent uniformly from round 1."""
    if len(epsilons) != spec.client_count:
        raise ConfigError(
            f"need {spec.client_count} budgets, got {len(epsilons)}"
        )
    clients = [ClientBudgetState(i, float(e), spec.spending_rate, 1)
               for i, e in enumerate(epsilons)]
    return build_schedule(spec, clients)


def schedule_time_adaptive(spec: PrivacySpec, epsilons, saving_rates,
                           transition_rounds) -> Schedule:
    """Per-client budgets with a saving phase before each transition round."""
    n = spec.client_count
    if not len(epsilons) == len(saving_rates) == len(transition_rounds) == n:
        raise ConfigError(
            f"need {n} budgets, saving rates, and transition rounds, got "
            f"{len(epsilons)}/{len(saving_rates)}/{len(transition_rounds)}"
        )
    clients = [
        ClientBudgetState(i, float(e), float(s), int(tr))
        for i, (e, s, tr) in enumerate(zip(epsilons, saving_rates, transition_rounds))
    ]
    return build_schedule(spec, clients)


# ------------------------------------------------------- adaptive clipping

@dataclass(frozen=True)
class AdaptiveClipState:
    """Geometric quantile tracker over pre-clip update norms."""

    clip: float
    gamma: float     # target quantile in (0, 1)
    eta: float       # multiplicative step size
    sigma_b: float   # std of the noise added to the raw count


def adaptive_clip_step(state: AdaptiveClipState, norms, z: float) -> AdaptiveClipState:
    """One tracker update from a round's sampled-client norms.

    The count of norms at or under the clip is privatized with Gaussian
    noise sigma_b * z before normalizing, then the clip moves by
    exp(-eta * (fraction - gamma)). An empty round leaves the state as is.
    """
    m = len(norms)
    if m == 0:
        return state
    count = int(np.sum(np.asarray(norms, dtype=float) <= state.clip))
    b = (count + state.sigma_b * float(z)) / m
    return replace(state, clip=state.clip * math.exp(-state.eta * (b - state.gamma)))


def _run_adaptive_clip(cfg: RunConfig, spec: PrivacySpec, model, params0,
                       dataset: FederatedDataset, streams: rngmod.RngStreams):
    """Train with a privately tracked clip on one shared budget.

    Each round pays the quantile mechanism 2 * alpha * q^2 / sigma_b^2 out
    of that round's slice of the remaining budget; the update noise is
    solved from what is left. Budgets must be uniform and finite: the clip
    trajectory is shared state, so a per-client budget would leak across
    privacy groups.
    """
    budgets = set(cfg.group_budgets)
    if len(budgets) != 1:
        raise ConfigError(
            f"adaptive_clip needs a uniform budget, got groups {cfg.group_budgets}"
        )
    epsilon = float(cfg.group_budgets[0])
    if math.isinf(epsilon):
        raise ConfigError("adaptive_clip needs a finite budget")

    n = spec.client_count
    q = spec.spending_rate
    total = dp_to_rdp(epsilon, spec.order, spec.delta)
    sigma_b = cfg.adaptive_clip.sigma_b
    if sigma_b is None:
        sigma_b = 0.1 * q * n
    quantile_cost = sgm_rdp_cost(q, sigma_b, spec.order)
    state = AdaptiveClipState(cfg.clip_mean, cfg.adaptive_clip.gamma,
                              cfg.adaptive_clip.eta, sigma_b)

    shards = [dataset.shard(i) for i in range(dataset.n_shards)]
    test_x, test_y = dataset.test_set()
    clients = [ClientBudgetState(i, epsilon, q, 1, rdp_total=total)
               for i in range(n)]

    params = np.asarray(params0, dtype=float).copy()
    remaining = total
    plans, clips, history = [], [], []
    cum_rdp = np.zeros(n)
    for t in range(1, spec.rounds + 1):
        eps_round = remaining / (spec.rounds - t + 1)
        eps_update = eps_round - quantile_cost
        if eps_update <= 0.0:
            raise BudgetExhaustedError(
                f"round {t}: quantile mechanism costs {quantile_cost:.6g} RDP of "
                f"the {eps_round:.6g} available this round; raise sigma_b or the budget"
            )
        sigma = solve_noise_multiplier(eps_update, 1, q, spec.order)
        spent = sgm_rdp_cost(q, sigma, spec.order) + quantile_cost
        plan = RoundPlan(
            round_index=t,
            sigma=np.full(n, sigma),
            rate=np.full(n, q),
            clip=np.full(n, state.clip),
            mode=np.ones(n, dtype=np.int64),
            spent_rdp=np.full(n, spent),
            remaining_rdp=np.full(n, remaining),
            sigma_global=sigma,
            mean_rate=q,
        )
        lr = lr_for_round(cfg.trainer, t, spec.rounds)
        params, stats = run_round(model, params, plan, state.clip, shards,
                                  cfg.trainer, streams, lr=lr)
        z = streams.stream(rngmod.QUANTILE_NOISE, 0, t).standard_normal()
        clips.append(state.clip)
        state = adaptive_clip_step(state, stats.raw_norms, float(z))
        remaining -= spent
        cum_rdp = cum_rdp + plan.spent_rdp
        if len(test_y):
            test_loss, test_acc = evaluate(model, params, test_x, test_y)
        else:
            test_loss, test_acc = math.nan, math.nan
        history.append(RoundMetrics(
            round_index=t,
            test_acc=test_acc,
            test_loss=test_loss,
            n_sampled=stats.n_sampled,
            mean_update_norm=stats.mean_update_norm,
            frac_clipped=stats.frac_clipped,
            cum_rdp=cum_rdp.copy(),
        ))
        plans.append(plan)

    schedule = Schedule(spec, clients, np.full(n, total), plans,
                        np.full(n, remaining))
    return schedule, TrainResult(params, history), tuple(clips)


# ----------------------------------------------------------- run assembly

@dataclass
class RunResult:
    scheme: str
    seed: int
    config: RunConfig
    schedule: Schedule
    train: TrainResult
    adherence: AdherenceReport
    groups: np.ndarray
    clip_trajectory: tuple | None = None


def privacy_spec(cfg: RunConfig) -> PrivacySpec:
    return PrivacySpec(
        order=cfg.alpha,
        delta=cfg.delta,
        spending_rate=cfg.spending_rate,
        clip_mean=cfg.clip_mean,
        rounds=cfg.rounds,
        client_count=cfg.clients,
    )


def build_dataset(cfg: RunConfig) -> FederatedDataset:
    d = cfg.data
    if d.source == "synthetic":
        task = SyntheticTaskSpec(
            dimension=d.dimension,
            classes=d.classes,
            separation=d.separation,
            noise_scale=d.noise_scale,
            samples_per_client=d.samples_per_client,
            client_count=cfg.clients,
            seed=cfg.seed,
        )
        ds = make_synthetic(task)
        if d.partition == "dirichlet":
            ds = partition_dirichlet(ds.train_features, ds.train_labels,
                                     cfg.clients, d.dirichlet_beta,
                                     seed=cfg.seed, test=ds.test_set())
        return ds
    schema = CsvSchema(label=d.label, categoricals=tuple(d.categoricals),
                       missing=d.missing, label_kind=d.label_kind)
    table = load_csv(d.path, schema, d.test_fraction, cfg.seed)
    test = (table.test_features, table.test_labels)
    if d.partition == "dirichlet":
        return partition_dirichlet(table.train_features, table.train_labels,
                                   cfg.clients, d.dirichlet_beta,
                                   seed=cfg.seed, test=test)
    return partition_iid(table.train_features, table.train_labels,
                         cfg.clients, seed=cfg.seed, test=test)


def build_model(cfg: RunConfig, dataset: FederatedDataset):
    n_features = dataset.train_features.shape[1]
    if cfg.model.kind == "linear":
        return make_model("linear", n_features)
    labels = dataset.train_labels
    k = int(labels.max()) + 1 if len(labels) else 2
    return make_model(cfg.model.kind, n_features, n_classes=max(k, 2),
                      hidden=cfg.model.hidden)


def make_schedule(cfg: RunConfig, spec: PrivacySpec, groups: np.ndarray) -> Schedule:
    if cfg.scheme == "fedavg":
        return schedule_fedavg(spec)
    if cfg.scheme == "dp_fedavg":
        return schedule_dp_fedavg(spec, min(cfg.group_budgets))
    if cfg.scheme == "idp_fedavg":
        return schedule_idp_fedavg(spec, [cfg.group_budgets[g] for g in groups])
    if cfg.scheme == "time_adaptive":
        return schedule_time_adaptive(
            spec,
            [cfg.group_budgets[g] for g in groups],
            [cfg.saving_rates[g] for g in groups],
            [cfg.transition_rounds[g] for g in groups],
        )
    raise ConfigError(f"unknown scheme {cfg.scheme!r}")


def run_scheme(cfg: RunConfig) -> RunResult:
    """Build everything from one config and train to the horizon."""
    streams = rngmod.RngStreams(cfg.seed)
    dataset = build_dataset(cfg)
    model = build_model(cfg, dataset)
    params0 = model.init_params(streams.stream(rngmod.PARAM_INIT))
    groups = assign_privacy_groups(cfg.clients, cfg.group_fractions, seed=cfg.seed)

    spec = privacy_spec(cfg)
    clips = None
    if cfg.scheme == "adaptive_clip":
        schedule, result, clips = _run_adaptive_clip(cfg, spec, model, params0,
                                                     dataset, streams)
    else:
        schedule = make_schedule(cfg, spec, groups)
        result = train(model, params0, schedule, dataset, cfg.trainer, streams)
    report = verify_budget_adherence(schedule)
    return RunResult(cfg.scheme, cfg.seed, cfg, schedule, result, report,
                     groups, clips)
