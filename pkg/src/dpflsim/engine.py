"""Federated training loop with clipped, noised client updates.

The engine replays a precomputed schedule: per round it samples clients,
runs local SGD on each sampled shard, clips and noises the update on the
client, and adds compensation noise for every unsampled client so the total
per-coordinate noise power is independent of who participated. All
randomness comes from keyed streams, so trajectories are bit-reproducible.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .errors import ConfigError, DomainError
from .models import evaluate

CHECKPOINT_MAGIC = b"DPFLSIM1"

METRICS_CSV_COLUMNS = [
    "round", "test_acc", "test_loss", "n_sampled", "mean_update_norm", "frac_clipped",
]


@dataclass(frozen=True)
class TrainerConfig:
    local_epochs: int
    batch_size: int
    learning_rate: float
    lr_schedule: str = "constant"  # or "cosine"

    def __post_init__(self):
        if self.local_epochs < 1 or self.batch_size < 1:
            raise DomainError("local epochs and batch size must be positive")
        if self.learning_rate <= 0:
            raise DomainError(f"learning rate must be positive, got {self.learning_rate}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise DomainError(f"unknown lr schedule {self.lr_schedule!r}")


def lr_for_round(cfg: TrainerConfig, t: int, total_rounds: int) -> float:
    if cfg.lr_schedule == "constant":
        return cfg.learning_rate
    # half-cosine from full rate at t=1 to a small positive value at t=T
    return cfg.learning_rate * 0.5 * (1.0 + math.cos(math.pi * (t - 1) / total_rounds))


def clip_update(update: np.ndarray, clip: float):
    """Scale `update` to norm at most `clip`; returns (vector, was_clipped)."""
    if not clip > 0.0:
        raise DomainError(f"clip norm must be positive, got {clip}")
    norm = float(np.linalg.norm(update))
    if norm > clip:
        return update * (clip / norm), True
    return update.copy(), False


@dataclass
class ClientUpdate:
    client_id: int
    delta: np.ndarray     # clipped, noised update
    raw_norm: float       # pre-clip norm
    was_clipped: bool


def client_update(model, params, X, y, cfg: TrainerConfig, *, lr, data_rng, noise_rng,
                  clip, noise_std, client_id) -> ClientUpdate:
    """Local training on one shard, then clip and noise.

    Each epoch draws a fresh permutation from data_rng and walks it in
    batches of cfg.batch_size (final partial batch included). Given the same
    generator states the result is bit-identical across invocations.
    """
    p = params.copy()
    n = len(y)
    for _ in range(cfg.local_epochs):
        order = data_rng.permutation(n)
        for s in range(0, n, cfg.batch_size):
            bi = order[s : s + cfg.batch_size]
            _, g = model.loss_and_grad(p, X[bi], y[bi])
            p = p - lr * g
    raw = p - params
    raw_norm = float(np.linalg.norm(raw))
    delta, was_clipped = clip_update(raw, clip)
    if noise_std > 0.0:
        delta = delta + noise_std * noise_rng.standard_normal(params.size)
    return ClientUpdate(client_id, delta, raw_norm, was_clipped)


@dataclass
class RoundStats:
    n_sampled: int
    mean_update_norm: float
    frac_clipped: float
    sampled: np.ndarray
    raw_norms: tuple = ()  # pre-clip norms of sampled clients, in id order


def run_round(model, params, plan, clip_mean, shards, cfg: TrainerConfig,
              streams: rngmod.RngStreams, *, lr):
    """Execute one scheduled round; returns (new params, RoundStats).

    Clients are visited in id order. Sampled clients contribute noised
    clipped updates; every other client gets server-side compensation noise
    at the full std clip_mean * sigma_global / sqrt(N), so the aggregate
    noise power never depends on the realized sampling pattern. The summed
    update is scaled by 1 / (mean_rate * N).
    """
    n = len(shards)
    t = plan.round_index
    u = streams.stream(rngmod.SAMPLING, 0, t).uniform(size=n)
    sqrt_n = math.sqrt(n)
    comp_std = 0.0 if plan.sigma_global == 0.0 else clip_mean * plan.sigma_global / sqrt_n

    acc = np.zeros_like(params)
    norms, flags = [], []
    sampled = u < plan.rate
    for i in range(n):
        if sampled[i]:
            X, y = shards[i]
            noise_std = 0.0 if plan.sigma[i] == 0.0 else plan.clip[i] * plan.sigma[i] / sqrt_n
            cu = client_update(
                model, params, X, y, cfg, lr=lr,
                data_rng=streams.stream(rngmod.DATA_ORDER, i, t),
                noise_rng=streams.stream(rngmod.CLIENT_NOISE, i, t),
                clip=plan.clip[i], noise_std=noise_std, client_id=i,
            )
            acc += cu.delta
            norms.append(cu.raw_norm)
            flags.append(cu.was_clipped)
        elif comp_std > 0.0:
            acc += comp_std * streams.stream(rngmod.SERVER_NOISE, i, t).standard_normal(params.size)

    new_params = params + acc / (plan.mean_rate * n)
    stats = RoundStats(
        n_sampled=len(norms),
        mean_update_norm=float(np.mean(norms)) if norms else math.nan,
        frac_clipped=float(np.mean(flags)) if flags else math.nan,
        sampled=sampled,
        raw_norms=tuple(norms),
    )
    return new_params, stats


@dataclass
class RoundMetrics:
    round_index: int
    test_acc: float
    test_loss: float
    n_sampled: int
    mean_update_norm: float
    frac_clipped: float
    cum_rdp: np.ndarray


@dataclass
class TrainResult:
    final_params: np.ndarray
    history: list


def train(model, params0, schedule, dataset, cfg: TrainerConfig,
          streams: rngmod.RngStreams) -> TrainResult:
    """Run the full schedule over a federated dataset."""
    spec = schedule.spec
    if dataset.n_shards != spec.client_count:
        raise ConfigError(
            f"dataset has {dataset.n_shards} shards, schedule expects {spec.client_count}"
        )
    shards = [dataset.shard(i) for i in range(dataset.n_shards)]
    test_x, test_y = dataset.test_set()
    total_rounds = len(schedule.rounds)

    params = np.asarray(params0, dtype=float).copy()
    cum_rdp = np.zeros(spec.client_count)
    history = []
    for plan in schedule.rounds:
        lr = lr_for_round(cfg, plan.round_index, total_rounds)
        params, stats = run_round(model, params, plan, spec.clip_mean, shards, cfg,
                                  streams, lr=lr)
        cum_rdp = cum_rdp + plan.spent_rdp
        if len(test_y):
            test_loss, test_acc = evaluate(model, params, test_x, test_y)
        else:
            test_loss, test_acc = math.nan, math.nan
        history.append(RoundMetrics(
            round_index=plan.round_index,
            test_acc=test_acc,
            test_loss=test_loss,
            n_sampled=stats.n_sampled,
            mean_update_norm=stats.mean_update_norm,
            frac_clipped=stats.frac_clipped,
            cum_rdp=cum_rdp.copy(),
        ))
    return TrainResult(params, history)


def write_metrics_csv(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_CSV_COLUMNS)
        for m in history:
            w.writerow([
                m.round_index, repr(float(m.test_acc)), repr(float(m.test_loss)),
                m.n_sampled, repr(float(m.mean_update_norm)), repr(float(m.frac_clipped)),
            ])


def save_checkpoint(path, params: np.ndarray) -> None:
    """Flat little-endian float64 vector with an 8-byte magic + u64 length header."""
    vec = np.ascontiguousarray(np.asarray(params, dtype="<f8"))
    if vec.ndim != 1:
        raise DomainError(f"checkpoint expects a flat vector, got shape {vec.shape}")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", vec.size))
        fh.write(vec.tobytes())


def load_checkpoint(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:8] != CHECKPOINT_MAGIC:
        raise ConfigError(f"{path}: not a checkpoint (bad magic)")
    (size,) = struct.unpack("<Q", blob[8:16])
    body = blob[16:]
    if len(body) != 8 * size:
        raise ConfigError(
            f"{path}: checkpoint declares {size} values but carries {len(body)} bytes"
        )
    return np.frombuffer(body, dtype="<f8").copy()
