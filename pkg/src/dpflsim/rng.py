"""Deterministic random stream derivation.

Every source of randomness in a run is a separate substream derived from the
master seed plus a (purpose, client, round) key, so any component can be
re-drawn in isolation and results never depend on evaluation order. Streams
use numpy's Philox counter-based bit generator seeded through SeedSequence
spawn keys; normal variates come from Generator.standard_normal, which is
numpy's ziggurat implementation. Both choices are fixed for this build and
part of the reproducibility contract.
"""

from __future__ import annotations

import numpy as np

# Purpose codes are part of the stream-derivation contract: changing them
# changes every stream, so they are frozen constants rather than an enum that
# might be reordered.
DATA_ORDER = 0       # minibatch shuffling, keyed by (client, round)
SAMPLING = 1         # per-round client participation draws, keyed by (0, round)
CLIENT_NOISE = 2     # client-side update noise, keyed by (client, round)
SERVER_NOISE = 3     # server-side compensation noise, keyed by (client, round)
PARAM_INIT = 4       # model parameter initialization
PARTITION = 5        # dataset partitioning / test split
GROUP_ASSIGN = 6     # privacy-group assignment shuffle
SYNTH_DATA = 7       # synthetic data generation
MC = 8               # Monte Carlo estimation replicas
QUANTILE_NOISE = 9   # adaptive-clipping quantile estimator noise, keyed by (0, round)


class RngStreams:
    """Factory for independent reproducible generators under one master seed."""

    def __init__(self, master_seed: int):
        if not 0 <= int(master_seed) < 2**64:
            raise ValueError("master seed must fit in an unsigned 64-bit integer")
        self.master_seed = int(master_seed)

    def stream(self, purpose: int, client: int = 0, round_index: int = 0) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=self.master_seed,
            spawn_key=(int(purpose), int(client), int(round_index)),
        )
        return np.random.Generator(np.random.Philox(seq))

    def __repr__(self):
        return f"RngStreams(master_seed={self.master_seed})"
