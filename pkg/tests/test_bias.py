"""Bias machinery: clipping-bias bound, aggregation-bias bounds, sampling-rate
permutation optimizer vs brute force, Monte Carlo estimator."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpflsim import bias
from dpflsim.errors import DomainError


def relclose(a, b, rel=1e-12, floor=1e-15):
    return abs(a - b) <= max(rel * max(abs(a), abs(b)), floor)


class TestClippingBiasBound:
    def test_frozen_value(self):
        assert bias.clipping_bias_bound(2.0, 4.0, 2.0) == 0.5

    def test_rho_one_or_less_rejected(self):
        for rho in (1.0, 0.5, -1.0):
            with pytest.raises(DomainError):
                bias.clipping_bias_bound(1.0, 1.0, rho)

    def test_nonpositive_clip_rejected(self):
        with pytest.raises(DomainError):
            bias.clipping_bias_bound(1.0, 0.0, 2.0)

    def test_negative_moment_rejected(self):
        with pytest.raises(DomainError):
            bias.clipping_bias_bound(-1.0, 1.0, 2.0)

    @given(
        moment=st.floats(0.0, 1e6),
        clip=st.floats(1e-3, 1e6),
        rho=st.floats(1.001, 8.0),
    )
    def test_monotone_decreasing_in_clip(self, moment, clip, rho):
        a = bias.clipping_bias_bound(moment, clip, rho)
        b = bias.clipping_bias_bound(moment, 2 * clip, rho)
        assert a >= 0 and b <= a * (1 + 1e-12)


THM2_INSTANCE = dict(
    rates=np.array([0.2, 0.8]),
    clips=np.array([1.0, 1.0]),
    means=np.array([[1.0, 0.0], [-1.0, 0.0]]),
    moments=np.array([1.0, 1.0]),
    rho=2.0,
)


class TestAggregationBounds:
    def test_frozen_mixed_rate_instance(self):
        got = bias.bias_bound_thm2(**THM2_INSTANCE)
        # term1 = (1/2)|0.6*[1,0] + (-0.6)*[-1,0]| = 0.6; term2 = (1/2)(0.4+1.6) = 1.0
        assert relclose(got, 1.6)

    def test_frozen_moment_only_instance(self):
        got = bias.bias_bound_thm3(
            rates=THM2_INSTANCE["rates"], clips=THM2_INSTANCE["clips"],
            moments=THM2_INSTANCE["moments"], rho=2.0,
        )
        assert relclose(got, 1.0)

    def test_uniform_rates_kill_the_mismatch_term(self):
        rates = np.array([0.5, 0.5, 0.5])
        clips = np.array([1.0, 2.0, 4.0])
        means = np.array([[1.0], [2.0], [-3.0]])
        moments = np.array([1.0, 4.0, 9.0])
        got = bias.bias_bound_thm2(rates, clips, means, moments, 2.0)
        want = (1.0 / 1.0 + 4.0 / 2.0 + 9.0 / 4.0) / 3
        assert relclose(got, want)

    def test_single_client_collapse_is_exact(self):
        # with one client the moment-only bound must equal the clipping-bias
        # lemma bitwise, not just approximately
        for moment, clip, rho, q in [(2.0, 4.0, 2.0, 0.3), (5.5, 0.7, 3.0, 1.0),
                                     (1e-3, 123.4, 1.5, 0.9)]:
            a = bias.bias_bound_thm3(np.array([q]), np.array([clip]),
                                     np.array([moment]), rho)
            b = bias.clipping_bias_bound(moment, clip, rho)
            assert a == b

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DomainError):
            bias.bias_bound_thm3(np.array([0.5, 0.5]), np.array([1.0]),
                                 np.array([1.0, 1.0]), 2.0)

    def test_bad_rates_rejected(self):
        with pytest.raises(DomainError):
            bias.bias_bound_thm3(np.array([0.0]), np.array([1.0]), np.array([1.0]), 2.0)
        with pytest.raises(DomainError):
            bias.bias_bound_thm3(np.array([1.1]), np.array([1.0]), np.array([1.0]), 2.0)


def brute_force_best(clips, rates, rho):
    # fsum per permutation, matching the library's order-independent sum
    n = len(clips)
    w = clips ** (1.0 - rho)
    best = math.inf
    for p in itertools.permutations(range(n)):
        assigned = np.empty(n)
        for i, client in enumerate(p):
            assigned[client] = rates[i]
        obj = math.fsum(assigned * w)
        best = min(best, obj)
    return best


class TestPermutationOptimizer:
    def test_frozen_example_sorted_inputs(self):
        out = bias.optimize_rate_permutation(
            np.array([1.0, 2.0, 4.0]), np.array([0.3, 0.5, 0.7]), 2.0)
        assert relclose(out.objective, 0.725)
        assert list(out.rate_to_client) == [0, 1, 2]

    def test_frozen_example_scrambled_inputs(self):
        out = bias.optimize_rate_permutation(
            np.array([4.0, 1.0, 2.0]), np.array([0.5, 0.7, 0.3]), 2.0)
        assert relclose(out.objective, 0.725)
        # smallest rate (index 2) goes to smallest clip (client 1)
        assert out.rate_to_client[2] == 1
        # largest rate (index 1) goes to largest clip (client 0)
        assert out.rate_to_client[1] == 0

    def test_identity_on_tied_clips(self):
        out = bias.optimize_rate_permutation(
            np.array([2.0, 2.0, 2.0]), np.array([0.9, 0.1, 0.5]), 2.0)
        assert list(out.rate_to_client) == [0, 1, 2]

    def test_identity_on_tied_rates(self):
        out = bias.optimize_rate_permutation(
            np.array([3.0, 1.0, 2.0]), np.array([0.4, 0.4, 0.4]), 2.0)
        assert list(out.rate_to_client) == [0, 1, 2]

    def test_matches_brute_force(self):
        rng = np.random.default_rng(17)
        for _ in range(60):
            n = int(rng.integers(2, 8))
            clips = rng.uniform(0.1, 5.0, n)
            rates = rng.uniform(0.05, 1.0, n)
            rho = float(rng.uniform(1.2, 4.0))
            out = bias.optimize_rate_permutation(clips, rates, rho)
            assert out.objective == brute_force_best(clips, rates, rho)

    def test_objective_recomputable(self):
        rng = np.random.default_rng(23)
        clips = rng.uniform(0.5, 3.0, 6)
        rates = rng.uniform(0.1, 1.0, 6)
        out = bias.optimize_rate_permutation(clips, rates, 2.0)
        w = clips ** (1.0 - 2.0)
        assigned = np.empty(6)
        for i, client in enumerate(out.rate_to_client):
            assigned[client] = rates[i]
        assert relclose(float(np.sum(assigned * w)), out.objective)

    def test_permutation_is_bijection(self):
        rng = np.random.default_rng(29)
        clips = rng.uniform(0.5, 3.0, 9)
        rates = rng.uniform(0.1, 1.0, 9)
        out = bias.optimize_rate_permutation(clips, rates, 2.0)
        assert sorted(out.rate_to_client.tolist()) == list(range(9))

    def test_beats_the_antisorted_pairing(self):
        clips = np.array([1.0, 2.0, 4.0])
        rates = np.array([0.3, 0.5, 0.7])
        out = bias.optimize_rate_permutation(clips, rates, 2.0)
        worst = 0.7 / 1.0 + 0.5 / 2.0 + 0.3 / 4.0
        assert out.objective < worst


def random_mc_instance(rng, n=None, d=None):
    n = n or int(rng.integers(2, 6))
    d = d or int(rng.integers(1, 4))
    return dict(
        means=rng.normal(0, 1.5, (n, d)),
        stds=rng.uniform(0.2, 1.2, n),
        rates=rng.uniform(0.2, 1.0, n),
        clips=rng.uniform(0.5, 3.0, n),
    )


class TestMcEstimator:
    def test_bit_identical_for_fixed_seed_and_replicas(self):
        inst = random_mc_instance(np.random.default_rng(31))
        a = bias.estimate_bias_mc(**inst, n_draws=400, seed=5, n_replicas=4)
        b = bias.estimate_bias_mc(**inst, n_draws=400, seed=5, n_replicas=4)
        assert a == b

    def test_unclipped_uniform_setup_has_no_bias(self):
        n, d = 4, 3
        rng = np.random.default_rng(37)
        means = rng.normal(0, 0.5, (n, d))
        est, se = bias.estimate_bias_mc(
            means=means, stds=np.full(n, 0.3), rates=np.full(n, 0.6),
            clips=np.full(n, 1e6), n_draws=4000, seed=7)
        assert est <= 4 * se

    def test_estimate_respects_moment_mismatch_bound(self):
        rng = np.random.default_rng(41)
        for seed in range(5):
            inst = random_mc_instance(rng)
            est, se = bias.estimate_bias_mc(**inst, n_draws=3000, seed=seed)
            moments = bias.gaussian_moments(inst["means"], inst["stds"])
            bound = bias.bias_bound_thm2(
                inst["rates"], inst["clips"], inst["means"], moments, 2.0)
            assert est <= bound + 3 * se

    def test_permuted_budgets_respect_symmetric_bound(self):
        rng = np.random.default_rng(43)
        for seed in range(5):
            inst = random_mc_instance(rng)
            est, se = bias.estimate_bias_mc(**inst, n_draws=3000, seed=seed,
                                            permute_budgets=True)
            moments = bias.gaussian_moments(inst["means"], inst["stds"])
            bound = bias.bias_bound_thm3(inst["rates"], inst["clips"], moments, 2.0)
            assert est <= bound + 3 * se

    def test_replica_split_changes_draws_but_not_contract(self):
        inst = random_mc_instance(np.random.default_rng(47))
        a = bias.estimate_bias_mc(**inst, n_draws=1000, seed=9, n_replicas=1)
        b = bias.estimate_bias_mc(**inst, n_draws=1000, seed=9, n_replicas=5)
        assert a != b  # different substream layout
        assert a[0] >= 0 and b[0] >= 0 and a[1] > 0 and b[1] > 0

    def test_bad_args_rejected(self):
        inst = random_mc_instance(np.random.default_rng(53))
        with pytest.raises(DomainError):
            bias.estimate_bias_mc(**inst, n_draws=0, seed=1)
        with pytest.raises(DomainError):
            bias.estimate_bias_mc(**inst, n_draws=100, seed=1, n_replicas=0)


class TestGaussianMoments:
    def test_matches_monte_carlo(self):
        rng = np.random.default_rng(59)
        means = np.array([[1.0, 2.0], [0.0, -1.0]])
        stds = np.array([0.5, 1.5])
        want = bias.gaussian_moments(means, stds)
        draws = means[None] + stds[None, :, None] * rng.standard_normal((200000, 2, 2))
        got = (np.linalg.norm(draws, axis=2) ** 2).mean(axis=0)
        assert np.allclose(got, want, rtol=0.02)
