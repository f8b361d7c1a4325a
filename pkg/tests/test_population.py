import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poolinfer.errors import ConfigurationError
from poolinfer.population import (
    PoolSet,
    Popularity,
    UserProfile,
    build_user_behavior,
    jsd,
    perturb_popularity,
    pool_entropy,
    profile_from_sequence,
    sample_objects,
    uniform_random_popularity,
    zipf_mixture_popularity,
)
from poolinfer.streams import derive_stream

from conftest import block_pools


class TestPoolSet:
    def test_rejects_overlap(self):
        with pytest.raises(ConfigurationError):
            PoolSet(universe_size=10, pools=(np.array([0, 1]), np.array([1, 2])))

    def test_rejects_empty_pool(self):
        with pytest.raises(ConfigurationError):
            PoolSet(universe_size=10, pools=(np.array([0]), np.array([], dtype=np.int64)))

    def test_neutral_pool(self, tiny_pools):
        assert tiny_pools.k == 3
        assert np.array_equal(tiny_pools.neutral, [8, 9])


class TestZipfMixture:
    def test_exponent_zero_uniform_within_pools(self, tiny_pools):
        p = zipf_mixture_popularity(tiny_pools, 0.0)
        for group in tiny_pools.groups:
            np.testing.assert_allclose(p.probs[group], p.probs[group][0])

    def test_pool_of_two_exponent_one(self):
        pools = block_pools(4, [2, 2])
        p = zipf_mixture_popularity(pools, 1.0)
        within = p.probs[:2] / p.probs[:2].sum()
        np.testing.assert_allclose(within, [2 / 3, 1 / 3], atol=1e-12)

    def test_equal_group_masses(self, emojis_pools, emojis_popularity):
        # six pools + neutral share the total mass equally
        for group in emojis_pools.groups:
            assert emojis_popularity.pool_mass(group) == pytest.approx(1 / 7, abs=1e-12)

    def test_within_pool_masses_non_increasing(self, emojis_pools, emojis_popularity):
        for group in emojis_pools.groups:
            masses = emojis_popularity.probs[group]
            assert np.all(np.diff(masses) <= 1e-18)

    def test_covering_pools_leave_no_neutral(self):
        pools = block_pools(4, [2, 2])
        p = zipf_mixture_popularity(pools, 1.2)
        assert p.probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert p.pool_mass(pools.pools[0]) == pytest.approx(0.5, abs=1e-12)


class TestUniformRandomPopularity:
    def test_single_object(self):
        p = uniform_random_popularity(1, derive_stream(0, "p"))
        assert p.probs[0] == pytest.approx(1.0)

    def test_normalized(self):
        p = uniform_random_popularity(2000, derive_stream(1, "p"))
        assert abs(p.probs.sum() - 1.0) < 1e-12
        assert np.all(p.probs > 0)

    def test_seed_reproducible(self):
        a = uniform_random_popularity(100, derive_stream(2, "p"))
        b = uniform_random_popularity(100, derive_stream(2, "p"))
        np.testing.assert_array_equal(a.probs, b.probs)


class TestPerturbPopularity:
    def test_sigma_zero_identity(self, emojis_popularity):
        out = perturb_popularity(emojis_popularity, 0.0, derive_stream(0, "n"))
        assert out is emojis_popularity

    @pytest.mark.parametrize("sigma", [1e-5, 1e-3, 1e-1])
    def test_valid_distribution(self, emojis_popularity, sigma):
        out = perturb_popularity(emojis_popularity, sigma, derive_stream(1, "n"))
        assert abs(out.probs.sum() - 1.0) < 1e-9
        assert np.all(out.probs >= 0)

    def test_mean_divergence_grows_with_sigma(self, emojis_popularity):
        # mirrors the robustness table's average-divergence column
        means = []
        for sigma in (0.0, 1e-5, 1e-4, 1e-3, 1e-2):
            vals = [
                jsd(emojis_popularity, perturb_popularity(emojis_popularity, sigma, derive_stream(5, "u", i)))
                for i in range(60)
            ]
            means.append(np.mean(vals))
        assert all(b >= a for a, b in zip(means, means[1:]))


class TestUserBehavior:
    def test_degenerate_profile_all_mass_on_preferred(self, tiny_pools):
        p = zipf_mixture_popularity(tiny_pools, 1.0)
        behavior = build_user_behavior(p, tiny_pools, UserProfile(1, 1.0, 1.0))
        assert behavior.probs[tiny_pools.pools[1]].sum() == pytest.approx(1.0, abs=1e-12)
        within = behavior.probs[tiny_pools.pools[1]]
        np.testing.assert_allclose(within / within.sum(), p.probs[tiny_pools.pools[1]] / p.pool_mass(tiny_pools.pools[1]))

    def test_k6_half_half_weights(self):
        pools = block_pools(60, [5] * 6)
        p = zipf_mixture_popularity(pools, 0.5)
        behavior = build_user_behavior(p, pools, UserProfile(0, 0.5, 0.5))
        for i in range(1, 6):
            assert behavior.probs[pools.pools[i]].sum() == pytest.approx(0.05, abs=1e-12)

    @given(
        gamma=st.floats(1e-6, 1.0),
        delta_frac=st.floats(1e-9, 1.0),
        preferred=st.integers(0, 2),
    )
    @settings(max_examples=200, deadline=None)
    def test_pool_masses_match_weights(self, gamma, delta_frac, preferred):
        pools = block_pools(10, [3, 3, 2])
        p = zipf_mixture_popularity(pools, 1.0)
        k = pools.k
        delta = 1.0 / k + delta_frac * (1.0 - 1.0 / k)
        behavior = build_user_behavior(p, pools, UserProfile(preferred, gamma, delta))
        assert behavior.probs[pools.pools[preferred]].sum() == pytest.approx(gamma * delta, abs=1e-9)
        for i in range(k):
            if i != preferred:
                assert behavior.probs[pools.pools[i]].sum() == pytest.approx(gamma * (1 - delta) / (k - 1), abs=1e-9)
        assert behavior.probs[pools.neutral].sum() == pytest.approx(1 - gamma, abs=1e-9)

    def test_zero_mass_pool_rejected(self, tiny_pools):
        probs = np.zeros(10)
        probs[3:] = 1.0 / 7
        with pytest.raises(ConfigurationError):
            build_user_behavior(Popularity(probs=probs), tiny_pools, UserProfile(0, 0.5, 0.5))


class TestSampleObjects:
    def test_point_mass(self):
        probs = np.zeros(5)
        probs[3] = 1.0
        from poolinfer.population import Behavior

        seq = sample_objects(Behavior(probs=probs), 50, derive_stream(0, "s"))
        assert np.all(seq == 3)

    def test_empirical_frequencies(self, tiny_pools):
        p = zipf_mixture_popularity(tiny_pools, 1.0)
        behavior = build_user_behavior(p, tiny_pools, UserProfile(0, 0.6, 0.7))
        seq = sample_objects(behavior, 1_000_000, derive_stream(1, "s"))
        freq = np.bincount(seq, minlength=10) / seq.size
        se = np.sqrt(behavior.probs * (1 - behavior.probs) / seq.size)
        assert np.all(np.abs(freq - behavior.probs) <= 3 * se + 1e-9)

    def test_seed_reproducible(self, tiny_pools):
        p = zipf_mixture_popularity(tiny_pools, 1.0)
        behavior = build_user_behavior(p, tiny_pools, UserProfile(0, 0.6, 0.7))
        a = sample_objects(behavior, 100, derive_stream(2, "s"))
        b = sample_objects(behavior, 100, derive_stream(2, "s"))
        np.testing.assert_array_equal(a, b)


class TestProfileFromSequence:
    def test_single_pool_sequence(self, tiny_pools):
        profile = profile_from_sequence(np.array([3, 4, 5, 3]), tiny_pools)
        assert profile == UserProfile(preferred_pool=1, gamma=1.0, delta=1.0, tied=False)

    def test_hand_counted_example(self):
        pools = block_pools(300, [100, 100])
        seq = np.array([0] * 90 + [100] * 30 + [250] * 60)
        profile = profile_from_sequence(seq, pools)
        assert profile.preferred_pool == 0
        assert profile.gamma == pytest.approx(2 / 3)
        assert profile.delta == pytest.approx(0.75)

    def test_all_neutral_returns_none(self, tiny_pools):
        assert profile_from_sequence(np.array([8, 9, 8]), tiny_pools) is None

    def test_empty_sequence_rejected(self, tiny_pools):
        with pytest.raises(ValueError):
            profile_from_sequence(np.array([], dtype=np.int64), tiny_pools)

    def test_tie_flagged_lowest_index_wins(self, tiny_pools):
        profile = profile_from_sequence(np.array([0, 3]), tiny_pools)
        assert profile.preferred_pool == 0
        assert profile.tied

    def test_recovers_parameters_from_samples(self):
        pools = block_pools(60, [10] * 4)
        p = zipf_mixture_popularity(pools, 1.0)
        for trial in range(5):
            gamma = 0.2 + 0.15 * trial
            delta = 0.4 + 0.1 * trial
            true = UserProfile(trial % 4, gamma, delta)
            behavior = build_user_behavior(p, pools, true)
            seq = sample_objects(behavior, 100_000, derive_stream(8, "s", trial))
            got = profile_from_sequence(seq, pools)
            margin = gamma * delta - gamma * (1 - delta) / 3
            assert abs(got.gamma - gamma) < 0.01
            assert abs(got.delta - delta) < 0.01
            if margin > 0.05:
                assert got.preferred_pool == true.preferred_pool


class TestJsd:
    def test_identical_distributions(self, emojis_popularity):
        assert jsd(emojis_popularity, emojis_popularity) == 0.0

    def test_disjoint_supports(self):
        p = Popularity(probs=np.array([1.0, 0.0]))
        q = Popularity(probs=np.array([0.0, 1.0]))
        assert jsd(p, q) == pytest.approx(1.0, abs=1e-12)

    @given(st.lists(st.floats(0.01, 10.0), min_size=2, max_size=8))
    @settings(max_examples=100, deadline=None)
    def test_symmetric_and_bounded(self, raw):
        a = np.array(raw)
        rng = np.random.default_rng(len(raw))
        b = rng.random(len(raw)) + 0.01
        p = Popularity(probs=a / a.sum())
        q = Popularity(probs=b / b.sum())
        assert jsd(p, q) == jsd(q, p)
        assert 0.0 <= jsd(p, q) <= 1.0

    def test_zero_iff_equal(self):
        p = Popularity(probs=np.array([0.5, 0.3, 0.2]))
        q = Popularity(probs=np.array([0.5, 0.30000001, 0.19999999]))
        assert jsd(p, p) == 0.0
        assert jsd(p, q) > 0.0


class TestPoolEntropy:
    def test_uniform_pool_of_ten(self):
        pools = block_pools(100, [10] * 6)
        p = zipf_mixture_popularity(pools, 0.0)
        assert pool_entropy(p, pools.pools[0]) == pytest.approx(math.log2(10), abs=0.005)

    def test_zipf_4_pool_of_400(self):
        pools = block_pools(2600, [400] * 6)
        p = zipf_mixture_popularity(pools, 4.0)
        assert pool_entropy(p, pools.pools[0]) == pytest.approx(0.48, abs=0.01)

    def test_point_mass(self):
        probs = np.zeros(4)
        probs[1] = 1.0
        assert pool_entropy(Popularity(probs=probs), np.array([0, 1])) == 0.0

    def test_zero_mass_pool_rejected(self):
        probs = np.array([0.0, 0.0, 0.5, 0.5])
        with pytest.raises(ConfigurationError):
            pool_entropy(Popularity(probs=probs), np.array([0, 1]))
