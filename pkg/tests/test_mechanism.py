import itertools
import math

import numpy as np
import pytest
from scipy import stats

from poolinfer.errors import ConfigurationError
from poolinfer.mechanism import (
    FlipProbabilities,
    MechanismConfig,
    cms_obfuscate,
    cms_obfuscate_batch,
    hadamard_entry,
    hash_value,
    hash_values,
    hcms_obfuscate,
    hcms_obfuscate_batch,
    nonprivate_obfuscate,
)
from poolinfer.oracle import hadamard_matrix
from poolinfer.streams import derive_stream


def cms_config(epsilon=4.0, m=1024, num_hashes=65536, hash_seed=1, variant="cms"):
    return MechanismConfig(variant=variant, epsilon=epsilon, m=m, num_hashes=num_hashes, hash_seed=hash_seed)


class TestConfigValidation:
    def test_rejects_nonpositive_epsilon(self):
        with pytest.raises(ConfigurationError):
            cms_config(epsilon=0.0)
        with pytest.raises(ConfigurationError):
            cms_config(epsilon=-2.0)

    def test_hcms_requires_power_of_two(self):
        with pytest.raises(ConfigurationError):
            MechanismConfig(variant="hcms", epsilon=4.0, m=1000, num_hashes=4, hash_seed=1)

    def test_apple_hcms_parameters_accepted(self):
        # deployed Hadamard parameters: m=32768, 1024 hash functions, epsilon 4
        cfg = MechanismConfig(variant="hcms", epsilon=4.0, m=32768, num_hashes=1024, hash_seed=1)
        assert cfg.m == 32768

    def test_nohash_must_match_universe(self):
        cfg = MechanismConfig(variant="nohash", epsilon=4.0, m=100, num_hashes=1)
        cfg.validate_for_universe(100)
        with pytest.raises(ConfigurationError):
            cfg.validate_for_universe(101)
        with pytest.raises(ConfigurationError):
            MechanismConfig(variant="nohash", epsilon=4.0, m=100, num_hashes=2)


class TestFlipProbabilities:
    def test_epsilon_4_values(self):
        fp = FlipProbabilities.from_epsilon(4.0)
        assert fp.xi == pytest.approx(1.0 / (1.0 + math.e**2), rel=1e-12)
        assert fp.xi == pytest.approx(0.11920292202211755, abs=1e-12)
        assert fp.xi_prime == pytest.approx(0.01798620996209156, abs=1e-12)

    @pytest.mark.parametrize("epsilon", [0.01, 0.1, 1.0, 4.0, 8.0, 50.0])
    def test_bounds(self, epsilon):
        fp = FlipProbabilities.from_epsilon(epsilon)
        assert 0.0 < fp.xi < 0.5
        assert fp.xi_prime < fp.xi


class TestHashFamily:
    def test_deterministic(self):
        cfg = cms_config(hash_seed=77)
        assert hash_value(3, 42, cfg) == hash_value(3, 42, cfg)

    def test_nohash_identity(self):
        cfg = MechanismConfig(variant="nohash", epsilon=4.0, m=100, num_hashes=1)
        assert hash_value(0, 5, cfg) == 5
        assert hash_value(0, 99, cfg) == 99

    def test_out_of_range_arguments(self):
        cfg = cms_config(num_hashes=4)
        with pytest.raises(ValueError):
            hash_value(4, 0, cfg)
        with pytest.raises(ValueError):
            hash_value(-1, 0, cfg)
        with pytest.raises(ValueError):
            hash_value(0, -3, cfg)

    def test_chi_square_uniformity(self):
        # pinned seed; statistic computed over 1e5 objects, one hash, m=1024
        cfg = cms_config(m=1024, num_hashes=1, hash_seed=1)
        buckets = hash_values(np.int64(0), np.arange(100_000), cfg)
        counts = np.bincount(buckets.astype(np.int64), minlength=1024)
        expected = 100_000 / 1024
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        assert stats.chi2.sf(chi2, 1023) > 0.001

    def test_different_hash_indices_decorrelated(self):
        cfg = cms_config(m=1024, num_hashes=8, hash_seed=9)
        a = hash_values(np.int64(0), np.arange(5000), cfg)
        b = hash_values(np.int64(1), np.arange(5000), cfg)
        collisions = (a == b).mean()
        assert abs(collisions - 1 / 1024) < 5 / np.sqrt(5000) / 32  # ~binomial noise


class TestCmsObfuscate:
    def test_zero_flip_limit_is_one_hot(self):
        cfg = cms_config(epsilon=200.0, m=64, num_hashes=4, hash_seed=3)
        rng = derive_stream(0, "t")
        obs = cms_obfuscate(11, cfg, rng)
        assert obs.bits.sum() == 1
        assert obs.bits[hash_value(obs.hash_index, 11, cfg)] == 1

    def test_monte_carlo_flip_frequency(self):
        # one hash function so the bucket is fixed, m=4, 1e5 runs
        cfg = cms_config(epsilon=4.0, m=4, num_hashes=1, hash_seed=5)
        xi = cfg.flip_probabilities.xi
        rng = derive_stream(1, "mc")
        batch = cms_obfuscate_batch(np.zeros(100_000, dtype=np.int64), cfg, rng)
        bucket = hash_value(0, 0, cfg)
        flipped = batch.bits.astype(float)
        flipped[:, bucket] = 1.0 - flipped[:, bucket]
        freq = flipped.mean(axis=0)
        se = math.sqrt(xi * (1 - xi) / 100_000)
        assert np.all(np.abs(freq - xi) <= 3 * se)

    def test_other_positions_set_with_probability_xi(self):
        cfg = cms_config(epsilon=2.0, m=8, num_hashes=1, hash_seed=6)
        xi = cfg.flip_probabilities.xi
        batch = cms_obfuscate_batch(np.zeros(50_000, dtype=np.int64), cfg, derive_stream(2, "mc"))
        bucket = hash_value(0, 0, cfg)
        others = np.delete(np.arange(8), bucket)
        freq = batch.bits[:, others].mean(axis=0)
        se = math.sqrt(xi * (1 - xi) / 50_000)
        assert np.all(np.abs(freq - xi) <= 3 * se)

    def test_wrong_variant_rejected(self):
        cfg = MechanismConfig(variant="hcms", epsilon=4.0, m=64, num_hashes=4, hash_seed=1)
        with pytest.raises(ConfigurationError):
            cms_obfuscate(0, cfg, derive_stream(0, "x"))

    def test_determinism(self):
        cfg = cms_config(m=32, num_hashes=8, hash_seed=4)
        a = cms_obfuscate_batch(np.arange(20), cfg, derive_stream(9, "s"))
        b = cms_obfuscate_batch(np.arange(20), cfg, derive_stream(9, "s"))
        assert np.array_equal(a.hash_indices, b.hash_indices)
        assert np.array_equal(a.bits, b.bits)


class TestHcmsObfuscate:
    def test_row_zero_always_plus_one_at_high_epsilon(self):
        cfg = MechanismConfig(variant="hcms", epsilon=200.0, m=16, num_hashes=4, hash_seed=2)
        batch = hcms_obfuscate_batch(np.arange(200) % 10, cfg, derive_stream(3, "h"))
        at_zero = batch.bits[batch.coord_indices == 0]
        assert at_zero.size > 0 and np.all(at_zero == 1)

    def test_epsilon_4_flip_rate(self):
        cfg = MechanismConfig(variant="hcms", epsilon=4.0, m=8, num_hashes=1, hash_seed=2)
        xi_prime = cfg.flip_probabilities.xi_prime
        batch = hcms_obfuscate_batch(np.zeros(100_000, dtype=np.int64), cfg, derive_stream(4, "h"))
        bucket = hash_value(0, 0, cfg)
        expected = np.array([hadamard_entry(int(l), bucket, 3) for l in batch.coord_indices])
        flip_rate = (batch.bits != expected).mean()
        se = math.sqrt(xi_prime * (1 - xi_prime) / 100_000)
        assert abs(flip_rate - xi_prime) <= 3 * se

    def test_wrong_variant_rejected(self):
        with pytest.raises(ConfigurationError):
            hcms_obfuscate(0, cms_config(), derive_stream(0, "x"))


class TestHadamard:
    def test_base_case(self):
        assert hadamard_entry(0, 0, 0) == 1

    def test_s1_entries(self):
        assert hadamard_entry(0, 0, 1) == 1
        assert hadamard_entry(0, 1, 1) == 1
        assert hadamard_entry(1, 0, 1) == 1
        assert hadamard_entry(1, 1, 1) == -1

    @pytest.mark.parametrize("s", [0, 1, 2, 3, 4])
    def test_parity_formula_matches_recursion(self, s):
        recursive = hadamard_matrix(s)
        size = 1 << s
        parity = np.array([[hadamard_entry(r, c, s) for c in range(size)] for r in range(size)])
        assert np.array_equal(parity, recursive)

    @pytest.mark.parametrize("s", [1, 2, 3, 4])
    def test_rows_orthogonal(self, s):
        size = 1 << s
        h = np.array([[hadamard_entry(r, c, s) for c in range(size)] for r in range(size)])
        gram = h @ h.T
        assert np.array_equal(gram, size * np.eye(size, dtype=np.int64))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            hadamard_entry(2, 0, 1)


class TestNonPrivate:
    def test_identity(self):
        assert nonprivate_obfuscate(7).object_id == 7

    def test_sequence_preserved(self):
        objs = [3, 1, 4, 1, 5]
        assert [nonprivate_obfuscate(x).object_id for x in objs] == objs


def _cms_output_probability(bits: np.ndarray, x: int, j: int, cfg: MechanismConfig) -> float:
    """Pr[bits | x, j] from the flip model, literally."""
    xi = cfg.flip_probabilities.xi
    one_hot = np.zeros(cfg.m, dtype=np.int64)
    one_hot[hash_value(j, x, cfg)] = 1
    d = int(np.abs(one_hot - bits).sum())
    return (xi**d) * ((1 - xi) ** (cfg.m - d))


@pytest.mark.parametrize("epsilon", [1.0, 4.0])
def test_ldp_ratio_bound_cms(epsilon):
    # exhaustive over all 2^m outputs, hash indices, and input pairs
    cfg = cms_config(epsilon=epsilon, m=4, num_hashes=2, hash_seed=11)
    universe = range(6)
    worst = 0.0
    for bits_tuple in itertools.product([0, 1], repeat=4):
        bits = np.array(bits_tuple, dtype=np.int64)
        for j in range(2):
            probs = [_cms_output_probability(bits, x, j, cfg) for x in universe]
            worst = max(worst, max(probs) / min(probs))
    assert worst <= math.exp(epsilon) + 1e-12


@pytest.mark.parametrize("epsilon", [1.0, 4.0])
def test_ldp_ratio_bound_hcms(epsilon):
    cfg = MechanismConfig(variant="hcms", epsilon=epsilon, m=4, num_hashes=2, hash_seed=11)
    xi_prime = cfg.flip_probabilities.xi_prime
    worst = 0.0
    for j in range(2):
        for l in range(4):
            for bit in (1, -1):
                probs = []
                for x in range(6):
                    sign = hadamard_entry(l, hash_value(j, x, cfg), 2)
                    probs.append((1 - xi_prime) if sign == bit else xi_prime)
                worst = max(worst, max(probs) / min(probs))
    assert worst <= math.exp(epsilon) + 1e-12
