import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poolinfer.errors import ConfigurationError, NumericalError
from poolinfer.estimation import (
    ExternalDataset,
    estimate_frequencies,
    estimate_popularity,
    mae,
    mape_top80,
    project_to_simplex,
    sample_external_dataset,
)
from poolinfer.mechanism import MechanismConfig, cms_obfuscate_batch, hash_value
from poolinfer.population import Popularity
from poolinfer.streams import derive_stream


def make_config(epsilon=4.0, m=64, num_hashes=16, hash_seed=31):
    return MechanismConfig(variant="cms", epsilon=epsilon, m=m, num_hashes=num_hashes, hash_seed=hash_seed)


def dataset_from_objects(objects, config, rng) -> ExternalDataset:
    batch = cms_obfuscate_batch(np.asarray(objects, dtype=np.int64), config, rng)
    return ExternalDataset.from_batch(batch, config)


class TestEstimateFrequencies:
    def test_single_noiseless_record(self):
        # huge epsilon: no flips; single record of x gives estimate 1 for x
        # and -1/(m-1) for objects in other buckets
        config = make_config(epsilon=400.0, m=64, num_hashes=4, hash_seed=8)
        dataset = dataset_from_objects([2], config, derive_stream(0, "e"))
        j = int(dataset.hash_indices[0])
        est = estimate_frequencies(dataset, 4)
        assert est[2] == pytest.approx(1.0, abs=1e-9)
        for y in (0, 1, 3):
            if hash_value(j, y, config) != hash_value(j, 2, config):
                assert est[y] == pytest.approx(-1 / 63, abs=1e-9)

    @pytest.mark.parametrize("universe,m,epsilon", [(50, 32, 2.0), (100, 64, 4.0)])
    def test_unbiasedness_monte_carlo(self, universe, m, epsilon):
        # expectation is over all mechanism randomness, including the hash
        # family draw, so each repetition uses a freshly keyed family
        rng = derive_stream(1, "mc", universe)
        shape = rng.random(universe) + 0.1
        p = shape / shape.sum()
        n_records, reps = 2000, 200
        totals = np.zeros(universe)
        for rep in range(reps):
            config = make_config(epsilon=epsilon, m=m, num_hashes=8, hash_seed=1000 + rep)
            objects = rng.choice(universe, size=n_records, p=p)
            dataset = dataset_from_objects(objects, config, rng)
            totals += estimate_frequencies(dataset, universe)
        mean_est = totals / reps
        # 3-sigma acceptance on the mean of `reps` unbiased estimates; the
        # empirical per-run spread includes hash-collision variance, so the
        # bound combines the debiasing term with the multinomial term
        xi = config.flip_probabilities.xi
        per_record_var = (xi * (1 - xi)) / (1 - 2 * xi) ** 2
        se = np.sqrt(per_record_var / n_records / reps) * (m / (m - 1))
        hash_se = np.sqrt((1 / m) / (8 * reps))  # pairwise collision-rate noise
        assert np.all(np.abs(mean_est - p) <= 3 * (se + hash_se + 1.0 / np.sqrt(n_records * reps)))

    def test_consistency_single_object(self):
        config = make_config(epsilon=8.0, m=64, num_hashes=16, hash_seed=5)
        rng = derive_stream(2, "c")
        for n in (1000, 10000):
            dataset = dataset_from_objects(np.zeros(n, dtype=np.int64), config, rng)
            est = estimate_frequencies(dataset, 10)
            assert abs(est[0] - 1.0) <= 3.0 / np.sqrt(n)

    def test_ill_conditioned_epsilon_rejected(self):
        config = make_config(epsilon=1e-7)
        dataset = dataset_from_objects([0], config, derive_stream(3, "x"))
        with pytest.raises(NumericalError):
            estimate_frequencies(dataset, 4)

    def test_empty_dataset_rejected(self):
        config = make_config()
        dataset = ExternalDataset(
            hash_indices=np.empty(0, dtype=np.uint32),
            packed_bits=np.empty((0, 8), dtype=np.uint8),
            mechanism=config,
        )
        with pytest.raises(ConfigurationError):
            estimate_frequencies(dataset, 4)


class TestProjectToSimplex:
    def test_distribution_fixed_point(self):
        v = np.array([0.2, 0.5, 0.3])
        np.testing.assert_allclose(project_to_simplex(v).probs, v, atol=1e-8)

    def test_symmetric_overflow(self):
        np.testing.assert_allclose(project_to_simplex(np.array([0.6, 0.6])).probs, [0.5, 0.5], atol=1e-8)

    def test_negative_coordinate(self):
        np.testing.assert_allclose(project_to_simplex(np.array([1.5, -0.5])).probs, [1.0, 0.0], atol=1e-7)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            project_to_simplex(np.array([np.nan, 0.5]))

    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=30))
    @settings(max_examples=150, deadline=None)
    def test_output_is_distribution(self, raw):
        out = project_to_simplex(np.array(raw, dtype=np.float64))
        assert np.all(out.probs >= 0)
        assert out.probs.sum() == pytest.approx(1.0, abs=1e-9)

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        v = rng.normal(size=40)
        once = project_to_simplex(v).probs
        twice = project_to_simplex(once).probs
        np.testing.assert_allclose(once, twice, atol=1e-8)


class TestEstimatePopularity:
    def test_near_uniform_for_uniform_source(self):
        config = make_config(epsilon=8.0, m=128, num_hashes=64, hash_seed=7)
        universe = 50
        n = 200_000
        rng = derive_stream(5, "u")
        objects = rng.integers(0, universe, size=n)
        dataset = dataset_from_objects(objects, config, rng)
        p_hat = estimate_popularity(dataset, universe)
        assert np.abs(p_hat.probs - 1 / universe).max() < 5 / np.sqrt(n)

    def test_mae_decreases_with_more_records(self):
        # single-seed trend over three record counts, small universe for speed
        config = make_config(epsilon=4.0, m=256, num_hashes=256, hash_seed=9)
        universe = 200
        rng = derive_stream(6, "trend")
        shape = (np.arange(1, universe + 1, dtype=np.float64)) ** -1.2
        p = Popularity(probs=shape / shape.sum())
        errors = []
        for n_records in (10_000, 100_000, 1_000_000):
            dataset = sample_external_dataset(p, config, n_records, derive_stream(7, "ds", n_records))
            errors.append(mae(estimate_popularity(dataset, universe), p))
        assert errors[0] > errors[1] > errors[2]


class TestUtilityMetrics:
    def test_zero_error_on_equal_inputs(self):
        p = Popularity(probs=np.array([0.5, 0.3, 0.2]))
        assert mae(p, p) == 0.0
        assert mape_top80(p, p) == 0.0

    def test_top80_cutoff_is_floor(self):
        # floor(0.8 * 3) = 2 objects: differences on the third never count
        true = np.array([0.5, 0.3, 0.2])
        est = np.array([0.5, 0.3, 0.0])
        assert mape_top80(est, true) == 0.0
        est2 = np.array([0.45, 0.3, 0.25])
        assert mape_top80(est2, true) == pytest.approx(0.05 / 0.5 * 100 / 2)

    def test_tie_at_cutoff_broken_by_index(self):
        true = np.array([0.4, 0.3, 0.3])
        est = np.array([0.4, 0.3, 0.0])
        assert mape_top80(est, true) == 0.0  # kept set is {0, 1}

    def test_zero_probability_excluded_with_warning(self):
        true = np.array([0.6, 0.4, 0.0, 0.0, 0.0])
        est = np.array([0.5, 0.5, 0.0, 0.0, 0.0])
        with pytest.warns(UserWarning):
            value = mape_top80(est, true)
        assert value == pytest.approx(((0.1 / 0.6) + (0.1 / 0.4)) / 2 * 100)

    def test_nonnegative_and_zero_iff_equal(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            a = rng.random(30) + 0.01
            b = rng.random(30) + 0.01
            pa = Popularity(probs=a / a.sum())
            pb = Popularity(probs=b / b.sum())
            assert mae(pa, pb) > 0
            assert mae(pa, pa) == 0.0
