import numpy as np
import pytest

from caliblab.datasets import (
    GaussianPairSpec,
    IntervalSpec,
    LabeledDataset,
    gaussian_posterior,
    inject_label_noise,
    interval_posterior,
    load_dataset,
    NoisePlan,
    random_noise_plan,
    sample_gaussians,
    sample_intervals,
    save_dataset,
)
from caliblab.errors import NoisePlanError, OutOfSupportError, ParameterError


class TestIntervalSpec:
    def test_supports_k2_alpha1(self):
        """k=2, alpha=1: class 1 on [0,1], class 2 on [1,2]."""
        spec = IntervalSpec(k=2, alpha=1.0)
        assert spec.class_interval(1) == (0.0, 1.0)
        assert spec.class_interval(2) == (1.0, 2.0)

    def test_supports_k4_alpha_half(self):
        """k=4, alpha=0.5: support starts at (0, 0.5, 4, 4.5)."""
        spec = IntervalSpec(k=4, alpha=0.5)
        np.testing.assert_allclose(spec.support_starts(), [0.0, 0.5, 4.0, 4.5])

    def test_overlap_interval(self):
        spec = IntervalSpec(k=4, alpha=0.5)
        assert spec.overlap_interval(1) == (0.5, 1.0)
        assert spec.overlap_interval(3) == (4.5, 5.0)
        with pytest.raises(ParameterError):
            spec.overlap_interval(2)

    @pytest.mark.parametrize("k,alpha", [(3, 0.5), (0, 0.5), (4, -0.1), (4, 1.5)])
    def test_invalid_spec_rejected(self, k, alpha):
        with pytest.raises(ParameterError):
            IntervalSpec(k=k, alpha=alpha)


class TestSampleIntervals:
    def test_samples_stay_in_class_supports(self):
        spec = IntervalSpec(k=4, alpha=0.5)
        data = sample_intervals(spec, 2000, seed=3)
        starts = spec.support_starts()
        x = data.points[:, 0]
        lo = starts[data.labels - 1]
        assert np.all(x >= lo) and np.all(x <= lo + 1.0)

    def test_overlap_mass_matches_width(self):
        """Fraction of class-1 points in the overlap converges to 1 - alpha."""
        spec = IntervalSpec(k=10, alpha=0.2)
        data = sample_intervals(spec, 10**5, seed=11)
        x = data.points[data.labels == 1, 0]
        frac = np.mean((x >= 0.2) & (x <= 1.0))
        assert abs(frac - 0.8) < 0.01

    def test_deterministic_given_seed(self):
        spec = IntervalSpec(k=6, alpha=0.3)
        a = sample_intervals(spec, 500, seed=9)
        b = sample_intervals(spec, 500, seed=9)
        np.testing.assert_array_equal(a.points, b.points)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_rejects_empty(self):
        with pytest.raises(ParameterError):
            sample_intervals(IntervalSpec(k=2, alpha=0.5), 0, seed=0)


class TestIntervalPosterior:
    def test_one_hot_in_exclusive_region(self):
        spec = IntervalSpec(k=4, alpha=0.5)
        post = interval_posterior(spec, 0.25)
        np.testing.assert_allclose(post, [1.0, 0.0, 0.0, 0.0])

    def test_half_half_in_overlap(self):
        spec = IntervalSpec(k=4, alpha=0.5)
        post = interval_posterior(spec, 0.75)
        np.testing.assert_allclose(post, [0.5, 0.5, 0.0, 0.0])

    def test_out_of_support_raises(self):
        spec = IntervalSpec(k=4, alpha=0.5)
        with pytest.raises(OutOfSupportError):
            interval_posterior(spec, 2.7)

    def test_valid_probability_vector_everywhere(self):
        """In-support posteriors are simplex vectors with 1 or 2 nonzeros."""
        spec = IntervalSpec(k=6, alpha=0.4)
        data = sample_intervals(spec, 5000, seed=21)
        post = spec.posterior_batch(data.points)
        assert np.all(post >= 0)
        np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-12)
        nonzero = (post > 0).sum(axis=1)
        assert set(np.unique(nonzero)) <= {1, 2}


class TestGaussians:
    def test_paper_scale_sampling(self):
        spec = GaussianPairSpec.constant(0.25, 300)
        data = sample_gaussians(spec, 4000, seed=0)
        assert data.points.shape == (4000, 300)
        assert set(np.unique(data.labels)) == {1, 2}

    def test_class2_mean_law_of_large_numbers(self):
        # ~5e4 class-2 draws give a per-coordinate standard error of 0.0045,
        # so the typical (rms) deviation sits well under 0.01 while the max
        # over 300 coordinates concentrates near 3.4 standard errors.
        spec = GaussianPairSpec.constant(0.05, 300)
        data = sample_gaussians(spec, 10**5, seed=5)
        dev = np.abs(data.points[data.labels == 2].mean(axis=0) - 0.05)
        assert np.sqrt(np.mean(dev**2)) < 0.01
        assert dev.max() < 0.02

    def test_zero_shift_is_symmetric(self):
        """mu = 0 makes the two classes identical; posterior is (1/2, 1/2)."""
        spec = GaussianPairSpec(np.zeros(7))
        post = gaussian_posterior(spec, np.ones(7))
        np.testing.assert_allclose(post, [0.5, 0.5])

    def test_posterior_midpoint(self):
        spec = GaussianPairSpec(np.array([1.0, -2.0, 0.5]))
        post = gaussian_posterior(spec, spec.mu / 2)
        np.testing.assert_allclose(post, [0.5, 0.5], atol=1e-14)

    def test_posterior_at_origin(self):
        spec = GaussianPairSpec(np.array([0.3, 0.4]))
        expected_p2 = 1.0 / (1.0 + np.exp(0.5 * 0.25))
        post = gaussian_posterior(spec, np.zeros(2))
        np.testing.assert_allclose(post[1], expected_p2, rtol=1e-14)

    def test_posterior_matches_density_ratio(self):
        """Closed form agrees with the direct density-ratio oracle to 1e-12."""
        rng = np.random.default_rng(7)
        for dim in (1, 5, 20):
            spec = GaussianPairSpec(rng.normal(size=dim) * 0.5)
            x = rng.normal(size=(10**4, dim)) + rng.choice([0, 1], size=(10**4, 1)) * spec.mu
            phi0 = np.exp(-0.5 * np.sum(x**2, axis=1))
            phi1 = np.exp(-0.5 * np.sum((x - spec.mu) ** 2, axis=1))
            oracle = phi1 / (phi0 + phi1)
            post = spec.posterior_batch(x)
            np.testing.assert_allclose(post[:, 1], oracle, atol=1e-12)

    def test_deterministic_given_seed(self):
        spec = GaussianPairSpec.constant(0.1, 10)
        a = sample_gaussians(spec, 100, seed=2)
        b = sample_gaussians(spec, 100, seed=2)
        np.testing.assert_array_equal(a.points, b.points)
        np.testing.assert_array_equal(a.labels, b.labels)


class TestLabelNoise:
    def _dataset(self, n=1000, k=4, seed=0):
        return sample_intervals(IntervalSpec(k=k, alpha=0.5), n, seed=seed)

    def test_rate_zero_is_identity(self):
        data = self._dataset()
        plan = NoisePlan(pairing={1: 2, 2: 1, 3: 4, 4: 3}, rate=0.0)
        noisy = inject_label_noise(data, plan, seed=1)
        np.testing.assert_array_equal(noisy.labels, data.labels)
        np.testing.assert_array_equal(noisy.points, data.points)

    def test_rate_one_flips_everything(self):
        data = self._dataset()
        plan = NoisePlan(pairing={1: 3, 2: 4, 3: 1, 4: 2}, rate=1.0)
        noisy = inject_label_noise(data, plan, seed=1)
        expected = np.array([plan.pairing[c] for c in data.labels])
        np.testing.assert_array_equal(noisy.labels, expected)

    def test_flip_fraction_concentrates(self):
        data = self._dataset(n=10**5, seed=3)
        plan = NoisePlan(pairing={1: 2, 2: 1, 3: 4, 4: 3}, rate=0.25)
        noisy = inject_label_noise(data, plan, seed=4)
        flipped = np.mean(noisy.labels != data.labels)
        assert abs(flipped - 0.25) < 0.005

    def test_per_class_confusion(self):
        """P(observed = pairing(y) | true = y) = rate for every class."""
        data = self._dataset(n=10**5, seed=6)
        plan = NoisePlan(pairing={1: 2, 2: 1, 3: 4, 4: 3}, rate=0.25)
        noisy = inject_label_noise(data, plan, seed=7)
        for y in range(1, 5):
            mask = data.labels == y
            rate = np.mean(noisy.labels[mask] == plan.pairing[y])
            assert abs(rate - 0.25) < 0.005

    def test_missing_class_in_pairing(self):
        data = self._dataset()
        with pytest.raises(NoisePlanError):
            inject_label_noise(data, NoisePlan(pairing={1: 2, 2: 1}, rate=0.1), seed=0)

    def test_invalid_plans_rejected(self):
        with pytest.raises(ParameterError):
            NoisePlan(pairing={1: 1, 2: 3}, rate=0.1)
        with pytest.raises(ParameterError):
            NoisePlan(pairing={1: 3, 2: 3}, rate=0.1)
        with pytest.raises(ParameterError):
            NoisePlan(pairing={1: 2, 2: 1}, rate=1.5)

    def test_random_plan_is_a_derangement(self):
        classes = list(range(1, 11))
        plan = random_noise_plan(classes, rate=0.5, seed=13)
        assert sorted(plan.pairing) == classes
        assert all(plan.pairing[y] != y for y in classes)
        assert sorted(plan.pairing.values()) == classes
        again = random_noise_plan(classes, rate=0.5, seed=13)
        assert again.pairing == plan.pairing


class TestSerialization:
    def test_round_trip(self, tmp_path):
        data = sample_gaussians(GaussianPairSpec.constant(0.2, 3), 50, seed=8)
        path = tmp_path / "data.csv"
        save_dataset(data, path)
        loaded = load_dataset(path)
        np.testing.assert_array_equal(loaded.points, data.points)
        np.testing.assert_array_equal(loaded.labels, data.labels)
        assert loaded.n_classes == data.n_classes
        assert loaded.seed == data.seed

    def test_header_format(self, tmp_path):
        data = sample_intervals(IntervalSpec(k=4, alpha=0.5), 10, seed=42)
        path = tmp_path / "data.csv"
        save_dataset(data, path)
        header = path.read_text().splitlines()[0]
        assert header == "1,4,10,42"

    def test_dataset_invariants(self):
        with pytest.raises(ParameterError):
            LabeledDataset(points=np.zeros((3, 1)), labels=np.array([1, 2]), n_classes=2, seed=0)
        with pytest.raises(ParameterError):
            LabeledDataset(points=np.zeros((2, 1)), labels=np.array([1, 3]), n_classes=2, seed=0)
