import math

import numpy as np
import pytest

from shiftnoise import noise
from shiftnoise.domains import (
    DomainSpec,
    NoisyDataset,
    mislabel_rate_closed_form,
    sample_domain,
)
from shiftnoise.errors import SpecError
from shiftnoise.noise import (
    FLIP_NONE,
    RegionRSpec,
    annotate_with_source,
    flip_margin,
    flip_symmetric,
    in_r1_ball,
    match_noise_rate,
    posterior_true_class,
    r1_ball_radius,
    r2_paper_halfspace,
    region_R_membership,
    region_R_nonempty_condition,
)

LOG99 = math.log(99.0)


def convention_spec(d=100, sigma=1.0, alpha=0.2):
    """mu2 = mu1 + sigma * ones, shift alpha along the pair direction."""
    mu1 = np.zeros(d)
    mu2 = mu1 + sigma * np.ones(d)
    return DomainSpec(mu1, mu2, sigma, alpha * (mu2 - mu1))


class TestSourceAnnotation:
    def test_hand_example(self):
        # x = 0.4 truly from the shifted first component gets h_S = -0.8 < 0.
        spec = DomainSpec([-1.0], [1.0], 1.0, [1.0])
        ds = NoisyDataset(np.array([[0.4]]), [1], [1])
        out = annotate_with_source(ds, spec)
        assert out.y_noisy[0] == -1 and bool(out.noise_mask[0])

    def test_no_shift_tiny_sigma_clean(self):
        spec = DomainSpec([-1.0], [1.0], 1e-2, [0.0])
        data = sample_domain(spec, "target", 5000, seed=0)
        assert annotate_with_source(data, spec).noise_rate == 0.0

    def test_rate_matches_closed_form(self):
        spec = DomainSpec([-1.0], [1.0], 1.0, [0.6])
        data = sample_domain(spec, "target", 1_000_000, seed=31)
        rate = annotate_with_source(data, spec).noise_rate
        p = mislabel_rate_closed_form(spec)
        assert abs(rate - p) <= 3.0 * math.sqrt(p * (1 - p) / data.n)

    def test_requires_binary_labels(self):
        ds = NoisyDataset(np.zeros((2, 1)), [0, 1], [0, 1], label_set=(0, 1))
        with pytest.raises(SpecError):
            annotate_with_source(ds, DomainSpec([-1.0], [1.0], 1.0, [0.0]))


class TestMarginFlip:
    def make(self, n=10_000, d=3, sigma=1.0, seed=0):
        rng = np.random.default_rng(seed)
        y = rng.choice([-1, 1], size=n)
        mu = np.zeros(d)
        mu[0] = 1.0
        X = y[:, None] * mu + sigma * rng.normal(size=(n, d))
        return NoisyDataset(X, y, y), mu

    def test_flip_none_sentinel(self):
        ds, mu = self.make()
        assert flip_margin(ds, mu, FLIP_NONE).noise_rate == 0.0

    def test_boundary_is_flipped(self):
        # margin exactly r flips: the indicator is a strict inequality.
        mu = np.array([1.0, 0.0])
        ds = NoisyDataset(np.array([[0.5, 0.0], [0.6, 0.0]]), [1, 1], [1, 1])
        out = flip_margin(ds, mu, 0.5)
        assert out.noise_mask.tolist() == [True, False]

    def test_unbounded_by_construction(self):
        ds, mu = self.make(seed=5)
        out = flip_margin(ds, mu, 0.3)
        margin = ds.y_clean * (ds.features @ mu)
        assert np.all(out.noise_mask[margin <= 0.3])
        assert not np.any(out.noise_mask[margin > 0.3])

    def test_flip_fraction_matches_gaussian(self):
        from shiftnoise.special import normal_cdf

        ds, mu = self.make(n=1_000_000, sigma=1.0, seed=6)
        out = flip_margin(ds, mu, 0.5)
        p = normal_cdf((0.5 - 1.0) / 1.0)
        assert abs(out.noise_rate - p) <= 3.0 * math.sqrt(p * (1 - p) / ds.n)

    def test_rejects_non_unit_mu(self):
        ds, mu = self.make(n=10)
        with pytest.raises(SpecError):
            flip_margin(ds, 2.0 * mu, 0.5)


class TestSymmetricFlip:
    def test_identity_at_zero(self):
        ds = NoisyDataset(np.zeros((50, 1)), np.zeros(50, dtype=int),
                          np.zeros(50, dtype=int), label_set=(0, 1, 2))
        assert flip_symmetric(ds, 0.0, 3, seed=0).noise_rate == 0.0

    def test_rate_binary(self):
        n = 1_000_000
        ds = NoisyDataset(np.zeros((n, 1)), np.ones(n, dtype=int),
                          np.ones(n, dtype=int), label_set=(-1, 1))
        out = flip_symmetric(ds, 0.4, 2, seed=1)
        assert abs(out.noise_rate - 0.4) <= 3.0 * math.sqrt(0.4 * 0.6 / n)

    def test_rejects_unbounded_rate(self):
        ds = NoisyDataset(np.zeros((5, 1)), np.ones(5, dtype=int),
                          np.ones(5, dtype=int), label_set=(-1, 1))
        with pytest.raises(SpecError):
            flip_symmetric(ds, 0.6, 2, seed=0)  # 1 - 1/K = 0.5

    def test_true_class_stays_most_probable(self):
        # eta < 1 - 1/K iff 1 - eta > eta/(K-1); enforced by the precondition.
        for K in (2, 5, 10):
            eta = 1.0 - 1.0 / K - 1e-9
            assert 1.0 - eta > eta / (K - 1)

    def test_multiclass_rate_and_uniformity(self):
        n = 200_000
        K = 5
        ds = NoisyDataset(np.zeros((n, 1)), np.full(n, 2), np.full(n, 2),
                          label_set=tuple(range(K)))
        out = flip_symmetric(ds, 0.5, K, seed=3)
        assert abs(out.noise_rate - 0.5) <= 3.0 * math.sqrt(0.25 / n)
        wrong = out.y_noisy[out.noise_mask]
        counts = np.bincount(wrong, minlength=K).astype(float)
        assert counts[2] == 0
        others = counts[[0, 1, 3, 4]]
        assert others.max() - others.min() < 5.0 * math.sqrt(others.mean())


class TestMatchNoiseRate:
    def test_identity_on_clean(self):
        ds = NoisyDataset(np.zeros((10, 1)), np.arange(10) % 3, np.arange(10) % 3,
                          label_set=(0, 1, 2))
        out = match_noise_rate(ds, seed=0)
        np.testing.assert_array_equal(out.y_noisy, ds.y_noisy)

    def test_relabels_only_mislabeled(self):
        rng = np.random.default_rng(8)
        y = rng.integers(0, 5, size=5000)
        yn = y.copy()
        yn[:1000] = (y[:1000] + 1) % 5
        ds = NoisyDataset(np.zeros((5000, 1)), y, yn, label_set=tuple(range(5)))
        out = match_noise_rate(ds, seed=9)
        np.testing.assert_array_equal(out.y_noisy[1000:], yn[1000:])
        assert np.all(out.y_noisy[:1000] != yn[:1000])  # never keeps the old label

    def test_back_to_true_fraction(self):
        # Uniform over the K-1 classes other than the current label: a
        # previously-mislabeled sample returns to its true class w.p. 1/(K-1).
        n = 40_000
        K = 5
        y = np.zeros(n, dtype=int)
        yn = np.ones(n, dtype=int)  # all mislabeled to class 1
        ds = NoisyDataset(np.zeros((n, 1)), y, yn, label_set=tuple(range(K)))
        out = match_noise_rate(ds, seed=10)
        back = float(np.mean(out.y_noisy == 0))
        assert abs(back - 0.25) <= 3.0 * math.sqrt(0.25 * 0.75 / n)
        assert out.noise_rate == pytest.approx(1.0 - back)


class TestRegionR:
    def test_nonempty_threshold_values(self):
        spec = convention_spec(d=100, alpha=0.2)
        rspec = RegionRSpec(0.01, spec)
        assert rspec.log_odds_threshold == pytest.approx(LOG99)
        assert region_R_nonempty_condition(rspec)
        barely = RegionRSpec(0.01, convention_spec(d=100, alpha=0.04))
        assert not region_R_nonempty_condition(barely)  # 0.04 < log(99)/100

    def test_delta_half_threshold_zero(self):
        rspec = RegionRSpec(0.5, convention_spec(d=10, alpha=1e-6))
        assert region_R_nonempty_condition(rspec)

    def test_orthogonal_shift_fails_condition(self):
        d = 10
        mu1 = np.zeros(d)
        mu2 = np.ones(d)
        orth = np.zeros(d)
        orth[0], orth[1] = 1.0, -1.0
        spec = DomainSpec(mu1, mu2, 1.0, orth)
        assert not region_R_nonempty_condition(RegionRSpec(0.01, spec))

    def test_ball_radius_and_emptiness(self):
        r4 = r1_ball_radius(RegionRSpec(0.01, convention_spec(d=4)))
        assert r4 == pytest.approx(1.0 - LOG99 / 2.0)
        assert r4 < 0
        x = convention_spec(d=4).mu1 + convention_spec(d=4).delta
        assert not in_r1_ball(x, RegionRSpec(0.01, convention_spec(d=4)))
        r100 = r1_ball_radius(RegionRSpec(0.01, convention_spec(d=100)))
        assert r100 == pytest.approx(5.0 - LOG99 / 10.0)

    def test_ball_center_membership(self):
        spec = convention_spec(d=100)
        rspec = RegionRSpec(0.01, spec)
        center = spec.mu1 + spec.delta
        assert in_r1_ball(center, rspec)
        member = region_R_membership(center, rspec)
        assert member.in_R1  # the ball center is confidently first-component

    def test_ball_subset_of_confident_region(self):
        # Every point of the ball satisfies the posterior condition; the
        # sphere's far pole along the pair direction is exactly tangent.
        spec = convention_spec(d=100)
        rspec = RegionRSpec(0.01, spec)
        radius = r1_ball_radius(rspec)
        center = spec.mu1 + spec.delta
        direction = spec.separation / np.linalg.norm(spec.separation)
        rng = np.random.default_rng(14)
        for _ in range(200):
            u = rng.normal(size=spec.d)
            u /= np.linalg.norm(u)
            x = center + radius * float(rng.uniform(0, 1)) * u
            assert region_R_membership(x, rspec).in_R1
        pole = center + radius * direction
        assert posterior_true_class(pole, spec) == pytest.approx(0.99, abs=1e-9)

    def test_paper_halfspace_equals_generalized_r2(self):
        spec = convention_spec(d=50, alpha=0.3)
        rspec = RegionRSpec(0.01, spec)
        X = spec.mu1 + np.random.default_rng(15).normal(size=(500, 50))
        member = region_R_membership(X, rspec)
        np.testing.assert_array_equal(member.in_R2, r2_paper_halfspace(X, rspec))

    def test_region_witness_monte_carlo(self):
        spec = convention_spec(d=100, alpha=0.2)
        rspec = RegionRSpec(0.01, spec)
        data = sample_domain(spec, "target", 200_000, seed=16)
        annotated = annotate_with_source(data, spec)
        member = region_R_membership(data.features, rspec)
        in_r = np.asarray(member.in_R)
        count = int(in_r.sum())
        assert count >= 80
        # Every region point is assigned the second component yet carries
        # >= 1 - delta posterior for the first.
        assert np.all(np.asarray(member.in_R2)[in_r])
        post = posterior_true_class(data.features[in_r], spec)
        assert np.all(post >= 0.99 - 1e-12)
        p = float(annotated.noise_mask[in_r].mean())
        assert p >= 0.99 - 3.0 * math.sqrt(0.99 * 0.01 / count)

    def test_region_mass_monotone_in_alpha(self):
        counts = []
        for alpha in (0.05, 0.1, 0.2, 0.4):
            spec = convention_spec(d=100, alpha=alpha)
            data = sample_domain(spec, "target", 100_000, seed=17)
            member = region_R_membership(data.features, RegionRSpec(0.01, spec))
            counts.append(int(np.asarray(member.in_R).sum()))
        assert all(b >= a for a, b in zip(counts, counts[1:]))


class TestPosterior:
    def test_equidistant_point(self):
        spec = DomainSpec([-1.0, 0.0], [1.0, 0.0], 1.0, [0.3, 0.7])
        x = (spec.mu1 + spec.mu2) / 2.0 + spec.delta
        assert posterior_true_class(x, spec) == pytest.approx(0.5, abs=1e-12)

    def test_density_ratio_identity(self):
        # Stepping m0 * sigma * ones down from the boundary point multiplies
        # the class ratio by exp(m0 d); at m0 = 0.05, d = 100 that is e^5.
        spec = convention_spec(d=100, alpha=0.2)
        x0 = (spec.mu1 + spec.mu2) / 2.0 + spec.delta
        x1 = x0 - 0.05 * spec.sigma * np.ones(100)
        post = posterior_true_class(x1, spec)
        ratio = post / (1.0 - post)
        assert ratio == pytest.approx(math.exp(5.0), rel=1e-9)

    def test_hand_value_at_shifted_mean(self):
        spec = DomainSpec([-1.0], [1.0], 1.0, [0.4])
        x = spec.mu1 + spec.delta
        assert posterior_true_class(x, spec) == pytest.approx(
            1.0 / (1.0 + math.exp(-2.0)), abs=1e-12
        )

    def test_stable_at_large_d(self):
        spec = convention_spec(d=400, alpha=0.2)
        x = spec.mu1 + spec.delta
        post = posterior_true_class(x, spec)
        assert 0.0 < post <= 1.0 and np.isfinite(post)


class TestNoiseConfig:
    def test_round_trip_and_dispatch(self):
        from shiftnoise.noise import NoiseConfig
        from shiftnoise.domains import DomainSpec, sample_domain

        spec = DomainSpec([-1.0], [1.0], 1.0, [0.6])
        data = sample_domain(spec, "target", 5000, seed=2)
        for obj in (
            {"kind": "source_model"},
            {"kind": "margin_flip", "r": 0.5},
            {"kind": "symmetric", "eta": 0.3, "K": 2, "seed": 4},
        ):
            nc = NoiseConfig.from_json(obj)
            assert NoiseConfig.from_json(nc.to_json()) == nc
            out = nc.apply(data, spec=spec)
            assert out.n == data.n

    def test_rejects_bad_configs(self):
        from shiftnoise.noise import NoiseConfig

        with pytest.raises(SpecError):
            NoiseConfig.from_json({"kind": "margin_flip"})  # r missing
        with pytest.raises(SpecError):
            NoiseConfig.from_json({"kind": "symmetric", "eta": 0.6, "K": 2})
        with pytest.raises(SpecError):
            NoiseConfig.from_json({"kind": "weird"})

    def test_source_model_needs_spec(self):
        from shiftnoise.noise import NoiseConfig
        from shiftnoise.domains import DomainSpec, sample_domain

        spec = DomainSpec([-1.0], [1.0], 1.0, [0.0])
        data = sample_domain(spec, "target", 100, seed=0)
        with pytest.raises(SpecError):
            NoiseConfig.from_json({"kind": "source_model"}).apply(data)


class TestAnnotateRegion:
    def test_fills_membership_mask(self):
        spec = convention_spec(d=100, alpha=0.2)
        rspec = RegionRSpec(0.01, spec)
        data = sample_domain(spec, "target", 20_000, seed=4)
        out = noise.annotate_region(data, rspec)
        assert out.in_region_R is not None
        member = region_R_membership(data.features, rspec)
        np.testing.assert_array_equal(out.in_region_R, np.asarray(member.in_R))
        with pytest.raises(ValueError):
            out.in_region_R[0] = True  # frozen like every other array
