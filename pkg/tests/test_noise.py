import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracwave import (ConfigurationError, NoiseConfig, build_joint_covariance,
                      coarsen, covariance_bruteforce, cross_cov, dump_bundle,
                      fbm_covariance, increment_cov, joint_cholesky,
                      load_bundle, mode_amplitudes, sample_bundle,
                      trajectory_seed, weighted_cov_diag, weighted_cov_offdiag)


class TestClosedForms:
    def test_fbm_covariance_examples(self):
        for hurst in (0.5, 0.6, 0.75, 0.9):
            assert fbm_covariance(1.0, 1.0, hurst) == pytest.approx(1.0)
        assert fbm_covariance(2.0, 1.0, 0.75) == pytest.approx(np.sqrt(2.0), rel=1e-12)
        for t, s in [(0.3, 0.9), (2.0, 1.5)]:
            assert fbm_covariance(t, s, 0.5) == pytest.approx(min(t, s), rel=1e-12)

    def test_weighted_diag_examples(self):
        tau = 0.37
        assert weighted_cov_diag(tau, 0.5) == pytest.approx(tau ** 3 / 3.0, rel=1e-14)
        assert weighted_cov_diag(0.1, 0.75) == pytest.approx(0.1 ** 3.5 / 3.5, rel=1e-14)
        assert weighted_cov_diag(0.1, 0.75) == pytest.approx(9.035079e-05, rel=1e-6)
        assert weighted_cov_diag(1.0, 0.6) == pytest.approx(0.3125, rel=1e-14)

    def test_weighted_offdiag_white_is_zero(self):
        assert weighted_cov_offdiag(3, 1, 0.2, 0.5) == 0.0

    def test_weighted_offdiag_vs_bruteforce(self):
        tau, hurst = 0.5, 0.75
        expect = covariance_bruteforce((tau, 2 * tau), (0.0, tau), "ramp", "ramp", hurst)
        assert weighted_cov_offdiag(1, 0, tau, hurst) == pytest.approx(expect, rel=1e-8)

    def test_weighted_offdiag_decreases_with_lag(self):
        vals = [abs(weighted_cov_offdiag(q, 0, 0.3, 0.75)) for q in range(1, 11)]
        assert all(a > b for a, b in zip(vals[:-1], vals[1:]))

    def test_cross_white_cases(self):
        tau = 0.4
        assert cross_cov(0, 0, tau, 0.5) == pytest.approx(tau ** 2 / 2.0, rel=1e-14)
        assert cross_cov(2, 0, tau, 0.5) == 0.0
        assert cross_cov(0, 2, tau, 0.5) == 0.0


class TestBruteforce:
    def test_same_interval_increment_variance(self):
        for hurst in (0.6, 0.75, 0.9):
            tau = 0.5
            got = covariance_bruteforce((0.0, tau), (0.0, tau), "one", "one", hurst)
            assert got == pytest.approx(tau ** (2 * hurst), rel=1e-7)

    def test_weighted_diag_consistency(self):
        got = covariance_bruteforce((0.0, 0.5), (0.0, 0.5), "ramp", "ramp", 0.75,
                                    substeps=2000)
        assert got == pytest.approx(weighted_cov_diag(0.5, 0.75), rel=1e-6)

    def test_disjoint_unit_intervals(self):
        # closed form: ((3^{1.5} - 2 * 2^{1.5} + 1) / 2)
        expect = 0.5 * (3.0 ** 1.5 - 2.0 * 2.0 ** 1.5 + 1.0)
        got = covariance_bruteforce((0.0, 1.0), (2.0, 3.0), "one", "one", 0.75)
        assert got == pytest.approx(expect, rel=1e-7)
        assert expect == pytest.approx(0.26965, abs=5e-6)

    def test_white_rejected(self):
        with pytest.raises(ValueError):
            covariance_bruteforce((0.0, 1.0), (0.0, 1.0), "one", "one", 0.5)

    def test_bad_arguments(self):
        with pytest.raises(ConfigurationError):
            covariance_bruteforce((0.0, 1.0), (0.0, 1.0), "one", "one", 0.75, substeps=10)
        with pytest.raises(ConfigurationError):
            covariance_bruteforce((0.0, 1.0), (0.0, 1.0), "box", "one", 0.75)

    @pytest.mark.parametrize("hurst", [0.6, 0.75, 0.9])
    @pytest.mark.parametrize("tau", [0.1, 0.5])
    def test_cross_forms_vs_bruteforce(self, hurst, tau):
        for j, k in [(0, 0), (1, 0), (3, 0), (0, 1), (1, 3)]:
            a = (j * tau, (j + 1) * tau)
            b = (k * tau, (k + 1) * tau)
            got = covariance_bruteforce(a, b, "one", "ramp", hurst)
            assert cross_cov(j, k, tau, hurst) == pytest.approx(got, rel=1e-6)


class TestJointCovariance:
    def test_white_limit_structure(self):
        # H -> 1/2: same-step cross tau^2/2, off-step cross 0
        tau = 0.25
        for hurst in (0.5, 0.500001):
            same = cross_cov(0, 0, tau, hurst)
            assert same == pytest.approx(tau ** 2 / 2.0, rel=1e-4)
        assert abs(cross_cov(1, 0, tau, 0.500001)) < 1e-6
        assert abs(cross_cov(0, 1, tau, 0.500001)) < 1e-6

    def test_all_entries_match_bruteforce_m2(self):
        hurst, tau = 0.75, 0.5
        sigma = build_joint_covariance(2, tau, hurst)
        checks = {
            (0, 0): ((0, 1), (0, 1), "one", "one"),
            (0, 1): ((0, 1), (1, 2), "one", "one"),
            (1, 1): ((1, 2), (1, 2), "one", "one"),
            (0, 2): ((0, 1), (0, 1), "one", "ramp"),
            (0, 3): ((0, 1), (1, 2), "one", "ramp"),
            (1, 2): ((1, 2), (0, 1), "one", "ramp"),
            (1, 3): ((1, 2), (1, 2), "one", "ramp"),
            (2, 2): ((0, 1), (0, 1), "ramp", "ramp"),
            (2, 3): ((0, 1), (1, 2), "ramp", "ramp"),
            (3, 3): ((1, 2), (1, 2), "ramp", "ramp"),
        }
        for (r, c), (ia, ib, wa, wb) in checks.items():
            a = tuple(tau * np.array(ia))
            b = tuple(tau * np.array(ib))
            expect = covariance_bruteforce(a, b, wa, wb, hurst)
            assert sigma[r, c] == pytest.approx(expect, rel=1e-6), (r, c)

    def test_symmetric_psd(self):
        sigma = build_joint_covariance(6, 0.2, 0.8)
        assert np.array_equal(sigma, sigma.T)
        eigs = np.linalg.eigvalsh(sigma)
        assert eigs.min() >= -1e-14 * eigs.max()

    def test_cholesky_reconstruction(self):
        for hurst in (0.6, 0.9):
            sigma = build_joint_covariance(8, 0.1, hurst)
            factor = joint_cholesky(8, 0.1, hurst)
            err = np.abs(factor @ factor.T - sigma).max()
            assert err <= 1e-12 * np.abs(sigma).max()


class TestSampling:
    def test_deterministic(self):
        cfg = NoiseConfig(0.75, 6, 1.2, 5, seed=99)
        a = sample_bundle(cfg)
        b = sample_bundle(cfg)
        assert np.array_equal(a.increments, b.increments)
        assert np.array_equal(a.weighted, b.weighted)

    def test_mode_prefix_stability(self):
        small = sample_bundle(NoiseConfig(0.5, 4, 1.0, 3, seed=11))
        big = sample_bundle(NoiseConfig(0.5, 4, 1.0, 10, seed=11))
        assert np.array_equal(small.increments, big.increments[:3])
        assert np.array_equal(small.weighted, big.weighted[:3])

    def test_trajectory_seed_stability(self):
        assert trajectory_seed(42, 0) == trajectory_seed(42, 0)
        assert trajectory_seed(42, 0) != trajectory_seed(42, 1)
        assert trajectory_seed(42, 1) != trajectory_seed(43, 1)

    @pytest.mark.parametrize("hurst", [0.5, 0.75])
    def test_empirical_increment_variance(self, hurst):
        # many modes are iid copies: treat them as the sample
        n = 100_000
        tau = 0.2
        bundle = sample_bundle(NoiseConfig(hurst, 2, 2 * tau, n, seed=1))
        var = bundle.increments[:, 0].var()
        expect = tau ** (2 * hurst)
        se = expect * np.sqrt(2.0 / (n - 1))
        assert abs(var - expect) <= 4 * se

    def test_empirical_weighted_increment_correlation_white(self):
        n = 100_000
        tau = 0.3
        bundle = sample_bundle(NoiseConfig(0.5, 1, tau, n, seed=2))
        corr = np.corrcoef(bundle.increments[:, 0], bundle.weighted[:, 0])[0, 1]
        # tau^2/2 / sqrt(tau * tau^3 / 3) = sqrt(3)/2
        assert corr == pytest.approx(np.sqrt(3) / 2, abs=4.0 / np.sqrt(n))

    def test_empirical_cross_interval_covariance_fbm(self):
        n = 200_000
        tau, hurst = 0.4, 0.8
        bundle = sample_bundle(NoiseConfig(hurst, 3, 3 * tau, n, seed=3))
        got = np.mean(bundle.increments[:, 2] * bundle.weighted[:, 0])
        expect = cross_cov(2, 0, tau, hurst)
        spread = np.std(bundle.increments[:, 2] * bundle.weighted[:, 0])
        assert abs(got - expect) <= 4 * spread / np.sqrt(n)

    def test_mode_independence(self):
        n = 50_000
        bundle = sample_bundle(NoiseConfig(0.75, 2, 1.0, 4 * 2, seed=4))
        # reshape modes into pairs and correlate across the pair axis
        x = bundle.increments[0::2, 0]
        y = bundle.increments[1::2, 0]
        corr = np.corrcoef(x, y)[0, 1]
        assert abs(corr) <= 4.0 / np.sqrt(x.size)


class TestCoarsen:
    def test_identity_factor(self):
        bundle = sample_bundle(NoiseConfig(0.75, 8, 1.0, 3, seed=5))
        assert coarsen(bundle, 1) is bundle

    def test_full_aggregation_telescopes(self):
        bundle = sample_bundle(NoiseConfig(0.75, 8, 1.0, 3, seed=6))
        coarse = coarsen(bundle, 8)
        assert coarse.config.steps == 1
        assert np.allclose(coarse.increments[:, 0], bundle.increments.sum(axis=1),
                           rtol=1e-13)

    def test_weighted_aggregation_identity(self):
        # W over the union interval = sum of (W_j + offset_j * db_j), exactly
        bundle = sample_bundle(NoiseConfig(0.9, 12, 0.6, 4, seed=7))
        coarse = coarsen(bundle, 3)
        tau = bundle.tau
        for block in range(4):
            j = slice(3 * block, 3 * block + 3)
            offs = np.arange(3) * tau
            expect = (bundle.weighted[:, j] + offs * bundle.increments[:, j]).sum(axis=1)
            assert np.allclose(coarse.weighted[:, block], expect, rtol=1e-13)

    def test_bad_factor(self):
        bundle = sample_bundle(NoiseConfig(0.75, 8, 1.0, 3, seed=8))
        with pytest.raises(ConfigurationError):
            coarsen(bundle, 3)

    @given(factor=st.sampled_from([1, 2, 3, 4, 6, 12]))
    @settings(max_examples=6, deadline=None)
    def test_increment_sums_exact(self, factor):
        bundle = sample_bundle(NoiseConfig(0.6, 12, 1.0, 2, seed=9))
        coarse = coarsen(bundle, factor)
        total_fine = bundle.increments.sum(axis=1)
        total_coarse = coarse.increments.sum(axis=1)
        assert np.allclose(total_fine, total_coarse, rtol=1e-12)

    @pytest.mark.parametrize("hurst", [0.5, 0.75])
    def test_coarse_weighted_matches_direct_law(self, hurst):
        # Var of aggregated W equals the closed form at the coarse step
        n = 100_000
        fine_steps, factor = 4, 4
        tau = 0.1
        bundle = sample_bundle(NoiseConfig(hurst, fine_steps, fine_steps * tau, n, seed=10))
        coarse = coarsen(bundle, factor)
        var = coarse.weighted[:, 0].var()
        expect = weighted_cov_diag(factor * tau, hurst)
        assert abs(var - expect) <= 4 * expect * np.sqrt(2.0 / (n - 1))


class TestAmplitudesAndIO:
    def test_default_amplitudes(self):
        cfg = NoiseConfig(0.5, 2, 1.0, 3, rho=1.5)
        lam = np.array([2.0, 5.0, 8.0]) * np.pi ** 2
        assert np.allclose(mode_amplitudes(cfg, lam), lam ** -1.5)

    def test_sigma_rule_envelope_enforced(self):
        lam = np.array([2.0, 5.0]) * np.pi ** 2
        cfg = NoiseConfig(0.5, 2, 1.0, 2, rho=1.0,
                          sigma_rule=lambda ev: 0.5 * ev ** -1.0)
        assert np.allclose(mode_amplitudes(cfg, lam), 0.5 * lam ** -1.0)
        bad = NoiseConfig(0.5, 2, 1.0, 2, rho=1.0, sigma_rule=lambda ev: 2.0 * ev ** -1.0)
        with pytest.raises(ConfigurationError):
            mode_amplitudes(bad, lam)

    def test_dump_load_round_trip(self, tmp_path):
        bundle = sample_bundle(NoiseConfig(0.75, 5, 0.8, 7, seed=123))
        path = tmp_path / "bundle.bin"
        dump_bundle(bundle, path)
        back = load_bundle(path)
        assert back.config.hurst == bundle.config.hurst
        assert back.config.steps == bundle.config.steps
        assert back.config.horizon == bundle.config.horizon
        assert back.config.seed == bundle.config.seed
        assert np.array_equal(back.increments, bundle.increments)
        assert np.array_equal(back.weighted, bundle.weighted)

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            NoiseConfig(0.4, 2, 1.0, 1)
        with pytest.raises(ConfigurationError):
            NoiseConfig(1.0, 2, 1.0, 1)
        with pytest.raises(ConfigurationError):
            NoiseConfig(0.5, 0, 1.0, 1)
        with pytest.raises(ConfigurationError):
            NoiseConfig(0.5, 2, -1.0, 1)
