import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from photomoments import (
    ClickCounts,
    DisplacedStateModel,
    LossChannel,
    PhotonStatistics,
    TmdConfig,
    TwinBeamConfig,
    UndefinedEstimateError,
    apply_loss,
    estimate_g_from_counts,
    estimate_mean,
    exact_statistics,
    klyshko_efficiency,
    make_coherent,
    make_fock,
    normalized_moments,
    tmd_click_joint,
    tmd_estimate_g,
    tmd_sample,
)
from photomoments.detection import tmd_no_click

FOCK1 = make_fock(1, 1)


def joint_by_enumeration(probs, cfg, subset):
    """Sum over every assignment of each photon to a bin or to loss."""
    dest = list(range(cfg.bins)) + [None]
    weight = {i: cfg.eta * cfg.bin_probs[i] for i in range(cfg.bins)}
    weight[None] = 1.0 - cfg.eta
    total = 0.0
    for n, pn in enumerate(probs):
        if pn == 0:
            continue
        for assign in itertools.product(dest, repeat=n):
            w = pn * math.prod(weight[d] for d in assign)
            hit = set(assign)
            p_all = 1.0
            for i in subset:
                p_all *= 1.0 if i in hit else cfg.dark_count
            total += w * p_all
    return total


class TestLoss:
    def test_single_photon(self):
        np.testing.assert_allclose(apply_loss(FOCK1, 0.5).probs, [0.5, 0.5])

    def test_identity(self):
        stats = PhotonStatistics([0.1, 0.2, 0.3, 0.4])
        np.testing.assert_allclose(apply_loss(stats, 1.0).probs, stats.probs, atol=1e-15)

    def test_mean_scales(self):
        stats = make_coherent(1.3, 50)
        assert apply_loss(stats, 0.3).mean == pytest.approx(0.39, rel=1e-12)

    def test_coherent_stays_coherent(self):
        np.testing.assert_allclose(apply_loss(make_coherent(2.0, 60), 0.25).probs,
                                   make_coherent(0.5, 60).probs, atol=1e-14)

    @pytest.mark.parametrize("eta", [0.9, 0.5, 0.1])
    @pytest.mark.parametrize("state", ["fock3", "coherent", "displaced"])
    def test_normalized_moments_invariant(self, eta, state):
        stats = {
            "fock3": make_fock(3),
            "coherent": make_coherent(1.2, 60),
            "displaced": exact_statistics(DisplacedStateModel(FOCK1, 0.71, 2.0)),
        }[state]
        m_max = 6 if state != "fock3" else 3
        np.testing.assert_allclose(normalized_moments(apply_loss(stats, eta), m_max).g,
                                   normalized_moments(stats, m_max).g, atol=1e-10)

    def test_rejects_bad_eta(self):
        with pytest.raises(ValueError):
            apply_loss(FOCK1, 1.5)


class TestExactClicks:
    @pytest.mark.parametrize("method", ["recursive", "inclusion_exclusion"])
    @pytest.mark.parametrize("bins,eta,dark", [(2, 1.0, 0.0), (3, 0.6, 0.0), (3, 0.4, 0.05)])
    def test_matches_enumeration(self, bins, eta, dark, method):
        rng = np.random.default_rng(bins)
        probs = rng.dirichlet(np.ones(5))
        cfg = TmdConfig(bins=bins, bin_probs=rng.dirichlet(np.ones(bins)), eta=eta, dark_count=dark)
        stats = PhotonStatistics(probs)
        for k in range(1, bins + 1):
            for s in itertools.combinations(range(bins), k):
                assert tmd_click_joint(stats, cfg, s, method) == pytest.approx(
                    joint_by_enumeration(probs, cfg, s), abs=1e-13)

    def test_routes_agree(self):
        stats = exact_statistics(DisplacedStateModel(FOCK1, 0.71, 2.5))
        cfg = TmdConfig(bins=8, eta=0.5, dark_count=0.01)
        for k in range(1, 6):
            s = tuple(range(k))
            assert tmd_click_joint(stats, cfg, s) == pytest.approx(
                tmd_click_joint(stats, cfg, s, "inclusion_exclusion"), abs=1e-13)

    def test_recursion_keeps_precision_at_low_efficiency(self):
        cfg = TmdConfig(bins=8, eta=1e-3)
        for m in (2, 3, 4):
            assert tmd_estimate_g(make_coherent(1.5, 80), cfg, m) == pytest.approx(1.0, abs=1e-12)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            tmd_click_joint(FOCK1, TmdConfig(bins=2), (0,), "bogus")

    def test_two_photons_two_bins(self):
        cfg = TmdConfig(bins=2)
        assert tmd_click_joint(make_fock(2), cfg, (0, 1)) == pytest.approx(0.5, abs=1e-15)

    def test_no_click_of_vacuum(self):
        assert tmd_no_click(make_fock(0), TmdConfig(), range(8)) == 1.0

    @pytest.mark.parametrize("eta", [1.0, 0.3, 0.01])
    def test_coherent_estimator_exact(self, eta):
        cfg = TmdConfig(bins=8, eta=eta)
        for m in (2, 3, 4):
            assert tmd_estimate_g(make_coherent(1.5, 80), cfg, m) == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("eta", [1.0, 0.2])
    def test_single_photon_estimator(self, eta):
        assert tmd_estimate_g(FOCK1, TmdConfig(bins=4, eta=eta), 2) == 0.0

    def test_estimator_converges_as_efficiency_drops(self):
        stats = exact_statistics(DisplacedStateModel(FOCK1, 1.0, 2.0))
        bias = [abs(tmd_estimate_g(stats, TmdConfig(bins=8, eta=eta), 2) - 4 / 3)
                for eta in (0.2, 0.1, 0.05, 0.01)]
        assert all(a > b for a, b in zip(bias, bias[1:]))
        assert bias[-1] < 0.01

    @pytest.mark.parametrize("b", [0.5, 2.0, 4.0])
    @pytest.mark.parametrize("overlap", [1.0, 0.71])
    def test_estimator_bias_small(self, b, overlap):
        stats = exact_statistics(DisplacedStateModel(FOCK1, overlap, b))
        cfg = TmdConfig(bins=8, eta=0.01)
        g = normalized_moments(stats, 4)
        for m in (2, 3, 4):
            assert tmd_estimate_g(stats, cfg, m) == pytest.approx(g.order(m), rel=0.01)

    def test_non_uniform_bins_average_subsets(self):
        cfg = TmdConfig(bins=3, bin_probs=[0.5, 0.3, 0.2], eta=0.02)
        assert tmd_estimate_g(make_coherent(1.0, 60), cfg, 2) == pytest.approx(1.0, abs=1e-9)

    def test_zero_singles(self):
        with pytest.raises(UndefinedEstimateError):
            tmd_estimate_g(FOCK1, TmdConfig(bins=2, eta=0.0), 2)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10**6), eta=st.floats(0.0, 1.0), dark=st.floats(0.0, 0.2))
    def test_joint_in_unit_interval_and_monotone(self, seed, eta, dark):
        rng = np.random.default_rng(seed)
        stats = PhotonStatistics(rng.dirichlet(np.ones(6)))
        cfg = TmdConfig(bins=4, bin_probs=rng.dirichlet(np.ones(4)), eta=eta, dark_count=dark)
        prev = 1.0
        for k in range(1, 5):
            p = tmd_click_joint(stats, cfg, tuple(range(k)))
            assert 0.0 <= p <= prev + 1e-12
            prev = p

    def test_subset_validation(self):
        with pytest.raises(ValueError):
            tmd_click_joint(FOCK1, TmdConfig(bins=2), (0, 2))
        with pytest.raises(ValueError):
            tmd_click_joint(FOCK1, TmdConfig(bins=2), ())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TmdConfig(bins=2, bin_probs=[0.3, 0.3])
        with pytest.raises(ValueError):
            TmdConfig(bins=3, bin_probs=[0.5, 0.5])
        with pytest.raises(ValueError):
            TmdConfig(bins=17)

    def test_config_round_trip(self):
        cfg = TmdConfig(bins=3, bin_probs=[0.5, 0.3, 0.2], eta=0.1, dark_count=0.001)
        again = TmdConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        np.testing.assert_array_equal(again.bin_probs, cfg.bin_probs)
        assert (again.bins, again.eta, again.dark_count) == (3, 0.1, 0.001)


class TestSampling:
    def test_matches_exact_probabilities(self):
        stats = exact_statistics(DisplacedStateModel(FOCK1, 0.71, 2.0))
        cfg = TmdConfig(bins=4, eta=0.5)
        trials = 10**6
        counts = tmd_sample(stats, cfg, trials, seed=11)
        for k in range(1, 5):
            for s in itertools.combinations(range(4), k):
                p = tmd_click_joint(stats, cfg, s)
                se = math.sqrt(p * (1 - p) / trials)
                assert abs(counts.coincidences(s) / trials - p) < 4 * se + 1e-12

    def test_deterministic(self):
        cfg = TmdConfig(bins=4, eta=0.3)
        a = tmd_sample(make_coherent(1.0, 40), cfg, 5000, seed=3)
        b = tmd_sample(make_coherent(1.0, 40), cfg, 5000, seed=3)
        np.testing.assert_array_equal(a.patterns, b.patterns)
        c = tmd_sample(make_coherent(1.0, 40), cfg, 5000, seed=4)
        assert not np.array_equal(a.patterns, c.patterns)

    def test_independent_of_worker_count(self):
        cfg = TmdConfig(bins=3, eta=0.2)
        trials = 3 * 2**18 + 17
        a = tmd_sample(make_coherent(2.0, 40), cfg, trials, seed=5, n_jobs=1)
        b = tmd_sample(make_coherent(2.0, 40), cfg, trials, seed=5, n_jobs=3)
        np.testing.assert_array_equal(a.patterns, b.patterns)

    def test_zero_efficiency(self):
        counts = tmd_sample(make_coherent(3.0, 60), TmdConfig(bins=4, eta=0.0), 1000, seed=0)
        assert counts.patterns[0] == 1000
        assert counts.singles.sum() == 0
        assert all(v == 0 for v in counts.coincidence_table().values())

    def test_tallies_bounded(self):
        counts = tmd_sample(make_coherent(5.0, 60), TmdConfig(bins=4, eta=1.0), 2000, seed=1)
        assert counts.singles.max() <= counts.trials
        assert max(counts.coincidence_table().values()) <= counts.trials

    def test_rejects_zero_trials(self):
        with pytest.raises(ValueError):
            tmd_sample(FOCK1, TmdConfig(), 0, seed=0)

    def test_merge_is_associative(self):
        cfg = TmdConfig(bins=3, eta=0.5)
        parts = [tmd_sample(make_coherent(1.0, 40), cfg, 100, seed=s) for s in range(3)]
        left = parts[0].merge(parts[1]).merge(parts[2])
        right = parts[0].merge(parts[1].merge(parts[2]))
        np.testing.assert_array_equal(left.patterns, right.patterns)
        assert left.trials == 300
        with pytest.raises(ValueError):
            parts[0].merge(tmd_sample(FOCK1, TmdConfig(bins=2), 10, seed=0))

    def test_serialization(self):
        counts = tmd_sample(make_coherent(1.0, 40), TmdConfig(bins=3, eta=0.5), 500, seed=2)
        again = ClickCounts.from_dict(json.loads(json.dumps(counts.to_dict())))
        np.testing.assert_array_equal(again.patterns, counts.patterns)
        rows = counts.to_csv().strip().split("\n")
        assert rows[0] == "subset,count,trials"
        assert rows[1] == f"0,{counts.singles[0]},500"
        assert rows[-1] == f"0-1-2,{counts.coincidences((0, 1, 2))},500"

    def test_histogram_validation(self):
        with pytest.raises(ValueError):
            ClickCounts(3, [1, 1, 1])
        with pytest.raises(ValueError):
            ClickCounts(5, [1, 1, 1, 1])


class TestEstimators:
    def test_g_from_counts_tracks_truth(self):
        stats = exact_statistics(DisplacedStateModel(FOCK1, 0.71, 1.5))
        cfg = TmdConfig(bins=8, eta=0.3)
        counts = tmd_sample(stats, cfg, 400_000, seed=9)
        for m in (2, 3):
            g, se = estimate_g_from_counts(counts, m)
            assert abs(g - tmd_estimate_g(stats, cfg, m)) < 4 * se

    def test_stderr_matches_spread(self):
        stats = exact_statistics(DisplacedStateModel(FOCK1, 1.0, 2.0))
        cfg = TmdConfig(bins=4, eta=0.4)
        draws, errs = [], []
        for seed in range(60):
            g, se = estimate_g_from_counts(tmd_sample(stats, cfg, 20_000, seed=seed), 2)
            draws.append(g)
            errs.append(se)
        assert np.std(draws) == pytest.approx(np.mean(errs), rel=0.25)

    def test_no_coincidences(self):
        counts = tmd_sample(FOCK1, TmdConfig(bins=2, eta=0.5), 1000, seed=0)
        g, se = estimate_g_from_counts(counts, 2)
        assert g == 0.0 and se > 0

    def test_no_singles(self):
        counts = tmd_sample(FOCK1, TmdConfig(bins=2, eta=0.0), 100, seed=0)
        with pytest.raises(UndefinedEstimateError):
            estimate_g_from_counts(counts, 2)

    def test_mean_coherent(self):
        counts = tmd_sample(make_coherent(1.0, 40), TmdConfig(bins=8, eta=0.05), 10**6, seed=21)
        clicks = counts.singles.sum()
        sigma = math.sqrt(clicks) / counts.trials / 0.05
        assert abs(estimate_mean(counts, 0.05) - 1.0) < 3 * sigma

    def test_mean_single_photon(self):
        counts = tmd_sample(FOCK1, TmdConfig(bins=8, eta=0.1), 200_000, seed=1)
        assert estimate_mean(counts, 0.1) == pytest.approx(1.0, abs=0.02)

    def test_mean_without_clicks(self):
        counts = tmd_sample(FOCK1, TmdConfig(bins=2, eta=0.0), 10, seed=0)
        assert estimate_mean(counts, 0.1) == 0.0

    def test_mean_needs_efficiency(self):
        counts = tmd_sample(FOCK1, TmdConfig(bins=2, eta=0.5), 10, seed=0)
        with pytest.raises(ZeroDivisionError):
            estimate_mean(counts, 0.0)


class TestKlyshko:
    def test_unit_efficiency(self):
        res = klyshko_efficiency(TwinBeamConfig(0.1, 1.0, 0.3, 400_000, seed=1))
        assert res.efficiency == pytest.approx(1.0, abs=3 * res.stderr + 0.01)

    def test_herald_efficiency_drops_out(self):
        a = klyshko_efficiency(TwinBeamConfig(0.2, 0.3, 0.1, 2_000_000, seed=2))
        b = klyshko_efficiency(TwinBeamConfig(0.2, 0.3, 0.6, 2_000_000, seed=3))
        assert abs(a.efficiency - b.efficiency) < 4 * math.hypot(a.stderr, b.stderr)

    def test_low_statistics_flagged(self):
        res = klyshko_efficiency(TwinBeamConfig(0.01, 0.3, 0.1, 100_000, seed=0))
        assert res.low_statistics
        assert res.stderr > klyshko_efficiency(TwinBeamConfig(0.2, 0.3, 0.1, 100_000, seed=0)).stderr

    def test_no_heralds(self):
        with pytest.raises(UndefinedEstimateError):
            klyshko_efficiency(TwinBeamConfig(0.0, 0.3, 0.1, 1000))

    def test_deterministic_and_worker_independent(self):
        cfg = TwinBeamConfig(0.3, 0.3, 0.2, 600_000, seed=4)
        assert klyshko_efficiency(cfg) == klyshko_efficiency(cfg, n_jobs=2)
        assert float(klyshko_efficiency(cfg)) == klyshko_efficiency(cfg).efficiency


class TestLossChannelEstimator:
    def test_transform_rows(self):
        X = np.array([[0.0, 1.0, 0.0], [0.5, 0.0, 0.5]])
        out = LossChannel(eta=0.5).fit_transform(X)
        np.testing.assert_allclose(out, [[0.5, 0.5, 0.0], [0.625, 0.25, 0.125]])

    def test_apply(self):
        np.testing.assert_allclose(LossChannel(0.25).apply(FOCK1).probs, [0.75, 0.25])

    def test_bad_rows(self):
        with pytest.raises(ValueError):
            LossChannel(0.5).fit([[0.5, 0.7]])
        with pytest.raises(ValueError):
            LossChannel(1.5).fit([[0.5, 0.5]])
