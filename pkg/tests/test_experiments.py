import itertools
import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal, norm

import config
from rphash.asymptotics import survival_above
from rphash.errors import DomainError, PreconditionError, UnsupportedConfiguration
from rphash.experiments import (
    centre_cell,
    convergence_table,
    detect_planted,
    estimate_collision_rate,
    log_ratio,
    naive_exceedance,
    required_trials,
    sample_subsets,
    survival_rate,
    sweep,
    wilson_interval,
)
from rphash.geometry import TupleConfig, polar_sine, squared_shortest_dual_diagonal
from rphash.hashing import HashFamilyParams

SYMMETRIC = TupleConfig.uniform(3, -1.0 / 3.0)


def within(estimate, expected, sigmas=4.0):
    spread = math.sqrt(expected * (1.0 - expected) / estimate.trials)
    return abs(estimate.p_hat - expected) <= sigmas * spread


def centre_config(sigma):
    alpha, beta, gamma = centre_cell(sigma)
    return TupleConfig.from_pairwise(alpha, beta, gamma, singular=sigma <= -3.0)


class TestStatistics:
    def test_wilson_half(self):
        low, high = wilson_interval(50, 100)
        assert low == pytest.approx(0.4038, abs=1e-3)
        assert high == pytest.approx(0.5962, abs=1e-3)

    def test_wilson_edges(self):
        low, high = wilson_interval(0, 100)
        assert low == 0.0 and 0.0 < high < 0.05
        low, high = wilson_interval(100, 100)
        assert high == 1.0 and 0.95 < low < 1.0

    def test_wilson_invalid(self):
        with pytest.raises(PreconditionError):
            wilson_interval(1, 0)
        with pytest.raises(PreconditionError):
            wilson_interval(5, 4)

    def test_required_trials(self):
        assert required_trials(0.125) == pytest.approx(8.8533e5, rel=1e-4)
        assert required_trials(0.5) < required_trials(0.125)
        with pytest.raises(PreconditionError):
            required_trials(1.0)

    def test_log_ratio(self):
        assert log_ratio(0.125, 0.134) == pytest.approx(1.0346, abs=1e-4)
        assert log_ratio(0.125, 0.144) == pytest.approx(1.073, abs=1e-3)

    @pytest.mark.parametrize("p", [0.0, 1.0])
    def test_log_ratio_domain(self, p):
        with pytest.raises(DomainError):
            log_ratio(p, 0.5)

    def test_naive_exceedance(self):
        assert naive_exceedance(0.183, 3, 2, 3) == pytest.approx(64.7, abs=0.1)

    def test_centre_cell(self):
        assert centre_cell(-2.0) == pytest.approx((-1 / 3, -1 / 3, -1 / 3))


class TestCollisionRate:
    def test_same_for_any_worker_count(self):
        params = HashFamilyParams(d=12, a=1, b=2, seed=17)
        one = estimate_collision_rate(SYMMETRIC, params, 10_000, workers=1)
        many = estimate_collision_rate(SYMMETRIC, params, 10_000, workers=4)
        assert one.collisions == many.collisions
        assert one == many

    def test_seed_changes_result(self):
        params = HashFamilyParams(d=12, a=1, b=2, seed=17)
        first = estimate_collision_rate(SYMMETRIC, params, 10_000, seed=1)
        second = estimate_collision_rate(SYMMETRIC, params, 10_000, seed=2)
        assert first.collisions != second.collisions

    def test_duplicate_always_collides(self):
        est = estimate_collision_rate(TupleConfig.duplicate_of(3), HashFamilyParams(d=6, a=2, b=3), 2_000)
        assert est.p_hat == 1.0 and est.ci_high == 1.0

    @pytest.mark.parametrize("k,a,b", [(2, 1, 3), (2, 2, 2), (3, 1, 2), (3, 1, 3)])
    def test_orthonormal_tuple_is_naive(self, k, a, b):
        est = estimate_collision_rate(TupleConfig(np.eye(k)), HashFamilyParams(d=10, a=a, b=b, seed=3), 40_000)
        assert within(est, math.comb(a + b, a) ** -(k - 1), sigmas=3.0)
        assert est.ci_low <= est.p_hat <= est.ci_high

    def test_dimension_does_not_matter(self):
        rates = {
            d: estimate_collision_rate(SYMMETRIC, HashFamilyParams(d=d, a=1, b=2, seed=19), 20_000)
            for d in (3, 20, 40)
        }
        for d in (3, 40):
            joint = math.sqrt(rates[d].stderr**2 + rates[20].stderr**2)
            assert abs(rates[d].p_hat - rates[20].p_hat) <= 4.0 * joint

    def test_wide_instances(self):
        # more directions than fit in a bitmask
        est = estimate_collision_rate(TupleConfig(np.eye(2)), HashFamilyParams(d=5, a=1, b=63, seed=4), 8_000)
        assert within(est, 1.0 / 64.0)

    def test_dimension_too_small(self):
        with pytest.raises(PreconditionError):
            estimate_collision_rate(SYMMETRIC, HashFamilyParams(d=2, a=1, b=2), 100)

    def test_to_dict(self):
        est = estimate_collision_rate(SYMMETRIC, HashFamilyParams(d=6, a=1, b=2, seed=5), 500)
        payload = est.to_dict()
        assert payload["k"] == 3 and payload["trials"] == 500
        assert payload["params"]["b"] == 2
        assert payload["config"]["gram_upper"] == pytest.approx([-1 / 3] * 3)

    @pytest.mark.slow
    @pytest.mark.parametrize(
        "sigma,a,b,expected",
        [
            (-2.0, 1, 2, 0.125),
            (-2.4, 1, 2, 0.134),
            (-3.0, 1, 2, 0.144),
            (-2.0, 1, 3, 0.0705),
            (-2.4, 1, 3, 0.0765),
            (-3.0, 1, 3, 0.0763),
            (-2.0, 2, 1, 0.126),
            (-2.4, 2, 1, 0.141),
            (-3.0, 2, 1, 0.183),
            (-2.0, 3, 1, 0.0727),
            (-2.4, 3, 1, 0.0848),
            (-3.0, 3, 1, 0.127),
        ],
    )
    def test_centre_values(self, sigma, a, b, expected):
        est = estimate_collision_rate(centre_config(sigma), HashFamilyParams(d=20, a=a, b=b), 100_000)
        assert est.p_hat == pytest.approx(expected, abs=0.01)

    @pytest.mark.slow
    @pytest.mark.parametrize("a,b,expected", [(2, 1, 64.5), (3, 1, 103.0)])
    def test_coplanar_centre_exceeds_naive(self, a, b, expected):
        est = estimate_collision_rate(centre_config(-3.0), HashFamilyParams(d=20, a=a, b=b), 1_000_000)
        assert naive_exceedance(est.p_hat, a + b, a, 3) == pytest.approx(expected, abs=3.0)

    @pytest.mark.slow
    def test_log_ratios_of_centre_rates(self):
        params = HashFamilyParams(d=20, a=1, b=2)
        p = {s: estimate_collision_rate(centre_config(s), params, 1_000_000).p_hat for s in (-2.0, -2.4, -3.0)}
        assert log_ratio(p[-2.0], p[-2.4]) == pytest.approx(1.034, abs=0.01)
        assert log_ratio(p[-2.4], p[-3.0]) == pytest.approx(1.035, abs=0.01)
        assert log_ratio(p[-2.0], p[-3.0]) == pytest.approx(1.070, abs=0.01)

    @pytest.mark.slow
    def test_rate_grows_as_sigma_falls(self):
        params = HashFamilyParams(d=20, a=2, b=1)
        rates = [estimate_collision_rate(centre_config(s), params, 100_000) for s in (-2.0, -2.4, -3.0)]
        for lo, hi in zip(rates, rates[1:]):
            joint = math.sqrt(lo.stderr**2 + hi.stderr**2)
            assert hi.p_hat - lo.p_hat > 3.0 * joint


class TestSurvival:
    def test_above_single_vector(self):
        est = survival_rate(TupleConfig(np.eye(1)), "above", 2.0, 200_000, seed=2)
        assert within(est, 2.0 * (1.0 - norm.cdf(2.0)))

    def test_below_single_vector(self):
        est = survival_rate(TupleConfig(np.eye(1)), "below", 0.1, 200_000, seed=3)
        assert within(est, math.erf(0.1 / math.sqrt(2.0)))

    def test_above_pair_against_orthant_masses(self):
        c, C = -0.5, 2.5
        pair = TupleConfig.uniform(2, c)
        est = survival_rate(pair, "above", C, 1_000_000, seed=5)
        exact = sum(
            2.0 * multivariate_normal.cdf([-C, -C], cov=[[1.0, r], [r, 1.0]], abseps=1e-10)
            for r in (c, -c)
        )
        assert within(est, exact)
        # the closed form has the right exponential order only
        closed = survival_above(squared_shortest_dual_diagonal(pair), 2, C)
        assert 1.0 < math.log(est.p_hat) / math.log(closed) < 2.0

    def test_worker_count(self):
        one = survival_rate(SYMMETRIC, "above", 0.5, 150_000, workers=1)
        many = survival_rate(SYMMETRIC, "above", 0.5, 150_000, workers=3)
        assert one.collisions == many.collisions

    def test_invalid(self):
        with pytest.raises(PreconditionError):
            survival_rate(SYMMETRIC, "sideways", 0.5, 100)
        with pytest.raises(PreconditionError):
            survival_rate(SYMMETRIC, "above", 0.0, 100)

    @pytest.mark.slow
    def test_below_symmetric_triple(self):
        delta = math.sqrt(16.0 / 27.0)
        expected = (2.0 * 0.05**2 / math.pi) ** 1.5 / delta
        est = survival_rate(SYMMETRIC, "below", 0.05, 20_000_000, seed=4)
        assert est.p_hat == pytest.approx(expected, rel=0.1)


class TestSweep:
    def test_grid_cells(self):
        result = sweep(-2.0, HashFamilyParams(d=8, a=1, b=2, seed=6), trials=300, grid_step=0.25)
        assert len(result.rows) == 10
        for cell in result.rows:
            assert abs(2.0 * (cell.alpha + cell.beta + cell.gamma) + 2.0) <= 1e-12
            assert max(cell.alpha, cell.beta, cell.gamma) < 0.0
            assert 0.0 <= cell.estimate.p_hat <= 1.0
        assert result.centre() is not None

    def test_coplanar_centre_is_sampled(self):
        with pytest.warns(RuntimeWarning, match="skipped"):
            result = sweep(-3.0, HashFamilyParams(d=8, a=2, b=1, seed=6), trials=300, grid_step=0.25)
        centre = result.centre()
        assert centre is not None and centre.estimate.config.singular
        assert result.skipped

    def test_permuted_cells_agree(self):
        result = sweep(-2.0, HashFamilyParams(d=6, a=1, b=2, seed=12), trials=20_000, grid_step=0.25)
        by_cell = {tuple(np.round((c.alpha, c.beta, c.gamma), 9)): c.estimate for c in result.rows}
        for cell, est in by_cell.items():
            for perm in itertools.permutations(cell):
                other = by_cell[perm]
                joint = math.sqrt(est.stderr**2 + other.stderr**2)
                assert abs(est.p_hat - other.p_hat) <= 4.0 * joint

    def test_sigma_must_be_negative(self):
        with pytest.raises(DomainError):
            sweep(0.0, HashFamilyParams(d=8, a=1, b=2), trials=10)

    def test_triples_only(self):
        with pytest.raises(UnsupportedConfiguration):
            sweep(-2.0, HashFamilyParams(d=8, a=1, b=2), trials=10, k=4)


class TestConvergence:
    def test_large_b_orthonormal_pair(self):
        rows = convergence_table(TupleConfig(np.eye(2)), "large-b", [2, 4, 8], fixed=1, trials=20_000, d=10, seed=8)
        assert [(r.a, r.b) for r in rows] == [(1, 2), (1, 4), (1, 8)]
        for r in rows:
            # alpha = 2 makes the large-b form exact here
            assert r.p_asymptotic == pytest.approx(1.0 / (r.b + 1))
            spread = math.sqrt(r.p_asymptotic * (1 - r.p_asymptotic) / r.trials)
            assert abs(r.p_mc - r.p_asymptotic) <= 4.0 * spread

    @pytest.mark.parametrize("b,expected", [(2, 1.0 / 9.0), (3, 1.0 / 16.0)])
    def test_orthonormal_triple_is_exact(self, b, expected):
        (row,) = convergence_table(TupleConfig(np.eye(3)), "large-a", [1], fixed=b, trials=40_000, d=8, seed=9)
        assert row.p_asymptotic == pytest.approx(expected)
        spread = math.sqrt(expected * (1 - expected) / row.trials)
        assert abs(row.p_mc - expected) <= 3.0 * spread

    @pytest.mark.slow
    def test_large_a_symmetric_triple(self):
        rows = convergence_table(SYMMETRIC, "large-a", [4, 8, 16, 32], fixed=1, trials=1_000_000, seed=10)
        assert 1.0 / polar_sine(SYMMETRIC) == pytest.approx(1.299, abs=1e-3)
        assert rows[-1].ratio == pytest.approx(1.0, abs=0.1)
        for prev, row in zip(rows, rows[1:]):
            # relative error of the Monte-Carlo ratio
            noise = 3.0 * row.ratio * math.sqrt((1 - row.p_mc) / (row.p_mc * row.trials))
            assert abs(row.ratio - 1.0) <= abs(prev.ratio - 1.0) + noise

    @pytest.mark.slow
    def test_large_b_gap_shrinks(self):
        rows = convergence_table(TupleConfig.uniform(2, -0.5), "large-b", [4, 8, 16, 32], fixed=1,
                                 trials=200_000, seed=11)
        gaps = [r.gap for r in rows]
        assert all(later < earlier for earlier, later in zip(gaps, gaps[1:]))

    def test_large_a_rows(self):
        rows = convergence_table(SYMMETRIC, "large-a", [2, 4], fixed=1, trials=2_000, d=8)
        assert [(r.a, r.b) for r in rows] == [(2, 1), (4, 1)]
        assert all(r.p_asymptotic > 0.0 for r in rows)

    def test_invalid_regime(self):
        with pytest.raises(PreconditionError):
            convergence_table(SYMMETRIC, "large-k", [2], fixed=1, trials=10)


class TestDetect:
    def test_repeated_vectors_always_found(self):
        report = detect_planted(
            db_size=200, n_planted=10, params=HashFamilyParams(d=16, a=2, b=4, seed=9),
            planted_config=TupleConfig.duplicate_of(2), instances=5, scan_candidates=True,
        )
        assert report.recall == 1.0
        assert report.recall_per_instance == [1.0] * 5
        assert report.reducible_candidates >= 10 * 5
        assert report.wilcoxon_p < 0.05
        assert report.mean_bucket_size * report.mean_bucket_count == pytest.approx(200.0)

    def test_nothing_planted(self):
        report = detect_planted(
            db_size=150, n_planted=0, params=HashFamilyParams(d=16, a=1, b=3, seed=10),
            planted_config=TupleConfig.uniform(2, 0.0), instances=3,
        )
        assert report.recall is None and report.wilcoxon_p is None
        assert 0.0 < report.background_rate < 1.0
        assert report.false_candidate_rate == 1.0

    def test_planted_triples_beat_background(self):
        report = detect_planted(
            db_size=10_000, n_planted=1_000, params=HashFamilyParams(d=20, a=2, b=1, seed=13),
            planted_config=TupleConfig.uniform(3, -0.4), instances=100, scan_candidates=False,
        )
        assert report.recall > report.background_rate
        assert report.wilcoxon_p < 0.01
        assert report.candidates_scanned == 0

    def test_candidates_checked_by_default(self):
        report = detect_planted(
            db_size=120, n_planted=4, params=HashFamilyParams(d=10, a=1, b=2, seed=14),
            planted_config=TupleConfig.uniform(3, -0.4), instances=3,
        )
        assert report.candidates_scanned == round(sum(report.background_per_instance) * math.comb(120, 3))
        # co-bucketed planted triples are reducible
        assert report.reducible_candidates >= round(sum(report.recall_per_instance) * 4)
        assert report.sampled_buckets == 0

    def test_large_buckets_are_sampled(self, monkeypatch):
        monkeypatch.setattr(config, "MAX_SUBSETS_PER_BUCKET", 50)
        monkeypatch.setattr(config, "SCAN_SAMPLES_PER_BUCKET", 300)
        kwargs = dict(
            db_size=150, n_planted=0, params=HashFamilyParams(d=10, a=1, b=2, seed=15),
            planted_config=TupleConfig.uniform(2, 0.0), instances=2,
        )
        with pytest.warns(RuntimeWarning, match="random subsets"):
            report = detect_planted(**kwargs)
        assert report.sampled_buckets == 6
        assert report.candidates_scanned == 6 * 300
        with pytest.warns(RuntimeWarning):
            assert detect_planted(**kwargs).to_dict() == report.to_dict()

    def test_sampled_subsets_are_uniform(self):
        draws = np.concatenate(list(sample_subsets(40, 3, 20_000, np.random.default_rng(0))))
        assert draws.shape == (20_000, 3)
        assert np.all(np.diff(draws, axis=1) > 0)
        counts = np.bincount(draws.ravel(), minlength=40)
        expected = 20_000 * 3 / 40
        assert np.all(np.abs(counts - expected) < 5.0 * math.sqrt(expected))

    def test_too_many_planted(self):
        with pytest.raises(PreconditionError):
            detect_planted(
                db_size=10, n_planted=4, params=HashFamilyParams(d=8, a=1, b=2),
                planted_config=SYMMETRIC,
            )

    def test_reproducible(self):
        kwargs = dict(
            db_size=120, n_planted=5, params=HashFamilyParams(d=12, a=1, b=2, seed=11),
            planted_config=SYMMETRIC, instances=4,
        )
        assert detect_planted(**kwargs).to_dict() == detect_planted(**kwargs).to_dict()
