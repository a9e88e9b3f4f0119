"""
Tests for the grid scan and the confidence regions built on it.
"""

import numpy as np
import pytest

from effect_tests import TestConfig, lrt_test_effect
from errors import ScanOverflowError
from graphs import cancellation_dag, random_dag, sample_lsem, total_effect
from model import empirical_cov
from ordersearch import possible_orderings
from region import ConfidenceRegion, confidence_region, default_step, merge_intervals, scan_region

TOL = 1e-9


def _band(lo, hi, zero=False):
    def accept(psi):
        return (zero and psi == 0) or lo - TOL <= psi <= hi + TOL
    return accept


class TestMergeIntervals:

    def test_overlapping_and_disjoint(self):
        assert merge_intervals([(3.0, 4.0), (0.0, 1.0), (0.5, 2.0)]) == [(0.0, 2.0), (3.0, 4.0)]

    def test_touching_are_joined(self):
        assert merge_intervals([(0.0, 1.0), (1.0, 2.0)]) == [(0.0, 2.0)]

    def test_empty(self):
        assert merge_intervals([]) == []


class TestDefaultStep:

    @pytest.mark.parametrize("starts, expected", [([], 0.01), ([0.5], 0.01), ([-3.0, 2.0], 0.03)])
    def test_values(self, starts, expected):
        assert default_step(starts) == pytest.approx(expected)


class TestConfidenceRegionType:

    def test_rejects_reversed_interval(self):
        with pytest.raises(ValueError):
            ConfidenceRegion(((1.0, 0.5),), False, 0.05, "lrt")

    def test_rejects_overlap(self):
        with pytest.raises(ValueError):
            ConfidenceRegion(((0.1, 0.5), (0.4, 0.9)), False, 0.05, "lrt")

    def test_zero_inside_interval_must_be_flagged(self):
        with pytest.raises(ValueError):
            ConfidenceRegion(((-0.1, 0.5),), False, 0.05, "lrt")

    def test_isolated_zero(self):
        region = ConfidenceRegion(((0.4, 0.6),), True, 0.05, "lrt")
        assert region.isolated_zero
        assert region.contains(0.0)
        assert region.contains(0.5)
        assert not region.contains(0.2)
        assert region.nonzero_width() == pytest.approx(0.2)

    def test_empty(self):
        region = ConfidenceRegion((), False, 0.05, "slrt")
        assert region.is_empty
        assert region.nonzero_width() == 0.0


class TestScanRegion:

    def test_single_band(self):
        intervals, zero = scan_region(_band(0.2, 0.5), [0.3], 0.1, 1000)
        assert len(intervals) == 1
        assert intervals[0] == pytest.approx((0.15, 0.55))
        assert not zero

    def test_rejected_start_uses_accepted_neighbour(self):
        intervals, _ = scan_region(_band(0.35, 0.6), [0.25], 0.1, 1000)
        assert intervals[0] == pytest.approx((0.30, 0.60))

    def test_rejected_start_and_neighbours(self):
        intervals, zero = scan_region(_band(2.0, 3.0), [0.25], 0.1, 1000)
        assert intervals == []
        assert not zero

    def test_starts_inside_a_found_interval_are_skipped(self):
        calls = []

        def accept(psi):
            calls.append(psi)
            return 0.2 - TOL <= psi <= 0.5 + TOL

        intervals, _ = scan_region(accept, [0.3, 0.35, 0.45], 0.1, 1000)
        assert len(intervals) == 1
        assert not any(abs(c - 0.35) < TOL for c in calls)

    def test_separate_bands_give_separate_intervals(self):
        def accept(psi):
            return -1.0 - TOL <= psi <= -0.8 + TOL or 0.8 - TOL <= psi <= 1.0 + TOL

        intervals, zero = scan_region(accept, [-0.9, 0.9], 0.1, 1000)
        assert len(intervals) == 2
        assert intervals[0] == pytest.approx((-1.05, -0.75))
        assert intervals[1] == pytest.approx((0.75, 1.05))
        assert not zero

    def test_isolated_zero(self):
        intervals, zero = scan_region(_band(0.9, 1.1, zero=True), [1.0], 0.1, 1000)
        assert zero
        assert intervals[0] == pytest.approx((0.85, 1.15))

    def test_overflow_to_the_left(self):
        with pytest.raises(ScanOverflowError) as info:
            scan_region(lambda psi: psi <= 1.0, [0.0], 0.1, 50)
        assert info.value.direction == "left"
        assert info.value.max_steps == 50


class TestConfidenceRegion:

    def test_strong_pair_excludes_zero(self, strong_pair_data):
        region = confidence_region(strong_pair_data, 0, 1)
        assert not region.includes_zero
        assert len(region.intervals) == 1
        lo, hi = region.intervals[0]
        assert (lo + hi) / 2 == pytest.approx(0.5, abs=0.05)
        assert region.method == "lrt"
        assert region.diagnostics.evaluations > 0

    def test_interval_ends_sit_between_accepted_and_rejected_points(self, strong_pair_data):
        region = confidence_region(strong_pair_data, 0, 1)
        step = region.diagnostics.step
        sigma_hat = empirical_cov(strong_pair_data)
        plaus = possible_orderings(sigma_hat, strong_pair_data.n, 0, 1, 0.05)
        lo, hi = region.intervals[0]

        def accepted(psi):
            return lrt_test_effect(sigma_hat, strong_pair_data.n, plaus, 0, 1, psi).accepted

        assert accepted(lo + step / 2)
        assert accepted(hi - step / 2)
        assert not accepted(lo - step / 2)
        assert not accepted(hi + step / 2)

    def test_chain_covers_product_effect(self, chain3_data):
        region = confidence_region(chain3_data, 0, 2)
        lo, hi = region.intervals[0]
        assert (lo + hi) / 2 == pytest.approx(0.25, abs=0.05)
        assert not region.includes_zero

    def test_split_method_is_deterministic(self, chain3_data):
        cfg = TestConfig(method="slrt", seed=3)
        a = confidence_region(chain3_data, 0, 2, cfg)
        b = confidence_region(chain3_data, 0, 2, cfg)
        assert a.intervals == b.intervals
        assert a.includes_zero == b.includes_zero
        assert a.method == "slrt"

    def test_threads_do_not_change_the_region(self, random_instance):
        _, data, _ = random_instance(17, d=4, n=150, beta_mean=0.2)
        serial = confidence_region(data, 0, 1, TestConfig(step=0.02))
        pooled = confidence_region(data, 0, 1, TestConfig(step=0.02, workers=2))
        assert serial.intervals == pooled.intervals
        assert serial.includes_zero == pooled.includes_zero

    def test_smaller_level_region_contains_larger_level_region(self, random_instance):
        for seed in (3, 4, 5):
            _, data, sigma_hat = random_instance(seed, d=4, n=200, beta_mean=0.3)
            plaus = possible_orderings(sigma_hat, data.n, 0, 1, 0.01)
            step = default_step(plaus.start_effects)
            regions = {}
            for alpha in (0.01, 0.1):
                cfg = TestConfig(alpha=alpha)
                regions[alpha] = scan_region(
                    lambda psi: lrt_test_effect(sigma_hat, data.n, plaus, 0, 1, psi, cfg).accepted,
                    plaus.start_effects, step, cfg.max_steps,
                )
            wide, wide_zero = regions[0.01]
            narrow, narrow_zero = regions[0.1]
            # scans from different start values sit on grids offset by less than one step
            for lo, hi in narrow:
                assert any(a - step <= lo and hi <= b + step for a, b in wide)
            assert wide_zero or not narrow_zero

    def test_tiny_budget_overflows(self, strong_pair_data):
        with pytest.raises(ScanOverflowError):
            confidence_region(strong_pair_data, 0, 1, TestConfig(step=1e-4, max_steps=2))

    def test_invalid_nodes(self, strong_pair_data):
        with pytest.raises(ValueError):
            confidence_region(strong_pair_data, 0, 0)
        with pytest.raises(ValueError):
            confidence_region(strong_pair_data, 0, 2)


@pytest.mark.slow
class TestCoverage:

    def test_monte_carlo_coverage(self):
        covered = 0
        reps = 100
        for rep in range(reps):
            gen = np.random.default_rng([7, rep])
            dag = random_dag(3, 0.5, "dense", gen)
            data = sample_lsem(dag, 300, gen)
            region = confidence_region(data, 0, 1)
            covered += region.contains(total_effect(dag, 0, 1))
        assert covered / reps >= 0.9

    def test_cancelling_paths_include_zero(self):
        dag = cancellation_dag()
        reps = 100
        hits = 0
        for rep in range(reps):
            data = sample_lsem(dag, 5_000, np.random.default_rng([21, rep]))
            hits += confidence_region(data, 0, 1).includes_zero
        assert hits / reps >= 0.9
