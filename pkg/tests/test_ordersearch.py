"""
Tests for the pruned search over causal orderings.
"""

import numpy as np
import pytest

from graphs import chain_dag, effect_from_cov, sample_lsem, valid_orders
from mle import chisq_quantile, fit_ordering
from model import CovMatrix, Ordering, covariance_of, empirical_cov
from ordersearch import exhaustive_orderings, possible_orderings, variance_sort_order


class TestVarianceSortOrder:

    def test_sorts_unconditional_variances(self):
        assert variance_sort_order(CovMatrix(np.diag([3.0, 1.0, 2.0]))).perm == (1, 2, 0)

    def test_ties_go_to_lowest_index(self):
        assert variance_sort_order(CovMatrix(np.eye(3))).perm == (0, 1, 2)

    def test_recovers_chain_order_from_population(self):
        sigma = covariance_of(chain_dag([0.8, 0.8, 0.8]))
        assert variance_sort_order(sigma).perm == (0, 1, 2, 3)


class TestPossibleOrderings:

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_exhaustive_enumeration(self, random_instance, seed):
        d = 3 + seed % 4
        _, data, sigma_hat = random_instance(seed, d=d, n=150, density="sparse")
        plaus = possible_orderings(sigma_hat, data.n, 0, 1, 0.05)
        brute = exhaustive_orderings(sigma_hat, data.n, 0.05)
        assert {o.perm for o, _ in plaus.survivors} == {o.perm for o, _ in brute}
        assert plaus.l1_hat == pytest.approx(brute[0][1], rel=1e-12)

    def test_outputs_sorted_and_within_threshold(self, random_instance):
        _, data, sigma_hat = random_instance(3, d=5, n=100, density="sparse")
        plaus = possible_orderings(sigma_hat, data.n, 0, 1, 0.05)
        assert list(plaus.logliks) == sorted(plaus.logliks, reverse=True)
        crit = chisq_quantile(5, 0.95)
        assert plaus.crit == pytest.approx(crit)
        assert all(2 * (plaus.l1_hat - ll) <= crit for ll in plaus.logliks)

    def test_two_variables(self, strong_pair_data):
        sigma_hat = empirical_cov(strong_pair_data)
        plaus = possible_orderings(sigma_hat, strong_pair_data.n, 0, 1, 0.05)
        perms = {o.perm for o in plaus.orders}
        assert perms <= {(0, 1), (1, 0)}
        best = max([Ordering((0, 1)), Ordering((1, 0))],
                   key=lambda o: fit_ordering(sigma_hat, o, strong_pair_data.n).loglik)
        assert best.perm in perms

    def test_strong_signal_keeps_only_valid_orders(self):
        dag = chain_dag([0.5, 0.5, 0.5])
        sigma = covariance_of(dag)
        plaus = possible_orderings(sigma, 100_000, 0, 3, 0.05)
        valid = {o.perm for o in valid_orders(dag)}
        assert {o.perm for o, _ in plaus.survivors} <= valid

    def test_prefix_collapse_keeps_one_order_per_class(self, random_instance):
        _, data, sigma_hat = random_instance(8, d=5, n=60, beta_mean=0.05)
        i, j = 2, 4
        plaus = possible_orderings(sigma_hat, data.n, i, j, 0.05)
        keys = [(frozenset(o.perm[:o.position(i)]), o.perm[o.position(i):]) for o in plaus.orders]
        assert len(keys) == len(set(keys))
        assert len(plaus.orders) <= plaus.survivor_count
        survivors = {o.perm for o, _ in plaus.survivors}
        assert all(o.perm in survivors for o in plaus.orders)

    def test_zero_order_and_start_effects(self, random_instance):
        _, data, sigma_hat = random_instance(9, d=4, n=80, beta_mean=0.1)
        i, j = 0, 1
        plaus = possible_orderings(sigma_hat, data.n, i, j, 0.05)
        reversed_ = [(o, ll) for o, ll in plaus.survivors if o.precedes(j, i)]
        if reversed_:
            best = max(reversed_, key=lambda item: item[1])
            assert plaus.zero_loglik == pytest.approx(best[1])
            assert plaus.zero_order.precedes(j, i)
        else:
            assert plaus.zero_order is None
        expected = [effect_from_cov(sigma_hat, o, i, j) for o in plaus.orders if o.precedes(i, j)]
        for value in expected:
            assert min(abs(value - s) for s in plaus.start_effects) <= 1e-9
        for s in plaus.start_effects:
            assert min(abs(value - s) for value in expected) <= 1e-9
        assert list(plaus.start_effects) == sorted(plaus.start_effects)

    def test_fixed_reference_can_empty_the_set(self, random_instance):
        _, data, sigma_hat = random_instance(10, d=3)
        plaus = possible_orderings(sigma_hat, data.n, 0, 1, 0.05)
        empty = possible_orderings(sigma_hat, data.n, 0, 1, 0.05, reference=plaus.l1_hat + 100.0, crit=5.99)
        assert empty.is_empty()
        assert empty.zero_order is None
        assert empty.start_effects == ()

    def test_invalid_arguments(self):
        sigma = CovMatrix(np.eye(3))
        with pytest.raises(ValueError):
            possible_orderings(sigma, 10, 0, 1, 1.0)
        with pytest.raises(ValueError):
            possible_orderings(sigma, 10, 1, 1, 0.05)


class TestExhaustive:

    def test_size_limit(self):
        with pytest.raises(ValueError):
            exhaustive_orderings(CovMatrix(np.eye(9)), 100, 0.05)

    def test_best_order_first(self):
        sigma = covariance_of(chain_dag([0.7, 0.7]))
        survivors = exhaustive_orderings(sigma, 10_000, 0.05)
        assert survivors[0][0].perm == (0, 1, 2)

    def test_sampled_chain_best_order_is_valid(self):
        data = sample_lsem(chain_dag([0.9, 0.9]), 5_000, np.random.default_rng(0))
        survivors = exhaustive_orderings(empirical_cov(data), data.n, 0.05)
        assert survivors[0][0].perm == (0, 1, 2)
