"""
Tests for total effects, random DAG generation and sampling.
"""

import itertools

import numpy as np
import pytest

from graphs import (
    cancellation_dag,
    chain_dag,
    effect_from_cov,
    example_path_dag,
    no_effect_dag,
    path_sum_effect,
    random_dag,
    sample_lsem,
    total_effect,
    valid_orders,
)
from model import Ordering, covariance_of, empirical_cov


class TestTotalEffect:

    def test_chain_product(self):
        dag = chain_dag([0.5, 0.4])
        assert total_effect(dag, 0, 2) == pytest.approx(0.2, abs=1e-12)
        assert total_effect(dag, 2, 0) == pytest.approx(0.0, abs=1e-12)

    def test_cancellation_example_is_zero(self):
        dag = cancellation_dag()
        assert total_effect(dag, 0, 1) == pytest.approx(0.0, abs=1e-12)
        assert path_sum_effect(dag, 0, 1) == pytest.approx(0.0, abs=1e-12)

    def test_example_path_dag_rejects_unknown_edge(self):
        with pytest.raises(ValueError):
            example_path_dag({(1, 2): 0.5})

    def test_same_node_rejected(self):
        with pytest.raises(ValueError):
            total_effect(chain_dag([0.5]), 1, 1)

    def test_path_oracle_size_limit(self):
        with pytest.raises(ValueError):
            path_sum_effect(chain_dag([0.5] * 5), 0, 5)


class TestEffectFromCov:

    def test_matches_path_sum_on_random_dags(self, rng):
        worst = 0.0
        for _ in range(200):
            d = int(rng.integers(2, 6))
            dag = random_dag(d, 0.5, "dense", rng)
            sigma = covariance_of(dag)
            i, j = (int(v) for v in rng.choice(d, size=2, replace=False))
            oracle = path_sum_effect(dag, i, j)
            for order in itertools.islice(valid_orders(dag), 4):
                worst = max(worst, abs(effect_from_cov(sigma, order, i, j) - oracle))
        assert worst <= 1e-9

    def test_zero_when_response_comes_first(self):
        sigma = covariance_of(chain_dag([0.5]))
        assert effect_from_cov(sigma, Ordering((1, 0)), 0, 1) == 0.0

    def test_example_dag_effect(self):
        dag = example_path_dag({(1, 3): 0.3, (2, 1): 0.5, (4, 1): 0.4, (2, 4): 0.5, (5, 3): 0.2, (2, 5): 0.1})
        sigma = covariance_of(dag)
        order = Ordering((2, 0, 3, 4, 1))
        assert effect_from_cov(sigma, order, 0, 1) == pytest.approx(0.5 + 0.4 * 0.5, abs=1e-12)


class TestRandomDag:

    def test_deterministic_under_seed(self):
        a = random_dag(6, 0.5, "sparse", np.random.default_rng(3))
        b = random_dag(6, 0.5, "sparse", np.random.default_rng(3))
        np.testing.assert_array_equal(a.b, b.b)

    @pytest.mark.parametrize("density", ["sparse", "dense"])
    def test_support_is_acyclic_with_unit_variance(self, rng, density):
        dag = random_dag(6, 0.5, density, rng)
        assert dag.sigma2 == 1.0
        assert next(valid_orders(dag), None) is not None

    @pytest.mark.parametrize("density, rate", [("dense", 0.9), ("sparse", 0.5)])
    def test_edge_retention_rate(self, density, rate):
        gen = np.random.default_rng(0)
        kept = sum(np.count_nonzero(random_dag(6, 0.5, density, gen).b) for _ in range(10_000))
        assert kept / (15 * 10_000) == pytest.approx(rate, abs=0.01)

    def test_rejects_unknown_density(self, rng):
        with pytest.raises(ValueError):
            random_dag(4, 0.5, "medium", rng)

    def test_no_effect_dag(self, rng):
        for _ in range(50):
            dag = no_effect_dag(6, 0.5, "dense", rng)
            assert total_effect(dag, 0, 1) == pytest.approx(0.0, abs=1e-12)
            assert effect_from_cov(covariance_of(dag), next(valid_orders(dag)), 0, 1) == pytest.approx(0.0, abs=1e-12)


class TestSampling:

    def test_shape_and_determinism(self):
        dag = chain_dag([0.5, -0.3])
        a = sample_lsem(dag, 100, np.random.default_rng(1))
        b = sample_lsem(dag, 100, np.random.default_rng(1))
        assert a.x.shape == (100, 3)
        np.testing.assert_array_equal(a.x, b.x)

    def test_empirical_covariance_converges(self):
        dag = chain_dag([0.8, 0.5], sigma2=1.5)
        data = sample_lsem(dag, 200_000, np.random.default_rng(2))
        np.testing.assert_allclose(empirical_cov(data).sigma, covariance_of(dag).sigma, atol=0.05)

    def test_error_variances_override(self):
        dag = chain_dag([0.0])
        data = sample_lsem(dag, 200_000, np.random.default_rng(4), error_variances=[1.0, 4.0])
        np.testing.assert_allclose(np.diag(empirical_cov(data).sigma), [1.0, 4.0], rtol=0.03)

    def test_bad_error_variances(self, rng):
        with pytest.raises(ValueError):
            sample_lsem(chain_dag([0.5]), 10, rng, error_variances=[1.0, -1.0])
