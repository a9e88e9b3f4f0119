"""
Shared fixtures: seeded generators, small example models and data.
"""

import numpy as np
import pytest

from graphs import chain_dag, random_dag, sample_lsem
from model import Dataset, empirical_cov


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def strong_pair_data():
    """n = 10000 samples of X1 -> X2 with weight 0.5 and unit error variance."""
    dag = chain_dag([0.5])
    return sample_lsem(dag, 10_000, np.random.default_rng(11))


@pytest.fixture
def chain3_data():
    """n = 10000 samples of X1 -> X2 -> X3, both weights 0.5; C(1 -> 3) = 0.25."""
    dag = chain_dag([0.5, 0.5])
    return sample_lsem(dag, 10_000, np.random.default_rng(12))


@pytest.fixture
def random_instance():
    """Factory for (dag, data, sigma_hat) drawn from a seed."""
    def make(seed, d=4, n=200, beta_mean=0.5, density="dense"):
        gen = np.random.default_rng(seed)
        dag = random_dag(d, beta_mean, density, gen)
        data = sample_lsem(dag, n, gen)
        return dag, data, empirical_cov(data)
    return make


def write_table(path, x, header=None, sep=","):
    """Write a numeric array as a delimited text file."""
    lines = []
    if header is not None:
        lines.append(sep.join(header))
    lines.extend(sep.join(repr(float(v)) for v in row) for row in np.asarray(x))
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def table_writer():
    return write_table


@pytest.fixture
def small_dataset():
    x = np.array([
        [0.1, 1.0, -0.5],
        [0.4, 0.7, 0.2],
        [-0.3, 1.5, 0.1],
        [0.9, -0.2, 0.4],
        [0.0, 0.3, -0.8],
    ])
    return Dataset.from_array(x, ["a", "b", "c"])
