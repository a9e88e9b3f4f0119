"""
DAG combinatorics: total effects, random equal-variance LSEMs and sampling.
"""

import logging
import math
from typing import Dict, Iterator, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from model import (
    CovMatrix,
    Dataset,
    Ordering,
    WeightedDag,
    conditional_cov,
    residual_variances,
)

logger = logging.getLogger(__name__)

# Edge weights are drawn from N(beta_mean, EDGE_WEIGHT_VAR); 0.1 is a variance.
EDGE_WEIGHT_VAR = 0.1
DENSE_KEEP_PROB = 0.9
SPARSE_KEEP_PROB = 0.5
KEEP_PROB = {"dense": DENSE_KEEP_PROB, "sparse": SPARSE_KEEP_PROB}

# numpy's default bit generator; bump together with any change to the draw sequence.
RNG_ALGORITHM = "PCG64/v1"

PATH_ORACLE_MAX_D = 5

# Skeleton of the five-node worked example, keyed (child, parent) with 1-based labels.
EXAMPLE_EDGES = ((1, 3), (4, 1), (2, 4), (2, 1), (5, 3), (2, 5))


def total_effect(dag: WeightedDag, i: int, j: int) -> float:
    """
    Total causal effect of node i on node j, (I - B)^{-1}_{j,i}.

    Args:
        dag (WeightedDag): The model
        i (int): Intervened node
        j (int): Response node

    Returns:
        float: Sum over directed paths i -> j of the products of edge weights
    """
    if i == j:
        raise ValueError("total effect needs two distinct nodes")
    eye = np.eye(dag.d)
    column = np.linalg.solve(eye - dag.b, eye[:, i])
    return float(column[j])


def effect_from_cov(sigma: CovMatrix, order: Ordering, i: int, j: int) -> float:
    """
    Total effect implied by a covariance matrix under a causal ordering,
    Σ_{j,i|p(i)} / Σ_{i,i|p(i)} with p(i) the predecessors of i.
    """
    if i == j:
        raise ValueError("total effect needs two distinct nodes")
    if order.precedes(j, i):
        # j is conditioned on, so Σ_{j,i|p(i)} vanishes identically
        return 0.0
    parents = order.parents(i)
    numerator = conditional_cov(sigma, j, i, parents)
    denominator = float(residual_variances(sigma, parents, [i])[0])
    return numerator / denominator


def to_networkx(dag: WeightedDag) -> nx.DiGraph:
    """Directed graph of the nonzero edges, weights stored on the `weight` attribute."""
    graph = nx.DiGraph()
    graph.add_nodes_from(range(dag.d))
    children, parents = np.nonzero(dag.b)
    for child, parent in zip(children, parents):
        graph.add_edge(int(parent), int(child), weight=float(dag.b[child, parent]))
    return graph


def valid_orders(dag: WeightedDag) -> Iterator[Ordering]:
    """All causal orderings compatible with the DAG."""
    for perm in nx.all_topological_sorts(to_networkx(dag)):
        yield Ordering(tuple(perm))


def path_sum_effect(dag: WeightedDag, i: int, j: int) -> float:
    """
    Total effect by explicit enumeration of directed paths.

    Exponential in d, so only available for small graphs.
    """
    if dag.d > PATH_ORACLE_MAX_D:
        raise ValueError(f"path enumeration is limited to d <= {PATH_ORACLE_MAX_D}, got d = {dag.d}")
    if i == j:
        raise ValueError("total effect needs two distinct nodes")
    graph = to_networkx(dag)
    total = 0.0
    for path in nx.all_simple_paths(graph, i, j):
        total += math.prod(graph[a][b]["weight"] for a, b in zip(path[:-1], path[1:]))
    return total


def _draw_weights(perm: np.ndarray, d: int, beta_mean: float, density: str, rng: np.random.Generator) -> np.ndarray:
    if density not in KEEP_PROB:
        raise ValueError(f"density must be 'sparse' or 'dense', got {density!r}")
    weights = rng.normal(beta_mean, math.sqrt(EDGE_WEIGHT_VAR), size=(d, d))
    keep = rng.random((d, d)) < KEEP_PROB[density]
    # strictly lower triangular in causal-order coordinates: row = child position
    b_ordered = np.tril(weights * keep, -1)
    b = np.zeros((d, d))
    b[np.ix_(perm, perm)] = b_ordered
    return b


def random_dag(d: int, beta_mean: float, density: str, rng: np.random.Generator) -> WeightedDag:
    """
    Draw a random equal-variance LSEM.

    A uniform random permutation fixes the causal order, every edge of the
    corresponding complete DAG gets a N(beta_mean, 0.1) weight, and each edge
    is then kept with probability 0.9 (dense) or 0.5 (sparse). σ² = 1.

    Args:
        d (int): Number of nodes, at least 2
        beta_mean (float): Mean edge weight
        density (str): 'sparse' or 'dense'
        rng (Generator): Seeded numpy generator

    Returns:
        WeightedDag: The drawn model
    """
    if d < 2:
        raise ValueError(f"need at least two nodes, got {d}")
    perm = rng.permutation(d)
    return WeightedDag(_draw_weights(perm, d, beta_mean, density, rng), 1.0)


def no_effect_dag(d: int, beta_mean: float, density: str, rng: np.random.Generator,
                  source: int = 0, target: int = 1) -> WeightedDag:
    """
    Like `random_dag`, but the permutation is regenerated so that `target`
    precedes `source`; the total effect source -> target is then exactly 0.
    """
    if d < 2:
        raise ValueError(f"need at least two nodes, got {d}")
    perm = rng.permutation(d)
    pos_source = int(np.flatnonzero(perm == source)[0])
    pos_target = int(np.flatnonzero(perm == target)[0])
    if pos_source < pos_target:
        perm[pos_source], perm[pos_target] = target, source
    return WeightedDag(_draw_weights(perm, d, beta_mean, density, rng), 1.0)


def sample_lsem(dag: WeightedDag, n: int, rng: np.random.Generator,
                error_variances: Optional[Sequence[float]] = None) -> Dataset:
    """
    Draw n i.i.d. samples X = (I - B)^{-1} ε.

    Args:
        dag (WeightedDag): Generating model
        n (int): Sample size
        rng (Generator): Seeded numpy generator
        error_variances (sequence, optional): Per-node noise variances replacing
            the common σ² (robustness experiments only)

    Returns:
        Dataset: n x d samples
    """
    if n < 1:
        raise ValueError(f"sample size must be positive, got {n}")
    if error_variances is None:
        variances = np.full(dag.d, dag.sigma2)
    else:
        variances = np.asarray(error_variances, dtype=float)
        if variances.shape != (dag.d,) or np.any(variances <= 0):
            raise ValueError("error_variances needs one positive variance per node")
    eps = rng.standard_normal((n, dag.d)) * np.sqrt(variances)
    eye = np.eye(dag.d)
    mixing = np.linalg.solve(eye - dag.b, eye)
    return Dataset(eps @ mixing.T)


def example_path_dag(weights: Dict[Tuple[int, int], float], sigma2: float = 1.0) -> WeightedDag:
    """
    The five-node worked example (3 -> 1 -> 4 -> 2, 1 -> 2, 3 -> 5 -> 2).

    Args:
        weights (dict): β_{child,parent} keyed by 1-based (child, parent) pairs;
            edges not given get weight 0
        sigma2 (float): Error variance
    """
    unknown = set(weights) - set(EXAMPLE_EDGES)
    if unknown:
        raise ValueError(f"edges {sorted(unknown)} are not part of the example skeleton")
    b = np.zeros((5, 5))
    for (child, parent), value in weights.items():
        b[child - 1, parent - 1] = value
    return WeightedDag(b, sigma2)


def cancellation_dag() -> WeightedDag:
    """Example in which the two directed paths from node 1 to node 2 cancel exactly."""
    return example_path_dag({
        (1, 3): -0.5,
        (2, 1): 0.25,
        (4, 1): -0.5,
        (2, 4): 0.5,
        (5, 3): 0.5,
        (2, 5): 0.25,
    })


def chain_dag(weights: Sequence[float], sigma2: float = 1.0) -> WeightedDag:
    """Chain 0 -> 1 -> ... -> d-1 with the given consecutive edge weights."""
    d = len(weights) + 1
    b = np.zeros((d, d))
    for k, w in enumerate(weights):
        b[k + 1, k] = w
    return WeightedDag(b, sigma2)
