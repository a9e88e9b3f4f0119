"""
Bootstrap baseline: re-learn a sparse DAG on every resample, then take
percentiles of the resulting effect estimates.

The structure learner is a greedy DAG search over single-edge additions,
deletions and reversals. A DAG is scored by the equal-variance profile
log-likelihood of its parent sets minus (log n)/2 per edge. The search runs
from the empty graph and from the complete DAG of the maximum likelihood
ordering; the better end point is kept.
"""

import itertools
import logging
import math
import time
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from errors import ConditioningError, DegenerateDataError
from graphs import to_networkx, total_effect
from mle import profile_loglik
from model import (
    CovMatrix,
    Dataset,
    Ordering,
    WeightedDag,
    empirical_cov,
    regression_coefficients,
    residual_variances,
    sequential_residuals,
)
from ordersearch import variance_sort_order
from region import ConfidenceRegion, Diagnostics

logger = logging.getLogger(__name__)

EXACT_SEARCH_MAX_D = 7
DP_MAX_D = 16
DEFAULT_BOOTSTRAP_REPS = 500
MIN_BOOTSTRAP_REPS = 100
MAX_REDRAWS = 10
MAX_MOVES = 1000
SCORE_TOL = 1e-9

ParentSets = List[FrozenSet[int]]


def best_ordering(sigma_hat: CovMatrix) -> Ordering:
    """
    Exact maximum likelihood ordering by dynamic programming over node subsets.

    The residual trace of an ordering is a sum of conditional variances of
    each node given the set before it, so the best arrangement of a set S
    only depends on S. One conditioning solve per subset suffices.
    """
    d = sigma_hat.d
    if d > DP_MAX_D:
        raise ValueError(f"exact ordering search is limited to d <= {DP_MAX_D}, got d = {d}")
    full = (1 << d) - 1
    cost = np.full(1 << d, np.inf)
    last = np.full(1 << d, -1, dtype=int)
    cost[0] = 0.0
    # masks in increasing order visit every subset after all of its subsets
    for mask in range(full):
        if not np.isfinite(cost[mask]):
            continue
        placed = [v for v in range(d) if mask >> v & 1]
        free = [v for v in range(d) if not mask >> v & 1]
        variances = residual_variances(sigma_hat, placed, free)
        for v, var in zip(free, variances):
            nxt = mask | 1 << v
            total = cost[mask] + float(var)
            if total < cost[nxt]:
                cost[nxt] = total
                last[nxt] = v
    perm: List[int] = []
    mask = full
    while mask:
        v = int(last[mask])
        perm.append(v)
        mask &= ~(1 << v)
    return Ordering(tuple(reversed(perm)))


def _trace(sigma_hat: CovMatrix, perm: List[int]) -> float:
    return float(np.sum(sequential_residuals(sigma_hat, perm)))


def greedy_ordering(sigma_hat: CovMatrix) -> Ordering:
    """
    Insertion construction followed by pairwise-swap hill climbing.

    Nodes are inserted in variance-sort order, each at the position that
    keeps the residual trace smallest; then any swap of two positions that
    lowers the trace is applied until none does.
    """
    perm: List[int] = []
    for v in variance_sort_order(sigma_hat):
        candidates = [perm[:k] + [v] + perm[k:] for k in range(len(perm) + 1)]
        perm = min(candidates, key=lambda c: _trace(sigma_hat, c))
    best = _trace(sigma_hat, perm)
    improved = True
    while improved:
        improved = False
        for a in range(len(perm) - 1):
            for b in range(a + 1, len(perm)):
                trial = list(perm)
                trial[a], trial[b] = trial[b], trial[a]
                value = _trace(sigma_hat, trial)
                if value < best:
                    perm, best, improved = trial, value, True
    return Ordering(tuple(perm))


class _NodeVariances:
    """Memoized Σ̂_{v,v|pa} keyed by node and parent set."""

    def __init__(self, sigma_hat: CovMatrix):
        self.sigma_hat = sigma_hat
        self._cache: Dict[Tuple[int, FrozenSet[int]], float] = {}

    def __call__(self, v: int, parents: FrozenSet[int]) -> float:
        key = (v, parents)
        value = self._cache.get(key)
        if value is None:
            value = float(residual_variances(self.sigma_hat, sorted(parents), [v])[0])
            self._cache[key] = value
        return value


def _penalized(rss: float, edges: int, n: int, d: int) -> float:
    return profile_loglik(rss, n, d) - 0.5 * math.log(n) * edges


def structure_score(sigma_hat: CovMatrix, parents: Sequence[FrozenSet[int]], n: int) -> float:
    """
    BIC-penalized equal-variance log-likelihood of a DAG given by its parent sets.

    Args:
        sigma_hat (CovMatrix): Empirical covariance
        parents (sequence): parents[v] is the parent set of node v
        n (int): Sample size

    Returns:
        float: profile log-likelihood at rss = Σ_v Σ̂_{v,v|pa(v)}, minus (log n)/2 per edge
    """
    node_var = _NodeVariances(sigma_hat)
    rss = sum(node_var(v, frozenset(p)) for v, p in enumerate(parents))
    return _penalized(rss, sum(len(p) for p in parents), n, sigma_hat.d)


def _hill_climb(start: ParentSets, node_var: _NodeVariances, n: int, d: int) -> Tuple[ParentSets, float]:
    parents = list(start)
    graph = nx.DiGraph()
    graph.add_nodes_from(range(d))
    graph.add_edges_from((p, v) for v in range(d) for p in parents[v])
    variances = [node_var(v, parents[v]) for v in range(d)]
    rss = sum(variances)
    edges = graph.number_of_edges()
    score = _penalized(rss, edges, n, d)

    for _ in range(MAX_MOVES):
        best_score, best_move = score, None
        for a, b in itertools.permutations(range(d), 2):
            moves = []
            if a in parents[b]:
                moves.append(({b: parents[b] - {a}}, -1))
                graph.remove_edge(a, b)
                if not nx.has_path(graph, a, b):
                    moves.append(({b: parents[b] - {a}, a: parents[a] | {b}}, 0))
                graph.add_edge(a, b)
            elif not nx.has_path(graph, b, a):
                moves.append(({b: parents[b] | {a}}, 1))
            for changes, delta in moves:
                trial_rss = rss + sum(node_var(v, p) - variances[v] for v, p in changes.items())
                trial = _penalized(trial_rss, edges + delta, n, d)
                if trial > best_score + SCORE_TOL:
                    best_score, best_move = trial, (changes, delta)
        if best_move is None:
            break
        changes, delta = best_move
        for v, p in changes.items():
            graph.remove_edges_from([(q, v) for q in parents[v]])
            graph.add_edges_from((q, v) for q in p)
            parents[v] = p
            variances[v] = node_var(v, p)
        rss = sum(variances)
        edges += delta
        score = best_score
    else:
        logger.warning("greedy DAG search stopped after %d moves", MAX_MOVES)
    return parents, score


def greedy_dag_search(sigma_hat: CovMatrix, n: int) -> WeightedDag:
    """
    Sparse DAG maximizing the penalized equal-variance likelihood, found greedily.

    Edge weights are the least squares coefficients of each node on its
    learned parents; σ² is the mean residual variance.
    """
    d = sigma_hat.d
    node_var = _NodeVariances(sigma_hat)
    order = best_ordering(sigma_hat) if d <= EXACT_SEARCH_MAX_D else greedy_ordering(sigma_hat)
    starts = [
        [frozenset() for _ in range(d)],
        [frozenset(order.parents(v)) for v in range(d)],
    ]
    parents, score = max((_hill_climb(s, node_var, n, d) for s in starts), key=lambda item: item[1])
    b = np.zeros((d, d))
    for v, pa in enumerate(parents):
        if pa:
            cols = sorted(pa)
            b[v, cols] = regression_coefficients(sigma_hat, cols, v)
    rss = sum(node_var(v, pa) for v, pa in enumerate(parents))
    logger.debug("greedy DAG search: %d edges, score %.4f", sum(len(pa) for pa in parents), score)
    return WeightedDag(b, rss / d)


def greedy_structure_effect(data: Dataset, i: int, j: int) -> float:
    """
    Effect of i on j in the DAG learned by `greedy_dag_search`.

    Args:
        data (Dataset): Observations
        i (int): Intervened node
        j (int): Response node

    Returns:
        float: C(i -> j) of the learned DAG, exactly 0 when it has no directed path i -> j
    """
    dag = greedy_dag_search(empirical_cov(data), data.n)
    if not nx.has_path(to_networkx(dag), i, j):
        return 0.0
    return total_effect(dag, i, j)


def bootstrap_ci(data: Dataset, i: int, j: int, alpha: float = 0.05, b_reps: int = DEFAULT_BOOTSTRAP_REPS,
                 rng: Optional[np.random.Generator] = None) -> ConfidenceRegion:
    """
    Percentile bootstrap interval for C(i -> j).

    Args:
        data (Dataset): Observations
        i (int): Intervened node
        j (int): Response node
        alpha (float): Level; the interval spans the alpha/2 and 1 - alpha/2 percentiles
        b_reps (int): Number of resamples, at least 100
        rng (Generator, optional): Seeded generator; each resample gets its own child stream

    Returns:
        ConfidenceRegion: A single interval, method 'bootstrap'
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if b_reps < MIN_BOOTSTRAP_REPS:
        raise ValueError(f"need at least {MIN_BOOTSTRAP_REPS} bootstrap replicates, got {b_reps}")
    rng = rng if rng is not None else np.random.default_rng()
    began = time.perf_counter()
    streams = rng.spawn(b_reps)

    effects = np.empty(b_reps)
    redraws = 0
    for rep, stream in enumerate(streams):
        for attempt in range(MAX_REDRAWS + 1):
            rows = stream.integers(0, data.n, size=data.n)
            try:
                effects[rep] = greedy_structure_effect(data.subset(rows), i, j)
                break
            except (DegenerateDataError, ConditioningError) as exc:
                redraws += 1
                logger.debug("resample %d attempt %d degenerate: %s", rep, attempt, exc)
        else:
            raise DegenerateDataError(f"resample {rep} stayed degenerate after {MAX_REDRAWS} redraws")

    lo = float(np.percentile(effects, 100 * alpha / 2, method="inverted_cdf"))
    hi = float(np.percentile(effects, 100 * (1 - alpha / 2), method="inverted_cdf"))
    wall_ms = 1000.0 * (time.perf_counter() - began)
    if redraws:
        logger.info("bootstrap redrew %d degenerate resamples", redraws)
    return ConfidenceRegion(((lo, hi),), lo <= 0 <= hi, alpha, "bootstrap",
                            Diagnostics(survivor_count=0, evaluations=b_reps, wall_ms=wall_ms))
