"""
Search over causal orderings for the plausible set of the likelihood test.

An ordering survives when 2(L1 - loglik) stays within the critical value,
L1 being the best equal-variance log-likelihood. Orderings are built one
node at a time; each prefix already fixes part of the residual trace, so a
prefix whose bound fails the threshold is dropped together with all of its
completions.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from mle import OrderingFit, chisq_quantile, fit_ordering, profile_loglik
from model import CovMatrix, Ordering, residual_variances

logger = logging.getLogger(__name__)

EXHAUSTIVE_MAX_D = 8

# Relative slack on the pruning test; survivors are re-checked on exact fits.
PRUNE_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class PlausibleOrderings:
    """
    Orderings not rejected by the unconstrained likelihood threshold.

    Args:
        orders (tuple): Survivors after prefix collapse, by decreasing loglik
        logliks (tuple): Matching profile log-likelihoods
        start_effects (tuple): Sorted distinct effects of orders with i before j
        l1_hat (float): Reference log-likelihood the threshold is measured from
        crit (float): Threshold applied to 2(l1_hat - loglik)
        zero_order (Ordering, optional): Best survivor with j before i
        zero_loglik (float, optional): Its log-likelihood
        survivors (tuple): (Ordering, loglik) pairs before prefix collapse
    """

    orders: Tuple[Ordering, ...]
    logliks: Tuple[float, ...]
    start_effects: Tuple[float, ...]
    l1_hat: float
    crit: float
    zero_order: Optional[Ordering] = None
    zero_loglik: Optional[float] = None
    survivors: Tuple[Tuple[Ordering, float], ...] = field(default_factory=tuple)

    def __len__(self):
        return len(self.orders)

    @property
    def survivor_count(self) -> int:
        return len(self.survivors)

    def is_empty(self) -> bool:
        return not self.orders


def variance_sort_order(sigma_hat: CovMatrix) -> Ordering:
    """
    Greedy ordering: repeatedly append the node with the smallest conditional
    variance given the nodes already placed. Ties go to the lowest index.
    """
    remaining = list(range(sigma_hat.d))
    chosen: List[int] = []
    while remaining:
        variances = residual_variances(sigma_hat, chosen, remaining)
        chosen.append(remaining.pop(int(np.argmin(variances))))
    return Ordering(tuple(chosen))


def _collapse_key(order: Ordering, i: int) -> Tuple[frozenset, Tuple[int, ...]]:
    # only the set of nodes before i matters, not their arrangement
    pos = order.position(i)
    return frozenset(order.perm[:pos]), order.perm[pos:]


def _search(sigma_hat: CovMatrix, n: int, reference: float, crit: float, update: bool) -> Tuple[List[Tuple[int, ...]], float]:
    """Depth-first expansion of prefixes; returns complete survivors and the final reference."""
    d = sigma_hat.d
    best = reference
    found: List[Tuple[int, ...]] = []
    # frames: (prefix, accumulated residual trace)
    stack: List[Tuple[Tuple[int, ...], float]] = [((), 0.0)]
    while stack:
        prefix, rss = stack.pop()
        remaining = [v for v in range(d) if v not in prefix]
        variances = residual_variances(sigma_hat, prefix, remaining)
        children = []
        for v, var in zip(remaining, variances):
            child_rss = rss + max(float(var), 0.0)
            bound = profile_loglik(child_rss, n, d)
            if 2.0 * (best - bound) > crit + PRUNE_RTOL * (1.0 + abs(best)):
                continue
            child = prefix + (v,)
            if len(child) == d:
                found.append(child)
                if update and bound > best:
                    logger.debug("reference log-likelihood raised %.6f -> %.6f by %s", best, bound, child)
                    best = bound
            else:
                children.append((child, child_rss))
        # reversed so that the lowest index is expanded first
        stack.extend(reversed(children))
    return found, best


def possible_orderings(sigma_hat: CovMatrix, n: int, i: int, j: int, alpha: float,
                       reference: Optional[float] = None, crit: Optional[float] = None) -> PlausibleOrderings:
    """
    Plausible orderings for the effect of i on j.

    By default the threshold is χ²_{d,1-α} measured from the best ordering's
    log-likelihood, which the search itself discovers. Passing `reference`
    and `crit` holds both fixed instead.

    Args:
        sigma_hat (CovMatrix): Empirical covariance
        n (int): Sample size behind sigma_hat
        i (int): Intervened node
        j (int): Response node
        alpha (float): Test level
        reference (float, optional): Fixed reference log-likelihood
        crit (float, optional): Threshold replacing χ²_{d,1-α}

    Returns:
        PlausibleOrderings: The survivors
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    d = sigma_hat.d
    if i == j or not (0 <= i < d and 0 <= j < d):
        raise ValueError(f"need two distinct nodes in 0..{d - 1}, got i={i}, j={j}")
    threshold = chisq_quantile(d, 1 - alpha) if crit is None else float(crit)
    fixed = reference is not None
    if fixed:
        start = float(reference)
    else:
        start = fit_ordering(sigma_hat, variance_sort_order(sigma_hat), n).loglik

    candidates, _ = _search(sigma_hat, n, start, threshold, update=not fixed)
    fits: List[OrderingFit] = [fit_ordering(sigma_hat, Ordering(perm), n, target=(i, j)) for perm in candidates]
    l1 = start if fixed else max([start] + [f.loglik for f in fits])
    survivors = [f for f in fits if 2.0 * (l1 - f.loglik) <= threshold]
    survivors.sort(key=lambda f: (-f.loglik, f.order.perm))
    logger.debug("ordering search: %d candidates, %d survivors (d=%d, crit=%.4f)",
                 len(candidates), len(survivors), d, threshold)

    collapsed: Dict[Tuple[frozenset, Tuple[int, ...]], OrderingFit] = {}
    for fit in survivors:
        # survivors are sorted, so the first one seen per key is the best
        collapsed.setdefault(_collapse_key(fit.order, i), fit)
    kept = sorted(collapsed.values(), key=lambda f: (-f.loglik, f.order.perm))

    zero = next((f for f in kept if f.order.precedes(j, i)), None)
    starts = sorted({round(f.effect_hat, 12) for f in kept if f.order.precedes(i, j)})

    return PlausibleOrderings(
        orders=tuple(f.order for f in kept),
        logliks=tuple(f.loglik for f in kept),
        start_effects=tuple(starts),
        l1_hat=l1,
        crit=threshold,
        zero_order=None if zero is None else zero.order,
        zero_loglik=None if zero is None else zero.loglik,
        survivors=tuple((f.order, f.loglik) for f in survivors),
    )


def exhaustive_orderings(sigma_hat: CovMatrix, n: int, alpha: float) -> List[Tuple[Ordering, float]]:
    """
    Brute-force survivor set over all d! orderings, best first.

    Only feasible for small d; used to check the pruned search.
    """
    d = sigma_hat.d
    if d > EXHAUSTIVE_MAX_D:
        raise ValueError(f"exhaustive enumeration is limited to d <= {EXHAUSTIVE_MAX_D}, got d = {d}")
    threshold = chisq_quantile(d, 1 - alpha)
    fits = [fit_ordering(sigma_hat, Ordering(perm), n) for perm in itertools.permutations(range(d))]
    l1 = max(f.loglik for f in fits)
    kept = [(f.order, f.loglik) for f in fits if 2.0 * (l1 - f.loglik) <= threshold]
    return sorted(kept, key=lambda item: (-item[1], item[0].perm))
