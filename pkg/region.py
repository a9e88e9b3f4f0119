"""
Confidence regions for a total causal effect by test inversion.

Starting from the effects of the plausible unrestricted fits, the scan
walks left and right on a grid of width s until the test rejects on both
sides. Every accepted run becomes one interval whose ends sit half a step
beyond the last accepted grid points. The zero effect is tested separately
because reversing i and j makes it plausible without any interval around it.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from errors import ScanOverflowError
from effect_tests import (
    TestConfig,
    TestVerdict,
    lrt_test_effect,
    slrt_orderings,
    slrt_test_effect,
    split_dataset,
)
from model import Dataset, empirical_cov
from ordersearch import possible_orderings

logger = logging.getLogger(__name__)

STEP_FRACTION = 0.01

Interval = Tuple[float, float]


@dataclass(frozen=True)
class Diagnostics:
    survivor_count: int = 0
    evaluations: int = 0
    wall_ms: float = 0.0
    step: Optional[float] = None


@dataclass(frozen=True)
class ConfidenceRegion:
    """
    Union of disjoint closed intervals, possibly plus an isolated zero.

    Args:
        intervals (tuple): Sorted, pairwise disjoint (lo, hi) pairs
        includes_zero (bool): Whether 0 belongs to the region
        alpha (float): Level of the region
        method (str): 'lrt', 'slrt' or 'bootstrap'
        diagnostics (Diagnostics): Work done to compute it
    """

    intervals: Tuple[Interval, ...]
    includes_zero: bool
    alpha: float
    method: str
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def __post_init__(self):
        intervals = tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        for lo, hi in intervals:
            if not lo <= hi:
                raise ValueError(f"interval ({lo}, {hi}) has lo > hi")
            if lo <= 0 <= hi and not self.includes_zero:
                raise ValueError("an interval contains 0 but includes_zero is false")
        for (_, hi), (lo, _) in zip(intervals, intervals[1:]):
            if lo <= hi:
                raise ValueError("intervals must be sorted and pairwise disjoint")
        object.__setattr__(self, "intervals", intervals)

    def contains(self, psi: float) -> bool:
        if psi == 0 and self.includes_zero:
            return True
        return any(lo <= psi <= hi for lo, hi in self.intervals)

    def nonzero_width(self) -> float:
        """Total length of the intervals; an isolated zero adds nothing."""
        return float(sum(hi - lo for lo, hi in self.intervals))

    @property
    def isolated_zero(self) -> bool:
        return self.includes_zero and not any(lo <= 0 <= hi for lo, hi in self.intervals)

    @property
    def is_empty(self) -> bool:
        return not self.intervals and not self.includes_zero


def merge_intervals(intervals: Iterable[Interval]) -> List[Interval]:
    """Sorted union of closed intervals; touching intervals are joined."""
    merged: List[List[float]] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(lo, hi) for lo, hi in merged]


def default_step(start_effects: Sequence[float]) -> float:
    """One percent of the largest start effect, never below 0.01."""
    largest = max((abs(v) for v in start_effects), default=0.0)
    return STEP_FRACTION * max(1.0, largest)


def _scan(accept: Callable[[float], bool], start: float, step: float, direction: str, max_steps: int) -> float:
    """Last accepted grid point walking away from an accepted `start`."""
    sign = -1.0 if direction == "left" else 1.0
    k = 0
    while accept(start + sign * (k + 1) * step):
        k += 1
        if k >= max_steps:
            raise ScanOverflowError(direction, start, max_steps)
    return start + sign * k * step


def scan_region(accept: Callable[[float], bool], start_effects: Sequence[float], step: float,
                max_steps: int) -> Tuple[List[Interval], bool]:
    """
    Grid scan around each start value plus the zero test.

    Returns:
        tuple: (merged intervals, whether ψ = 0 was accepted)
    """
    remaining = sorted(set(start_effects))
    found: List[Interval] = []
    while remaining:
        start = remaining.pop(0)
        anchor = next((c for c in (start, start - step, start + step) if accept(c)), None)
        if anchor is None:
            logger.debug("start value %.6g and its neighbours rejected", start)
            continue
        left = _scan(accept, anchor, step, "left", max_steps)
        right = _scan(accept, anchor, step, "right", max_steps)
        found.append((left - step / 2, right + step / 2))
        first_rejected = right + step
        remaining = [v for v in remaining if v > first_rejected]
    zero_accepted = accept(0.0)
    return merge_intervals(found), zero_accepted


def confidence_region(data: Dataset, i: int, j: int, cfg: Optional[TestConfig] = None) -> ConfidenceRegion:
    """
    Confidence region for C(i -> j) at level 1 - cfg.alpha.

    Args:
        data (Dataset): Observations
        i (int): Intervened node, 0-based
        j (int): Response node, 0-based
        cfg (TestConfig, optional): Method, level, step and solver settings

    Returns:
        ConfidenceRegion: The region

    Raises:
        DegenerateDataError: if the data cannot produce a positive definite covariance
        ScanOverflowError: if a scan runs past cfg.max_steps
    """
    cfg = cfg or TestConfig()
    if i == j or not (0 <= i < data.d and 0 <= j < data.d):
        raise ValueError(f"need two distinct nodes in 0..{data.d - 1}, got i={i}, j={j}")
    began = time.perf_counter()
    cache: Dict = {}
    verdicts: Dict[Tuple[bool, float], TestVerdict] = {}
    executor = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None

    try:
        if cfg.method == "slrt":
            split = split_dataset(data, cfg)
            tilde_sigma1, plaus = slrt_orderings(split, i, j, cfg.alpha)

            def test(psi: float) -> TestVerdict:
                return slrt_test_effect(split, plaus, tilde_sigma1, i, j, psi, cfg, cache, executor)
        else:
            sigma_hat = empirical_cov(data)
            plaus = possible_orderings(sigma_hat, data.n, i, j, cfg.alpha)

            def test(psi: float) -> TestVerdict:
                return lrt_test_effect(sigma_hat, data.n, plaus, i, j, psi, cfg, cache, executor)

        def accept(psi: float) -> bool:
            # the grid revisits points when scans from different starts meet
            key = (psi == 0, round(psi, 12))
            if key not in verdicts:
                verdicts[key] = test(psi)
            return verdicts[key].accepted

        step = cfg.step if cfg.step is not None else default_step(plaus.start_effects)
        intervals, zero_accepted = scan_region(accept, plaus.start_effects, step, cfg.max_steps)
    finally:
        if executor is not None:
            executor.shutdown()

    includes_zero = zero_accepted or any(lo <= 0 <= hi for lo, hi in intervals)
    wall_ms = 1000.0 * (time.perf_counter() - began)
    diagnostics = Diagnostics(plaus.survivor_count, len(verdicts), wall_ms, step)
    logger.info("%s region for %d -> %d: %d interval(s), zero %s, %d tests over %d orderings",
                cfg.method, i, j, len(intervals), "included" if includes_zero else "excluded",
                len(verdicts), plaus.survivor_count)
    return ConfidenceRegion(tuple(intervals), includes_zero, cfg.alpha, cfg.method, diagnostics)
