"""
Simulation harness for coverage, width, zero inclusion and timing of the
confidence regions on random equal-variance LSEMs.

Replicate r of a spec draws everything from the stream keyed by (seed, r),
so results do not depend on the number of workers or on their scheduling.
"""

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from baseline import DEFAULT_BOOTSTRAP_REPS, bootstrap_ci
from effect_tests import TestConfig
from errors import EffectCIError, ExperimentError
from graphs import KEEP_PROB, RNG_ALGORITHM, no_effect_dag, random_dag, sample_lsem, total_effect
from region import ConfidenceRegion, confidence_region

logger = logging.getLogger(__name__)

RESULTS_SCHEMA_VERSION = "1"
SIM_METHODS = ("lrt", "slrt", "bootstrap")
EFFECT_MODES = ("true_effect", "no_effect")
MAX_VARIANCE_SPREAD = 1.8
MAX_FAILURE_RATE = 0.01

# the effect of the first variable on the second
SOURCE, TARGET = 0, 1


@dataclass(frozen=True)
class ExperimentSpec:
    """
    One cell of a simulation grid.

    Args:
        d (int): Number of variables
        n (int): Sample size
        beta_mean (float): Mean edge weight
        density (str): 'sparse' or 'dense'
        reps (int): Number of replicates
        alpha (float): Level of the regions
        methods (tuple): Subset of 'lrt', 'slrt', 'bootstrap'
        effect_mode (str): 'true_effect', or 'no_effect' to force C(1 -> 2) = 0
        variance_spread (float): v; error variances are drawn from U[1 - v/2, 1 + v/2] when v > 0
        seed (int): Master seed
        bootstrap_reps (int): Resamples per bootstrap interval
        split_ratio (float): Split ratio of the split test
    """

    d: int = 6
    n: int = 500
    beta_mean: float = 0.5
    density: str = "sparse"
    reps: int = 200
    alpha: float = 0.05
    methods: Tuple[str, ...] = ("lrt",)
    effect_mode: str = "true_effect"
    variance_spread: float = 0.0
    seed: int = 0
    bootstrap_reps: int = DEFAULT_BOOTSTRAP_REPS
    split_ratio: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.d < 2:
            raise ValueError(f"d must be at least 2, got {self.d}")
        if self.n < self.d + 1:
            raise ValueError(f"n must be at least d + 1 = {self.d + 1}, got {self.n}")
        if self.density not in KEEP_PROB:
            raise ValueError(f"density must be one of {tuple(KEEP_PROB)}, got {self.density!r}")
        if self.reps < 1:
            raise ValueError(f"reps must be at least 1, got {self.reps}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.methods or any(m not in SIM_METHODS for m in self.methods):
            raise ValueError(f"methods must be a non-empty subset of {SIM_METHODS}, got {self.methods}")
        if self.effect_mode not in EFFECT_MODES:
            raise ValueError(f"effect_mode must be one of {EFFECT_MODES}, got {self.effect_mode!r}")
        if not 0 <= self.variance_spread <= MAX_VARIANCE_SPREAD:
            raise ValueError(f"variance_spread must lie in [0, {MAX_VARIANCE_SPREAD}], got {self.variance_spread}")
        if not math.isfinite(self.beta_mean):
            raise ValueError("beta_mean must be finite")


@dataclass(frozen=True)
class ReplicateRecord:
    """Outcome of one method on one simulated dataset; `error` is set when it failed."""

    method: str
    rep: int
    true_effect: float
    covered: Optional[bool] = None
    width: Optional[float] = None
    includes_zero: Optional[bool] = None
    n_intervals: Optional[int] = None
    lo: Optional[float] = None
    hi: Optional[float] = None
    wall_ms: Optional[float] = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class MethodSummary:
    method: str
    completed: int
    failures: int
    coverage: float
    mean_width: float
    zero_inclusion: float
    mean_wall_ms: float


@dataclass(frozen=True)
class ExperimentResult:
    """Per-method summaries and every per-replicate record of one spec."""

    spec: ExperimentSpec
    summaries: Tuple[MethodSummary, ...]
    records: Tuple[ReplicateRecord, ...] = field(repr=False)

    def summary(self, method: str) -> MethodSummary:
        for item in self.summaries:
            if item.method == method:
                return item
        raise KeyError(method)

    def aggregate_frame(self) -> pd.DataFrame:
        """Deterministic aggregate table, one row per method."""
        rows = []
        for item in self.summaries:
            row = _spec_columns(self.spec)
            row.update({k: v for k, v in asdict(item).items() if k != "mean_wall_ms"})
            rows.append(row)
        return pd.DataFrame(rows)

    def replicate_frame(self) -> pd.DataFrame:
        rows = [{k: v for k, v in asdict(r).items() if k != "wall_ms"} for r in self.records]
        return pd.DataFrame(rows)

    def timing_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{"method": r.method, "rep": r.rep, "wall_ms": r.wall_ms} for r in self.records])


def _spec_columns(spec: ExperimentSpec) -> Dict:
    return {
        "d": spec.d,
        "n": spec.n,
        "beta_mean": spec.beta_mean,
        "density": spec.density,
        "effect_mode": spec.effect_mode,
        "variance_spread": spec.variance_spread,
        "alpha": spec.alpha,
        "reps": spec.reps,
        "seed": spec.seed,
    }


def replicate_rng(seed: int, rep: int, *stream: int) -> np.random.Generator:
    """Generator keyed by (seed, rep); extra keys give independent side streams."""
    return np.random.default_rng(np.random.SeedSequence([seed, rep, *stream]))


def _region(method: str, spec: ExperimentSpec, data, rep: int) -> ConfidenceRegion:
    if method == "bootstrap":
        return bootstrap_ci(data, SOURCE, TARGET, spec.alpha, spec.bootstrap_reps, replicate_rng(spec.seed, rep, 1))
    # split seed drawn from the replicate key so the split is reproducible too
    split_seed = int(replicate_rng(spec.seed, rep, 2).integers(0, 2 ** 31 - 1))
    cfg = TestConfig(alpha=spec.alpha, method=method, split_ratio=spec.split_ratio, seed=split_seed)
    return confidence_region(data, SOURCE, TARGET, cfg)


def run_replicate(spec: ExperimentSpec, rep: int) -> List[ReplicateRecord]:
    """
    Simulate one dataset and compute every requested region on it.

    Failures of a single method are recorded, not raised.
    """
    rng = replicate_rng(spec.seed, rep)
    if spec.effect_mode == "no_effect":
        dag = no_effect_dag(spec.d, spec.beta_mean, spec.density, rng, SOURCE, TARGET)
    else:
        dag = random_dag(spec.d, spec.beta_mean, spec.density, rng)
    variances = None
    if spec.variance_spread > 0:
        half = 0.5 * spec.variance_spread
        variances = rng.uniform(1.0 - half, 1.0 + half, size=spec.d)
    data = sample_lsem(dag, spec.n, rng, variances)
    truth = total_effect(dag, SOURCE, TARGET)

    records = []
    for method in spec.methods:
        began = time.perf_counter()
        try:
            region = _region(method, spec, data, rep)
        except EffectCIError as exc:
            logger.warning("replicate %d, method %s failed: %s", rep, method, exc)
            records.append(ReplicateRecord(method, rep, truth, wall_ms=1000.0 * (time.perf_counter() - began),
                                           error=f"{type(exc).__name__}: {exc}"))
            continue
        wall_ms = 1000.0 * (time.perf_counter() - began)
        lo = region.intervals[0][0] if region.intervals else None
        hi = region.intervals[-1][1] if region.intervals else None
        records.append(ReplicateRecord(
            method=method,
            rep=rep,
            true_effect=truth,
            covered=region.contains(truth),
            width=region.nonzero_width(),
            includes_zero=region.includes_zero,
            n_intervals=len(region.intervals),
            lo=lo,
            hi=hi,
            wall_ms=wall_ms,
        ))
    return records


def summarize(spec: ExperimentSpec, records: Sequence[ReplicateRecord]) -> Tuple[MethodSummary, ...]:
    """Per-method rates over the replicates that completed."""
    summaries = []
    for method in spec.methods:
        mine = [r for r in records if r.method == method]
        done = [r for r in mine if not r.failed]
        failures = len(mine) - len(done)
        if failures / max(len(mine), 1) >= MAX_FAILURE_RATE:
            raise ExperimentError(f"{failures} of {len(mine)} replicates failed for method {method}")
        if not done:
            raise ExperimentError(f"no replicate completed for method {method}")
        summaries.append(MethodSummary(
            method=method,
            completed=len(done),
            failures=failures,
            coverage=float(np.mean([r.covered for r in done])),
            mean_width=float(np.mean([r.width for r in done])),
            zero_inclusion=float(np.mean([r.includes_zero for r in done])),
            mean_wall_ms=float(np.mean([r.wall_ms for r in done])),
        ))
    return tuple(summaries)


def run_experiment(spec: ExperimentSpec, workers: int = 1, progress: bool = False) -> ExperimentResult:
    """
    Run all replicates of a spec.

    Args:
        spec (ExperimentSpec): The experiment
        workers (int): Processes; 1 runs inline
        progress (bool): Show a progress bar

    Returns:
        ExperimentResult: Summaries and per-replicate records, ordered by replicate

    Raises:
        ExperimentError: if 1% or more of the replicates of a method failed
    """
    if workers < 1:
        raise ValueError(f"workers must be at least 1, got {workers}")
    reps = range(spec.reps)
    bar = dict(total=spec.reps, desc=f"d={spec.d} n={spec.n} beta={spec.beta_mean}", disable=not progress)
    if workers == 1:
        batches = [run_replicate(spec, rep) for rep in tqdm(reps, **bar)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(tqdm(pool.map(run_replicate, [spec] * spec.reps, reps), **bar))
    records = sorted((r for batch in batches for r in batch), key=lambda r: (r.rep, spec.methods.index(r.method)))
    result = ExperimentResult(spec, summarize(spec, records), tuple(records))
    for item in result.summaries:
        logger.info("%s: coverage %.3f, width %.4f, zero %.3f over %d replicates",
                    item.method, item.coverage, item.mean_width, item.zero_inclusion, item.completed)
    return result


def run_grid(specs: Iterable[ExperimentSpec], workers: int = 1, progress: bool = False) -> pd.DataFrame:
    """Aggregate tables of several specs stacked into one."""
    frames = [run_experiment(spec, workers, progress).aggregate_frame() for spec in specs]
    return pd.concat(frames, ignore_index=True)


def variance_sweep(base: ExperimentSpec, spreads: Sequence[float], workers: int = 1,
                   progress: bool = False) -> pd.DataFrame:
    """Coverage as the error variances depart from equality."""
    rows = []
    for v in spreads:
        spec = ExperimentSpec(**{**asdict(base), "variance_spread": float(v)})
        result = run_experiment(spec, workers, progress)
        for item in result.summaries:
            rows.append({"variance_spread": float(v), "method": item.method, "coverage": item.coverage,
                         "completed": item.completed})
    return pd.DataFrame(rows)


def _write_table(frame: pd.DataFrame, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {RESULTS_SCHEMA_VERSION}\n")
        fh.write(f"# rng: {RNG_ALGORITHM}\n")
        frame.to_csv(fh, index=False, lineterminator="\n")


def write_results(result: ExperimentResult, out_dir) -> Dict[str, Path]:
    """
    Write aggregate.csv, replicates.csv and timings.csv into `out_dir`.

    Only timings.csv depends on the machine; the other two are identical
    for identical specs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "aggregate": out / "aggregate.csv",
        "replicates": out / "replicates.csv",
        "timings": out / "timings.csv",
    }
    _write_table(result.aggregate_frame(), paths["aggregate"])
    _write_table(result.replicate_frame(), paths["replicates"])
    _write_table(result.timing_frame(), paths["timings"])
    logger.info("results written to %s", os.fspath(out))
    return paths


def read_table(path) -> pd.DataFrame:
    """Read a table written by `write_results`, skipping the schema line."""
    return pd.read_csv(path, comment="#")
