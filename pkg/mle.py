"""
Maximum likelihood under the equal-variance model for a fixed causal ordering.

Maximizing the Gaussian likelihood over σ² leaves the profile

    -(nd/2) log((2π/d) rss) - nd/2,   rss = tr((I - B)^T (I - B) Σ̂),

so every fit reduces to minimizing a residual sum of squares. Without a
constraint on the total effect the problem splits into d regressions. With
C(i -> j) = ψ fixed, only the rows of the nodes strictly after i up to and
including j are coupled; everything else keeps its closed form.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy import linalg, optimize, special

from errors import DegenerateDataError, InvalidModelError, SolverError
from graphs import effect_from_cov, total_effect
from model import (
    CovMatrix,
    Dataset,
    Ordering,
    PrefixOrdering,
    WeightedDag,
    checked_cholesky,
    empirical_cov,
    ordered_cholesky,
    sequential_residuals,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    """
    Settings of the quasi-Newton solve behind the fixed-effect fit.

    gtol is relative: the gradient sup-norm must fall below gtol * (1 + |objective|).
    When BFGS stops on precision loss, the result is still accepted if the
    sup-norm is below accept_gtol * (1 + |objective|). A constrained fit may
    exceed the unrestricted log-likelihood of its ordering by at most
    slack * (1 + |unrestricted|).
    """

    gtol: float = 1e-9
    max_iter: int = 500
    restarts: int = 3
    restart_scale: float = 0.1
    constraint_tol: float = 1e-7
    slack: float = 1e-9
    accept_gtol: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.gtol <= 0 or self.accept_gtol <= 0:
            raise ValueError("gradient tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.restarts < 0:
            raise ValueError(f"restarts must be non-negative, got {self.restarts}")
        if self.restart_scale <= 0:
            raise ValueError("restart_scale must be positive")
        if self.constraint_tol <= 0:
            raise ValueError("constraint_tol must be positive")
        if self.slack < 0:
            raise ValueError("slack must be non-negative")


@dataclass(frozen=True, eq=False)
class OrderingFit:
    """
    Maximum likelihood fit of the complete DAG given by one ordering.

    Args:
        order (Ordering): The ordering
        loglik (float): Profiled log-likelihood
        b_hat (ndarray): Fitted edge coefficients, support respects the ordering
        sigma2_hat (float): Fitted common error variance, rss / d
        rss (float): Residual trace tr((I - B)^T (I - B) Σ̂)
        effect_hat (float, optional): C(i -> j) of the fit when a target was requested
    """

    order: Ordering
    loglik: float
    b_hat: np.ndarray
    sigma2_hat: float
    rss: float
    effect_hat: Optional[float] = None

    def to_dag(self) -> WeightedDag:
        return WeightedDag(self.b_hat, self.sigma2_hat)


def chisq_quantile(df: int, p: float) -> float:
    """
    Quantile of the χ² distribution with `df` degrees of freedom.

    Args:
        df (int): Degrees of freedom, at least 1
        p (float): Probability in (0, 1)

    Returns:
        float: q with P(χ²_df <= q) = p
    """
    if int(df) != df or df < 1:
        raise ValueError(f"degrees of freedom must be a positive integer, got {df}")
    if not 0 < p < 1:
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    return 2.0 * float(special.gammaincinv(0.5 * df, p))


def profile_loglik(rss: float, n: int, d: int) -> float:
    """
    Log-likelihood maximized over σ² for a given residual trace.

    Args:
        rss (float): tr((I - B)^T (I - B) Σ̂), must be positive
        n (int): Sample size
        d (int): Number of variables

    Returns:
        float: -(nd/2) log((2π/d) rss) - nd/2
    """
    if not (rss > 0 and math.isfinite(rss)):
        raise DegenerateDataError(f"residual trace must be positive and finite, got {rss}")
    nd = n * d
    return -0.5 * nd * math.log((2 * math.pi / d) * rss) - 0.5 * nd


def fit_ordering(sigma_hat: CovMatrix, order: Ordering, n: int,
                 target: Optional[Tuple[int, int]] = None) -> OrderingFit:
    """
    Unrestricted fit: one least squares regression per node on all its predecessors.

    Args:
        sigma_hat (CovMatrix): Empirical covariance
        order (Ordering): Causal ordering
        n (int): Sample size
        target (tuple, optional): (i, j) pair whose total effect is reported

    Returns:
        OrderingFit: The fit
    """
    d = sigma_hat.d
    if order.d != d:
        raise InvalidModelError(f"ordering has {order.d} nodes, covariance has {d}")
    perm = list(order.perm)
    lower = ordered_cholesky(sigma_hat, order)
    permuted = sigma_hat.sigma[np.ix_(perm, perm)]
    b_hat = np.zeros((d, d))
    for k in range(1, d):
        coef = linalg.cho_solve((lower[:k, :k], True), permuted[:k, k])
        b_hat[perm[k], perm[:k]] = coef
    rss = float(np.sum(np.diag(lower) ** 2))
    effect = None
    if target is not None:
        effect = effect_from_cov(sigma_hat, order, target[0], target[1])
    return OrderingFit(order, profile_loglik(rss, n, d), b_hat, rss / d, rss, effect)


def prefix_bound(sigma_hat: CovMatrix, prefix: PrefixOrdering, n: int, d: int) -> float:
    """
    Upper bound on the log-likelihood of every ordering that starts with `prefix`.

    The nodes not yet placed can only add non-negative conditional variances
    to the residual trace, and the profile likelihood decreases in it.
    """
    if len(prefix) == 0:
        raise ValueError("prefix must contain at least one node")
    rss = float(np.sum(sequential_residuals(sigma_hat, prefix.prefix)))
    return profile_loglik(rss, n, d)


@dataclass(frozen=True, eq=False)
class ConstrainedProblem:
    """
    Reduced fixed-effect problem for one ordering and pair (i, j).

    `block` lists the coupled nodes in causal order: i, every node between
    i and j, and j. `cond_block` is Σ̂ over the block conditioned on p(i);
    regressing on p(i) is profiled out in closed form. Coefficients of the
    block are free below the diagonal except (j, i), which the constraint
    determines. `fixed_rss` collects the closed-form residuals of every node
    outside the coupled rows.
    """

    order: Ordering
    i: int
    j: int
    n: int
    d: int
    block: Tuple[int, ...]
    parents_i: Tuple[int, ...]
    cond_block: np.ndarray
    fixed_rss: float
    free_rows: np.ndarray
    free_cols: np.ndarray
    start: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.free_rows)


def reduce_constrained(sigma_hat: CovMatrix, order: Ordering, i: int, j: int, n: int) -> ConstrainedProblem:
    """Build the reduced fixed-effect problem; reusable for every ψ."""
    if i == j:
        raise ValueError("total effect needs two distinct nodes")
    if not order.precedes(i, j):
        raise ValueError(f"node {i} must precede node {j} in {order.perm}")
    d = sigma_hat.d
    perm = order.perm
    pos_i, pos_j = order.position(i), order.position(j)
    parents_i = perm[:pos_i]
    block = perm[pos_i:pos_j + 1]
    s = sigma_hat.sigma

    residuals = sequential_residuals(sigma_hat, perm)
    fixed_rss = float(np.sum(residuals[:pos_i]) + np.sum(residuals[pos_j + 1:]))

    cond = s[np.ix_(block, block)].copy()
    if parents_i:
        p = list(parents_i)
        factor = (checked_cholesky(s[np.ix_(p, p)]), True)
        cross = s[np.ix_(p, block)]
        cond -= cross.T @ linalg.cho_solve(factor, cross)
        cond = 0.5 * (cond + cond.T)

    size = len(block)
    rows, cols = np.tril_indices(size, -1)
    keep = ~((rows == size - 1) & (cols == 0))
    free_rows, free_cols = rows[keep], cols[keep]

    start_b = np.zeros((size, size))
    for r in range(1, size):
        start_b[r, :r] = linalg.cho_solve((checked_cholesky(cond[:r, :r]), True), cond[:r, r])
    start = start_b[free_rows, free_cols]

    return ConstrainedProblem(order, i, j, n, d, tuple(block), tuple(parents_i), cond, fixed_rss,
                              free_rows, free_cols, start)


def _path_sum(b: np.ndarray) -> np.ndarray:
    """I + B + B² + ... for a nilpotent B; stops at the first vanishing power."""
    total = np.eye(b.shape[0])
    power = total
    for _ in range(b.shape[0] - 1):
        power = power @ b
        if not np.any(power):
            break
        total = total + power
    return total


def _block_matrix(problem: ConstrainedProblem, psi: float, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    size = len(problem.block)
    b = np.zeros((size, size))
    b[problem.free_rows, problem.free_cols] = theta
    paths = _path_sum(b)
    b[size - 1, 0] = psi - paths[size - 1, 0]
    return b, paths


def constrained_objective(problem: ConstrainedProblem, psi: float, theta: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Coupled residual sum and its gradient in the free coefficients.

    β_{j,i} is eliminated as ψ minus the contribution of all longer paths,
    so the chain rule runs through the path-sum matrix.
    """
    b, paths = _block_matrix(problem, psi, np.asarray(theta, dtype=float))
    size = b.shape[0]
    a = np.eye(size) - b
    weighted = a @ problem.cond_block
    value = float(np.sum(a * weighted))
    grad_b = -2.0 * weighted
    last = size - 1
    # d β_{j,i} / d B_{r,c} = -(I - B0)^{-1}_{j,r} (I - B0)^{-1}_{c,i}
    chain = paths[last, problem.free_rows] * paths[problem.free_cols, 0]
    grad = grad_b[problem.free_rows, problem.free_cols] - grad_b[last, 0] * chain
    return value, grad


def _converged(result, cfg: SolverConfig) -> bool:
    if result.success:
        return True
    scale = 1.0 + abs(float(result.fun))
    return bool(np.max(np.abs(result.jac)) <= cfg.accept_gtol * scale)


def solve_constrained(problem: ConstrainedProblem, psi: float,
                      cfg: Optional[SolverConfig] = None) -> Tuple[np.ndarray, float]:
    """
    Minimize the coupled residual sum for C(i -> j) = ψ with BFGS.

    Starts from the unrestricted minimizer; on non-convergence retries from
    Gaussian perturbations of that start and keeps the best converged run.

    Returns:
        tuple: (theta, objective value)

    Raises:
        SolverError: if no run converged
    """
    cfg = cfg or SolverConfig()
    if problem.dim == 0:
        value, _ = constrained_objective(problem, psi, problem.start)
        return problem.start.copy(), value

    def objective(theta):
        return constrained_objective(problem, psi, theta)

    rng = np.random.default_rng(cfg.seed)
    best = None
    best_converged = None
    for attempt in range(cfg.restarts + 1):
        x0 = problem.start if attempt == 0 else problem.start + rng.normal(0.0, cfg.restart_scale, problem.dim)
        f0, _ = objective(x0)
        result = optimize.minimize(
            objective, x0, jac=True, method="BFGS",
            options={"gtol": cfg.gtol * (1.0 + abs(f0)), "maxiter": cfg.max_iter},
        )
        if best is None or result.fun < best.fun:
            best = result
        if _converged(result, cfg):
            best_converged = result
            break
        logger.debug("BFGS attempt %d for order %s, psi=%.6g stopped: %s",
                     attempt, problem.order.perm, psi, result.message)

    if best_converged is None:
        value = float(best.fun)
        loglik = profile_loglik(problem.fixed_rss + value, problem.n, problem.d)
        logger.warning("constrained fit failed for order %s at psi=%.6g after %d restarts",
                       problem.order.perm, psi, cfg.restarts)
        raise SolverError(f"BFGS did not converge for order {problem.order.perm} at psi={psi:.6g}",
                          best_value=value, best_loglik=loglik)
    return np.asarray(best_converged.x), float(best_converged.fun)


def constrained_loglik(problem: ConstrainedProblem, psi: float, cfg: Optional[SolverConfig] = None) -> float:
    """Profiled log-likelihood of the fixed-effect fit (no coefficient bookkeeping)."""
    _, value = solve_constrained(problem, psi, cfg)
    return profile_loglik(problem.fixed_rss + value, problem.n, problem.d)


def fit_ordering_constrained(source: Union[CovMatrix, Dataset], order: Ordering, i: int, j: int, psi: float,
                             n: Optional[int] = None, cfg: Optional[SolverConfig] = None,
                             problem: Optional[ConstrainedProblem] = None) -> OrderingFit:
    """
    Maximum likelihood fit of an ordering subject to C(i -> j) = ψ.

    Args:
        source (CovMatrix or Dataset): Empirical covariance, or data to estimate it from
        order (Ordering): Ordering with i before j
        i (int): Intervened node
        j (int): Response node
        psi (float): Hypothesized total effect
        n (int, optional): Sample size, required when `source` is a covariance
        cfg (SolverConfig, optional): Solver settings
        problem (ConstrainedProblem, optional): Cached reduction for this ordering

    Returns:
        OrderingFit: Fit whose total effect equals ψ within cfg.constraint_tol

    Raises:
        SolverError: optimizer failure, or constraint residual above tolerance
    """
    cfg = cfg or SolverConfig()
    if isinstance(source, Dataset):
        sigma_hat = empirical_cov(source)
        n = source.n if n is None else n
    else:
        sigma_hat = source
    if n is None:
        raise ValueError("sample size n is required when fitting from a covariance")
    if problem is None:
        problem = reduce_constrained(sigma_hat, order, i, j, n)

    theta, value = solve_constrained(problem, psi, cfg)
    b_block, _ = _block_matrix(problem, psi, theta)

    unrestricted = fit_ordering(sigma_hat, order, n)
    b_hat = unrestricted.b_hat.copy()
    block = list(problem.block)
    s = sigma_hat.sigma
    for r in range(1, len(block)):
        b_hat[block[r], :] = 0.0
        b_hat[block[r], block[:r]] = b_block[r, :r]
    if problem.parents_i:
        p = list(problem.parents_i)
        # β_{k,p(i)} = Σ_pp^{-1}(Σ_{p,k} - Σ_{p,block} β_{k,block})
        rhs = s[np.ix_(p, block)] @ (np.eye(len(block)) - b_block).T
        coef = linalg.cho_solve((checked_cholesky(s[np.ix_(p, p)]), True), rhs)
        for r in range(1, len(block)):
            b_hat[block[r], p] = coef[:, r]

    rss = problem.fixed_rss + value
    fit = OrderingFit(order, profile_loglik(rss, n, problem.d), b_hat, rss / problem.d, rss)
    # the constrained model is nested in the unrestricted one for this ordering
    if fit.loglik > unrestricted.loglik + cfg.slack * (1.0 + abs(unrestricted.loglik)):
        raise SolverError(f"constrained fit exceeds the unrestricted log-likelihood by "
                          f"{fit.loglik - unrestricted.loglik:.3g}", best_value=value, best_loglik=fit.loglik)
    effect = total_effect(fit.to_dag(), i, j)
    if abs(effect - psi) > cfg.constraint_tol:
        raise SolverError(f"constraint residual {abs(effect - psi):.3g} exceeds tolerance",
                          best_value=value, best_loglik=fit.loglik)
    return OrderingFit(order, fit.loglik, b_hat, fit.sigma2_hat, rss, effect)
