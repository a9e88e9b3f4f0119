"""
Core types for linear structural equation models with equal error variances.

A model is X = BX + ε with ε ~ N(0, σ² I). Row j of B holds the edge
weights β_{j,i} of the edges i -> j, so the covariance of X is
σ²(I - B)^{-1}(I - B)^{-T}. Node indices are 0-based everywhere in the
library; the command line translates to 1-based labels.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy import linalg

from errors import ConditioningError, DegenerateDataError, InvalidModelError

logger = logging.getLogger(__name__)

SYMMETRY_RTOL = 1e-12
PIVOT_RTOL = 1e-12


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class WeightedDag:
    """
    Edge-coefficient matrix with acyclic support plus a common error variance.

    Args:
        b (ndarray): d x d matrix, b[j, i] is the weight of the edge i -> j
        sigma2 (float): Common error variance, strictly positive
    """

    b: np.ndarray
    sigma2: float = 1.0

    def __post_init__(self):
        b = _frozen(self.b)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise InvalidModelError(f"edge matrix must be square, got shape {b.shape}")
        if b.shape[0] < 2:
            raise InvalidModelError("a WeightedDag needs at least two nodes")
        if not np.all(np.isfinite(b)):
            raise InvalidModelError("edge matrix contains non-finite entries")
        if np.any(np.diag(b) != 0):
            raise InvalidModelError("edge matrix must have a zero diagonal")
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise InvalidModelError(f"error variance must be positive, got {self.sigma2}")
        graph = nx.from_numpy_array((b != 0).T.astype(int), create_using=nx.DiGraph)
        if not nx.is_directed_acyclic_graph(graph):
            raise InvalidModelError("edge matrix support contains a directed cycle")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @property
    def d(self) -> int:
        return self.b.shape[0]


@dataclass(frozen=True, eq=False)
class CovMatrix:
    """Symmetric positive definite covariance matrix (Σ or its estimate Σ̂)."""

    sigma: np.ndarray

    def __post_init__(self):
        s = np.array(self.sigma, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise InvalidModelError(f"covariance must be square, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise InvalidModelError("covariance contains non-finite entries")
        scale = max(float(np.max(np.abs(s))), np.finfo(float).tiny)
        if np.max(np.abs(s - s.T)) > SYMMETRY_RTOL * scale:
            raise InvalidModelError("covariance is not symmetric")
        s = 0.5 * (s + s.T)
        checked_cholesky(s, InvalidModelError)
        object.__setattr__(self, "sigma", _frozen(s))

    @property
    def d(self) -> int:
        return self.sigma.shape[0]


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    An n x d sample matrix with optional column labels.

    Rows are observations. At least d + 1 rows are required so that the
    empirical covariance is invertible almost surely.
    """

    x: np.ndarray
    column_names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim != 2:
            raise DegenerateDataError(f"data must be a 2-d table, got {x.ndim} dimension(s)")
        n, d = x.shape
        if n < d + 1:
            raise DegenerateDataError(f"need at least d + 1 = {d + 1} rows, got {n}")
        bad = np.argwhere(~np.isfinite(x))
        if len(bad):
            row, col = bad[0]
            raise DegenerateDataError(
                f"non-finite value at row {row + 1}, column {col + 1}", row=int(row) + 1, column=int(col) + 1
            )
        if self.column_names is not None:
            names = tuple(str(c) for c in self.column_names)
            if len(names) != d:
                raise DegenerateDataError(f"{len(names)} column names for {d} columns")
            object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "x", _frozen(x))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @classmethod
    def from_array(cls, x, column_names: Optional[Sequence[str]] = None) -> "Dataset":
        return cls(np.asarray(x, dtype=float), None if column_names is None else tuple(column_names))

    def subset(self, rows) -> "Dataset":
        """Return the dataset restricted to the given row indices."""
        return Dataset(self.x[np.asarray(rows)], self.column_names)

    def centered(self) -> np.ndarray:
        return self.x - self.x.mean(axis=0)


@dataclass(frozen=True)
class Ordering:
    """
    A causal ordering: perm[k] is the k-th node. The parents of a node in
    the corresponding complete DAG are all nodes placed before it.
    """

    perm: Tuple[int, ...]

    def __post_init__(self):
        perm = tuple(int(v) for v in self.perm)
        if sorted(perm) != list(range(len(perm))):
            raise InvalidModelError(f"{perm} is not a permutation of 0..{len(perm) - 1}")
        object.__setattr__(self, "perm", perm)

    @property
    def d(self) -> int:
        return len(self.perm)

    def position(self, v: int) -> int:
        return self.perm.index(v)

    def parents(self, v: int) -> Tuple[int, ...]:
        return self.perm[: self.position(v)]

    def precedes(self, a: int, b: int) -> bool:
        return self.position(a) < self.position(b)

    def __iter__(self):
        return iter(self.perm)

    def __len__(self):
        return len(self.perm)


@dataclass(frozen=True)
class PrefixOrdering:
    """The first m nodes of a causal ordering."""

    prefix: Tuple[int, ...]

    def __post_init__(self):
        prefix = tuple(int(v) for v in self.prefix)
        if len(set(prefix)) != len(prefix):
            raise InvalidModelError(f"prefix {prefix} repeats a node")
        if any(v < 0 for v in prefix):
            raise InvalidModelError(f"prefix {prefix} contains a negative node index")
        object.__setattr__(self, "prefix", prefix)

    def __len__(self):
        return len(self.prefix)


def checked_cholesky(s: np.ndarray, error=ConditioningError) -> np.ndarray:
    """Lower Cholesky factor of s; raises `error` when a pivot is below tolerance."""
    if s.size == 0:
        return s
    try:
        lower = linalg.cholesky(s, lower=True)
    except linalg.LinAlgError as exc:
        raise error(f"matrix is not positive definite: {exc}") from exc
    threshold = PIVOT_RTOL * float(np.max(np.diag(s)))
    if np.min(np.diag(lower)) ** 2 <= threshold:
        raise error("matrix is numerically singular (Cholesky pivot below tolerance)")
    return lower


def covariance_of(dag: WeightedDag) -> CovMatrix:
    """
    Covariance implied by an equal-variance LSEM.

    Args:
        dag (WeightedDag): The generating model

    Returns:
        CovMatrix: σ²(I - B)^{-1}(I - B)^{-T}
    """
    eye = np.eye(dag.d)
    inv = np.linalg.solve(eye - dag.b, eye)
    return CovMatrix(dag.sigma2 * inv @ inv.T)


def empirical_cov(data: Dataset) -> CovMatrix:
    """
    Mean-centred empirical covariance with denominator n.

    Raises:
        DegenerateDataError: if the estimate is not positive definite
    """
    xc = data.centered()
    try:
        return CovMatrix(xc.T @ xc / data.n)
    except InvalidModelError as exc:
        raise DegenerateDataError(f"empirical covariance is degenerate: {exc}") from exc


def residual_variances(sigma: CovMatrix, conditioning: Sequence[int], targets: Sequence[int]) -> np.ndarray:
    """
    Conditional variances Σ_{t,t|S} for several targets sharing one conditioning set.

    Args:
        sigma (CovMatrix): Covariance matrix
        conditioning (sequence): The set S
        targets (sequence): Nodes t, none of them in S

    Returns:
        ndarray: One conditional variance per target, in target order
    """
    s = sigma.sigma
    targets = list(targets)
    variances = np.diag(s)[targets].copy()
    conditioning = list(conditioning)
    if not conditioning:
        return variances
    factor = (checked_cholesky(s[np.ix_(conditioning, conditioning)]), True)
    cross = s[np.ix_(conditioning, targets)]
    solved = linalg.cho_solve(factor, cross)
    return variances - np.sum(cross * solved, axis=0)


def regression_coefficients(sigma: CovMatrix, conditioning: Sequence[int], target: int) -> np.ndarray:
    """Population least squares coefficients Σ_SS^{-1} Σ_{S,t} of `target` on `conditioning`."""
    conditioning = list(conditioning)
    if not conditioning:
        return np.zeros(0)
    s = sigma.sigma
    factor = (checked_cholesky(s[np.ix_(conditioning, conditioning)]), True)
    return linalg.cho_solve(factor, s[conditioning, target])


def conditional_cov(sigma: CovMatrix, j: int, i: int, s: Sequence[int]) -> float:
    """Σ_{j,i|S} = Σ_{j,i} - Σ_{j,S}(Σ_{S,S})^{-1}Σ_{S,i}."""
    cov = sigma.sigma
    s = list(s)
    if j in s or i in s:
        raise ValueError(f"nodes {j} and {i} must not belong to the conditioning set {s}")
    if not s:
        return float(cov[j, i])
    factor = (checked_cholesky(cov[np.ix_(s, s)]), True)
    solved = linalg.cho_solve(factor, cov[s, i])
    return float(cov[j, i] - cov[j, s] @ solved)


def ordered_cholesky(sigma: CovMatrix, order: Ordering) -> np.ndarray:
    """Cholesky factor of Σ with rows and columns permuted into causal order."""
    perm = list(order.perm)
    return checked_cholesky(sigma.sigma[np.ix_(perm, perm)])


def sequential_residuals(sigma: CovMatrix, nodes: Sequence[int]) -> np.ndarray:
    """Σ_{v,v|earlier nodes} for each v of a (possibly partial) node sequence."""
    nodes = list(nodes)
    return np.diag(checked_cholesky(sigma.sigma[np.ix_(nodes, nodes)])) ** 2


def equal_variance_residuals(sigma: CovMatrix, order: Ordering) -> np.ndarray:
    """
    Conditional variance of each node given all of its predecessors.

    The k-th entry belongs to the k-th node of the ordering. Σ lies in the
    equal-variance model for this ordering exactly when all entries agree.
    """
    if order.d != sigma.d:
        raise InvalidModelError(f"ordering has {order.d} nodes, covariance has {sigma.d}")
    return sequential_residuals(sigma, order.perm)


def gaussian_loglik(sigma: CovMatrix, sigma_hat: CovMatrix, n: int) -> float:
    """
    Centered Gaussian log-likelihood of n samples with empirical covariance
    sigma_hat, evaluated at sigma.
    """
    d = sigma.d
    lower = checked_cholesky(sigma.sigma)
    logdet = 2.0 * float(np.sum(np.log(np.diag(lower))))
    trace = float(np.trace(linalg.cho_solve((lower, True), sigma_hat.sigma)))
    return -0.5 * n * (d * math.log(2 * math.pi) + logdet + trace)


def saturated_loglik(sigma_hat: CovMatrix, n: int) -> float:
    """Maximum Gaussian log-likelihood over all positive definite matrices."""
    return gaussian_loglik(sigma_hat, sigma_hat, n)
