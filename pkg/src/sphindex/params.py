"""Index parametrization and dataset container.

The unit coefficient vector with positive first entry is parametrized by
the open unit ball: beta(theta) = (sqrt(1 - ||theta||^2), theta).  This
removes the norm constraint from the optimization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import BoundarySingularity, InvalidBeta, OutsideTheta

BOUNDARY_TOL = 1e-10


@dataclass(frozen=True)
class IndexParam:
    """A point of the open unit ball in R^{p-1}."""

    theta: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.theta, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise ValueError("theta must be a nonempty 1-d vector")
        if float(t @ t) >= 1.0:
            raise OutsideTheta(f"||theta||^2 = {float(t @ t)!r} is not < 1")
        t = t.copy()
        t.flags.writeable = False
        object.__setattr__(self, "theta", t)

    @property
    def dim(self) -> int:
        return self.theta.size


def beta_from_theta(theta) -> np.ndarray:
    """Unit coefficient vector (sqrt(1 - ||theta||^2), theta)."""
    t = theta.theta if isinstance(theta, IndexParam) else np.asarray(theta, dtype=float)
    sq = float(t @ t)
    if sq >= 1.0:
        raise OutsideTheta(f"||theta||^2 = {sq!r} is not < 1")
    return np.concatenate([[np.sqrt(1.0 - sq)], t])


def theta_from_beta(beta) -> IndexParam:
    """Inverse of beta_from_theta; requires a unit vector with beta[0] > 0."""
    b = np.asarray(beta, dtype=float)
    if b.ndim != 1 or b.size < 2:
        raise InvalidBeta("beta must be a 1-d vector of length >= 2")
    nrm = float(np.linalg.norm(b))
    if abs(nrm - 1.0) > 1e-8:
        raise InvalidBeta(f"beta must be a unit vector, got norm {nrm!r}")
    if b[0] <= 0:
        raise InvalidBeta(f"beta[0] must be positive, got {b[0]!r}")
    theta = b[1:] / nrm
    sq = float(theta @ theta)
    if sq >= 1.0:
        # Round-off can push ||theta|| onto the boundary when beta[0] ~ 0.
        theta = theta * np.sqrt((1.0 - 1e-15) / sq)
    return IndexParam(theta)


def jacobian_beta(theta) -> np.ndarray:
    """Jacobian of beta_from_theta: top row -theta^T / sqrt(1 - ||theta||^2)."""
    t = theta.theta if isinstance(theta, IndexParam) else np.asarray(theta, dtype=float)
    sq = float(t @ t)
    if sq >= 1.0 - BOUNDARY_TOL:
        raise BoundarySingularity(
            f"jacobian undefined within {BOUNDARY_TOL} of the unit-ball boundary"
        )
    top = -t / np.sqrt(1.0 - sq)
    return np.vstack([top, np.eye(t.size)])


@dataclass(frozen=True)
class Dataset:
    """Paired predictors (n x p) and unit-vector responses (n x d)."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim != 2 or Y.ndim != 2:
            raise ValueError("X and Y must be 2-d arrays")
        if X.shape[0] != Y.shape[0]:
            raise ValueError("X and Y must have the same number of rows")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite entries")
        n, p = X.shape
        if n < p + 2:
            raise ValueError(f"need n >= p + 2 rows, got n={n}, p={p}")
        if Y.shape[1] < 3:
            raise ValueError("responses must live on S^{d-1} with d >= 3")
        norms = np.linalg.norm(Y, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-8:
            raise ValueError("every response row must have unit norm")
        X = X.copy()
        Y = Y.copy()
        X.flags.writeable = False
        Y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def d(self) -> int:
        return self.Y.shape[1]

    def index_values(self, beta: np.ndarray) -> np.ndarray:
        """Projection of the predictors onto a coefficient vector."""
        return self.X @ np.asarray(beta, dtype=float)
