"""Loss families for ambient M-estimation and the scale/trade-off calculus.

Four losses on d-dimensional residuals are supported:

* ``ls``     -- squared norm ||r||^2,
* ``esl``    -- exponential squared loss 1 - exp(-||r||^2 / lambda),
* ``l1``     -- spatial-median norm ||r||,
* ``huber``  -- quadratic inside a radius c, linear growth outside.

The module also provides the scale equation that pins the ESL parameter
lambda at a target mean-loss level delta, and the closed-form constants
(K, c_delta, R, Q, delta_opt, ARE) that quantify the efficiency versus
robustness trade-off of the ESL under high concentration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .exceptions import (
    AllZeroResiduals,
    InvalidLambda,
    OutOfRangeDelta,
    PoleAtK,
    RootNotBracketed,
)

LOSS_FAMILIES = ("ls", "esl", "l1", "huber")

L1_EPS = 1e-10
L1_WEIGHT_CAP = 1e8


@dataclass(frozen=True)
class LossSpec:
    """Loss family tag plus its parameters.

    ``lam`` is the ESL scale (required and > 0 for evaluation); ``huber_c``
    is the Huber radius.  Parameters of other families are ignored.
    """

    family: str
    lam: float | None = None
    huber_c: float = 1.345

    def __post_init__(self):
        fam = self.family.lower()
        if fam not in LOSS_FAMILIES:
            raise ValueError(f"unknown loss family {self.family!r}")
        object.__setattr__(self, "family", fam)
        if fam == "esl" and self.lam is not None and not self.lam > 0:
            raise InvalidLambda(f"esl scale must be > 0, got {self.lam!r}")
        if fam == "huber" and not self.huber_c > 0:
            raise ValueError(f"huber radius must be > 0, got {self.huber_c!r}")

    @classmethod
    def ls(cls) -> "LossSpec":
        return cls("ls")

    @classmethod
    def esl(cls, lam: float | None = None) -> "LossSpec":
        return cls("esl", lam=lam)

    @classmethod
    def l1(cls) -> "LossSpec":
        return cls("l1")

    @classmethod
    def huber(cls, c: float = 1.345) -> "LossSpec":
        return cls("huber", huber_c=c)

    def _esl_lam(self) -> float:
        if self.lam is None or not self.lam > 0:
            raise InvalidLambda(f"esl scale must be set and > 0, got {self.lam!r}")
        return float(self.lam)


def loss_value(spec: LossSpec, r: np.ndarray) -> float:
    """Loss value at a residual vector."""
    r = np.asarray(r, dtype=float)
    s = float(r @ r)
    if spec.family == "ls":
        return s
    if spec.family == "esl":
        return 1.0 - math.exp(-s / spec._esl_lam())
    if spec.family == "l1":
        return math.sqrt(s)
    nrm = math.sqrt(s)
    c = spec.huber_c
    return s if nrm <= c else 2.0 * c * nrm - c * c


def loss_values(spec: LossSpec, sq_norms: np.ndarray) -> np.ndarray:
    """Vectorized loss values from squared residual norms."""
    s = np.asarray(sq_norms, dtype=float)
    if spec.family == "ls":
        return s
    if spec.family == "esl":
        return 1.0 - np.exp(-s / spec._esl_lam())
    nrm = np.sqrt(s)
    if spec.family == "l1":
        return nrm
    c = spec.huber_c
    return np.where(nrm <= c, s, 2.0 * c * nrm - c * c)


def loss_eval(spec: LossSpec, r: np.ndarray):
    """Value, gradient and Hessian of the loss at a residual vector.

    The l1 gradient at the kink (||r|| < 1e-10) is the zero subgradient and
    its Hessian is reported as zero there.
    """
    r = np.asarray(r, dtype=float)
    d = r.size
    s = float(r @ r)
    nrm = math.sqrt(s)
    eye = np.eye(d)
    if spec.family == "ls":
        return s, 2.0 * r, 2.0 * eye
    if spec.family == "esl":
        lam = spec._esl_lam()
        e = math.exp(-s / lam)
        grad = (2.0 / lam) * e * r
        hess = e * ((2.0 / lam) * eye - (4.0 / lam**2) * np.outer(r, r))
        return 1.0 - e, grad, hess
    if spec.family == "l1":
        if nrm < L1_EPS:
            return nrm, np.zeros(d), np.zeros((d, d))
        grad = r / nrm
        hess = eye / nrm - np.outer(r, r) / nrm**3
        return nrm, grad, hess
    c = spec.huber_c
    if nrm <= c:
        return s, 2.0 * r, 2.0 * eye
    value = 2.0 * c * nrm - c * c
    grad = 2.0 * c * r / nrm
    hess = (2.0 * c / nrm) * (eye - np.outer(r, r) / s)
    return value, grad, hess


def irls_weight(spec: LossSpec, r: np.ndarray) -> float:
    """Scalar reweighting factor so the M-step is a weighted least squares."""
    r = np.asarray(r, dtype=float)
    return float(irls_weights(spec, np.atleast_1d(r @ r))[0])


def irls_weights(spec: LossSpec, sq_norms: np.ndarray) -> np.ndarray:
    """Vectorized IRLS weights from squared residual norms."""
    s = np.asarray(sq_norms, dtype=float)
    if spec.family == "ls":
        return np.ones_like(s)
    if spec.family == "esl":
        return np.exp(-s / spec._esl_lam())
    nrm = np.sqrt(s)
    if spec.family == "l1":
        return np.minimum(1.0 / np.maximum(nrm, 1e-8), L1_WEIGHT_CAP)
    return np.minimum(1.0, spec.huber_c / np.maximum(nrm, 1e-300))


def solve_lambda_scale(residuals: np.ndarray, delta: float,
                       rtol: float = 1e-10, max_expand: int = 60) -> float:
    """Solve mean_i(1 - exp(-||r_i||^2 / lambda)) = delta for lambda > 0.

    The left side is strictly decreasing in lambda, so the root is unique
    whenever it exists.  Raises AllZeroResiduals when every residual is
    zero (the left side is then identically zero).
    """
    if not 0.0 < delta < 1.0:
        raise OutOfRangeDelta(f"delta must lie in (0, 1), got {delta!r}")
    r = np.asarray(residuals, dtype=float)
    if r.ndim == 1:
        r = r[:, None]
    sq = np.einsum("ij,ij->i", r, r)
    smax = float(sq.max(initial=0.0))
    if smax <= 0.0:
        raise AllZeroResiduals("scale equation unsolvable for all-zero residuals")

    def gap(lam: float) -> float:
        return float(np.mean(1.0 - np.exp(-sq / lam))) - delta

    lo, hi = 1e-8 * smax, 1e8 * smax
    for _ in range(max_expand):
        if gap(lo) > 0.0:
            break
        lo *= 0.1
    for _ in range(max_expand):
        if gap(hi) < 0.0:
            break
        hi *= 10.0
    if not (gap(lo) > 0.0 > gap(hi)):
        raise RootNotBracketed(
            "scale equation has no root; mean loss cannot reach the target"
        )
    return float(brentq(gap, lo, hi, rtol=rtol, xtol=1e-300))


@dataclass(frozen=True)
class DeltaCalc:
    """Trade-off constants for the ESL at mean-loss level delta on S^{d-1}."""

    delta: float
    dimension: int = 3

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise OutOfRangeDelta(f"delta must lie in (0, 1), got {self.delta!r}")
        if self.dimension < 3:
            raise ValueError(f"dimension must be >= 3, got {self.dimension!r}")


def k_delta(calc: DeltaCalc) -> float:
    """K(delta) = 2 / (1 - (1 - delta)^{2/(d-1)}); always > 2 on (0, 1)."""
    a = (1.0 - calc.delta) ** (2.0 / (calc.dimension - 1))
    return 2.0 / (1.0 - a)


def c_delta(calc: DeltaCalc) -> float:
    """Limiting scale constant: the root of (c/(c+2))^{(d-1)/2} = 1 - delta.

    Equals K(delta) - 2 in closed form.
    """
    a = (1.0 - calc.delta) ** (2.0 / (calc.dimension - 1))
    return 2.0 * a / (1.0 - a)


def r_delta(calc: DeltaCalc, pole_tol: float = 1e-12) -> float:
    """Reciprocal asymptotic relative efficiency of the ESL against LS."""
    d = calc.dimension
    k = k_delta(calc)
    last = (d - 1.0) / k - 1.0
    if abs(last) < pole_tol:
        raise PoleAtK(f"efficiency ratio has a pole at K(delta) = d - 1 = {d - 1}")
    return (
        (k - 2.0) ** (-(d - 3.0) / 2.0)
        * k ** (d - 1.0)
        * (k + 2.0) ** (-(d + 1.0) / 2.0)
        / (last * last)
    )


def q_delta(calc: DeltaCalc) -> float:
    """Upper-bound factor of the standardized sensitivity of the ESL."""
    d = calc.dimension
    k = k_delta(calc)
    return (k - 2.0) ** (-(d - 1.0) / 4.0) * (k + 2.0) ** ((d + 1.0) / 4.0)


def delta_opt(dimension: int) -> float:
    """Minimizer of the sensitivity bound: 1 - (1 - 1/d)^{(d-1)/2}."""
    if dimension < 3:
        raise ValueError(f"dimension must be >= 3, got {dimension!r}")
    d = float(dimension)
    return 1.0 - (1.0 - 1.0 / d) ** ((d - 1.0) / 2.0)


def are_esl(calc: DeltaCalc) -> float:
    """Asymptotic relative efficiency of the ESL, the reciprocal of r_delta."""
    return 1.0 / r_delta(calc)


def tradeoff_criterion(calc: DeltaCalc, w_efficiency: float = 1.0,
                       w_robustness: float = 1.0) -> float:
    """Weighted trade-off score w1 * R(delta) + w2 * Q(delta)."""
    return w_efficiency * r_delta(calc) + w_robustness * q_delta(calc)
