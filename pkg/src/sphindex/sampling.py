"""Synthetic spherical regression data.

Responses are drawn from a von Mises-Fisher distribution around parametric
mean curves on S^2, optionally contaminated by replacing a fixed fraction
of responses with unit vectors orthogonal to their mean-curve value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .exceptions import DegenerateCross
from .geometry import UnitVector

MEAN_CURVES = ("spiral61", "mu1", "mu2", "mu3")


@dataclass(frozen=True)
class VmfSpec:
    """Concentration and ambient dimension of a von Mises-Fisher response.

    The angular function is exp, so the density score is identically one
    and kappa alone sets the concentration level.
    """

    kappa: float
    dimension: int = 3

    def __post_init__(self):
        if not np.isfinite(self.kappa) or self.kappa < 0:
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa!r}")
        if self.dimension < 3:
            raise ValueError(f"dimension must be >= 3, got {self.dimension!r}")


@dataclass(frozen=True)
class MeanCurve:
    """One of the built-in unit-norm mean curves on S^2."""

    name: str
    dimension: int = 3

    def __post_init__(self):
        if self.name not in MEAN_CURVES:
            raise ValueError(f"unknown mean curve {self.name!r}")
        if self.dimension != 3:
            raise ValueError("built-in mean curves live on S^2 (dimension 3)")


@dataclass(frozen=True)
class ContaminationSpec:
    """Fraction of responses to replace with orthogonal unit vectors."""

    epsilon: float
    reference: np.ndarray = field(
        default_factory=lambda: np.array([1.0, 0.0, 0.0])
    )
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon!r}")
        ref = np.asarray(self.reference, dtype=float)
        nrm = np.linalg.norm(ref)
        if nrm <= 0:
            raise ValueError("reference vector must be nonzero")
        ref = ref / nrm
        ref.flags.writeable = False
        object.__setattr__(self, "reference", ref)


def _sample_cosines(kappa: float, d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Rejection sampler for the cosine of the angle to the mean direction.

    Standard envelope scheme for the tangent-normal decomposition; exact
    for every d >= 2 and kappa >= 0.
    """
    m = d - 1
    b = m / (np.sqrt(4.0 * kappa**2 + m**2) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + m * np.log(1.0 - x0**2)
    out = np.empty(n)
    filled = 0
    while filled < n:
        todo = n - filled
        z = rng.beta(m / 2.0, m / 2.0, size=todo)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform(size=todo)
        keep = kappa * w + m * np.log1p(-x0 * w) - c >= np.log(u)
        k = int(keep.sum())
        out[filled:filled + k] = w[keep]
        filled += k
    return out


def sample_vmf_around(means: np.ndarray, kappa: float, seed) -> np.ndarray:
    """Draw one von Mises-Fisher response per row of `means`.

    `means` must have unit-norm rows; the output has the same shape and
    unit-norm rows.  Deterministic for a given seed.
    """
    mu = np.asarray(means, dtype=float)
    n, d = mu.shape
    rng = np.random.default_rng(seed)
    t = _sample_cosines(kappa, d, n, rng)
    z = rng.standard_normal((n, d))
    z -= np.einsum("ij,ij->i", z, mu)[:, None] * mu
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    y = t[:, None] * mu + np.sqrt(np.maximum(1.0 - t * t, 0.0))[:, None] * z
    return y / np.linalg.norm(y, axis=1, keepdims=True)


def sample_vmf(mu: UnitVector, spec: VmfSpec, n: int, seed) -> np.ndarray:
    """Draw n responses around a common mean direction; rows are unit vectors."""
    if n < 1:
        raise ValueError(f"need n >= 1 samples, got {n!r}")
    if mu.dim != spec.dimension:
        raise ValueError("mean direction dimension differs from spec")
    means = np.broadcast_to(mu.coords, (n, mu.dim))
    return sample_vmf_around(means, spec.kappa, seed)


def curve_values(curve: MeanCurve | str, u) -> np.ndarray:
    """Evaluate a mean curve at index values u; rows are unit vectors."""
    name = curve.name if isinstance(curve, MeanCurve) else curve
    if name not in MEAN_CURVES:
        raise ValueError(f"unknown mean curve {name!r}")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if name == "spiral61":
        v = 1.0 / (1.0 + np.exp(-u))
        root = np.sqrt(np.maximum(1.0 - v * v, 0.0))
        out = np.stack([root * np.cos(np.pi * v), root * np.sin(np.pi * v), v], axis=1)
    elif name == "mu1":
        denom = 2.0 + u * u
        out = np.stack([2.0 * u / denom, -2.0 * u / denom, (u * u - 2.0) / denom], axis=1)
    elif name == "mu2":
        v = ndtr(u)
        root = np.sqrt(np.maximum(1.0 - v * v, 0.0))
        out = np.stack([root * np.cos(np.pi * v), root * np.sin(np.pi * v), v], axis=1)
    else:
        raw = np.stack(
            [np.sin(2.0 * np.pi * u), np.cos(np.pi * u), 2.0 * u / np.sqrt(2.0 + u * u)],
            axis=1,
        )
        out = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def eval_mean_curve(curve: MeanCurve | str, u: float) -> UnitVector:
    """Evaluate a mean curve at a single index value."""
    return UnitVector(curve_values(curve, float(u))[0])


def orthogonal_contaminant(mu: UnitVector, reference: UnitVector) -> UnitVector:
    """Unit vector orthogonal to mu, built from the cross product with a reference.

    The sign is fixed so that the first nonzero coordinate is positive.
    Only defined on S^2.
    """
    if mu.dim != 3 or reference.dim != 3:
        raise ValueError("orthogonal contaminants are defined on S^2 only")
    cross = np.cross(mu.coords, reference.coords)
    nrm = np.linalg.norm(cross)
    if nrm < 1e-10:
        raise DegenerateCross("mean direction is parallel to the reference vector")
    cross = cross / nrm
    for comp in cross:
        if comp != 0.0:
            if comp < 0.0:
                cross = -cross
            break
    return UnitVector(cross)


def contaminate(Y: np.ndarray, mean_values: np.ndarray,
                spec: ContaminationSpec) -> np.ndarray:
    """Replace floor(epsilon * n) responses with orthogonal contaminants.

    Indices are drawn without replacement from a generator seeded by the
    spec, so the output is deterministic.  Replaced entries are orthogonal
    to their mean-curve value; all others are returned unchanged.
    """
    Y = np.asarray(Y, dtype=float)
    mu = np.asarray(mean_values, dtype=float)
    if Y.shape != mu.shape:
        raise ValueError("responses and mean values must have matching shapes")
    n = Y.shape[0]
    m = int(np.floor(spec.epsilon * n))
    out = Y.copy()
    if m == 0:
        return out
    rng = np.random.default_rng(spec.seed)
    picked = rng.choice(n, size=m, replace=False)
    ref = UnitVector(spec.reference)
    for i in picked:
        out[i] = orthogonal_contaminant(UnitVector(mu[i]), ref).coords
    return out


def sample_predictors(n: int, p: int, seed) -> np.ndarray:
    """Standard normal predictor matrix of shape (n, p), deterministic per seed."""
    if n < 1 or p < 1:
        raise ValueError("need n >= 1 and p >= 1")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, p))
