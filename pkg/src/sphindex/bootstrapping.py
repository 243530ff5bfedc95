"""Rotated-residual bootstrap standard errors for the index coefficients.

Residuals are defined in the tangent space at a common pole: each response
is rotated so its fitted value lands on the pole, then log-mapped there.
Bootstrap responses resample those residuals, transport them to the
tangent space at each fitted value, and map back to the sphere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .exceptions import AntipodalPoint, FailureRateExceeded, NumericalError
from .geometry import (
    TangentVector,
    UnitVector,
    parallel_transport,
    riemannian_exp,
    riemannian_log,
    rotation_aligning,
)
from .model import FitConfig, FitResult, fit as fit_model
from .losses import LossSpec
from .params import Dataset


@dataclass(frozen=True)
class RotatedResidualSet:
    """Tangent residuals at a common pole, with excluded-row accounting."""

    pole: UnitVector
    residuals: np.ndarray
    kept: np.ndarray
    excluded: int


@dataclass(frozen=True)
class BootstrapResult:
    """Bootstrap replicates of the coefficient vector and their spread."""

    replicates: np.ndarray
    se: np.ndarray
    B: int
    seed: int
    failures: int
    recentered: bool


def rotated_residuals(fitres: FitResult, data: Dataset) -> RotatedResidualSet:
    """Log-map each response to the pole after aligning its fitted value.

    Rows whose fitted value or rotated response is antipodal to the pole
    are excluded and counted.
    """
    d = data.d
    pole = UnitVector(np.eye(d)[0])
    residuals = []
    kept = []
    excluded = 0
    for i in range(data.n):
        try:
            fitted = UnitVector(fitres.fitted_sphere[i])
            rot = rotation_aligning(fitted, pole)
            moved = rot @ data.Y[i]
            moved = moved / np.linalg.norm(moved)
            residuals.append(riemannian_log(pole, UnitVector(moved)).vec)
            kept.append(i)
        except AntipodalPoint:
            excluded += 1
    return RotatedResidualSet(pole=pole,
                              residuals=np.asarray(residuals, dtype=float),
                              kept=np.asarray(kept, dtype=int),
                              excluded=excluded)


def _replicate_responses(fitres: FitResult, resid_set: RotatedResidualSet,
                         draw: np.ndarray) -> np.ndarray:
    """Bootstrap responses from resampled residuals, one per training row."""
    pole = resid_set.pole
    out = np.empty_like(fitres.fitted_sphere)
    for i in range(out.shape[0]):
        fitted = UnitVector(fitres.fitted_sphere[i])
        tangent = TangentVector(pole, resid_set.residuals[draw[i]])
        moved = parallel_transport(tangent, fitted)
        out[i] = riemannian_exp(fitted, moved).coords
    return out


def bootstrap_se(fitres: FitResult, data: Dataset, loss: LossSpec, B: int,
                 seed: int, config: FitConfig | None = None,
                 recenter: bool = False,
                 max_failure_rate: float = 0.2) -> BootstrapResult:
    """Bootstrap standard errors of the coefficient vector.

    Each replicate refits from the fitted point as a single warm start
    with a reduced optimizer budget; the exponential squared loss keeps
    the scale fixed at its fitted value.  Replicates are seeded by index,
    so the result is deterministic and order-independent.
    """
    if B < 2:
        raise ValueError(f"need B >= 2 replicates, got {B!r}")
    resid_set = rotated_residuals(fitres, data)
    if resid_set.residuals.shape[0] < 2:
        raise NumericalError("too few usable rotated residuals")
    residuals = resid_set.residuals
    if recenter:
        centered = residuals - residuals.mean(axis=0, keepdims=True)
        # Re-project onto the tangent space at the pole.
        centered -= np.outer(centered @ resid_set.pole.coords, resid_set.pole.coords)
        resid_set = replace(resid_set, residuals=centered)

    refit_config = config
    if refit_config is None:
        refit_config = replace(fitres.config, optimizer_max_iter=60,
                               top_starts=1, n_random_starts=0)
    refit_loss = fitres.loss if loss.family == "esl" else loss
    warm = (fitres.theta_hat.theta, fitres.h_hat)

    n = data.n
    m = resid_set.residuals.shape[0]
    root = np.random.SeedSequence(seed)
    children = root.spawn(B)
    replicates = []
    failures = 0
    for b in range(B):
        rng = np.random.default_rng(children[b])
        draw = rng.integers(0, m, size=n)
        try:
            y_star = _replicate_responses(fitres, resid_set, draw)
            data_b = Dataset(data.X, y_star)
            res_b = fit_model(data_b, refit_loss, refit_config, warm_start=warm)
            replicates.append(res_b.beta_hat)
        except NumericalError:
            failures += 1
    if failures > max_failure_rate * B:
        raise FailureRateExceeded(
            f"{failures} of {B} bootstrap refits failed")
    reps = np.asarray(replicates, dtype=float)
    se = reps.std(axis=0, ddof=1)
    return BootstrapResult(replicates=reps, se=se, B=B, seed=seed,
                           failures=failures, recentered=recenter)


def bootstrap_to_json(result: BootstrapResult, path,
                      include_replicates: bool = True) -> None:
    """Serialize a bootstrap result to JSON (replicates optional)."""
    payload = {
        "B": result.B,
        "seed": result.seed,
        "failures": result.failures,
        "recentered": result.recentered,
        "se": result.se.tolist(),
    }
    if include_replicates:
        payload["replicates"] = result.replicates.tolist()
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def bootstrap_to_csv(result: BootstrapResult, path) -> None:
    """Serialize the per-coordinate standard errors as a small CSV."""
    lines = ["coordinate,se"]
    for j, v in enumerate(result.se.tolist()):
        lines.append(f"{j},{v!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
