"""Joint estimation of the index direction and link bandwidth.

The criterion is the mean deleted-point loss from local_fit, minimized by
a multi-start Nelder-Mead simplex over (theta, log s), where s is the
bandwidth expressed in units of n^{-1/5} times the index spread so the
search box travels with the candidate direction.  Iterates are folded back
into the open unit ball and the bandwidth box by reflection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .exceptions import (
    NearZeroVector,
    NonFiniteCriterion,
    NoValidStart,
    SingularDesign,
)
from .local_fit import KernelSpec, batch_local_m, criterion, loo_fits
from .losses import LossSpec, loss_values, solve_lambda_scale
from .params import Dataset, IndexParam, beta_from_theta

_R_MAX = 1.0 - 1e-6


@dataclass(frozen=True)
class FitConfig:
    """Optimizer and tuning settings; a plain record the CLI can populate."""

    kernel: str = "epanechnikov"
    n_random_starts: int = 5
    coord_starts: bool = True
    top_starts: int = 3
    optimizer_max_iter: int = 200
    xatol: float = 1e-3
    fatol: float = 1e-9
    h_lo: float = 0.1
    h_hi: float = 3.0
    delta: float = 0.4
    max_outer: int = 10
    lambda_rel_tol: float = 0.01
    irls_max_iter: int = 100
    search_irls_max_iter: int = 20
    search_irls_rtol: float = 1e-5
    extrapolation_margin: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.h_lo < self.h_hi:
            raise ValueError("need 0 < h_lo < h_hi")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.top_starts < 1 or self.optimizer_max_iter < 1:
            raise ValueError("top_starts and optimizer_max_iter must be >= 1")


@dataclass(frozen=True)
class FitDiagnostics:
    """Convergence bookkeeping for one fit."""

    trace: tuple = ()
    excluded_rows: int = 0
    restarts: int = 0
    outer_rounds: int = 0
    converged: bool = True
    criterion_evals: int = 0


@dataclass(frozen=True)
class FitResult:
    """Fitted index direction, bandwidth and link values."""

    theta_hat: IndexParam
    beta_hat: np.ndarray
    h_hat: float
    lambda_hat: float | None
    criterion_value: float
    fitted_mu: np.ndarray
    fitted_sphere: np.ndarray
    diagnostics: FitDiagnostics
    loss: LossSpec
    kernel: KernelSpec
    u_train: np.ndarray
    config: FitConfig


def _fold_interval(x: float, lo: float, hi: float) -> float:
    """Reflect a scalar into [lo, hi] (triangle-wave folding)."""
    width = hi - lo
    m = math.fmod(x - lo, 2.0 * width)
    if m < 0.0:
        m += 2.0 * width
    return lo + (m if m <= width else 2.0 * width - m)


def _fold_theta(x: np.ndarray) -> np.ndarray:
    """Reflect a raw vector into the open unit ball of radius _R_MAX."""
    r = float(np.linalg.norm(x))
    if r < _R_MAX or r == 0.0:
        return np.asarray(x, dtype=float)
    return np.asarray(x, dtype=float) * (_fold_interval(r, 0.0, _R_MAX) / r)


def _uniform_ball(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    z = rng.standard_normal(dim)
    nrm = np.linalg.norm(z)
    if nrm == 0.0:
        return np.zeros(dim)
    return z / nrm * radius * rng.uniform() ** (1.0 / dim)


def _grid_starts(dim: int) -> list[np.ndarray]:
    """Deterministic coarse cover of the unit ball for stage-A ranking.

    The criterion is rough in theta (deleted windows switch discretely),
    so simplex descent needs a start near the global basin; rings for two
    parameters, a low-discrepancy sequence above that.
    """
    if dim == 1:
        return [np.array([r]) for r in (-0.9, -0.6, -0.3, 0.3, 0.6, 0.9)]
    if dim == 2:
        starts = []
        for radius, count in ((0.85, 12), (0.55, 8), (0.25, 4)):
            for k in range(count):
                ang = 2.0 * math.pi * k / count
                starts.append(radius * np.array([math.cos(ang), math.sin(ang)]))
        return starts
    from scipy.stats import qmc

    sampler = qmc.Sobol(d=dim, scramble=False)
    points = 2.0 * sampler.random(128) - 1.0
    inside = points[np.linalg.norm(points, axis=1) < 1.0][:32]
    return [0.92 * row for row in inside]


def _start_points(p: int, config: FitConfig, rng: np.random.Generator,
                  warm_theta: np.ndarray | None) -> list[np.ndarray]:
    starts: list[np.ndarray] = []
    if warm_theta is not None:
        starts.append(np.asarray(warm_theta, dtype=float))
    starts.append(np.zeros(p - 1))
    if config.coord_starts:
        for j in range(p - 1):
            e = np.zeros(p - 1)
            e[j] = 1.0 / math.sqrt(2.0)
            starts.append(e)
            starts.append(-e)
        starts.extend(_grid_starts(p - 1))
    for _ in range(config.n_random_starts):
        starts.append(_uniform_ball(rng, p - 1, 0.95))
    return starts


class _Objective:
    """Criterion over the folded (theta, log s) coordinates."""

    def __init__(self, data: Dataset, loss: LossSpec, kernel: KernelSpec,
                 config: FitConfig):
        self.data = data
        self.loss = loss
        self.kernel = kernel
        self.config = config
        self.rate = data.n ** -0.2
        self.log_lo = math.log(config.h_lo)
        self.log_hi = math.log(config.h_hi)
        self.evals = 0

    def unpack(self, x: np.ndarray):
        theta = _fold_theta(x[:-1])
        s = math.exp(_fold_interval(x[-1], self.log_lo, self.log_hi))
        u = self.data.X @ beta_from_theta(theta)
        sd = float(u.std())
        h = s * self.rate * sd
        return theta, h

    def __call__(self, x: np.ndarray) -> float:
        self.evals += 1
        theta, h = self.unpack(x)
        if not h > 0:
            return math.inf
        try:
            value = criterion(theta, h, self.data, self.loss, self.kernel,
                              max_iter=self.config.search_irls_max_iter,
                              rtol=self.config.search_irls_rtol)
        except SingularDesign:
            return math.inf
        return value if math.isfinite(value) else math.inf


def _optimize(data: Dataset, loss: LossSpec, kernel: KernelSpec,
              config: FitConfig, rng: np.random.Generator,
              warm_start: tuple[np.ndarray, float] | None,
              multi_start: bool = True):
    obj = _Objective(data, loss, kernel, config)
    warm_theta = None
    warm_log_s = 0.0
    if warm_start is not None:
        warm_theta = np.asarray(warm_start[0], dtype=float)
        u = data.X @ beta_from_theta(warm_theta)
        sd = float(u.std())
        if sd > 0 and warm_start[1] > 0:
            s = warm_start[1] / (obj.rate * sd)
            warm_log_s = _fold_interval(math.log(s), obj.log_lo, obj.log_hi)
    if multi_start:
        thetas = _start_points(data.p, config, rng, warm_theta)
    else:
        thetas = [warm_theta if warm_theta is not None else np.zeros(data.p - 1)]
    # Stage A: rank starts by criterion value at two bandwidth scales.
    stage_scales = (0.0, math.log(0.35)) if multi_start else (warm_log_s,)
    points = []
    for k, th in enumerate(thetas):
        if warm_theta is not None and k == 0:
            scales = (warm_log_s,)
        else:
            scales = stage_scales
        best = (math.inf, None)
        for log_s in scales:
            x0 = np.concatenate([th, [log_s]])
            value = obj(x0)
            if value < best[0]:
                best = (value, x0)
        if best[1] is not None:
            points.append(best)
    finite = [(v, x) for v, x in points if math.isfinite(v)]
    if not finite:
        raise NoValidStart("criterion is singular at every optimizer start")
    finite.sort(key=lambda vx: vx[0])

    def run_nm(x0, maxiter):
        return minimize(
            obj, x0, method="Nelder-Mead",
            options={"maxiter": maxiter, "maxfev": 2 * maxiter,
                     "xatol": config.xatol, "fatol": config.fatol})

    best_val, best_x = finite[0]
    for _, x0 in finite[: config.top_starts]:
        res = run_nm(x0, config.optimizer_max_iter)
        if math.isfinite(res.fun) and res.fun < best_val:
            best_val, best_x = float(res.fun), res.x
    # Restart polish: a fresh simplex at the incumbent escapes shallow dips.
    res = run_nm(best_x, max(config.optimizer_max_iter // 2, 20))
    if math.isfinite(res.fun) and res.fun < best_val:
        best_val, best_x = float(res.fun), res.x
    if not math.isfinite(best_val):
        raise NonFiniteCriterion("optimizer found no finite criterion value")
    theta, h = obj.unpack(best_x)
    return theta, h, best_val, obj.evals, len(finite[: config.top_starts])


def _finalize(data: Dataset, loss: LossSpec, kernel: KernelSpec,
              config: FitConfig, theta: np.ndarray, h: float,
              value: float, diag: FitDiagnostics) -> FitResult:
    beta = beta_from_theta(theta)
    u = data.X @ beta
    # Re-evaluate the criterion at full IRLS precision at the optimum.
    loo = loo_fits(u, data.Y, h, kernel, loss, max_iter=config.irls_max_iter)
    resid = data.Y[loo.trusted] - loo.mu[loo.trusted]
    sq = np.einsum("ij,ij->i", resid, resid)
    value = float(np.mean(loss_values(loss, sq)))
    fits = batch_local_m(u, u, data.Y, h, kernel, loss,
                         max_iter=config.irls_max_iter)
    if not fits.ok.all():
        raise SingularDesign(
            f"fitted link singular at rows {np.flatnonzero(~fits.ok).tolist()}"
        )
    norms = np.linalg.norm(fits.a, axis=1)
    bad = norms <= 1e-12
    if bad.any():
        raise NearZeroVector(
            f"fitted link vanishes at rows {np.flatnonzero(bad).tolist()}"
        )
    diag = replace(diag, excluded_rows=loo.n_excluded)
    return FitResult(
        theta_hat=IndexParam(theta),
        beta_hat=beta,
        h_hat=float(h),
        lambda_hat=loss.lam if loss.family == "esl" else None,
        criterion_value=float(value),
        fitted_mu=fits.a,
        fitted_sphere=fits.a / norms[:, None],
        diagnostics=diag,
        loss=loss,
        kernel=kernel,
        u_train=u,
        config=config,
    )


def _loo_residuals(data: Dataset, theta: np.ndarray, h: float,
                   kernel: KernelSpec, loss: LossSpec) -> np.ndarray:
    loo = loo_fits(data.X @ beta_from_theta(theta), data.Y, h, kernel, loss)
    return data.Y[loo.trusted] - loo.mu[loo.trusted]


def fit(data: Dataset, loss: LossSpec, config: FitConfig | None = None,
        warm_start: tuple[np.ndarray, float] | None = None) -> FitResult:
    """Fit the model by minimizing the deleted-point criterion.

    For the exponential squared loss without a fixed scale, the scale is
    initialized from a least squares warm start and re-solved from the
    deleted-point residuals between optimization rounds until it moves by
    less than ``lambda_rel_tol`` (or ``max_outer`` rounds).
    """
    config = config or FitConfig()
    kernel = KernelSpec(config.kernel)
    rng = np.random.default_rng(config.seed)

    if loss.family != "esl" or loss.lam is not None:
        theta, h, value, evals, restarts = _optimize(
            data, loss, kernel, config, rng, warm_start)
        diag = FitDiagnostics(
            trace=(("round", 0, "criterion", value),),
            restarts=restarts, outer_rounds=0, criterion_evals=evals)
        return _finalize(data, loss, kernel, config, theta, h, value, diag)

    # ESL with scale solved from data: least squares warm start, then
    # alternate optimization with scale updates.
    ls_theta, ls_h, ls_value, ls_evals, ls_restarts = _optimize(
        data, LossSpec.ls(), kernel, config, rng, warm_start)
    lam = solve_lambda_scale(
        _loo_residuals(data, ls_theta, ls_h, kernel, LossSpec.ls()),
        config.delta)
    trace = [("ls_warm", 0, "criterion", ls_value, "lambda", lam)]
    warm = (ls_theta, ls_h)
    evals = ls_evals
    restarts = ls_restarts
    theta, h, value = ls_theta, ls_h, ls_value
    rounds = 0
    spec = LossSpec.esl(lam)
    for rounds in range(1, config.max_outer + 1):
        spec = LossSpec.esl(lam)
        theta, h, value, ev, rs = _optimize(
            data, spec, kernel, config, rng, warm, multi_start=(rounds == 1))
        evals += ev
        restarts += rs
        warm = (theta, h)
        new_lam = solve_lambda_scale(
            _loo_residuals(data, theta, h, kernel, spec), config.delta)
        rel = abs(new_lam - lam) / lam
        trace.append(("round", rounds, "criterion", value, "lambda", new_lam))
        if rel < config.lambda_rel_tol:
            break
        lam = new_lam
    diag = FitDiagnostics(trace=tuple(trace), restarts=restarts,
                          outer_rounds=rounds, criterion_evals=evals)
    return _finalize(data, spec, kernel, config, theta, h, value, diag)


def refit_at(data: Dataset, theta: np.ndarray, h: float, loss: LossSpec,
             config: FitConfig | None = None) -> FitResult:
    """Rebuild a FitResult at known (theta, h) without optimizing.

    Used to reload serialized models and by tests that pin the optimum.
    """
    config = config or FitConfig()
    kernel = KernelSpec(config.kernel)
    theta = np.asarray(theta, dtype=float)
    diag = FitDiagnostics(trace=(("rebuilt", 0),))
    return _finalize(data, loss, kernel, config, theta, float(h),
                     math.nan, diag)


def predict(fitres: FitResult, data: Dataset, X_new: np.ndarray,
            extrapolation: str = "error") -> np.ndarray:
    """Link predictions projected onto the sphere at new predictor rows.

    Index values far outside the training range are refused by default;
    ``extrapolation="clamp"`` evaluates at the nearest training boundary
    instead (used by cross-validation).
    """
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    u_new = X_new @ fitres.beta_hat
    lo = float(fitres.u_train.min())
    hi = float(fitres.u_train.max())
    margin = fitres.config.extrapolation_margin * (hi - lo)
    outside = (u_new < lo - margin) | (u_new > hi + margin)
    if outside.any():
        if extrapolation == "clamp":
            u_new = np.clip(u_new, lo, hi)
        else:
            raise SingularDesign(
                "index values outside the training range at rows "
                f"{np.flatnonzero(outside).tolist()}"
            )
    elif extrapolation == "clamp":
        u_new = np.clip(u_new, lo, hi)
    fits = batch_local_m(u_new, fitres.u_train, data.Y, fitres.h_hat,
                         fitres.kernel, fitres.loss,
                         max_iter=fitres.config.irls_max_iter)
    if not fits.ok.all():
        raise SingularDesign(
            f"prediction window singular at rows {np.flatnonzero(~fits.ok).tolist()}"
        )
    norms = np.linalg.norm(fits.a, axis=1)
    bad = norms <= 1e-12
    if bad.any():
        raise NearZeroVector(
            f"predicted link vanishes at rows {np.flatnonzero(bad).tolist()}"
        )
    return fits.a / norms[:, None]


@dataclass(frozen=True)
class MetricSummary:
    """Angular error summaries of a fit."""

    bias: float
    mse: float
    mspe: float | None = None


def _angles(Y: np.ndarray, Y_hat: np.ndarray) -> np.ndarray:
    dots = np.clip(np.einsum("ij,ij->i", np.asarray(Y, dtype=float),
                             np.asarray(Y_hat, dtype=float)), -1.0, 1.0)
    return np.arccos(dots)


def metrics(beta0: np.ndarray, fitres: "FitResult | np.ndarray",
            Y: np.ndarray, Y_hat: np.ndarray,
            Y_test: np.ndarray | None = None,
            Y_pred: np.ndarray | None = None) -> MetricSummary:
    """Angular bias of the coefficient estimate plus mean squared angles.

    ``bias`` is the angle between the true and estimated coefficient
    vectors; ``mse`` averages squared angles between responses and fitted
    values; ``mspe`` does the same over an optional test set.
    """
    beta_hat = fitres.beta_hat if isinstance(fitres, FitResult) else np.asarray(fitres)
    b0 = np.asarray(beta0, dtype=float)
    bias = float(np.arccos(np.clip(b0 @ beta_hat, -1.0, 1.0)))
    mse = float(np.mean(_angles(Y, Y_hat) ** 2))
    mspe = None
    if Y_test is not None and Y_pred is not None:
        mspe = float(np.mean(_angles(Y_test, Y_pred) ** 2))
    return MetricSummary(bias=bias, mse=mse, mspe=mspe)
