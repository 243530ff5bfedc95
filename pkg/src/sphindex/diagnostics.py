"""Influence diagnostics and plug-in asymptotic covariance blocks.

The estimator's sensitivity to a contaminating observation z = (x, y) is
summarized by the influence function and its standardized version.  Both
are built from plug-in estimates of the nuisance quantities: the link
derivative, the conditional predictor mean and covariance given the index,
and the curvature / score-covariance matrices of the loss.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import IndexOutOfRange, SingularM0, SingularW0
from .geometry import UnitVector, project_to_sphere, tangent_basis
from .local_fit import batch_local_m
from .losses import LossSpec, loss_eval
from .model import FitConfig, FitResult, fit as fit_model
from .params import Dataset, jacobian_beta
from .sampling import (
    curve_values,
    orthogonal_contaminant,
    sample_predictors,
    sample_vmf_around,
)

COND_LIMIT = 1e12
RIDGE = 1e-8


@dataclass(frozen=True)
class NuisanceBandwidths:
    """Bandwidth overrides for the plug-in smoothers; None means h_hat."""

    link: float | None = None
    cond_mean: float | None = None
    score: float | None = None
    density: float | None = None


@dataclass(frozen=True)
class NuisanceEstimates:
    """Plug-in nuisance quantities from a converged fit.

    Per-point smoothers are exposed as methods; the aggregated curvature
    (W0_hat) and score covariance (M0_hat) matrices are sample averages of
    the smoothed conditional moments over the training points.
    """

    u_train: np.ndarray
    mu_train: np.ndarray
    mu_prime_train: np.ndarray
    cond_mean_train: np.ndarray
    grad_train: np.ndarray
    hess_train: np.ndarray | None
    W0_hat: np.ndarray
    M0_hat: np.ndarray
    jacobian: np.ndarray
    fit: FitResult
    data: Dataset
    loss: LossSpec
    bandwidths: NuisanceBandwidths
    density_h: float
    _w0_cho: tuple
    _m0_cho: tuple

    def _link_at(self, u: float):
        h = self.bandwidths.link or self.fit.h_hat
        out = batch_local_m(np.array([u]), self.u_train, self.data.Y, h,
                            self.fit.kernel, self.loss)
        return out.a[0], out.b[0]

    def mu(self, u: float) -> np.ndarray:
        """Plug-in link value at an index value."""
        return self._link_at(float(u))[0]

    def mu_prime(self, u: float) -> np.ndarray:
        """Plug-in link derivative at an index value."""
        return self._link_at(float(u))[1]

    def cond_mean_x(self, u: float) -> np.ndarray:
        """Smoothed conditional mean of the predictors given the index."""
        h = self.bandwidths.cond_mean or self.fit.h_hat
        out = batch_local_m(np.array([float(u)]), self.u_train, self.data.X,
                            h, self.fit.kernel, LossSpec.ls())
        return out.a[0]

    def _score_weights(self, u: float) -> np.ndarray:
        h = self.bandwidths.score or self.fit.h_hat
        w = self.fit.kernel.values((self.u_train - float(u)) / h)
        total = w.sum()
        if total <= 0:
            # Compact kernels can leave an empty window off-sample.
            w = np.exp(-0.5 * ((self.u_train - float(u)) / h) ** 2)
            total = w.sum()
        return w / total

    def F_hat(self, u: float) -> np.ndarray:
        """Smoothed conditional mean of the loss Hessian at the residuals.

        The least squares Hessian is constant, so no smoothing is applied
        for that family.
        """
        if self.hess_train is None:
            return 2.0 * np.eye(self.data.d)
        w = self._score_weights(u)
        return np.tensordot(w, self.hess_train, axes=(0, 0))

    def G_hat(self, u: float) -> np.ndarray:
        """Smoothed conditional second moment of the loss gradient."""
        w = self._score_weights(u)
        g = self.grad_train
        return (g * w[:, None]).T @ g

    def sigma_x(self, u: float) -> np.ndarray:
        """Kernel-weighted conditional covariance of the predictors."""
        w = self._score_weights(u)
        centered = self.data.X - self.cond_mean_x(u)[None, :]
        cov = (centered * w[:, None]).T @ centered
        return cov + RIDGE * np.eye(self.data.p)

    def density_u(self, u: float) -> float:
        """Gaussian kernel density of the fitted index values."""
        z = (self.u_train - float(u)) / self.density_h
        val = float(np.mean(np.exp(-0.5 * z * z))) / (
            self.density_h * math.sqrt(2.0 * math.pi))
        return max(val, 1e-300)

    def dispersion(self) -> np.ndarray:
        """Plug-in dispersion matrix W0^{-1} M0 W0^{-1} of the index estimate."""
        inv_m = cho_solve(self._w0_cho, self.M0_hat)
        sigma = cho_solve(self._w0_cho, inv_m.T)
        return 0.5 * (sigma + sigma.T)

    def link_variance(self, u: float) -> np.ndarray:
        """Tangent-space variance factor of the projected link estimate.

        Returns omega0 / f(u) * B^T F^{-1} G F^{-1} B with B the tangent
        basis at the projected link value.
        """
        f_mat = self.F_hat(u)
        g_mat = self.G_hat(u)
        b_mat = tangent_basis(project_to_sphere(self.mu(u)))
        finv_g = np.linalg.solve(f_mat, g_mat)
        core = np.linalg.solve(f_mat.T, finv_g.T).T
        return self.fit.kernel.omega0 / self.density_u(u) * (b_mat.T @ core @ b_mat)


def _symmetrize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


def estimate_nuisance(fitres: FitResult, data: Dataset, loss: LossSpec,
                      bandwidths: NuisanceBandwidths | None = None) -> NuisanceEstimates:
    """Plug-in nuisance estimates from a converged fit.

    Conditional moments are kernel regressions on the fitted index values;
    the outer expectations in the curvature and score-covariance matrices
    are sample averages over the training points.
    """
    bw = bandwidths or NuisanceBandwidths()
    u = fitres.u_train
    n, p = data.X.shape
    d = data.d
    jac = jacobian_beta(fitres.theta_hat)

    link = batch_local_m(u, u, data.Y, bw.link or fitres.h_hat,
                         fitres.kernel, loss)
    mu_train = link.a
    mu_prime_train = link.b

    condx = batch_local_m(u, u, data.X, bw.cond_mean or fitres.h_hat,
                          fitres.kernel, LossSpec.ls())
    cond_mean_train = condx.a

    resid = data.Y - mu_train
    grad_train = np.empty((n, d))
    hess_train = None if loss.family == "ls" else np.empty((n, d, d))
    for i in range(n):
        _, g, hess = loss_eval(loss, resid[i])
        grad_train[i] = g
        if hess_train is not None:
            hess_train[i] = hess

    sigma = math.sqrt(max(float(np.var(u)), 1e-300))
    density_h = bw.density or (1.06 * sigma * n ** -0.2)

    # Row-normalized score-smoothing weights between all index pairs.
    h_score = bw.score or fitres.h_hat
    w_mat = fitres.kernel.values((u[None, :] - u[:, None]) / h_score)
    row_sum = w_mat.sum(axis=1, keepdims=True)
    empty = row_sum[:, 0] <= 0
    if empty.any():
        fallback = np.exp(-0.5 * ((u[None, :] - u[:, None]) / h_score) ** 2)
        w_mat[empty] = fallback[empty]
        row_sum = w_mat.sum(axis=1, keepdims=True)
    w_mat /= row_sum

    # quad_f[i] = mu'(u_i)^T F_hat(u_i) mu'(u_i), and likewise with G_hat.
    if hess_train is None:
        quad_f = 2.0 * np.einsum("ij,ij->i", mu_prime_train, mu_prime_train)
    else:
        hquad = np.einsum("jkl,ik,il->ij", hess_train, mu_prime_train,
                          mu_prime_train)
        quad_f = np.einsum("ij,ij->i", w_mat, hquad)
    dots = mu_prime_train @ grad_train.T
    quad_g = np.einsum("ij,ij->i", w_mat, dots * dots)

    # Sum_i quad[i] * Sigma_x(u_i) assembled from shared matrix products.
    X = data.X
    smooth_x = w_mat @ X

    def weighted_sigma_sum(quad: np.ndarray) -> np.ndarray:
        colw = quad @ w_mat
        a_term = (X * colw[:, None]).T @ X
        b_term = (cond_mean_train * quad[:, None]).T @ smooth_x
        c_term = (cond_mean_train * quad[:, None]).T @ cond_mean_train
        total = a_term - b_term - b_term.T + c_term
        return total + float(quad.sum()) * RIDGE * np.eye(p)

    w0 = _symmetrize(jac.T @ weighted_sigma_sum(quad_f) @ jac / n)
    m0 = _symmetrize(jac.T @ weighted_sigma_sum(quad_g) @ jac / n)

    if np.linalg.cond(w0) > COND_LIMIT:
        raise SingularW0(f"plug-in curvature matrix condition exceeds {COND_LIMIT:g}")
    if np.linalg.cond(m0) > COND_LIMIT:
        raise SingularM0(f"plug-in score covariance condition exceeds {COND_LIMIT:g}")
    try:
        w0_cho = cho_factor(w0)
    except np.linalg.LinAlgError as err:
        raise SingularW0("plug-in curvature matrix is not positive definite") from err
    try:
        m0_cho = cho_factor(m0)
    except np.linalg.LinAlgError as err:
        raise SingularM0("plug-in score covariance is not positive definite") from err
    return NuisanceEstimates(
        u_train=u, mu_train=mu_train, mu_prime_train=mu_prime_train,
        cond_mean_train=cond_mean_train, grad_train=grad_train,
        hess_train=hess_train, W0_hat=w0, M0_hat=m0, jacobian=jac,
        fit=fitres, data=data, loss=loss, bandwidths=bw,
        density_h=density_h, _w0_cho=w0_cho, _m0_cho=m0_cho)


def influence_from_parts(psi_grad: np.ndarray, mu_prime: np.ndarray,
                         x_centered: np.ndarray, jacobian: np.ndarray,
                         w0_solve) -> np.ndarray:
    """Influence vector from its algebraic ingredients."""
    scalar = float(np.asarray(psi_grad) @ np.asarray(mu_prime))
    return scalar * w0_solve(jacobian.T @ np.asarray(x_centered))


def standardized_influence_from_parts(psi_grad: np.ndarray, mu_prime: np.ndarray,
                                      x_centered: np.ndarray, jacobian: np.ndarray,
                                      m0_inv: np.ndarray) -> float:
    """Standardized influence value from its algebraic ingredients."""
    scalar = abs(float(np.asarray(psi_grad) @ np.asarray(mu_prime)))
    v = jacobian.T @ np.asarray(x_centered)
    quad = float(v @ m0_inv @ v)
    return scalar * math.sqrt(max(quad, 0.0))


def _check_index(nuis: NuisanceEstimates, u: float) -> None:
    lo = float(nuis.u_train.min())
    hi = float(nuis.u_train.max())
    # Small margin: dot products of the same row can differ by rounding
    # depending on whether they come from a matrix or a vector product.
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    if u < lo - tol or u > hi + tol:
        raise IndexOutOfRange(
            f"index value {u!r} outside the observed range [{lo!r}, {hi!r}]")


def influence(z: tuple, nuis: NuisanceEstimates, fitres: FitResult,
              loss: LossSpec) -> np.ndarray:
    """Influence of an observation z = (x, y) on the index estimate."""
    x, y = z
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = float(x @ fitres.beta_hat)
    _check_index(nuis, u)
    mu_u, mu_p = nuis._link_at(u)
    grad = loss_eval(loss, y - mu_u)[1]
    centered = x - nuis.cond_mean_x(u)
    return influence_from_parts(
        grad, mu_p, centered, nuis.jacobian,
        lambda v: cho_solve(nuis._w0_cho, v))


def standardized_influence(z: tuple, nuis: NuisanceEstimates, fitres: FitResult,
                           loss: LossSpec) -> float:
    """Influence normalized by the dispersion of the index estimate."""
    x, y = z
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = float(x @ fitres.beta_hat)
    _check_index(nuis, u)
    mu_u, mu_p = nuis._link_at(u)
    grad = loss_eval(loss, y - mu_u)[1]
    centered = x - nuis.cond_mean_x(u)
    m0_inv = cho_solve(nuis._m0_cho, np.eye(nuis.M0_hat.shape[0]))
    return standardized_influence_from_parts(
        grad, mu_p, centered, nuis.jacobian, m0_inv)


@dataclass(frozen=True)
class SensitivityRow:
    """Empirical sensitivity indices at one concentration level."""

    kappa: float
    loss: str
    ges: float
    sges: float


def sensitivity_grid(nuis: NuisanceEstimates, data: Dataset, loss: LossSpec,
                     reference: np.ndarray | None = None) -> tuple[float, float]:
    """Max influence norms over contaminating responses at training points.

    The candidate responses at each x_i are the orthogonal contaminant of
    the projected link value, its negation, and the antipode of the
    projected link value.
    """
    if reference is None:
        reference = np.array([1.0, 0.0, 0.0])
    m0_inv = cho_solve(nuis._m0_cho, np.eye(nuis.M0_hat.shape[0]))
    ref = UnitVector(reference)
    ges = 0.0
    sges = 0.0
    for i in range(data.n):
        mu_u = nuis.mu_train[i]
        mu_p = nuis.mu_prime_train[i]
        centered = data.X[i] - nuis.cond_mean_train[i]
        sphere_mu = project_to_sphere(mu_u)
        orth = orthogonal_contaminant(sphere_mu, ref).coords
        for y in (orth, -orth, -sphere_mu.coords):
            grad = loss_eval(loss, y - mu_u)[1]
            if_vec = influence_from_parts(
                grad, mu_p, centered, nuis.jacobian,
                lambda v: cho_solve(nuis._w0_cho, v))
            ges = max(ges, float(np.linalg.norm(if_vec)))
            sges = max(sges, standardized_influence_from_parts(
                grad, mu_p, centered, nuis.jacobian, m0_inv))
    return ges, sges


def empirical_sges(loss: LossSpec, kappa_list, base_config: FitConfig | None = None,
                   n: int = 800, seed: int = 2024,
                   beta0: np.ndarray | None = None) -> list[SensitivityRow]:
    """Empirical sensitivity sweep over concentration levels.

    Each level simulates a fresh spiral dataset, fits the requested loss,
    and maximizes the influence norms over the contamination grid.
    """
    config = base_config or FitConfig()
    if beta0 is None:
        beta0 = np.array([1.0, -1.0, 1.0]) / math.sqrt(3.0)
    kappas = [float(k) for k in kappa_list]
    rows = []
    root = np.random.SeedSequence(seed)
    for kappa, ss in zip(kappas, root.spawn(len(kappas))):
        kids = ss.spawn(2)
        X = sample_predictors(n, beta0.size, kids[0])
        mean_vals = curve_values("spiral61", X @ beta0)
        Y = sample_vmf_around(mean_vals, kappa, kids[1])
        data = Dataset(X, Y)
        fitres = fit_model(data, loss, config)
        nuis = estimate_nuisance(fitres, data, fitres.loss)
        ges, sges = sensitivity_grid(nuis, data, fitres.loss)
        rows.append(SensitivityRow(kappa=kappa, loss=loss.family,
                                   ges=ges, sges=sges))
    return rows


def write_sensitivity_csv(rows, path) -> None:
    """Serialize sensitivity rows as CSV with columns kappa, loss, ges, sges."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["kappa", "loss", "ges", "sges"])
        for row in rows:
            writer.writerow([repr(row.kappa), row.loss, repr(row.ges), repr(row.sges)])
