"""Kernel-weighted local-linear M-estimation of the link function.

The link and its derivative at an index value u are the minimizers of a
kernel-weighted loss over affine predictions a + b (U_i - u).  The least
squares case has a closed form; all other families are solved by
iteratively reweighted least squares, which is a majorize-minimize scheme
for every supported loss.  Leave-one-out fits are computed from deleted
kernel sums, so a single dense weight pass yields all n deleted fits.

The batch path reuses thread-local scratch buffers: profiles show the
dense n x n passes are allocation-bound otherwise.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .exceptions import SingularDesign
from .losses import LossSpec, irls_weights, loss_values
from .params import Dataset, IndexParam, beta_from_theta

KERNEL_FAMILIES = ("gaussian", "epanechnikov", "quartic")

_KERNEL_MOMENTS = {
    # (nu2, omega0) = (int v^2 K(v) dv, int K(v)^2 dv)
    "gaussian": (1.0, 1.0 / (2.0 * math.sqrt(math.pi))),
    "epanechnikov": (0.2, 0.6),
    "quartic": (1.0 / 7.0, 5.0 / 7.0),
}

MAX_WIDENINGS = 5
WIDEN_FACTOR = 1.5
COND_MAX = 1e12

_SCRATCH = threading.local()


@dataclass(frozen=True)
class KernelSpec:
    """Symmetric probability kernel with its second moment and roughness."""

    family: str = "epanechnikov"

    def __post_init__(self):
        fam = self.family.lower()
        if fam not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        object.__setattr__(self, "family", fam)

    @property
    def nu2(self) -> float:
        return _KERNEL_MOMENTS[self.family][0]

    @property
    def omega0(self) -> float:
        return _KERNEL_MOMENTS[self.family][1]

    def values(self, x: np.ndarray) -> np.ndarray:
        """Kernel density values K(x)."""
        out = np.array(x, dtype=float, copy=True)
        self._values_into(out)
        return out

    def _values_into(self, x: np.ndarray) -> None:
        """Overwrite x with K(x) in place."""
        if self.family == "gaussian":
            np.square(x, out=x)
            x *= -0.5
            np.exp(x, out=x)
            x *= 1.0 / math.sqrt(2.0 * math.pi)
            return
        np.square(x, out=x)
        np.subtract(1.0, x, out=x)
        np.clip(x, 0.0, None, out=x)
        if self.family == "epanechnikov":
            x *= 0.75
        else:
            np.square(x, out=x)
            x *= 0.9375


@dataclass(frozen=True)
class LocalFit:
    """Local level and slope of the link at one index value."""

    a: np.ndarray
    b: np.ndarray
    effective_weight_sum: float
    converged: bool
    iterations: int


@dataclass(frozen=True)
class LooFits:
    """Deleted-point link estimates at every sample index value.

    ``included`` marks rows whose deleted window could be fitted at all;
    ``bracketed`` additionally requires weighted neighbours on both sides
    of the evaluation point.  One-sided deleted windows (the sample
    extremes) are pure extrapolations whose errors are unbounded, so the
    criterion trims them.
    """

    mu: np.ndarray
    included: np.ndarray
    bracketed: np.ndarray
    iterations: int
    converged: bool

    @property
    def trusted(self) -> np.ndarray:
        return self.included & self.bracketed

    @property
    def n_excluded(self) -> int:
        return int((~self.trusted).sum())


@dataclass(frozen=True)
class BatchFits:
    """Local level and slope at a batch of evaluation points."""

    a: np.ndarray
    b: np.ndarray
    ok: np.ndarray
    bracketed: np.ndarray
    iterations: int
    converged: bool


def _scratch(shape: tuple, count: int) -> list[np.ndarray]:
    """Thread-local scratch matrices of a given shape."""
    key = (shape, count)
    cache = getattr(_SCRATCH, "mats", None)
    if cache is None or cache[0] != key:
        _SCRATCH.mats = (key, [np.empty(shape) for _ in range(count)])
    return _SCRATCH.mats[1]


def _solve_weighted(w: np.ndarray, s: np.ndarray, Y: np.ndarray,
                    cond_max: float = COND_MAX):
    """Solve the 2 x 2 weighted normal equations in the scaled basis (1, s)."""
    s0 = float(w.sum())
    s1 = float(w @ s)
    s2 = float(w @ (s * s))
    tr = s0 + s2
    disc = math.sqrt(max((s0 - s2) ** 2 + 4.0 * s1 * s1, 0.0))
    lmin = 0.5 * (tr - disc)
    lmax = 0.5 * (tr + disc)
    if lmin <= 0.0 or lmax > cond_max * lmin:
        raise SingularDesign("weighted moment matrix is numerically singular")
    det = s0 * s2 - s1 * s1
    t0 = w @ Y
    t1 = (w * s) @ Y
    a = (s2 * t0 - s1 * t1) / det
    b = (s0 * t1 - s1 * t0) / det
    return a, b, s0


def _widened_bandwidths(t: np.ndarray, h: float):
    """Candidate bandwidths: h, then a nearest-neighbour fallback widened x1.5."""
    yield h
    abs_t = np.sort(np.abs(t))
    if abs_t.size >= 2:
        h_nn = max(h, abs_t[1] * 1.001 + 1e-300)
    else:
        h_nn = h
    for k in range(MAX_WIDENINGS):
        yield h_nn * WIDEN_FACTOR**k


def local_linear_ls(u: float, U: np.ndarray, Y: np.ndarray, h: float,
                    kernel: KernelSpec) -> LocalFit:
    """Closed-form weighted least squares local-linear fit at u.

    Windows with fewer than two effectively weighted points fall back to a
    nearest-neighbour bandwidth, widened geometrically before giving up
    with SingularDesign.
    """
    if not h > 0:
        raise ValueError(f"bandwidth must be > 0, got {h!r}")
    U = np.asarray(U, dtype=float)
    Y = np.asarray(Y, dtype=float)
    t = U - u
    last_err = None
    for h_eff in _widened_bandwidths(t, h):
        s = t / h_eff
        w = kernel.values(s) / h_eff
        if int((w > 0).sum()) < 2:
            continue
        try:
            a, b_scaled, wsum = _solve_weighted(w, s, Y)
        except SingularDesign as err:
            last_err = err
            continue
        return LocalFit(a=a, b=b_scaled / h_eff, effective_weight_sum=wsum,
                        converged=True, iterations=0)
    raise last_err or SingularDesign("no window with two effective points")


def _settle_bandwidth(t: np.ndarray, h: float, kernel: KernelSpec,
                      Y: np.ndarray) -> float:
    """Bandwidth the widening policy settles on for this window."""
    for h_eff in _widened_bandwidths(t, h):
        w = kernel.values(t / h_eff) / h_eff
        if int((w > 0).sum()) < 2:
            continue
        try:
            _solve_weighted(w, t / h_eff, Y)
        except SingularDesign:
            continue
        return h_eff
    raise SingularDesign("no window with two effective points")


def local_linear_m(u: float, U: np.ndarray, Y: np.ndarray, h: float,
                   kernel: KernelSpec, loss: LossSpec,
                   init: LocalFit | None = None,
                   max_iter: int = 100, rtol: float = 1e-10,
                   converged_tol: float = 1e-8) -> LocalFit:
    """Local-linear M-fit at u for an arbitrary loss family.

    Runs IRLS from the least squares solution (or `init`).  The fixed point
    satisfies the weighted normal equations with weights
    irls_weight(loss, r_i) * K_h(U_i - u).  With the LS loss this returns
    the closed form unchanged.
    """
    ls_fit = local_linear_ls(u, U, Y, h, kernel)
    if loss.family == "ls":
        return ls_fit
    U = np.asarray(U, dtype=float)
    Y = np.asarray(Y, dtype=float)
    t = U - u
    h_eff = _settle_bandwidth(t, h, kernel, Y)
    s = t / h_eff
    w_kern = kernel.values(s) / h_eff
    a = init.a if init is not None else ls_fit.a
    b = init.b if init is not None else ls_fit.b
    iterations = 0
    last_step = math.inf
    wsum = ls_fit.effective_weight_sum
    for iterations in range(1, max_iter + 1):
        resid = Y - a[None, :] - np.outer(t, b)
        sq = np.einsum("ij,ij->i", resid, resid)
        w = irls_weights(loss, sq) * w_kern
        try:
            a_new, b_scaled, wsum = _solve_weighted(w, s, Y)
        except SingularDesign:
            # Robust weights can empty the window; keep the last iterate.
            break
        b_new = b_scaled / h_eff
        scale = 1.0 + math.sqrt(float(a @ a + b @ b))
        last_step = math.sqrt(float((a_new - a) @ (a_new - a) +
                                    (b_new - b) @ (b_new - b))) / scale
        a, b = a_new, b_new
        if last_step < rtol:
            break
    return LocalFit(a=a, b=b, effective_weight_sum=wsum,
                    converged=last_step < converged_tol, iterations=iterations)


def _batch_solve(W: np.ndarray, S: np.ndarray, Y: np.ndarray,
                 scratch: np.ndarray, cond_max: float = COND_MAX):
    """Row-wise weighted LS solves; returns (a, b_scaled, ok_mask)."""
    s0 = W.sum(axis=1)
    ws = np.multiply(W, S, out=scratch)
    s1 = ws.sum(axis=1)
    t1 = ws @ Y
    ws *= S
    s2 = ws.sum(axis=1)
    t0 = W @ Y
    tr = s0 + s2
    disc = np.sqrt(np.maximum((s0 - s2) ** 2 + 4.0 * s1 * s1, 0.0))
    lmin = 0.5 * (tr - disc)
    lmax = 0.5 * (tr + disc)
    ok = (lmin > 0.0) & (lmax <= cond_max * lmin)
    det = np.where(ok, s0 * s2 - s1 * s1, 1.0)
    a = (s2[:, None] * t0 - s1[:, None] * t1) / det[:, None]
    b = (s0[:, None] * t1 - s1[:, None] * t0) / det[:, None]
    return a, b, ok


def _irls_weights_into(loss: LossSpec, sq: np.ndarray, out: np.ndarray) -> None:
    """Write IRLS weights computed from squared norms into `out`."""
    if loss.family == "esl":
        np.multiply(sq, -1.0 / loss.lam, out=out)
        np.exp(out, out=out)
        return
    if loss.family == "l1":
        np.sqrt(sq, out=out)
        np.maximum(out, 1e-8, out=out)
        np.reciprocal(out, out=out)
        return
    if loss.family == "huber":
        np.sqrt(sq, out=out)
        np.maximum(out, 1e-300, out=out)
        np.reciprocal(out, out=out)
        out *= loss.huber_c
        np.minimum(out, 1.0, out=out)
        return
    out.fill(1.0)


def batch_local_m(u_eval: np.ndarray, U: np.ndarray, Y: np.ndarray, h: float,
                  kernel: KernelSpec, loss: LossSpec, loo: bool = False,
                  max_iter: int = 100, rtol: float = 1e-10,
                  converged_tol: float = 1e-8) -> BatchFits:
    """Local-linear M-fits at a batch of evaluation points.

    With ``loo=True`` the evaluation points must be the sample index values
    themselves and observation i is removed from the sums of row i.  Rows
    that stay singular after the per-row nearest-neighbour fallback are
    reported through the ``ok`` mask.
    """
    u_eval = np.asarray(u_eval, dtype=float)
    U = np.asarray(U, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n, d = Y.shape
    m = u_eval.size
    if not h > 0:
        raise ValueError(f"bandwidth must be > 0, got {h!r}")
    if loo and (m != n or (u_eval is not U and not np.array_equal(u_eval, U))):
        raise ValueError("loo fits require evaluation at the sample index values")

    T, S, W, Wm, scratch = _scratch((m, n), 5)
    np.subtract(U[None, :], u_eval[:, None], out=T)
    np.multiply(T, 1.0 / h, out=S)
    np.copyto(W, S)
    kernel._values_into(W)
    W *= 1.0 / h
    if loo:
        np.fill_diagonal(W, 0.0)
    positive = W > 0
    bracketed = (positive & (T <= 0)).any(axis=1) & (positive & (T >= 0)).any(axis=1)
    a, b_scaled, ok = _batch_solve(W, S, Y, scratch)
    ok &= positive.sum(axis=1) >= 2
    b = b_scaled / h

    iterations = 0
    converged = True
    if loss.family != "ls" and ok.any():
        # Iterate only rows that have not yet reached the fixed point; the
        # slowest windows no longer force full-matrix passes.
        act = np.flatnonzero(ok)
        final_step = np.zeros(m)
        while iterations < max_iter and act.size:
            iterations += 1
            Ta = T[act]
            Sa = S[act]
            Wa = W[act]
            aa = a[act]
            ba = b[act]
            resid = np.empty((act.size, n, d))
            for k in range(d):
                rk = resid[:, :, k]
                np.multiply(Ta, ba[:, k, None], out=rk)
                rk += aa[:, k, None]
                np.subtract(Y[None, :, k], rk, out=rk)
            sq = np.einsum("ijk,ijk->ij", resid, resid)
            wm = np.empty_like(sq)
            _irls_weights_into(loss, sq, wm)
            wm *= Wa
            a_new, b_scaled, ok_m = _batch_solve(wm, Sa, Y, sq)
            b_new = b_scaled / h
            # Rows whose reweighted window degenerates keep their last iterate.
            scale = 1.0 + np.sqrt(np.einsum("ij,ij->i", aa, aa) +
                                  np.einsum("ij,ij->i", ba, ba))
            da = a_new - aa
            db = b_new - ba
            step = np.sqrt(np.einsum("ij,ij->i", da, da) +
                           np.einsum("ij,ij->i", db, db)) / scale
            step = np.where(ok_m, step, 0.0)
            a[act[ok_m]] = a_new[ok_m]
            b[act[ok_m]] = b_new[ok_m]
            final_step[act] = step
            act = act[ok_m & (step >= rtol)]
        converged = bool((final_step[ok] < converged_tol).all())

    # Per-row scalar fallback with bandwidth widening for failed rows.
    mask = np.ones(n, dtype=bool)
    for i in np.flatnonzero(~ok):
        if loo:
            mask[i] = False
        try:
            fit_i = local_linear_m(u_eval[i], U[mask], Y[mask], h, kernel, loss,
                                   max_iter=max_iter, rtol=rtol)
            t_i = U[mask] - u_eval[i]
            h_i = _settle_bandwidth(t_i, h, kernel, Y[mask])
            w_i = kernel.values(t_i / h_i)
            bracketed[i] = bool(((w_i > 0) & (t_i <= 0)).any()
                                and ((w_i > 0) & (t_i >= 0)).any())
        except SingularDesign:
            pass
        else:
            a[i] = fit_i.a
            b[i] = fit_i.b
            ok[i] = True
            converged = converged and fit_i.converged
        if loo:
            mask[i] = True
    return BatchFits(a=a, b=b, ok=ok, bracketed=bracketed,
                     iterations=iterations, converged=converged)


def loo_fits(U: np.ndarray, Y: np.ndarray, h: float, kernel: KernelSpec,
             loss: LossSpec, max_iter: int = 100,
             rtol: float = 1e-10) -> LooFits:
    """Deleted-point local-linear M-fits at every U_i.

    Row i is the fit at U_i with observation i removed from all kernel
    sums.  Rows whose deleted window stays singular after the
    nearest-neighbour fallback are flagged and excluded.
    """
    U = np.asarray(U, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.shape[0] < 3:
        raise ValueError("leave-one-out fits need at least 3 observations")
    fits = batch_local_m(U, U, Y, h, kernel, loss, loo=True,
                         max_iter=max_iter, rtol=rtol)
    if not fits.ok.any():
        raise SingularDesign("every leave-one-out window is singular")
    return LooFits(mu=fits.a, included=fits.ok, bracketed=fits.bracketed,
                   iterations=fits.iterations, converged=fits.converged)


def criterion(theta, h: float, data: Dataset, loss: LossSpec,
              kernel: KernelSpec, max_iter: int = 100,
              rtol: float = 1e-10) -> float:
    """Mean deleted-point loss of the joint fit at (theta, h).

    Rows with singular or one-sided (extrapolating) deleted windows are
    excluded from the average; the count is available through loo_fits.
    """
    beta = beta_from_theta(theta if isinstance(theta, IndexParam) else theta)
    U = data.X @ beta
    loo = loo_fits(U, data.Y, h, kernel, loss, max_iter=max_iter, rtol=rtol)
    keep = loo.trusted
    if not keep.any():
        raise SingularDesign("no trusted leave-one-out rows")
    resid = data.Y[keep] - loo.mu[keep]
    sq = np.einsum("ij,ij->i", resid, resid)
    return float(np.mean(loss_values(loss, sq)))
