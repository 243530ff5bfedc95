"""Exact geometry primitives for the unit sphere S^{d-1} in ambient R^d.

Points are unit vectors under the identity embedding; tangent vectors are
ambient vectors orthogonal to their base point.  All operations are pure
functions on immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import AntipodalPoint, BaseMismatch, NearZeroVector

UNIT_NORM_TOL = 1e-10
TANGENCY_TOL = 1e-8
NORM_EPS = 1e-12
ANTIPODAL_EPS = 1e-9


def _as_float_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class UnitVector:
    """A point on S^{d-1}, d >= 3, stored as its ambient coordinates."""

    coords: np.ndarray

    def __post_init__(self):
        v = _as_float_vector(self.coords)
        if v.size < 3:
            raise ValueError(f"sphere dimension requires d >= 3, got d={v.size}")
        nrm = np.linalg.norm(v)
        if abs(nrm - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"not a unit vector: ||v|| = {nrm!r}")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "coords", v)

    @property
    def dim(self) -> int:
        return self.coords.size

    def dot(self, other: "UnitVector") -> float:
        return float(self.coords @ other.coords)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)


@dataclass(frozen=True)
class TangentVector:
    """An ambient vector attached to, and orthogonal to, a base point."""

    base: UnitVector
    vec: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = _as_float_vector(self.vec)
        if v.size != self.base.dim:
            raise ValueError("tangent vector dimension differs from base point")
        if abs(float(v @ self.base.coords)) > TANGENCY_TOL:
            raise ValueError("vector is not tangent at the base point")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "vec", v)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vec))


def project_to_sphere(v, eps: float = NORM_EPS) -> UnitVector:
    """Normalize a nonzero ambient vector onto the sphere.

    Raises NearZeroVector when ||v|| <= eps, which signals a degenerate
    link estimate downstream.
    """
    v = _as_float_vector(v)
    nrm = np.linalg.norm(v)
    if nrm <= eps:
        raise NearZeroVector(f"cannot project vector with norm {nrm!r}")
    return UnitVector(v / nrm)


def projection_differential(v, eps: float = NORM_EPS) -> np.ndarray:
    """Ambient differential of the normalizing projection at v.

    Returns the d x d matrix (I - p p^T) / ||v|| with p = v / ||v||.  It is
    symmetric and annihilates v.
    """
    v = _as_float_vector(v)
    nrm = np.linalg.norm(v)
    if nrm <= eps:
        raise NearZeroVector(f"projection differential undefined at norm {nrm!r}")
    p = v / nrm
    return (np.eye(v.size) - np.outer(p, p)) / nrm


def tangent_basis(mu: UnitVector) -> np.ndarray:
    """Deterministic orthonormal basis of the tangent space at mu.

    Columns of the returned d x (d-1) matrix B satisfy B^T B = I and
    B^T mu = 0.  The basis is completed from a Householder reflection that
    maps the first coordinate axis onto +/-mu, so it is reproducible.
    """
    m = mu.coords
    d = m.size
    e1 = np.zeros(d)
    e1[0] = 1.0
    # Reflect e1 onto -mu or +mu, picking the numerically stable sign.
    w = m + e1 if m[0] >= 0 else m - e1
    w = w / np.linalg.norm(w)
    house = np.eye(d) - 2.0 * np.outer(w, w)
    return house[:, 1:]


def geodesic_distance(a: UnitVector, b: UnitVector) -> float:
    """Great-circle distance arccos(a . b), clamped into [0, pi].

    Evaluated as atan2(sin, cos), which is the same function but stays
    accurate where arccos loses precision near coincident points.
    """
    dot = np.clip(a.dot(b), -1.0, 1.0)
    sin = np.linalg.norm(b.coords - dot * a.coords)
    return float(np.arctan2(sin, dot))


def riemannian_log(base: UnitVector, y: UnitVector,
                   antipodal_eps: float = ANTIPODAL_EPS) -> TangentVector:
    """Tangent vector at `base` pointing along the geodesic towards y.

    The length of the result equals the geodesic distance.  Antipodal pairs
    are refused: the connecting great circle is not unique.
    """
    dot = np.clip(base.dot(y), -1.0, 1.0)
    if dot < -1.0 + antipodal_eps:
        raise AntipodalPoint("log map undefined for antipodal points")
    residual = y.coords - dot * base.coords
    rnorm = np.linalg.norm(residual)
    if rnorm < 1e-15:
        return TangentVector(base, np.zeros(base.dim))
    angle = np.arctan2(rnorm, dot)
    return TangentVector(base, residual * (angle / rnorm))


def riemannian_exp(base: UnitVector, t: TangentVector) -> UnitVector:
    """Follow the geodesic from `base` with initial velocity t for unit time."""
    if t.base is not base and not np.array_equal(t.base.coords, base.coords):
        raise BaseMismatch("tangent vector is attached to a different base point")
    speed = t.norm
    if speed < 1e-15:
        return base
    out = np.cos(speed) * base.coords + np.sin(speed) * (t.vec / speed)
    return UnitVector(out / np.linalg.norm(out))


def rotation_aligning(a: UnitVector, b: UnitVector,
                      antipodal_eps: float = ANTIPODAL_EPS) -> np.ndarray:
    """Rotation matrix mapping a onto b, identity on span{a, b}^perp.

    The result R is orthogonal with det R = 1 and R a = b.  Antipodal pairs
    are refused because the rotation plane is not unique.
    """
    dot = np.clip(a.dot(b), -1.0, 1.0)
    if dot < -1.0 + antipodal_eps:
        raise AntipodalPoint("no canonical rotation between antipodal points")
    d = a.dim
    residual = b.coords - dot * a.coords
    rnorm = np.linalg.norm(residual)
    if rnorm < 1e-15:
        return np.eye(d)
    w = residual / rnorm
    sin_phi = rnorm
    cos_phi = dot
    av = a.coords
    rot = np.eye(d)
    rot += sin_phi * (np.outer(w, av) - np.outer(av, w))
    rot += (cos_phi - 1.0) * (np.outer(av, av) + np.outer(w, w))
    return rot


def parallel_transport(t: TangentVector, to: UnitVector,
                       antipodal_eps: float = ANTIPODAL_EPS) -> TangentVector:
    """Transport t along the geodesic from its base to `to`.

    On the sphere this is the rotation in span{base, to} applied to the
    tangent vector; it preserves the norm exactly.
    """
    rot = rotation_aligning(t.base, to, antipodal_eps=antipodal_eps)
    moved = rot @ t.vec
    # Remove the numerical out-of-tangency drift before validation.
    moved = moved - (moved @ to.coords) * to.coords
    return TangentVector(to, moved)
