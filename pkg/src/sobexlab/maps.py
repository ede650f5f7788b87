"""Reflections used by the extension operator.

``R1`` mirrors the slab ``x_n in [1, 2]`` onto the top layer of the cube.
The collar reflections fold the annulus ``rho < s < 2 rho`` around a
cylinder axis onto ``rho/2 < s' < rho`` via ``s' = -s/2 + 3 rho / 2``,
keeping angles and the axial coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import MushroomSpec

_TOL = 1e-12


class MapDomainError(ValueError):
    pass


@dataclass(frozen=True)
class Reflection:
    """A slab reflection (``center`` is None) or a collar reflection."""

    kind: str
    k: Optional[int] = None
    center: Optional[np.ndarray] = None
    rho: Optional[float] = None

    @property
    def is_slab(self) -> bool:
        return self.kind == "SlabR1"


SLAB_R1 = Reflection("SlabR1")


def head_reflection(spec: MushroomSpec, k: int) -> Reflection:
    return Reflection("HeadR", k, spec.center(k), float(spec.tilde_r[k - 1]))


def stem_reflection(spec: MushroomSpec, k: int) -> Reflection:
    return Reflection("StemR", k, spec.center(k), float(spec.r[k - 1]))


def _check_slab(X):
    if np.any(X[:, -1] < 1 - _TOL) or np.any(X[:, -1] > 2 + _TOL):
        raise MapDomainError("R1 is defined on the slab 1 <= x_n <= 2")


def _radial(refl: Reflection, X):
    d = X[:, :-1] - refl.center
    s = np.sqrt(np.einsum("ij,ij->i", d, d))
    rho = refl.rho
    if np.any(s < rho * (1 - 1e-9)) or np.any(s > 2 * rho * (1 + 1e-9)):
        raise MapDomainError(f"{refl.kind}({refl.k}) is defined on the annulus rho <= s <= 2 rho")
    return d, s


def apply(refl: Reflection, X) -> np.ndarray:
    """Image of a batch of points (shape (N, n)) or a single point."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if refl.is_slab:
        _check_slab(X)
        Y = X.copy()
        Y[:, -1] = 2.0 - X[:, -1]
    else:
        d, s = _radial(refl, X)
        g = -0.5 + 1.5 * refl.rho / s
        Y = X.copy()
        Y[:, :-1] = refl.center + g[:, None] * d
    return Y[0] if single else Y


def differential(refl: Reflection, X) -> np.ndarray:
    """Cartesian Jacobian matrices, shape (N, n, n)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N, n = X.shape
    if refl.is_slab:
        _check_slab(X)
        D = np.broadcast_to(np.eye(n), (N, n, n)).copy()
        D[:, -1, -1] = -1.0
        return D
    d, s = _radial(refl, X)
    g = -0.5 + 1.5 * refl.rho / s
    D = np.zeros((N, n, n))
    idx = np.arange(n - 1)
    D[:, idx, idx] = g[:, None]
    D[:, :-1, :-1] -= (1.5 * refl.rho / s**3)[:, None, None] * d[:, :, None] * d[:, None, :]
    D[:, -1, -1] = 1.0
    return D


def pullback_gradient(refl: Reflection, X, grad_at_image) -> np.ndarray:
    """Gradient of ``u o refl`` given ``grad u`` evaluated at the image points."""
    D = differential(refl, X)
    return np.einsum("nji,nj->ni", D, np.atleast_2d(grad_at_image))


def jacobian(refl: Reflection, X) -> tuple[np.ndarray, np.ndarray]:
    """Analytic |det D| and an upper bound for the operator norm of D.

    Collar maps: |J| = (1/2) (s'/s)^{n-2}; the axial direction is preserved
    so the operator norm is exactly 1.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N, n = X.shape
    if refl.is_slab:
        _check_slab(X)
        return np.ones(N), np.ones(N)
    _, s = _radial(refl, X)
    ratio = (-0.5 * s + 1.5 * refl.rho) / s
    det = 0.5 * ratio ** (n - 2)
    opnorm = np.maximum(np.maximum(0.5, ratio), 1.0)
    return det, opnorm


def fd_jacobian_det(refl: Reflection, x, h: float) -> float:
    """Central finite-difference determinant of the Cartesian map (oracle)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    J = np.zeros((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (apply(refl, x + e) - apply(refl, x - e)) / (2 * h)
    return float(abs(np.linalg.det(J)))
