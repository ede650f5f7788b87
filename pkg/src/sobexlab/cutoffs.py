"""Piecewise cut-off functions on a cylindrical collar.

The collar lives in a normalized frame: radial coordinate ``s`` between the
inner radius ``r/2`` and the outer radius ``r``, axial coordinate ``xn`` in
[0, 1].  Near the two corner circles ``{s = r/2, xn in {0, 1}}`` the
functions switch to the homogeneous-degree-zero branches on the cones D^L
and D^U; their gradients blow up like the inverse distance to the circle.

All evaluators accept numpy arrays and broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import DL, DU, SIDE, collar_subregion_offsets

BOUND_CONSTANT = 2.0
_TOL = 1e-12
_CORNER_TOL = 1e-15


class CutoffDomainError(ValueError):
    """Raised for coordinates outside the closed collar or on a corner circle."""


@dataclass(frozen=True)
class CollarCoords:
    s: float
    xn: float
    r: float
    theta: tuple = ()


def _check_r(r: float) -> None:
    if not 0 < r <= 1:
        raise CutoffDomainError(f"outer radius must lie in (0, 1], got {r}")


def _check_collar(s, xn, r) -> None:
    _check_r(r)
    tol = _TOL * max(r, 1.0)
    if np.any(s < r / 2 - tol) or np.any(s > r + tol):
        raise CutoffDomainError("radial coordinate outside [r/2, r]")
    if np.any(xn < -_TOL) or np.any(xn > 1 + _TOL):
        raise CutoffDomainError("axial coordinate outside [0, 1]")


def _corner_mask(s, xn, r):
    d = s - r / 2
    tol = _CORNER_TOL * r
    return (np.abs(d) <= tol) & ((np.abs(xn) <= tol) | (np.abs(1 - xn) <= tol))


def _pieces(s, xn, r, offsets=None):
    """Broadcast inputs and return ``(s, d, lo, hi, sub, corner)``.

    ``offsets = (d, lo, hi)`` gives the distances to the inner wall, the
    bottom and the top exactly; without it they are derived from ``s`` and
    ``xn`` and points within rounding of a corner circle count as on it.
    """
    s = np.asarray(s, dtype=float)
    xn = np.asarray(xn, dtype=float)
    if offsets is None:
        s, xn = np.broadcast_arrays(s, xn)
        _check_collar(s, xn, r)
        d, lo, hi = s - r / 2, xn, 1.0 - xn
        corner = _corner_mask(s, xn, r)
    else:
        _check_r(r)
        d, lo, hi = (np.asarray(a, dtype=float) for a in offsets)
        s, d, lo, hi = np.broadcast_arrays(s, d, lo, hi)
        if np.any(d < -_TOL * r) or np.any(d > r / 2 * (1 + _TOL)) or np.any(lo < 0) or np.any(hi < 0):
            raise CutoffDomainError("collar offsets outside the collar")
        corner = (d == 0) & ((lo == 0) | (hi == 0))
    return s, d, lo, hi, collar_subregion_offsets(d, lo, hi, r), corner


def _out(a):
    return a[()] if a.ndim == 0 else a


def eval_Li(s, xn, r, offsets=None):
    """Inner cut-off: 1 on the inner wall, 0 on the outer wall and end annuli."""
    s, d, lo, hi, sub, corner = _pieces(s, xn, r, offsets)
    out = -2.0 / r * s + 2.0
    w = np.where(sub == DL, lo, hi)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(sub != SIDE, w / (w + d), out)
    return _out(np.where(corner, 0.0, out))


def eval_Lo(s, xn, r, offsets=None):
    """Outer cut-off: 0 on the inner wall, 1 on the outer wall and end annuli."""
    s, d, lo, hi, sub, corner = _pieces(s, xn, r, offsets)
    out = 2.0 / r * s - 1.0
    w = np.where(sub == DL, lo, hi)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(sub != SIDE, d / (w + d), out)
    # no limit exists on the corner circle; keep L^i + L^o = 1 there
    return _out(np.where(corner, 1.0, out))


def local_grad_Li(s, xn, r, offsets=None):
    """(d/ds, d/dxn) of L^i in the collar frame."""
    s, d, lo, hi, sub, corner = _pieces(s, xn, r, offsets)
    if np.any(corner):
        raise CutoffDomainError("gradient undefined on a corner circle")
    ds = np.full(s.shape, -2.0 / r)
    dx = np.zeros(s.shape)
    low, up = sub == DL, sub == DU
    with np.errstate(invalid="ignore", divide="ignore"):
        den_l = (lo + d) ** 2
        den_u = (hi + d) ** 2
        ds = np.where(low, -lo / den_l, ds)
        dx = np.where(low, d / den_l, dx)
        ds = np.where(up, -hi / den_u, ds)
        dx = np.where(up, -d / den_u, dx)
    return ds, dx


def local_grad_Lo(s, xn, r, offsets=None):
    """(d/ds, d/dxn) of L^o; equals minus the L^i gradient off the corners."""
    ds, dx = local_grad_Li(s, xn, r, offsets)
    return -ds, -dx


def gradient_bound(s, xn, r, constant: float = BOUND_CONSTANT, offsets=None):
    """Right-hand side of the gradient estimate for either cut-off."""
    s, d, lo, hi, sub, _ = _pieces(s, xn, r, offsets)
    side = np.full(s.shape, constant / r)
    with np.errstate(divide="ignore"):
        low = constant / np.hypot(d, lo)
        up = constant / np.hypot(d, hi)
    return np.where(sub == DL, low, np.where(sub == DU, up, side))


def cartesian_gradient(ds, dx, radial_dir):
    """Assemble an n-vector gradient from radial/axial parts.

    ``radial_dir`` has shape (N, n-1): the unit vector (x - c)/s.
    """
    ds = np.atleast_1d(ds)
    dx = np.atleast_1d(dx)
    return np.concatenate([ds[:, None] * radial_dir, dx[:, None]], axis=1)


def eval_L1(xn):
    """Slab cut-off ``2 - x_n`` on [1, 2]."""
    xn = np.asarray(xn, dtype=float)
    if np.any(xn < 1 - _TOL) or np.any(xn > 2 + _TOL):
        raise CutoffDomainError("slab cut-off needs x_n in [1, 2]")
    out = 2.0 - xn
    return out[()] if out.ndim == 0 else out


def grad_L1(n: int, count: int = 1) -> np.ndarray:
    g = np.zeros((count, n))
    g[:, -1] = -1.0
    return g


def grad_Li(c: CollarCoords, n: int = 3) -> np.ndarray:
    """Cartesian gradient of L^i at a single collar point (angle from ``c.theta``)."""
    ds, dx = local_grad_Li(c.s, c.xn, c.r)
    return cartesian_gradient(ds, dx, _direction(c.theta, n))[0]


def grad_Lo(c: CollarCoords, n: int = 3) -> np.ndarray:
    ds, dx = local_grad_Lo(c.s, c.xn, c.r)
    return cartesian_gradient(ds, dx, _direction(c.theta, n))[0]


def _direction(theta, n: int) -> np.ndarray:
    """Unit vector in R^{n-1} from hyperspherical angles (missing angles are 0)."""
    angles = list(theta) + [0.0] * (n - 2 - len(theta))
    v = np.ones(n - 1)
    for i, a in enumerate(angles):
        v[i] *= np.cos(a)
        v[i + 1 :] *= np.sin(a)
    return v[None, :]
