"""Deterministic quadrature rules for boxes and cylindrical pieces.

Cylindrical regions are described by a cross-section in the (s, t) half
plane (radial distance from the axis, axial offset) times the sphere
S^{n-2} of directions.  The volume element is ``s^{n-2} ds dt dsigma``.

Cross-section rules return arrays ``(s, t, w)`` where ``w`` already
contains the ``s^{n-2}`` factor.  Corner pieces with an integrable
singularity at a vertex use polar coordinates around the vertex and a
geometrically graded radial mesh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import unit_sphere_area


@dataclass(frozen=True)
class QuadratureSpec:
    """Integration settings.

    ``grading`` is the ratio between consecutive radial cells towards a
    singular corner and ``levels`` the number of graded cells.
    """

    method: str = "tensor"
    n_radial: int = 12
    n_axial: int = 12
    n_angular: int = 32
    n_box: int = 16
    grading: float = 0.2
    levels: int = 40
    n_polar_angle: int = 12
    samples: int = 200_000
    seed: int = 20240601
    target_rel_error: float = 1e-3

    def __post_init__(self):
        if self.method not in ("tensor", "monte-carlo"):
            raise ValueError(f"unknown quadrature method {self.method!r}")
        if not 0 < self.grading < 1:
            raise ValueError("grading ratio must lie in (0, 1)")

    def refined(self, factor: float) -> "QuadratureSpec":
        f = lambda v: max(2, int(round(v * factor)))
        return QuadratureSpec(
            self.method, f(self.n_radial), f(self.n_axial), f(self.n_angular), f(self.n_box),
            self.grading, f(self.levels), f(self.n_polar_angle), f(self.samples), self.seed,
            self.target_rel_error,
        )


@lru_cache(maxsize=None)
def gauss_legendre(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(k)
    return 0.5 * (x + 1.0), 0.5 * w


def gl_interval(a: float, b: float, k: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_legendre(k)
    return a + (b - a) * x, (b - a) * w


def box_rule(lo, hi, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre rule on an axis-aligned box."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x, w = gauss_legendre(k)
    d = lo.size
    grids = np.meshgrid(*[lo[i] + (hi[i] - lo[i]) * x for i in range(d)], indexing="ij")
    wgrids = np.meshgrid(*[(hi[i] - lo[i]) * w for i in range(d)], indexing="ij")
    X = np.stack([g.ravel() for g in grids], axis=1)
    W = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return X, W


# ---------------------------------------------------------------------------
# Directions on S^{n-2}
# ---------------------------------------------------------------------------


def sphere_rule(n: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Product rule for directions in R^{n-1}; weights sum to |S^{n-2}|.

    n = 3: trapezoid rule on the circle.  n > 3: Gauss-Legendre in the
    polar angles (with their sine weights) and trapezoid in the last angle.
    """
    if n == 2:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    phi = 2 * np.pi * (np.arange(k) + 0.5) / k
    dirs = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    wts = np.full(k, 2 * np.pi / k)
    for dim in range(3, n):
        # prepend a polar angle theta in [0, pi]; weight sin^{dim-2}
        th, wt = gl_interval(0.0, np.pi, max(4, k // 2))
        wt = wt * np.sin(th) ** (dim - 2)
        new_dirs = np.concatenate(
            [np.repeat(np.cos(th), len(wts))[:, None], np.kron(np.sin(th)[:, None], dirs)], axis=1
        )
        wts = np.kron(wt, wts)
        dirs = new_dirs
    return dirs, wts


# ---------------------------------------------------------------------------
# Cross-section pieces
# ---------------------------------------------------------------------------


def rect_section(s0, s1, t0, t1, n: int, ks: int, kt: int):
    s, ws = gl_interval(s0, s1, ks)
    t, wt = gl_interval(t0, t1, kt)
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws * s ** (n - 2), wt)
    return S.ravel(), T.ravel(), W.ravel()


def disc_section(R, t0, t1, n: int, ks: int, kt: int):
    return rect_section(0.0, R, t0, t1, n, ks, kt)


def triangle_section(v0, v1, v2, n: int, k: int):
    """Collapsed (Duffy) Gauss rule on a triangle in the (s, t) plane."""
    v0, v1, v2 = (np.asarray(v, dtype=float) for v in (v0, v1, v2))
    a, wa = gauss_legendre(k)
    b, wb = gauss_legendre(k)
    A, B = np.meshgrid(a, b, indexing="ij")
    P = v0 + A.ravel()[:, None] * ((v1 - v0) + B.ravel()[:, None] * (v2 - v1))
    e1, e2 = v1 - v0, v2 - v1
    det = abs(e1[0] * e2[1] - e1[1] * e2[0])
    W = np.outer(wa, wb).ravel() * A.ravel() * det
    s, t = P[:, 0], P[:, 1]
    return s, t, W * s ** (n - 2)


def _corner_rule(rho: float, n: int, q: QuadratureSpec):
    """Graded polar rule on the corner triangle, as exact offsets from the vertex.

    Returns ``(d, e, W)``: radial offset, axial offset and weight without the
    ``s^{n-2}`` factor.  The triangle has legs of length ``rho``.
    """
    phi, wphi = gl_interval(0.0, np.pi / 2, q.n_polar_angle)
    lmax = rho / (np.cos(phi) + np.sin(phi))
    x, w = gauss_legendre(q.n_radial)
    # graded cells [sigma^{j+1}, sigma^j] (j = 0..levels-1) and [0, sigma^levels]
    edges = q.grading ** np.arange(q.levels + 1)
    lo = np.append(edges[1:], 0.0)
    hi = edges
    frac = (lo[:, None] + (hi - lo)[:, None] * x[None, :]).ravel()
    fw = ((hi - lo)[:, None] * w[None, :]).ravel()
    L = lmax[:, None] * frac[None, :]
    WL = (lmax[:, None] * fw[None, :]) * L * wphi[:, None]
    d = (L * np.cos(phi)[:, None]).ravel()
    e = (L * np.sin(phi)[:, None]).ravel()
    return d, e, WL.ravel()


def corner_section(rho: float, t_corner: float, direction: int, n: int, q: QuadratureSpec):
    """Graded polar rule on the corner triangle of a collar.

    The triangle has its singular vertex at ``(s, t) = (rho, t_corner)`` and
    legs of length ``rho`` along +s and along ``direction`` in t.
    """
    d, e, W = _corner_rule(rho, n, q)
    s = rho + d
    return s, t_corner + direction * e, W * s ** (n - 2)


def collar_section(rho: float, height: float, sub: str | None, n: int, q: QuadratureSpec):
    """Cross-section rule for a collar ``rho <= s <= 2 rho``, ``0 <= t <= height``.

    ``sub`` selects DL, DU, Side or (None) the whole collar.  The corner
    cones have legs of length ``rho`` in the normalized frame, which
    requires ``height == 1``.
    """
    return collar_section_offsets(rho, height, sub, n, q)[:3]


def collar_section_offsets(rho: float, height: float, sub: str | None, n: int, q: QuadratureSpec):
    """Like :func:`collar_section`, plus exact offsets ``(d, lo, hi)``.

    ``d = s - rho`` is the distance to the inner wall and ``lo``/``hi`` the
    distances to the bottom and top.  Graded corner nodes get much closer
    to the corner circle than floating point can resolve in ``s`` or ``t``
    themselves; the offsets keep them exact.
    """
    if sub is None:
        parts = [collar_section_offsets(rho, height, name, n, q) for name in ("DL", "Side", "DU")]
        return tuple(np.concatenate(c) for c in zip(*parts))
    if sub in ("DL", "DU"):
        d, e, W = _corner_rule(rho, n, q)
        s = rho + d
        W = W * s ** (n - 2)
        if sub == "DL":
            return s, e.copy(), W, d, e, height - e
        return s, height - e, W, d, height - e, e
    if sub != "Side":
        raise ValueError(f"unknown collar piece {sub!r}")
    k = q.n_radial
    low = triangle_section((2 * rho, rho), (2 * rho, 0.0), (rho, rho), n, k)
    mid = rect_section(rho, 2 * rho, rho, height - rho, n, k, q.n_axial)
    top = triangle_section((2 * rho, height - rho), (2 * rho, height), (rho, height - rho), n, k)
    s, t, w = (np.concatenate(c) for c in zip(low, mid, top))
    return s, t, w, s - rho, t, height - t


def assemble_cylinder(center, t_origin: float, s, t, w, n: int, n_angular: int):
    """Cartesian nodes/weights from a cross-section rule around an axis along x_n."""
    dirs, aw = sphere_rule(n, n_angular)
    X = np.empty((s.size * len(aw), n))
    X[:, :-1] = (center[None, None, :] + s[:, None, None] * dirs[None, :, :]).reshape(-1, n - 1)
    X[:, -1] = np.repeat(t_origin + t, len(aw))
    W = (w[:, None] * aw[None, :]).ravel()
    return X, W


# ---------------------------------------------------------------------------
# Arc clipping (n = 3)
# ---------------------------------------------------------------------------


def _merge(intervals):
    out = []
    for a, b in sorted(intervals):
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return out


def _wrap(a, b):
    """Split an angular interval into pieces inside [0, 2 pi)."""
    two_pi = 2 * np.pi
    a0 = a % two_pi
    b0 = a0 + (b - a)
    if b0 <= two_pi:
        return [(a0, b0)]
    return [(a0, two_pi), (0.0, b0 - two_pi)]


def allowed_arcs(center, s: float, discs, lo: float = 0.0, hi: float = 1.0):
    """Angles of the circle ``center + s (cos, sin)`` avoiding discs and inside a square.

    ``discs`` is an iterable of (center, radius) to exclude; the square is
    ``[lo, hi]^2``.  Returns merged intervals of [0, 2 pi).
    """
    cx, cy = float(center[0]), float(center[1])
    blocked = []
    for (dx, dy), R in discs:
        vx, vy = dx - cx, dy - cy
        dist = math.hypot(vx, vy)
        if dist == 0.0:
            if s < R:
                return []
            continue
        gamma = (s * s + dist * dist - R * R) / (2 * s * dist)
        if gamma >= 1:
            continue
        if gamma <= -1:
            return []
        half = math.acos(gamma)
        base = math.atan2(vy, vx)
        blocked.extend(_wrap(base - half, base + half))
    # half-planes: c + s cos >= lo etc.  each excludes an arc around a direction
    for axis_angle, offset in ((np.pi, cx - lo), (0.0, hi - cx), (1.5 * np.pi, cy - lo), (0.5 * np.pi, hi - cy)):
        if offset < 0:
            return []
        if s <= offset:
            continue
        half = math.acos(offset / s)
        blocked.extend(_wrap(axis_angle - half, axis_angle + half))
    blocked = _merge(blocked)
    free, cur = [], 0.0
    for a, b in blocked:
        if a > cur:
            free.append((cur, a))
        cur = max(cur, b)
    if cur < 2 * np.pi:
        free.append((cur, 2 * np.pi))
    return [(a, b) for a, b in free if b - a > 1e-14]


def assemble_clipped_cylinder(center, t_origin: float, s, t, w, discs, n_per_arc: int):
    """n = 3 cylinder nodes restricted to the allowed arcs of each radius."""
    xg, wg = gauss_legendre(n_per_arc)
    pts, wts = [], []
    cache: dict = {}
    for si, ti, wi in zip(s, t, w):
        arcs = cache.get(si)
        if arcs is None:
            arcs = cache[si] = allowed_arcs(center, si, discs)
        for a, b in arcs:
            th = a + (b - a) * xg
            pts.append(np.stack([center[0] + si * np.cos(th), center[1] + si * np.sin(th), np.full(th.size, t_origin + ti)], axis=1))
            wts.append(wi * (b - a) * wg)
    if not pts:
        return np.zeros((0, 3)), np.zeros(0)
    return np.concatenate(pts), np.concatenate(wts)


def sphere_area(n: int) -> float:
    return unit_sphere_area(n - 2)
