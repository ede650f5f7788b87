"""The piecewise extension operator on the ambient cylinder ``[0,1]^{n-1} x (0,3)``.

Given a field ``u`` on the closed truncated mushroom domain, ``E(u)`` is

* ``u`` on the domain,
* ``L1 * (u o R1)`` on the slab outside the stem collars,
* ``L^i * (u o R_head)`` on head collars,
* ``L1 L^o (u o R1) + L^i (u o R_stem)`` on stem collars,
* 0 elsewhere.

The formula is implemented as written.  Across the annuli
``{x_n = 2, r_k < s < tr_k}`` below each head the one-sided limits are
``u`` (above) and 0 (below); :func:`trace_jump` measures this.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cutoffs
from .fields import ScalarField
from .geometry import (
    CUBE,
    HEAD,
    HEAD_COLLAR,
    SLAB,
    STEM,
    STEM_COLLAR,
    MushroomSpec,
    RegionTag,
    classify_many,
    in_ambient,
)
from .maps import SLAB_R1, apply, head_reflection, pullback_gradient, stem_reflection


class ExtensionDomainError(ValueError):
    pass


def _collar_frame(X, center):
    d = X[:, :-1] - center
    s = np.sqrt(np.einsum("ij,ij->i", d, d))
    return s, d / s[:, None]


@dataclass(frozen=True)
class Extension:
    """Lazy evaluator for ``E(u)``; region methods skip classification."""

    spec: MushroomSpec
    u: ScalarField

    # -- region formulas -------------------------------------------------
    #
    # Collar formulas are evaluated in the local frame (s, e, x_n) around the
    # cylinder axis: for large k the stem radii are far below the spacing of
    # floating-point numbers near z_k, so Cartesian points cannot resolve
    # the annulus.  Image points are assembled from the local frame.

    def slab_value(self, X):
        return cutoffs.eval_L1(X[:, -1]) * self.u(apply(SLAB_R1, X))

    def slab_grad(self, X):
        Y = apply(SLAB_R1, X)
        G = pullback_gradient(SLAB_R1, X, self.u.gradient(Y)) * cutoffs.eval_L1(X[:, -1])[:, None]
        G[:, -1] -= self.u(Y)
        return G

    def _images(self, center, rho, s, e, xn):
        """Cartesian images under the collar map and under R1."""
        Yc = np.empty((s.size, self.spec.n))
        Yc[:, :-1] = center + (-0.5 * s + 1.5 * rho)[:, None] * e
        Yc[:, -1] = xn
        Y1 = np.empty_like(Yc)
        Y1[:, :-1] = center + s[:, None] * e
        Y1[:, -1] = 2.0 - xn
        return Yc, Y1

    @staticmethod
    def _collar_pullback(rho, s, e, G):
        """Transpose of the collar-map differential applied to ``G``."""
        H = G[:, :-1]
        g = -0.5 + 1.5 * rho / s
        out = G.copy()
        out[:, :-1] = g[:, None] * H - (1.5 * rho / s * np.einsum("ij,ij->i", e, H))[:, None] * e
        return out

    def head_collar_local(self, k, s, e, xn, grad: bool = False, offsets=None):
        """``offsets = (d, lo, hi)`` are exact distances to the inner wall, bottom and top."""
        center, rho = self.spec.center(k), float(self.spec.tilde_r[k - 1])
        t = xn - 2.0
        Yc, _ = self._images(center, rho, s, e, xn)
        Li = cutoffs.eval_Li(s, t, 2 * rho, offsets)
        if not grad:
            return Li * self.u(Yc)
        gLi = cutoffs.cartesian_gradient(*cutoffs.local_grad_Li(s, t, 2 * rho, offsets), e)
        return gLi * self.u(Yc)[:, None] + Li[:, None] * self._collar_pullback(rho, s, e, self.u.gradient(Yc))

    def stem_collar_local(self, k, s, e, xn, grad: bool = False, offsets=None):
        center, rho = self.spec.center(k), float(self.spec.r[k - 1])
        t = xn - 1.0
        r = 2 * rho
        Yc, Y1 = self._images(center, rho, s, e, xn)
        L1 = cutoffs.eval_L1(xn)
        Lo = cutoffs.eval_Lo(s, t, r, offsets)
        Li = cutoffs.eval_Li(s, t, r, offsets)
        if not grad:
            return L1 * Lo * self.u(Y1) + Li * self.u(Yc)
        gLo = cutoffs.cartesian_gradient(*cutoffs.local_grad_Lo(s, t, r, offsets), e)
        gLi = cutoffs.cartesian_gradient(*cutoffs.local_grad_Li(s, t, r, offsets), e)
        g_prod = L1[:, None] * gLo
        g_prod[:, -1] -= Lo
        G1 = self.u.gradient(Y1)
        G1[:, -1] *= -1.0
        G = g_prod * self.u(Y1)[:, None] + (L1 * Lo)[:, None] * G1
        G += gLi * self.u(Yc)[:, None] + Li[:, None] * self._collar_pullback(rho, s, e, self.u.gradient(Yc))
        return G

    def head_collar_value(self, k, X):
        s, e = _collar_frame(X, self.spec.center(k))
        return self.head_collar_local(k, s, e, X[:, -1])

    def head_collar_grad(self, k, X):
        s, e = _collar_frame(X, self.spec.center(k))
        return self.head_collar_local(k, s, e, X[:, -1], grad=True)

    def stem_collar_value(self, k, X):
        s, e = _collar_frame(X, self.spec.center(k))
        return self.stem_collar_local(k, s, e, X[:, -1])

    def stem_collar_grad(self, k, X):
        s, e = _collar_frame(X, self.spec.center(k))
        return self.stem_collar_local(k, s, e, X[:, -1], grad=True)

    def region_value(self, tag: RegionTag, X):
        kind = tag.kind
        if kind in ("Cube", "Stem", "Head"):
            return self.u(X)
        if kind == "Slab":
            return self.slab_value(X)
        if kind == "HeadCollar":
            return self.head_collar_value(tag.k, X)
        if kind == "StemCollar":
            return self.stem_collar_value(tag.k, X)
        return np.zeros(X.shape[0])

    def region_grad(self, tag: RegionTag, X):
        kind = tag.kind
        if kind in ("Cube", "Stem", "Head"):
            return self.u.gradient(X)
        if kind == "Slab":
            return self.slab_grad(X)
        if kind == "HeadCollar":
            return self.head_collar_grad(tag.k, X)
        if kind == "StemCollar":
            return self.stem_collar_grad(tag.k, X)
        return np.zeros_like(X)

    # -- dispatch ----------------------------------------------------------

    def _dispatch(self, X, which: str):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not np.all(in_ambient(self.spec, X)):
            raise ExtensionDomainError("E(u) is defined on [0,1]^{n-1} x (0,3) only")
        cls = classify_many(self.spec, X)
        grad = which == "grad"
        out = np.zeros_like(X) if grad else np.zeros(X.shape[0])
        omega = np.isin(cls.kind, (CUBE, STEM, HEAD))
        if omega.any():
            out[omega] = self.u.gradient(X[omega]) if grad else self.u(X[omega])
        slab = cls.kind == SLAB
        if slab.any():
            out[slab] = self.slab_grad(X[slab]) if grad else self.slab_value(X[slab])
        for code, fv, fg in (
            (HEAD_COLLAR, self.head_collar_value, self.head_collar_grad),
            (STEM_COLLAR, self.stem_collar_value, self.stem_collar_grad),
        ):
            sel = cls.kind == code
            for k in np.unique(cls.k[sel]):
                mk = sel & (cls.k == k)
                out[mk] = fg(int(k), X[mk]) if grad else fv(int(k), X[mk])
        return out

    def value(self, X):
        return self._dispatch(X, "value")

    def gradient(self, X):
        return self._dispatch(X, "grad")

    def field(self) -> ScalarField:
        return ScalarField(
            f"E({self.u.name})", self.spec.n, self.value, self.gradient, self.u.log2_scale,
            domain=self,
        )


def extend(spec: MushroomSpec, u: ScalarField) -> ScalarField:
    """``E(u)`` as a field on the ambient cylinder (region evaluators via ``.domain``)."""
    return Extension(spec, u).field()


def extend_gradient(spec: MushroomSpec, u: ScalarField, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return Extension(spec, u).gradient(x[None, :] if x.ndim == 1 else x)[0 if x.ndim == 1 else slice(None)]


def homogenize(spec: MushroomSpec, u: ScalarField, mean: float) -> ScalarField:
    """``T(u) = E(u - mean) + mean``; restricts to ``u`` on the domain."""
    ext = Extension(spec, u.scaled(1.0, -mean))
    value = lambda X: ext.value(X) + mean
    f = ScalarField(f"T({u.name})", spec.n, value, ext.gradient, domain=spec)
    return f


# ---------------------------------------------------------------------------
# Gradient envelope
# ---------------------------------------------------------------------------


def gradient_envelope(spec: MushroomSpec, u: ScalarField, tag_kind: str, k: int | None, X) -> np.ndarray:
    """Upper bound for |grad E(u)| from the product/chain-rule estimates.

    Cut-off gradients are replaced by their explicit bounds (constant 2),
    ``|grad(L1 L^o)|`` by twice the L^o bound, and ``|grad(u o R)|`` by the
    map's operator-norm bound times ``|grad u|`` at the image.
    """
    X = np.atleast_2d(X)
    norm = lambda G: np.sqrt(np.sum(G**2, axis=1))
    if tag_kind == "Slab":
        Y = apply(SLAB_R1, X)
        return np.abs(u(Y)) + cutoffs.eval_L1(X[:, -1]) * norm(u.gradient(Y))
    if tag_kind == "HeadCollar":
        refl = head_reflection(spec, k)
        s, _ = _collar_frame(X, refl.center)
        xn = X[:, -1] - 2.0
        Y = apply(refl, X)
        bound = cutoffs.gradient_bound(s, xn, 2 * refl.rho)
        return bound * np.abs(u(Y)) + cutoffs.eval_Li(s, xn, 2 * refl.rho) * norm(u.gradient(Y))
    if tag_kind == "StemCollar":
        refl = stem_reflection(spec, k)
        s, _ = _collar_frame(X, refl.center)
        xn = X[:, -1] - 1.0
        r = 2 * refl.rho
        Y1, Yk = apply(SLAB_R1, X), apply(refl, X)
        bound = cutoffs.gradient_bound(s, xn, r)
        L1Lo = cutoffs.eval_L1(X[:, -1]) * cutoffs.eval_Lo(s, xn, r)
        Li = cutoffs.eval_Li(s, xn, r)
        return (
            2 * bound * np.abs(u(Y1)) + L1Lo * norm(u.gradient(Y1))
            + bound * np.abs(u(Yk)) + Li * norm(u.gradient(Yk))
        )
    raise ValueError(f"no envelope for region kind {tag_kind!r}")


# ---------------------------------------------------------------------------
# Interface diagnostics
# ---------------------------------------------------------------------------

FACES = (
    "stem_lateral",
    "stem_collar_outer",
    "cube_top",
    "head_bottom",
    "head_lateral",
    "head_collar_outer",
)
EPSILONS = (1e-3, 1e-4, 1e-5, 1e-6)


@dataclass
class JumpReport:
    face: str
    k: int
    n_points: int
    sup: float
    mean_q: float
    q: float
    raw: np.ndarray

    def to_dict(self) -> dict:
        return {"face": self.face, "k": self.k, "n_points": self.n_points, "sup": self.sup, "mean_q": self.mean_q, "q": self.q}


def _face_points(spec: MushroomSpec, face: str, k: int, n_ang: int = 16, n_ax: int = 7):
    """Points on the face plus the unit offset direction (pointing to the 'plus' side)."""
    n = spec.n
    c = spec.center(k)
    r, tr = spec.r[k - 1], spec.tilde_r[k - 1]
    th = 2 * np.pi * (np.arange(n_ang) + 0.25) / n_ang
    dirs = np.zeros((n_ang, n - 1))
    dirs[:, 0], dirs[:, 1] = np.cos(th), np.sin(th)
    frac = (np.arange(n_ax) + 0.5) / n_ax
    if face in ("stem_lateral", "stem_collar_outer", "head_lateral", "head_collar_outer"):
        radius = {"stem_lateral": r, "stem_collar_outer": 2 * r, "head_lateral": tr, "head_collar_outer": 2 * tr}[face]
        lo = 1.0 if face.startswith("stem") else 2.0
        xs = lo + 0.1 + 0.8 * frac
        P = np.zeros((n_ang * n_ax, n))
        P[:, :-1] = np.repeat(c + radius * dirs, n_ax, axis=0)
        P[:, -1] = np.tile(xs, n_ang)
        offs = np.zeros_like(P)
        offs[:, :-1] = np.repeat(dirs, n_ax, axis=0)
        return P, offs, radius
    if face in ("cube_top", "head_bottom"):
        if face == "cube_top":
            radii = r * (1.05 + 0.9 * frac)
            level = 1.0
        else:
            radii = r + (tr - r) * (0.05 + 0.9 * frac)
            level = 2.0
        P = np.zeros((n_ang * n_ax, n))
        P[:, :-1] = (c + radii[None, :, None] * dirs[:, None, :]).reshape(-1, n - 1)
        P[:, -1] = level
        offs = np.zeros_like(P)
        offs[:, -1] = 1.0
        return P, offs, (r if face == "cube_top" else tr)
    raise ValueError(f"unknown face {face!r}; expected one of {FACES}")


def trace_jump(spec: MushroomSpec, u: ScalarField, face: str, k: int = 1, q: float = 1.0) -> JumpReport:
    """One-sided limit differences of ``E(u)`` across a named interface.

    Samples ``E(x + eps h d) - E(x - eps h d)`` for ``eps`` in 1e-3..1e-6
    (``h`` the local radius), extrapolates each point's jump quadratically to
    ``eps = 0`` and reports the sup and the L^q mean over the samples.
    Sample points whose two sides are not both in the ambient cylinder are
    dropped.
    """
    if face not in FACES:
        raise ValueError(f"unknown face {face!r}; expected one of {FACES}")
    ext = Extension(spec, u)
    P, D, h = _face_points(spec, face, k)
    keep = np.ones(P.shape[0], dtype=bool)
    for eps in EPSILONS:
        keep &= in_ambient(spec, P + eps * h * D) & in_ambient(spec, P - eps * h * D)
    P, D = P[keep], D[keep]
    eps = np.array(EPSILONS)
    J = np.stack([ext.value(P + e * h * D) - ext.value(P - e * h * D) for e in eps], axis=1)
    # least-squares quadratic in eps for every point; intercept is the jump
    A = np.stack([np.ones_like(eps), eps, eps**2], axis=1)
    coef, *_ = np.linalg.lstsq(A, J.T, rcond=None)
    jump = coef[0]
    absj = np.abs(jump)
    return JumpReport(
        face, k, int(P.shape[0]), float(absj.max()) if absj.size else 0.0,
        float(np.mean(absj**q) ** (1 / q)) if absj.size else 0.0, q, jump,
    )
