"""Scalar fields with piecewise-analytic gradients.

A :class:`ScalarField` evaluates batches of points ``X`` of shape (N, n).
Fields tied to a mushroom domain are defined on the closure of the
truncated domain; evaluating them elsewhere returns 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import CombSpec, MushroomSpec, RegionTag

Array = np.ndarray


def fd_gradient(f: Callable[[Array], Array], X: Array, h: float | Array) -> Array:
    """Central finite-difference gradient of a batched scalar function."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    h = np.broadcast_to(np.asarray(h, dtype=float), (X.shape[0],))
    G = np.empty_like(X)
    for j in range(X.shape[1]):
        E = np.zeros_like(X)
        E[:, j] = h
        G[:, j] = (f(X + E) - f(X - E)) / (2 * h)
    return G


def _zero_scale(tag: RegionTag) -> float:
    return 0.0


@dataclass(frozen=True)
class ScalarField:
    """Evaluable field with an optional analytic gradient.

    ``log2_scale(tag)`` is a hint for the norm engine: on that region the
    field is of order ``2**log2_scale`` and integrands are rescaled by it
    before summation.  ``fd_step`` is used when no analytic gradient exists.
    """

    name: str
    n: int
    value: Callable[[Array], Array] = field(repr=False)
    grad: Optional[Callable[[Array], Array]] = field(default=None, repr=False)
    log2_scale: Callable[[RegionTag], float] = field(default=_zero_scale, repr=False)
    fd_step: float = 1e-6
    domain: object = field(default=None, repr=False, compare=False)

    def __call__(self, X: Array) -> Array:
        return self.value(np.atleast_2d(np.asarray(X, dtype=float)))

    def gradient(self, X: Array) -> Array:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.grad is not None:
            return self.grad(X)
        return fd_gradient(self.value, X, self.fd_step)

    def scaled(self, a: float, shift: float = 0.0) -> "ScalarField":
        """The field ``a * self + shift``."""
        g = None if self.grad is None else (lambda X: a * self.grad(X))
        return ScalarField(
            f"{a:g}*{self.name}+{shift:g}", self.n, lambda X: a * self.value(X) + shift, g,
            self.log2_scale, self.fd_step, self.domain,
        )


def linear_combination(a: float, u: ScalarField, b: float, v: ScalarField) -> ScalarField:
    if u.grad is not None and v.grad is not None:
        g = lambda X: a * u.grad(X) + b * v.grad(X)
    else:
        g = None
    return ScalarField(
        f"{a:g}*{u.name}+{b:g}*{v.name}", u.n, lambda X: a * u.value(X) + b * v.value(X), g,
        domain=u.domain,
    )


# ---------------------------------------------------------------------------
# Location on the closure of a mushroom domain
# ---------------------------------------------------------------------------

_REL = 1e-9


def locate_closure(spec: MushroomSpec, X: Array) -> tuple[Array, Array]:
    """Piece of the closed domain containing each point.

    Returns codes (0 cube, 1 stem, 2 head, -1 none) and stem/head indices.
    Shared faces go to the stem, which is where the field formulas agree.
    """
    X = np.atleast_2d(X)
    xn = X[:, -1]
    code = np.full(X.shape[0], -1, dtype=np.int8)
    kk = np.zeros(X.shape[0], dtype=np.int32)
    base = np.all((X[:, :-1] >= -_REL) & (X[:, :-1] <= 1 + _REL), axis=1)
    for k in spec.ks:
        d = X[:, :-1] - spec.center(k)
        s = np.sqrt(np.einsum("ij,ij->i", d, d))
        stem = (code < 0) & (s <= spec.r[k - 1] * (1 + _REL)) & (xn >= 1 - _REL) & (xn <= 2 + _REL)
        code[stem] = 1
        kk[stem] = k
        head = (code < 0) & (s <= spec.tilde_r[k - 1] * (1 + _REL)) & (xn >= 2 - _REL) & (xn <= 3 + _REL)
        code[head] = 2
        kk[head] = k
    cube = (code < 0) & base & (xn >= -_REL) & (xn <= 1 + _REL)
    code[cube] = 0
    return code, kk


# ---------------------------------------------------------------------------
# Counterexample families
# ---------------------------------------------------------------------------


def thm53_log2_amplitude(spec: MushroomSpec, k) -> Array:
    """log2 of the head value (4^k)^{(n-1)/q}."""
    return 2.0 * np.asarray(k, dtype=float) * (spec.n - 1) / spec.q


def field_thm53(spec: MushroomSpec) -> ScalarField:
    """0 on the cube, a linear ramp on stem k, the constant (4^k)^{(n-1)/q} on head k."""

    def amp(kk):
        return np.exp2(thm53_log2_amplitude(spec, kk))

    def value(X):
        code, kk = locate_closure(spec, X)
        out = np.zeros(X.shape[0])
        stem, head = code == 1, code == 2
        out[stem] = amp(kk[stem]) * (X[stem, -1] - 1.0)
        out[head] = amp(kk[head])
        return out

    def grad(X):
        code, kk = locate_closure(spec, X)
        G = np.zeros_like(X)
        stem = code == 1
        G[stem, -1] = amp(kk[stem])
        return G

    def scale(tag: RegionTag) -> float:
        if tag.kind in ("Stem", "Head") or (tag.k is not None and tag.kind.endswith("Collar")):
            return float(thm53_log2_amplitude(spec, tag.k))
        return 0.0

    return ScalarField("thm53", spec.n, value, grad, scale, domain=spec)


def field_sec7(spec: MushroomSpec, k: int) -> ScalarField:
    """1 on head k, the ramp x_n - 1 on stem k, 0 elsewhere."""
    if not 1 <= k <= spec.m:
        raise ValueError(f"k must lie in 1..{spec.m}")

    def value(X):
        code, kk = locate_closure(spec, X)
        out = np.zeros(X.shape[0])
        mine = kk == k
        stem = mine & (code == 1)
        out[stem] = X[stem, -1] - 1.0
        out[mine & (code == 2)] = 1.0
        return out

    def grad(X):
        code, kk = locate_closure(spec, X)
        G = np.zeros_like(X)
        G[(kk == k) & (code == 1), -1] = 1.0
        return G

    return ScalarField(f"sec7:{k}", spec.n, value, grad, domain=spec)


def field_sec6(comb: CombSpec, k: int) -> ScalarField:
    """1 on the lower half of cylinder k, a ramp 0 -> 1 downward above it, 0 elsewhere."""
    if not 1 <= k <= comb.kmax:
        raise ValueError(f"k must lie in 1..{comb.kmax}")
    c = comb.center(k)
    rho = comb.radius(k)
    h = comb.height(k)

    def _in_cyl(X):
        d = X[:, :-1] - c
        s = np.sqrt(np.einsum("ij,ij->i", d, d))
        xn = X[:, -1]
        return (s <= rho * (1 + _REL)) & (xn >= -h - _REL) & (xn <= _REL)

    def value(X):
        inside = _in_cyl(X)
        xn = X[:, -1]
        ramp = np.clip(-2.0 * xn / h, 0.0, 1.0)
        return np.where(inside, ramp, 0.0)

    def grad(X):
        inside = _in_cyl(X)
        xn = X[:, -1]
        G = np.zeros_like(X)
        G[inside & (xn > -h / 2), -1] = -2.0 / h
        return G

    return ScalarField(f"sec6:{k}", comb.n, value, grad, domain=comb)


# ---------------------------------------------------------------------------
# Smooth families (defined on all of R^n)
# ---------------------------------------------------------------------------


def _weights(n: int) -> Array:
    return 1.0 / np.arange(1, n + 1)


def field_poly(n: int, degree: int) -> ScalarField:
    """(1 + sum_i x_i / i)^degree."""
    a = _weights(n)

    def value(X):
        return (1.0 + X @ a) ** degree

    def grad(X):
        if degree == 0:
            return np.zeros_like(X)
        return degree * ((1.0 + X @ a) ** (degree - 1))[:, None] * a

    return ScalarField(f"poly:{degree}", n, value, grad)


def field_trig(n: int, freq: float) -> ScalarField:
    """cos(freq * sum_i x_i / i + 1/4)."""
    a = _weights(n)

    def value(X):
        return np.cos(freq * (X @ a) + 0.25)

    def grad(X):
        return -freq * np.sin(freq * (X @ a) + 0.25)[:, None] * a

    return ScalarField(f"trig:{freq:g}", n, value, grad)


def field_const(n: int, c: float) -> ScalarField:
    return ScalarField(f"const:{c:g}", n, lambda X: np.full(X.shape[0], float(c)), lambda X: np.zeros_like(X))


def field_coordinate(n: int, i: int) -> ScalarField:
    """The coordinate function x_i (0-based index)."""

    def grad(X):
        G = np.zeros_like(X)
        G[:, i] = 1.0
        return G

    return ScalarField(f"x{i + 1}", n, lambda X: X[:, i].copy(), grad)


SMOOTH_FAMILY = ("poly:1", "poly:2", "trig:1", "trig:3", "const:1")


def field_from_name(name: str, domain=None, n: Optional[int] = None) -> ScalarField:
    """Resolve ``thm53 | sec6:k | sec7:k | poly:d | trig:w | const:c | x:i``."""
    head, _, arg = name.partition(":")
    if n is None:
        n = domain.n
    if head == "thm53":
        return field_thm53(domain)
    if head == "sec7":
        return field_sec7(domain, int(arg))
    if head == "sec6":
        return field_sec6(domain, int(arg))
    if head == "poly":
        return field_poly(n, int(arg))
    if head == "trig":
        return field_trig(n, float(arg))
    if head == "const":
        return field_const(n, float(arg))
    if head == "x":
        return field_coordinate(n, int(arg) - 1)
    raise ValueError(f"unknown field {name!r}")


def thm53_log2_head_mass(spec: MushroomSpec, k: int) -> float:
    """log2 of the q-mass of thm53 on head k: omega tr_k^{n-1} (4^k)^{n-1}."""
    from .geometry import unit_ball_volume

    n = spec.n
    return math.log2(unit_ball_volume(n - 1)) + (n - 1) * spec.log2_tilde_r[k - 1] + 2.0 * k * (n - 1)
