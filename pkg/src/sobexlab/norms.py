"""Integration engine: L^p norms, Sobolev seminorms, Poincare quotients, slices.

Regions of the mushroom ambient cylinder are integrated with rules adapted
to their shape (see :mod:`sobexlab.quadrature`) or by Monte Carlo sampling
of a bounding shape with an exact membership mask.  Every contribution is
carried as a log2 value; fields may declare a per-region log2 scale which
is divided out of the integrand before summation.

Cylindrical regions are evaluated in the local frame (radius, direction,
axial coordinate) so that collars of radius far below the float spacing
near their axis are still resolved.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from . import cutoffs
from .extension import Extension
from .fields import ScalarField
from .geometry import (
    KIND_CODES,
    SUB_CODES,
    CombSpec,
    CuspSpec,
    MushroomSpec,
    RegionTag,
    classify_many,
    collar_subregion,
    collar_subregion_offsets,
    unit_ball_volume,
    unit_sphere_area,
)
from .quadrature import (
    QuadratureSpec,
    allowed_arcs,
    box_rule,
    collar_section_offsets,
    disc_section,
    gauss_legendre,
    gl_interval,
    sphere_rule,
)


class NumericalError(RuntimeError):
    """Non-finite integrand or non-convergent rule."""


OMEGA_KINDS = ("Cube", "Stem", "Head")
COLLAR_SUBS = ("DL", "Side", "DU")


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _finite_or_none(x: float):
    return None if not math.isfinite(x) else x


@dataclass
class RegionContribution:
    region: str
    value: float
    log2_value: float
    stderr: float = 0.0

    def to_dict(self) -> dict:
        return {
            "region": self.region,
            "value": self.value,
            "log2_value": _finite_or_none(self.log2_value),
            "stderr": self.stderr,
        }


@dataclass
class NormReport:
    """Per-region integrals of ``|f|^p`` or ``|grad f|^p`` and their total."""

    integrand: str
    p: float
    method: str
    contributions: list = field(default_factory=list)

    @property
    def log2_total(self) -> float:
        if not self.contributions:
            return -math.inf
        return float(np.logaddexp2.reduce(np.array([c.log2_value for c in self.contributions])))

    @property
    def total(self) -> float:
        return float(np.exp2(self.log2_total))

    @property
    def total_stderr(self) -> float:
        return float(math.sqrt(sum(c.stderr**2 for c in self.contributions)))

    @property
    def log2_norm(self) -> float:
        return self.log2_total / self.p

    @property
    def norm(self) -> float:
        return float(np.exp2(self.log2_norm))

    def by_region(self) -> dict:
        return {c.region: c for c in self.contributions}

    def to_dict(self) -> dict:
        return {
            "integrand": self.integrand,
            "p": self.p,
            "method": self.method,
            "total": self.total,
            "log2_total": _finite_or_none(self.log2_total),
            "total_stderr": self.total_stderr,
            "norm": self.norm,
            "log2_norm": _finite_or_none(self.log2_norm),
            "regions": [c.to_dict() for c in self.contributions],
        }

    def csv_rows(self) -> list:
        return [(c.region, c.value, c.log2_value, c.stderr) for c in self.contributions]


# ---------------------------------------------------------------------------
# Region selection
# ---------------------------------------------------------------------------


def mushroom_regions(spec: MushroomSpec, which: str = "all") -> list:
    """Region tags for a selector.

    ``all`` covers the ambient cylinder (the domain plus every extension
    piece), ``omega`` the domain; also ``cube``, ``stems``, ``heads``,
    ``slab``, ``collars``, ``stem_collars``, ``head_collars``.
    """
    stems = [RegionTag("Stem", k) for k in spec.ks]
    heads = [RegionTag("Head", k) for k in spec.ks]
    sc = [RegionTag("StemCollar", k, s) for k in spec.ks for s in COLLAR_SUBS]
    hc = [RegionTag("HeadCollar", k, s) for k in spec.ks for s in COLLAR_SUBS]
    table = {
        "cube": [RegionTag("Cube")],
        "stems": stems,
        "heads": heads,
        "slab": [RegionTag("Slab")],
        "stem_collars": sc,
        "head_collars": hc,
        "collars": sc + hc,
    }
    table["omega"] = table["cube"] + stems + heads
    table["all"] = table["omega"] + table["slab"] + sc + hc
    if which not in table:
        raise ValueError(f"unknown region selector {which!r}; expected one of {sorted(table)}")
    return table[which]


def _resolve_regions(spec: Optional[MushroomSpec], regions) -> list:
    if isinstance(regions, str):
        if spec is None:
            raise ValueError("a region selector needs a mushroom spec")
        return mushroom_regions(spec, regions)
    return [RegionTag.parse(r) if isinstance(r, str) else r for r in regions]


# ---------------------------------------------------------------------------
# Nodes
# ---------------------------------------------------------------------------


@dataclass
class Nodes:
    """Cartesian points with weights.

    ``s``/``e`` give the local cylinder frame and ``off`` the exact collar
    offsets ``(d, lo, hi)`` (see :func:`collar_section_offsets`).
    """

    X: np.ndarray
    w: np.ndarray
    s: Optional[np.ndarray] = None
    e: Optional[np.ndarray] = None
    off: Optional[tuple] = None

    def select(self, keep) -> "Nodes":
        pick = lambda a: None if a is None else a[keep]
        off = None if self.off is None else tuple(a[keep] for a in self.off)
        return Nodes(self.X[keep], self.w[keep], pick(self.s), pick(self.e), off)


def _cyl_nodes(center, t_origin, s, t, w, n, n_angular, off=None) -> Nodes:
    dirs, aw = sphere_rule(n, n_angular)
    A = len(aw)
    S = np.repeat(s, A)
    E = np.tile(dirs, (s.size, 1))
    X = np.empty((S.size, n))
    X[:, :-1] = center + S[:, None] * E
    X[:, -1] = np.repeat(t_origin + t, A)
    off = None if off is None else tuple(np.repeat(a, A) for a in off)
    return Nodes(X, (w[:, None] * aw[None, :]).ravel(), S, E, off)


def _clipped_nodes(center, t_origin, s, t, w, discs, n_per_arc, off=None) -> Nodes:
    """n = 3 cylinder nodes restricted to the arcs avoiding ``discs`` and the base square."""
    xg, wg = gauss_legendre(n_per_arc)
    W, TH, idx = [], [], []
    cache: dict = {}
    for i, (si, wi) in enumerate(zip(s, w)):
        arcs = cache.get(si)
        if arcs is None:
            arcs = cache[si] = allowed_arcs(center, si, discs)
        for a, b in arcs:
            TH.append(a + (b - a) * xg)
            W.append(wi * (b - a) * wg)
            idx.append(np.full(xg.size, i))
    if not W:
        empty = None if off is None else (np.zeros(0),) * 3
        return Nodes(np.zeros((0, 3)), np.zeros(0), np.zeros(0), np.zeros((0, 2)), empty)
    W, TH, idx = (np.concatenate(v) for v in (W, TH, idx))
    S, T = s[idx], t[idx]
    E = np.stack([np.cos(TH), np.sin(TH)], axis=1)
    X = np.empty((S.size, 3))
    X[:, :2] = center + S[:, None] * E
    X[:, 2] = t_origin + T
    return Nodes(X, W, S, E, None if off is None else tuple(a[idx] for a in off))


def _head_collar_discs(spec: MushroomSpec, k: int) -> list:
    """Discs removed from head collar k: other heads and lower-index collars."""
    discs = []
    for j in spec.ks:
        if j == k:
            continue
        radius = spec.tilde_r[j - 1] * (2.0 if j < k else 1.0)
        discs.append((tuple(spec.center(j)), float(radius)))
    return discs


_NODE_CACHE: dict = {}


def _spec_key(spec: MushroomSpec):
    return (spec.n, spec.p, spec.q, spec.m, spec.z.tobytes())


def tensor_nodes(spec: MushroomSpec, tag: RegionTag, quad: QuadratureSpec) -> Nodes:
    """Deterministic quadrature nodes for one region (cached)."""
    key = (_spec_key(spec), tag, quad)
    hit = _NODE_CACHE.get(key)
    if hit is not None:
        return hit
    n = spec.n
    if tag.kind == "Cube":
        X, w = box_rule(np.zeros(n), np.ones(n), quad.n_box)
        nodes = Nodes(X, w)
    elif tag.kind in ("Stem", "Head"):
        radius = spec.r[tag.k - 1] if tag.kind == "Stem" else spec.tilde_r[tag.k - 1]
        s, t, w = disc_section(radius, 0.0, 1.0, n, quad.n_radial, quad.n_axial)
        nodes = _cyl_nodes(spec.center(tag.k), 1.0 if tag.kind == "Stem" else 2.0, s, t, w, n, quad.n_angular)
    elif tag.kind == "Slab":
        lo = np.zeros(n)
        lo[-1] = 1.0
        hi = np.ones(n)
        hi[-1] = 2.0
        X, w = box_rule(lo, hi, quad.n_box)
        parts = [Nodes(X, w)]
        for k in spec.ks:
            s, t, ws = disc_section(2 * spec.r[k - 1], 0.0, 1.0, n, quad.n_radial, quad.n_axial)
            sub = _cyl_nodes(spec.center(k), 1.0, s, t, -ws, n, quad.n_angular)
            parts.append(Nodes(sub.X, sub.w))
        nodes = Nodes(np.concatenate([p.X for p in parts]), np.concatenate([p.w for p in parts]))
    elif tag.kind == "StemCollar":
        s, t, w, *off = collar_section_offsets(spec.r[tag.k - 1], 1.0, tag.sub, n, quad)
        nodes = _cyl_nodes(spec.center(tag.k), 1.0, s, t, w, n, quad.n_angular, off)
    elif tag.kind == "HeadCollar":
        s, t, w, *off = collar_section_offsets(spec.tilde_r[tag.k - 1], 1.0, tag.sub, n, quad)
        if n == 3:
            discs = _head_collar_discs(spec, tag.k)
            nodes = _clipped_nodes(spec.center(tag.k), 2.0, s, t, w, discs, quad.n_angular, off)
        else:
            full = _cyl_nodes(spec.center(tag.k), 2.0, s, t, w, n, quad.n_angular, off)
            nodes = full.select(classify_many(spec, full.X).mask(tag))
    else:
        raise ValueError(f"no quadrature rule for region {tag}")
    _NODE_CACHE[key] = nodes
    return nodes


def _region_volume(spec: MushroomSpec, tag: RegionTag) -> float:
    """Volume of the shape sampled by the Monte Carlo engine for ``tag``."""
    n = spec.n
    omega = unit_ball_volume(n - 1)
    if tag.kind in ("Cube", "Slab"):
        return 1.0
    if tag.kind == "Stem":
        return omega * spec.r[tag.k - 1] ** (n - 1)
    if tag.kind == "Head":
        return omega * spec.tilde_r[tag.k - 1] ** (n - 1)
    rho = spec.r[tag.k - 1] if tag.kind == "StemCollar" else spec.tilde_r[tag.k - 1]
    annulus = omega * (2 ** (n - 1) - 1) * rho ** (n - 1)
    return annulus if tag.sub == "Side" else annulus * rho


def _rng(seed: int, tag: RegionTag) -> np.random.Generator:
    entropy = [int(seed), KIND_CODES[tag.kind], int(tag.k or 0), SUB_CODES.get(tag.sub, 0) if tag.sub else 0]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _unit_dirs(rng, count, d):
    v = rng.standard_normal((count, d))
    return v / np.linalg.norm(v, axis=1)[:, None]


def mc_nodes(spec: MushroomSpec, tag: RegionTag, rng, count: int) -> Nodes:
    """Uniform samples of the bounding shape; weight V/N inside the region, 0 outside."""
    n = spec.n
    V = _region_volume(spec, tag)
    if tag.kind in ("Cube", "Slab"):
        X = rng.random((count, n))
        if tag.kind == "Slab":
            X[:, -1] += 1.0
            inside = classify_many(spec, X).mask(tag)
        else:
            inside = np.ones(count, dtype=bool)
        return Nodes(X, np.where(inside, V / count, 0.0))
    k = tag.k
    center = spec.center(k)
    t0 = 1.0 if tag.kind in ("Stem", "StemCollar") else 2.0
    e = _unit_dirs(rng, count, n - 1)
    if tag.kind in ("Stem", "Head"):
        R = spec.r[k - 1] if tag.kind == "Stem" else spec.tilde_r[k - 1]
        s = R * rng.random(count) ** (1.0 / (n - 1))
        t = rng.random(count)
        inside = np.ones(count, dtype=bool)
    else:
        rho = spec.r[k - 1] if tag.kind == "StemCollar" else spec.tilde_r[k - 1]
        a = rng.random(count)
        # s = rho (1 + a (2^{n-1} - 1))^{1/(n-1)}; d = s - rho without cancellation
        d = rho * np.expm1(np.log1p(a * (2 ** (n - 1) - 1)) / (n - 1))
        s = rho + d
        u = rng.random(count)
        if tag.sub == "DL":
            lo = rho * u
            hi = 1.0 - lo
            t = lo
        elif tag.sub == "DU":
            hi = rho * u
            lo = 1.0 - hi
            t = lo
        else:
            t, lo, hi = u, u, 1.0 - u
        off = (d, lo, hi)
        inside = collar_subregion_offsets(d, lo, hi, 2 * rho) == SUB_CODES[tag.sub]
    X = np.empty((count, n))
    X[:, :-1] = center + s[:, None] * e
    X[:, -1] = t0 + t
    if tag.kind == "HeadCollar":
        inside &= classify_many(spec, X).mask(tag)
    return Nodes(X, np.where(inside, V / count, 0.0), s, e, off if tag.kind.endswith("Collar") else None)


# ---------------------------------------------------------------------------
# Integrand evaluation
# ---------------------------------------------------------------------------


def region_eval(f: ScalarField, tag: RegionTag, nodes: Nodes, grad: bool) -> np.ndarray:
    """Values (N,) or gradients (N, n) of ``f`` on region ``tag``.

    Extension fields dispatch to their region formulas; other fields are
    evaluated directly.
    """
    ext = f.domain if isinstance(f.domain, Extension) else None
    X = nodes.X
    if ext is None:
        return f.gradient(X) if grad else f(X)
    if tag.kind in OMEGA_KINDS:
        return ext.u.gradient(X) if grad else ext.u(X)
    if tag.kind == "Slab":
        return ext.slab_grad(X) if grad else ext.slab_value(X)
    if tag.kind == "StemCollar":
        return ext.stem_collar_local(tag.k, nodes.s, nodes.e, X[:, -1], grad, nodes.off)
    if tag.kind == "HeadCollar":
        return ext.head_collar_local(tag.k, nodes.s, nodes.e, X[:, -1], grad, nodes.off)
    return np.zeros_like(X) if grad else np.zeros(X.shape[0])


def _power(f, tag, nodes, integrand, p, log2_scale):
    grad = integrand == "grad"
    v = region_eval(f, tag, nodes, grad)
    mag = np.sqrt(np.sum(v**2, axis=1)) if grad else np.abs(v)
    F = (mag * 2.0 ** (-log2_scale)) ** p
    bad = ~np.isfinite(F)
    if np.any(bad & (nodes.w != 0)):
        i = int(np.nonzero(bad & (nodes.w != 0))[0][0])
        raise NumericalError(f"non-finite integrand in {tag} at {nodes.X[i].tolist()}")
    return np.where(nodes.w != 0, F, 0.0)


def _log2(x: float) -> float:
    return math.log2(x) if x > 0 else -math.inf


def _integrate_region(f, tag, integrand, p, quad, spec) -> RegionContribution:
    a = float(f.log2_scale(tag))
    if quad.method == "tensor":
        nodes = tensor_nodes(spec, tag, quad)
        total = float(np.sum(nodes.w * _power(f, tag, nodes, integrand, p, a)))
        stderr = 0.0
    else:
        rng = _rng(quad.seed, tag)
        acc, acc2, left = 0.0, 0.0, quad.samples
        while left > 0:
            c = min(left, 1 << 16)
            nodes = mc_nodes(spec, tag, rng, c)
            y = nodes.w * c * _power(f, tag, nodes, integrand, p, a)
            acc += float(np.sum(y))
            acc2 += float(np.sum(y * y))
            left -= c
        N = quad.samples
        total = acc / N
        var = max(acc2 / N - total**2, 0.0)
        # sampling cannot resolve mass fractions below 1/N (e.g. holes no sample hit)
        stderr = max(math.sqrt(var / N), abs(total) / N)
    if total < 0:
        # slab subtraction can leave rounding-level negatives for zero integrands
        total = 0.0
    lg = _log2(total) + p * a if total > 0 else -math.inf
    return RegionContribution(str(tag), float(np.exp2(lg)), lg, stderr * 2.0 ** (p * a))


def thread_count(threads: Optional[int] = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("SOBEXLAB_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def integrate(
    f: ScalarField,
    regions,
    p: float,
    integrand: str = "lp",
    quad: Optional[QuadratureSpec] = None,
    spec: Optional[MushroomSpec] = None,
    threads: Optional[int] = None,
) -> NormReport:
    """Region-wise integrals of ``|f|^p`` (``lp``) or ``|grad f|^p`` (``grad``)."""
    if integrand not in ("lp", "grad"):
        raise ValueError(f"integrand must be 'lp' or 'grad', got {integrand!r}")
    if p < 1:
        raise ValueError(f"need p >= 1, got {p}")
    quad = quad or QuadratureSpec()
    if spec is None:
        dom = f.domain.spec if isinstance(f.domain, Extension) else f.domain
        spec = dom if isinstance(dom, MushroomSpec) else None
    if spec is None:
        raise ValueError("integration over mushroom regions needs a spec")
    tags = _resolve_regions(spec, regions)
    work = lambda tag: _integrate_region(f, tag, integrand, p, quad, spec)
    nthreads = thread_count(threads)
    if nthreads == 1 or len(tags) == 1:
        parts = [work(t) for t in tags]
    else:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            parts = list(pool.map(work, tags))
    return NormReport(integrand, float(p), quad.method, parts)


def lp_norm(f, regions, p, quad=None, spec=None, threads=None) -> NormReport:
    return integrate(f, regions, p, "lp", quad, spec, threads)


def sobolev_seminorm(f, regions, p, quad=None, spec=None, threads=None) -> NormReport:
    return integrate(f, regions, p, "grad", quad, spec, threads)


def log2_sobolev_norm(f, regions, p, quad=None, spec=None, threads=None) -> float:
    """log2 of ``(int |f|^p + int |grad f|^p)^{1/p}``."""
    a = lp_norm(f, regions, p, quad, spec, threads).log2_total
    b = sobolev_seminorm(f, regions, p, quad, spec, threads).log2_total
    return float(np.logaddexp2(a, b)) / p


# ---------------------------------------------------------------------------
# Single cylinders, Monte Carlo volume
# ---------------------------------------------------------------------------


def cylinder_integral(
    f: ScalarField, center, radius: float, t0: float, t1: float, p: float, integrand: str = "lp",
    quad: Optional[QuadratureSpec] = None, breaks: Sequence[float] = (),
) -> float:
    """``int |f|^p`` or ``int |grad f|^p`` over ``B(center, radius) x (t0, t1)``.

    ``breaks`` are axial levels where the integrand has kinks.
    """
    quad = quad or QuadratureSpec()
    n = len(center) + 1
    cuts = sorted({t0, t1, *[b for b in breaks if t0 < b < t1]})
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        s, t, w = disc_section(radius, a, b, n, quad.n_radial, quad.n_axial)
        nodes = _cyl_nodes(np.asarray(center, dtype=float), 0.0, s, t, w, n, quad.n_angular)
        v = f.gradient(nodes.X) if integrand == "grad" else f(nodes.X)
        mag = np.sqrt(np.sum(v**2, axis=1)) if integrand == "grad" else np.abs(v)
        total += float(np.sum(nodes.w * mag**p))
    return total


def mc_volume(spec: MushroomSpec, samples: int, seed: int) -> tuple[float, float]:
    """Monte Carlo volume of the truncated domain and its standard error."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 99])))
    hits, left = 0, samples
    while left > 0:
        c = min(left, 1 << 17)
        X = rng.random((c, spec.n))
        X[:, -1] *= 3.0
        kind = classify_many(spec, X).kind
        hits += int(np.count_nonzero(np.isin(kind, [KIND_CODES[k] for k in OMEGA_KINDS])))
        left -= c
    frac = hits / samples
    return 3.0 * frac, 3.0 * math.sqrt(frac * (1 - frac) / samples)


# ---------------------------------------------------------------------------
# Poincare quotients
# ---------------------------------------------------------------------------


@dataclass
class PoincareReport:
    quotient: float
    numerator: float
    denominator: float
    mean: float
    volume: float
    p: float
    diameter_p: Optional[float] = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def cusp_breakpoints(cusp: CuspSpec) -> list:
    """Axial levels where the section radius changes formula."""
    lo_ball = cusp.ball_center - cusp.ball_radius
    pts = {0.0, 1.0, cusp.t_range[1]}
    if 0.0 < lo_ball < 1.0:
        pts.add(lo_ball)
        g = lambda t: float(cusp.psi(np.array([t]))[0] - cusp.ball_slice_radius(np.array([t]))[0])
        grid = np.linspace(lo_ball, 1.0, 401)
        vals = np.array([g(t) for t in grid])
        for a, b, va, vb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
            if va == 0.0:
                pts.add(float(a))
            elif va * vb < 0:
                pts.add(float(brentq(g, a, b, xtol=1e-15)))
    return sorted(pts)


def cusp_nodes(cusp: CuspSpec, quad: QuadratureSpec, subdivisions: int = 8) -> tuple[np.ndarray, np.ndarray]:
    n = cusp.n
    cuts = cusp_breakpoints(cusp)
    xr, wr = gauss_legendre(quad.n_radial)
    dirs, aw = sphere_rule(n, quad.n_angular)
    Xs, Ws = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        edges = np.linspace(a, b, subdivisions + 1)
        for c, d in zip(edges[:-1], edges[1:]):
            t, wt = gl_interval(c, d, quad.n_axial)
            R = cusp.section_radius(t)
            rho = R[:, None] * xr[None, :]
            wrho = R[:, None] * wr[None, :] * rho ** (n - 2) * wt[:, None]
            m = rho.size
            X = np.empty((m * len(aw), n))
            X[:, 0] = np.repeat(np.repeat(t, quad.n_radial), len(aw))
            X[:, 1:] = (rho.ravel()[:, None, None] * dirs[None, :, :]).reshape(-1, n - 1)
            Xs.append(X)
            Ws.append((wrho.ravel()[:, None] * aw[None, :]).ravel())
    return np.concatenate(Xs), np.concatenate(Ws)


def _domain_nodes(domain, quad: QuadratureSpec, n: int):
    if isinstance(domain, str) and domain == "cube":
        return box_rule(np.zeros(n), np.ones(n), quad.n_box)
    if isinstance(domain, CuspSpec):
        return cusp_nodes(domain, quad)
    if isinstance(domain, MushroomSpec):
        parts = [tensor_nodes(domain, t, quad) for t in mushroom_regions(domain, "omega")]
        return np.concatenate([p.X for p in parts]), np.concatenate([p.w for p in parts])
    raise ValueError(f"unsupported domain {domain!r}")


def poincare_quotient(domain, f: ScalarField, p: float, quad: Optional[QuadratureSpec] = None) -> PoincareReport:
    """``int |f - mean|^p / int |grad f|^p`` over a domain.

    ``domain`` is ``"cube"`` for the unit cube, a cusp spec or a
    mushroom spec (integrating over the truncated domain).
    """
    quad = quad or QuadratureSpec()
    X, w = _domain_nodes(domain, quad, f.n)
    vol = float(np.sum(w))
    vals = f(X)
    mean = float(np.sum(w * vals) / vol)
    num = float(np.sum(w * np.abs(vals - mean) ** p))
    G = f.gradient(X)
    den = float(np.sum(w * np.sqrt(np.sum(G**2, axis=1)) ** p))
    if not den > 0:
        raise NumericalError("gradient integral vanishes; the quotient is undefined")
    diam_p = domain.diameter() ** p if isinstance(domain, CuspSpec) else None
    return PoincareReport(num / den, num, den, mean, vol, float(p), diam_p)


# ---------------------------------------------------------------------------
# Hyperplane slices
# ---------------------------------------------------------------------------


def _annulus_pieces(rho: float, t_loc: float):
    """Radial breakpoints of the collar sub-regions at normalized height t_loc."""
    edge = min(t_loc, 1.0 - t_loc)
    cuts = [rho, 2 * rho]
    if edge < rho:
        cuts.insert(1, 2 * rho - edge)
    return list(zip(cuts[:-1], cuts[1:]))


def _slice_disc(center, level, r0, r1, n, quad, discs=None) -> Nodes:
    """(n-1)-dimensional rule on the annulus r0 < s < r1 at height ``level``."""
    s, ws = gl_interval(r0, r1, quad.n_radial)
    w = ws * s ** (n - 2)
    t = np.zeros_like(s)
    if discs is not None:
        return _clipped_nodes(center, level, s, t, w, discs, quad.n_angular)
    return _cyl_nodes(center, level, s, t, w, n, quad.n_angular)


def _slice_box(lo, hi, level, quad) -> Nodes:
    Y, w = box_rule(lo, hi, quad.n_box)
    X = np.concatenate([Y, np.full((Y.shape[0], 1), level)], axis=1)
    return Nodes(X, w)


def plane_pieces(spec: MushroomSpec, t: float, quad: QuadratureSpec) -> list:
    """(tag, nodes) pairs covering the slice ``x_n = t`` of the ambient cylinder."""
    n = spec.n
    if not 0 < t < 3:
        raise ValueError(f"slice x_n = {t} misses the ambient cylinder (0, 3)")
    base_lo, base_hi = np.zeros(n - 1), np.ones(n - 1)
    if t < 1:
        return [(RegionTag("Cube"), _slice_box(base_lo, base_hi, t, quad))]
    pieces = []
    if t <= 2:
        slab = _slice_box(base_lo, base_hi, t, quad)
        extra_X, extra_w = [slab.X], [slab.w]
        for k in spec.ks:
            rho, c = spec.r[k - 1], spec.center(k)
            pieces.append((RegionTag("Stem", k), _slice_disc(c, t, 0.0, rho, n, quad)))
            t_loc = t - 1.0
            for a, b in _annulus_pieces(rho, t_loc):
                nodes = _slice_disc(c, t, a, b, n, quad)
                sub = collar_subregion(np.array([0.5 * (a + b)]), np.array([t_loc]), 2 * rho)[0]
                pieces.append((RegionTag("StemCollar", k, ("Side", "DL", "DU")[sub]), nodes))
            hole = _slice_disc(c, t, 0.0, 2 * rho, n, quad)
            extra_X.append(hole.X)
            extra_w.append(-hole.w)
        pieces.append((RegionTag("Slab"), Nodes(np.concatenate(extra_X), np.concatenate(extra_w))))
        return pieces
    for k in spec.ks:
        rho, c = spec.tilde_r[k - 1], spec.center(k)
        pieces.append((RegionTag("Head", k), _slice_disc(c, t, 0.0, rho, n, quad)))
        t_loc = t - 2.0
        for a, b in _annulus_pieces(rho, t_loc):
            sub = collar_subregion(np.array([0.5 * (a + b)]), np.array([t_loc]), 2 * rho)[0]
            tag = RegionTag("HeadCollar", k, ("Side", "DL", "DU")[sub])
            if n == 3:
                nodes = _slice_disc(c, t, a, b, n, quad, discs=_head_collar_discs(spec, k))
            else:
                full = _slice_disc(c, t, a, b, n, quad)
                keep = classify_many(spec, full.X).mask(tag)
                nodes = full.select(keep)
            pieces.append((tag, nodes))
    return pieces


def plane_seminorm(f: ScalarField, t: float, q: float, quad: Optional[QuadratureSpec] = None, domain=None) -> float:
    """``int_{x_n = t} |grad f|^q`` over the slice of the ambient cylinder or comb.

    ``domain`` defaults to the field's domain (a mushroom spec, an
    extension or a comb spec).
    """
    quad = quad or QuadratureSpec()
    domain = domain if domain is not None else f.domain
    if isinstance(domain, Extension):
        domain = domain.spec
    if isinstance(domain, CombSpec):
        return _comb_plane(f, domain, t, q, quad)
    if not isinstance(domain, MushroomSpec):
        raise ValueError("plane_seminorm needs a mushroom or comb domain")
    total = 0.0
    for tag, nodes in plane_pieces(domain, t, quad):
        G = region_eval(f, tag, nodes, grad=True)
        total += float(np.sum(nodes.w * np.sqrt(np.sum(G**2, axis=1)) ** q))
    return max(total, 0.0)


def _comb_plane(f, comb: CombSpec, t, q, quad) -> float:
    n = comb.n
    total = 0.0
    hit = False
    if 0 < t < 1:
        lo, hi = np.zeros(n - 1), np.ones(n - 1)
        hi[0] = 20.0
        nodes = _slice_box(lo, hi, t, quad)
        G = f.gradient(nodes.X)
        total += float(np.sum(nodes.w * np.sqrt(np.sum(G**2, axis=1)) ** q))
        hit = True
    for k in comb.ks:
        if -comb.height(k) < t <= 0:
            nodes = _slice_disc(comb.center(k), t, 0.0, comb.radius(k), n, quad)
            G = f.gradient(nodes.X)
            total += float(np.sum(nodes.w * np.sqrt(np.sum(G**2, axis=1)) ** q))
            hit = True
    if not hit:
        raise ValueError(f"slice x_n = {t} misses the comb domain")
    return total


def plane_seminorm_mc(
    f: ScalarField, spec: MushroomSpec, t: float, q: float, samples: int, seed: int,
) -> tuple[float, float]:
    """Monte Carlo slice integral over the base square; (value, stderr)."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 7, int(round(t * 1e6))])))
    Y = rng.random((samples, spec.n - 1))
    X = np.concatenate([Y, np.full((samples, 1), t)], axis=1)
    G = f.gradient(X)
    y = np.sqrt(np.sum(G**2, axis=1)) ** q
    return float(y.mean()), float(y.std() / math.sqrt(samples))


# ---------------------------------------------------------------------------
# Geometric series
# ---------------------------------------------------------------------------


def series_tail(alpha: float, k0: int = 1) -> tuple[bool, float]:
    """``sum_{k >= k0} 2^{-alpha k}``: (convergent, closed-form sum).

    ``alpha <= 0`` is divergent (sum reported as inf).
    """
    if alpha <= 0:
        return False, math.inf
    return True, 2.0 ** (-alpha * k0) / -math.expm1(-alpha * math.log(2.0))


def log2_series_tail(alpha: float, k0: int = 1) -> float:
    if alpha <= 0:
        return math.inf
    return -alpha * k0 - math.log2(-math.expm1(-alpha * math.log(2.0)))


# ---------------------------------------------------------------------------
# Cut-off weight integrals
# ---------------------------------------------------------------------------


def cutoff_power_integral(rho: float, beta: float, sub: Optional[str], n: int, quad: Optional[QuadratureSpec] = None) -> float:
    """log2 of ``int |grad L^i|^beta`` over a collar piece of inner radius rho, unit height."""
    quad = quad or QuadratureSpec()
    s, t, w, *off = collar_section_offsets(rho, 1.0, sub, n, quad)
    ds, dx = cutoffs.local_grad_Li(s, t, 2 * rho, off)
    g = np.sqrt(ds**2 + dx**2) * rho
    total = float(np.sum(w * g**beta)) * unit_sphere_area(n - 2)
    return _log2(total) - beta * math.log2(rho)
