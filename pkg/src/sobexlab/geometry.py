"""Domain constructions: mushroom domains, the comb domain and cuspidal domains.

All domains are exposed as exact membership predicates.  Points are handled
in batches of shape ``(N, n)``; scalar helpers wrap the batched versions.

Radii of the mushroom construction decay like ``2**(-11 k)`` for typical
parameters, so every radius and measure is carried in log2 form as well.
A linear value that underflows to 0.0 is expected and harmless; the log2
value is authoritative.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

# region kind codes used by the batched classifier
OUTSIDE, CUBE, STEM, HEAD, STEM_COLLAR, HEAD_COLLAR, SLAB = range(7)
KIND_NAMES = ("Outside", "Cube", "Stem", "Head", "StemCollar", "HeadCollar", "Slab")
KIND_CODES = {name: code for code, name in enumerate(KIND_NAMES)}

# collar sub-region codes
SIDE, DL, DU = 0, 1, 2
SUB_NAMES = ("Side", "DL", "DU")
SUB_CODES = {name: code for code, name in enumerate(SUB_NAMES)}

# comb kind codes
COMB_OUTSIDE, COMB_BOX, COMB_CYL, COMB_HALFCYL = range(4)
COMB_KIND_NAMES = ("Outside", "Box", "Cyl", "HalfCyl")


class GeometryError(ValueError):
    """Raised for invalid domain parameters."""


def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in R^d."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def unit_sphere_area(d: int) -> float:
    """Surface area of the unit sphere S^d in R^{d+1}."""
    return 2 * math.pi ** ((d + 1) / 2) / math.gamma((d + 1) / 2)


def conjugate_exponent(q: float, d: int) -> float:
    """Sobolev conjugate ``d q / (d - q)`` (``inf`` when ``q >= d``)."""
    if q >= d:
        return math.inf
    return d * q / (d - q)


def threshold_p(n: int, q: float) -> float:
    """The critical exponent ``(n-1) q / (n-1-q)`` of the mushroom construction."""
    return conjugate_exponent(q, n - 1)


# ---------------------------------------------------------------------------
# Region tags
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegionTag:
    kind: str
    k: Optional[int] = None
    sub: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ValueError(f"unknown region kind {self.kind!r}")
        if self.kind in ("Stem", "Head", "StemCollar", "HeadCollar") and self.k is None:
            raise ValueError(f"{self.kind} needs an index k")
        if self.kind in ("StemCollar", "HeadCollar") and self.sub not in SUB_CODES:
            raise ValueError(f"{self.kind} needs sub in {SUB_NAMES}")

    def __str__(self) -> str:
        if self.k is None:
            return self.kind
        if self.sub is None:
            return f"{self.kind}({self.k})"
        return f"{self.kind}({self.k},{self.sub})"

    @classmethod
    def parse(cls, text: str) -> "RegionTag":
        text = text.strip()
        if "(" not in text:
            return cls(text)
        kind, rest = text.split("(", 1)
        args = [a.strip() for a in rest.rstrip(")").split(",")]
        k = int(args[0])
        sub = args[1] if len(args) > 1 else None
        return cls(kind, k, sub)


# ---------------------------------------------------------------------------
# Mushroom domain
# ---------------------------------------------------------------------------


def diagonal_corner_centers(n: int, m: int) -> np.ndarray:
    """Centers z_1..z_m of the dyadic placement.

    At stage k the parent cube has low corner ``1 - 2**-(k-1)`` and side
    ``2**-(k-1)``; the head cube is its low-corner child and the next parent
    is the diagonally opposite child.
    """
    k = np.arange(1, m + 1, dtype=float)
    coord = 1.0 - np.exp2(-(k - 1)) + np.exp2(-(k + 1))
    return np.repeat(coord[:, None], n - 1, axis=1)


@dataclass(frozen=True)
class MushroomSpec:
    """Truncated mushroom domain: unit cube, m stems and m heads.

    Stem k is the closed cylinder ``B(z_k, r_k) x [1, 2]`` and head k the open
    cylinder ``B(z_k, tr_k) x (2, 3)`` with ``tr_k = 2**-(k+1)`` and
    ``r_k = 4**(-k (1/(n-1) + p/q))``.
    """

    n: int
    p: float
    q: float
    m: int
    z: np.ndarray = field(repr=False, compare=False)
    log2_tilde_r: np.ndarray = field(repr=False, compare=False)
    log2_r: np.ndarray = field(repr=False, compare=False)
    placement: str = "diagonal"

    @property
    def strict_regime(self) -> bool:
        return self.p > threshold_p(self.n, self.q)

    @property
    def tilde_r(self) -> np.ndarray:
        return np.exp2(self.log2_tilde_r)

    @property
    def r(self) -> np.ndarray:
        return np.exp2(self.log2_r)

    @property
    def ks(self) -> range:
        return range(1, self.m + 1)

    def center(self, k: int) -> np.ndarray:
        return self.z[k - 1]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "q": self.q,
            "m": self.m,
            "placement": self.placement,
            "derived": {
                "z": self.z.tolist(),
                "log2_tilde_r": self.log2_tilde_r.tolist(),
                "log2_r": self.log2_r.tolist(),
                "strict_regime": self.strict_regime,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MushroomSpec":
        centers = None
        if data.get("placement", "diagonal") != "diagonal":
            centers = np.asarray(data["derived"]["z"], dtype=float)
        return build_mushroom(data["n"], data["p"], data["q"], data["m"], centers=centers)


def build_mushroom(n: int, p: float, q: float, m: int, centers: Optional[np.ndarray] = None) -> MushroomSpec:
    """Build the truncated mushroom domain Omega^m_{p,q}.

    ``centers`` overrides the diagonal-corner placement (used to exercise
    :func:`validate_placement`).  A warning is issued when ``p`` is at or
    below the critical exponent: the domain is still constructible.
    """
    if int(n) != n or n < 3:
        raise GeometryError(f"n must be an integer >= 3, got {n}")
    if not (1 <= q < n - 1):
        raise GeometryError(f"need 1 <= q < n-1, got q={q}, n={n}")
    if not p > q:
        raise GeometryError(f"need p > q, got p={p}, q={q}")
    if int(m) != m or m < 1:
        raise GeometryError(f"m must be a positive integer, got {m}")
    n, m = int(n), int(m)
    k = np.arange(1, m + 1, dtype=float)
    log2_tilde_r = -(k + 1)
    log2_r = -2.0 * k * (1.0 / (n - 1) + p / q)
    placement = "diagonal"
    if centers is None:
        z = diagonal_corner_centers(n, m)
    else:
        z = np.array(centers, dtype=float).reshape(m, n - 1)
        placement = "custom"
    z.setflags(write=False)
    spec = MushroomSpec(n, float(p), float(q), m, z, log2_tilde_r, log2_r, placement)
    if not spec.strict_regime:
        warnings.warn(
            f"p={p} <= (n-1)q/(n-1-q)={threshold_p(n, q):.6g}: outside the bounded-extension regime",
            stacklevel=2,
        )
    return spec


def _radial(X: np.ndarray, center: np.ndarray) -> np.ndarray:
    d = X[:, :-1] - center
    return np.sqrt(np.einsum("ij,ij->i", d, d))


def collar_subregion(s: np.ndarray, xn: np.ndarray, r: float) -> np.ndarray:
    """Sub-region codes (Side/DL/DU) in the normalized collar frame.

    ``r`` is the outer collar radius; the inner radius is ``r/2`` and the
    axial coordinate ``xn`` runs over [0, 1].  Cone interfaces go to Side.
    """
    return collar_subregion_offsets(s - r / 2, xn, 1 - xn, r)


def collar_subregion_offsets(d: np.ndarray, lo: np.ndarray, hi: np.ndarray, r: float) -> np.ndarray:
    """Sub-region codes from the offsets to the inner wall, bottom and top."""
    d, lo, hi = np.broadcast_arrays(np.asarray(d, dtype=float), np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    sub = np.full(d.shape, SIDE, dtype=np.int8)
    sub[(lo < r / 2) & (d + lo < r / 2)] = DL
    sub[(hi < r / 2) & (d + hi < r / 2)] = DU
    return sub


@dataclass
class Classification:
    kind: np.ndarray
    k: np.ndarray
    sub: np.ndarray

    def tag(self, i: int) -> RegionTag:
        kind = KIND_NAMES[self.kind[i]]
        if kind in ("Stem", "Head"):
            return RegionTag(kind, int(self.k[i]))
        if kind in ("StemCollar", "HeadCollar"):
            return RegionTag(kind, int(self.k[i]), SUB_NAMES[self.sub[i]])
        return RegionTag(kind)

    def mask(self, tag: RegionTag) -> np.ndarray:
        out = self.kind == KIND_CODES[tag.kind]
        if tag.k is not None:
            out &= self.k == tag.k
        if tag.sub is not None:
            out &= self.sub == SUB_CODES[tag.sub]
        return out


def in_ambient(spec: MushroomSpec, X: np.ndarray) -> np.ndarray:
    """Membership in the closed-base ambient cylinder ``[0,1]^{n-1} x (0,3)``."""
    X = np.atleast_2d(X)
    base = np.all((X[:, :-1] >= 0) & (X[:, :-1] <= 1), axis=1)
    return base & (X[:, -1] > 0) & (X[:, -1] < 3)


def classify_many(spec: MushroomSpec, X: np.ndarray) -> Classification:
    """Batched region classification.

    Precedence: Omega pieces (cube, stems, heads) > head collars > stem
    collars > slab > outside.  Among overlapping head collars the lowest
    index wins.  Points outside the ambient cylinder are Outside.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N = X.shape[0]
    kind = np.full(N, OUTSIDE, dtype=np.int8)
    kk = np.zeros(N, dtype=np.int32)
    sub = np.zeros(N, dtype=np.int8)
    amb = in_ambient(spec, X)
    xn = X[:, -1]
    open_base = np.all((X[:, :-1] > 0) & (X[:, :-1] < 1), axis=1)
    free = amb.copy()

    cube = free & open_base & (xn < 1)
    kind[cube] = CUBE
    free &= ~cube

    tr, r = spec.tilde_r, spec.r
    s_all = [_radial(X, spec.center(k)) for k in spec.ks]

    for k in spec.ks:
        s = s_all[k - 1]
        stem = free & (s < r[k - 1]) & (xn >= 1) & (xn <= 2)
        kind[stem] = STEM
        kk[stem] = k
        free &= ~stem
    for k in spec.ks:
        s = s_all[k - 1]
        head = free & (s < tr[k - 1]) & (xn > 2)
        kind[head] = HEAD
        kk[head] = k
        free &= ~head
    for k in spec.ks:
        s = s_all[k - 1]
        rho = tr[k - 1]
        hc = free & (s >= rho) & (s <= 2 * rho) & (xn >= 2)
        kind[hc] = HEAD_COLLAR
        kk[hc] = k
        sub[hc] = collar_subregion(s[hc], xn[hc] - 2, 2 * rho)
        free &= ~hc
    for k in spec.ks:
        s = s_all[k - 1]
        rho = r[k - 1]
        sc = free & (s >= rho) & (s <= 2 * rho) & (xn >= 1) & (xn <= 2)
        kind[sc] = STEM_COLLAR
        kk[sc] = k
        sub[sc] = collar_subregion(s[sc], xn[sc] - 1, 2 * rho)
        free &= ~sc
    slab = free & (xn >= 1) & (xn <= 2)
    kind[slab] = SLAB
    return Classification(kind, kk, sub)


def classify(spec: MushroomSpec, x: Sequence[float]) -> RegionTag:
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.n,):
        raise ValueError(f"point must have {spec.n} coordinates")
    return classify_many(spec, x[None, :]).tag(0)


def in_omega(spec: MushroomSpec, X: np.ndarray) -> np.ndarray:
    kind = classify_many(spec, X).kind
    return (kind == CUBE) | (kind == STEM) | (kind == HEAD)


# ---------------------------------------------------------------------------
# Placement validation
# ---------------------------------------------------------------------------


@dataclass
class Violation:
    check: str
    k: int
    k2: Optional[int] = None

    def __str__(self) -> str:
        return f"{self.check}: k={self.k}" + (f", k'={self.k2}" if self.k2 is not None else "")


@dataclass
class PlacementReport:
    checks: dict
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations

    def first(self) -> Optional[Violation]:
        return self.violations[0] if self.violations else None

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "checks": self.checks,
            "violations": [str(v) for v in self.violations],
        }


def _pairwise_overlaps(z: np.ndarray, radii: np.ndarray, name: str) -> list:
    out = []
    m = len(radii)
    for i in range(m):
        dist = np.sqrt(np.sum((z[i + 1 :] - z[i]) ** 2, axis=1))
        bad = np.nonzero(dist < radii[i] + radii[i + 1 :])[0]
        out.extend(Violation(name, i + 1, i + 2 + j) for j in bad)
    return out


def validate_placement(spec: MushroomSpec) -> PlacementReport:
    """Check disjointness and containment of the doubled cylinders.

    (i) doubled head discs pairwise disjoint, (ii) doubled stem discs
    pairwise disjoint (equivalently the piston domains), (iii) every doubled
    disc inside the open base square.  Never raises.
    """
    z = spec.z
    head2 = 2 * spec.tilde_r
    stem2 = 2 * spec.r
    groups = {
        "head_disjoint": _pairwise_overlaps(z, head2, "head_disjoint"),
        "stem_disjoint": _pairwise_overlaps(z, stem2, "stem_disjoint"),
    }
    for name, radii in (("head_contained", head2), ("stem_contained", stem2)):
        inside = np.all((z - radii[:, None] > 0) & (z + radii[:, None] < 1), axis=1)
        groups[name] = [Violation(name, int(k) + 1) for k in np.nonzero(~inside)[0]]
    violations = [v for g in groups.values() for v in g]
    checks = {name: not g for name, g in groups.items()}
    return PlacementReport(checks, violations)


# ---------------------------------------------------------------------------
# Closed-form measures
# ---------------------------------------------------------------------------


def _corner_triangle_factor(n: int) -> float:
    """int_0^1 (1+a)^{n-2} (1-a) da, the scaled cross-section of D^L/D^U."""
    j = n - 2
    return 2 * (2 ** (j + 1) - 1) / (j + 1) - (2 ** (j + 2) - 1) / (j + 2)


def collar_log2_measure(n: int, log2_rho: float, sub: Optional[str]) -> float:
    """log2 volume of a collar piece with inner radius rho and unit height."""
    omega = unit_ball_volume(n - 1)
    full = math.log2(omega * (2 ** (n - 1) - 1)) + (n - 1) * log2_rho
    if sub is None:
        return full
    corner = math.log2(unit_sphere_area(n - 2) * _corner_triangle_factor(n)) + n * log2_rho
    if sub in ("DL", "DU"):
        return corner
    return full + math.log2(-math.expm1(math.log(2.0) * (corner + 1 - full)))


def region_log2_measure(spec: MushroomSpec, tag: RegionTag) -> float:
    """log2 of the n-volume of a nominal region (cylinder shapes, unclipped)."""
    n = spec.n
    omega = unit_ball_volume(n - 1)
    if tag.kind == "Cube":
        return 0.0
    if tag.kind == "Stem":
        return math.log2(omega) + (n - 1) * spec.log2_r[tag.k - 1]
    if tag.kind == "Head":
        return math.log2(omega) + (n - 1) * spec.log2_tilde_r[tag.k - 1]
    if tag.kind == "StemCollar":
        return collar_log2_measure(n, spec.log2_r[tag.k - 1], tag.sub)
    if tag.kind == "HeadCollar":
        return collar_log2_measure(n, spec.log2_tilde_r[tag.k - 1], tag.sub)
    if tag.kind == "Slab":
        removed = omega * float(np.sum(np.exp2((n - 1) * (spec.log2_r + 1))))
        return math.log2(1.0 - removed)
    raise GeometryError(f"no measure for region {tag}")


def region_measure(spec: MushroomSpec, tag: RegionTag) -> tuple[float, float]:
    """(linear, log2) volume of a region.

    HeadCollar measures are those of the nominal annulus; overlaps with
    neighbouring heads (reported by :func:`validate_placement`) are not
    subtracted.
    """
    lg = region_log2_measure(spec, tag)
    return float(np.exp2(lg)), lg


def omega_log2_measure(spec: MushroomSpec) -> float:
    terms = [0.0]
    for k in spec.ks:
        terms.append(region_log2_measure(spec, RegionTag("Stem", k)))
        terms.append(region_log2_measure(spec, RegionTag("Head", k)))
    return float(np.logaddexp2.reduce(np.array(terms)))


# ---------------------------------------------------------------------------
# Comb domain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CombSpec:
    """Box ``[0,20] x [0,1]^{n-1}`` with cylinders hanging below its bottom face.

    Cylinder k has axis through ``z_k`` (on the edge ``x_2 = 0``), radius
    ``2**-(k+1)`` and spans ``x_n in [-h_k, 0]``; its lower half is the
    half-cylinder.  ``h_k = 1`` unless ``aspect_shrink`` is set.
    """

    n: int
    kmax: int
    aspect_shrink: bool = False

    def center(self, k: int) -> np.ndarray:
        z = np.zeros(self.n - 1)
        z[0] = 1.0 + 30.0 * (0.5 - 2.0 ** (-k)) if k >= 2 else 1.0
        return z

    def radius(self, k: int) -> float:
        return 2.0 ** (-k - 1)

    def log2_radius(self, k: int) -> float:
        return -(k + 1.0)

    def height(self, k: int) -> float:
        return 2.0 ** (-k / 2) if self.aspect_shrink else 1.0

    @property
    def ks(self) -> range:
        return range(1, self.kmax + 1)


def build_comb(n: int, kmax: int, aspect_shrink: bool = False) -> CombSpec:
    if int(n) != n or n < 3:
        raise GeometryError(f"n must be an integer >= 3, got {n}")
    if int(kmax) != kmax or kmax < 1:
        raise GeometryError(f"kmax must be >= 1, got {kmax}")
    return CombSpec(int(n), int(kmax), bool(aspect_shrink))


def comb_classify_many(comb: CombSpec, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (kind codes, k) for points of the comb domain."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N = X.shape[0]
    kind = np.full(N, COMB_OUTSIDE, dtype=np.int8)
    kk = np.zeros(N, dtype=np.int32)
    xn = X[:, -1]
    box = (X[:, 0] > 0) & (X[:, 0] < 20) & (xn > 0) & (xn < 1)
    if comb.n > 2:
        box &= np.all((X[:, 1:-1] > 0) & (X[:, 1:-1] < 1), axis=1)
    kind[box] = COMB_BOX
    free = ~box
    for k in comb.ks:
        s = _radial(X, comb.center(k))
        h = comb.height(k)
        inside = free & (s < comb.radius(k)) & (xn > -h) & (xn <= 0)
        half = inside & (xn <= -h / 2)
        kind[inside] = COMB_CYL
        kind[half] = COMB_HALFCYL
        kk[inside] = k
        free &= ~inside
    return kind, kk


def comb_classify(comb: CombSpec, x: Sequence[float]) -> tuple[str, Optional[int]]:
    kind, k = comb_classify_many(comb, np.asarray(x, dtype=float)[None, :])
    name = COMB_KIND_NAMES[kind[0]]
    return name, (int(k[0]) if kind[0] in (COMB_CYL, COMB_HALFCYL) else None)


# ---------------------------------------------------------------------------
# Cuspidal domain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CuspSpec:
    """Outward cusp ``{(t, z): 0 < t < 1, |z| < psi(t)}`` joined to a ball.

    The cusp axis is the first coordinate.
    """

    n: int
    psi: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    label: str = "custom"
    power: Optional[float] = None
    ball_center: float = 2.0
    ball_radius: float = math.sqrt(2.0)

    def ball_slice_radius(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        r2 = self.ball_radius**2 - (t - self.ball_center) ** 2
        return np.sqrt(np.clip(r2, 0.0, None))

    def section_radius(self, t: np.ndarray) -> np.ndarray:
        """Radius of the cross-section of the domain at axial position t."""
        t = np.asarray(t, dtype=float)
        cusp = np.where((t > 0) & (t < 1), self.psi(np.clip(t, 0, 1)), 0.0)
        return np.maximum(cusp, self.ball_slice_radius(t))

    @property
    def t_range(self) -> tuple[float, float]:
        return 0.0, self.ball_center + self.ball_radius

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        t = X[:, 0]
        zz = np.sqrt(np.sum(X[:, 1:] ** 2, axis=1))
        cusp = (t > 0) & (t < 1) & (zz < self.psi(np.clip(t, 0, 1)))
        c = np.zeros(self.n)
        c[0] = self.ball_center
        ball = np.sum((X - c) ** 2, axis=1) < self.ball_radius**2
        return cusp | ball

    def diameter(self, samples: int = 4001) -> float:
        """Diameter of the closure: max of the ball diameter and cusp-to-ball spans."""
        t = np.linspace(0.0, 1.0, samples)
        rad = self.psi(t)
        far = np.sqrt((self.ball_center - t) ** 2 + rad**2) + self.ball_radius
        # cusp-to-cusp distances never exceed those to the far side of the ball
        return float(max(2 * self.ball_radius, far.max()))


def power_profile(s: float) -> Callable[[np.ndarray], np.ndarray]:
    if s < 1:
        raise GeometryError(f"power profile needs s >= 1, got {s}")
    return lambda t: np.asarray(t, dtype=float) ** s


def tabulated_profile(t_grid: Sequence[float], values: Sequence[float]) -> Callable[[np.ndarray], np.ndarray]:
    """Piecewise-linear profile through tabulated values (validated on the grid)."""
    t_grid = np.asarray(t_grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if t_grid.ndim != 1 or t_grid.shape != values.shape or len(t_grid) < 2:
        raise GeometryError("tabulated profile needs matching 1-d grids")
    if np.any(np.diff(t_grid) <= 0):
        raise GeometryError("profile grid must be strictly increasing")
    if t_grid[0] != 0.0 or not np.isclose(values[0], 0.0):
        raise GeometryError("profile must satisfy psi(0) = 0")
    if np.any(np.diff(values) < 0):
        raise GeometryError("profile must be nondecreasing")
    if not np.isclose(np.interp(1.0, t_grid, values), 1.0):
        raise GeometryError("profile must satisfy psi(1) = 1")
    return lambda t: np.interp(np.asarray(t, dtype=float), t_grid, values)


def build_cusp(n: int, psi) -> CuspSpec:
    """Build the cuspidal domain for ``psi`` (a power ``s`` or a callable).

    Callables are checked on a grid for psi(0)=0, psi(1)=1 and monotonicity.
    """
    if int(n) != n or n < 2:
        raise GeometryError(f"n must be an integer >= 2, got {n}")
    if isinstance(psi, (int, float)):
        return CuspSpec(int(n), power_profile(float(psi)), label=f"power:{float(psi):g}", power=float(psi))
    grid = np.linspace(0.0, 1.0, 1001)
    vals = np.asarray(psi(grid), dtype=float)
    if not np.isclose(vals[0], 0.0) or not np.isclose(vals[-1], 1.0):
        raise GeometryError("profile must satisfy psi(0)=0 and psi(1)=1")
    if np.any(np.diff(vals) < -1e-12):
        raise GeometryError("profile must be nondecreasing")
    return CuspSpec(int(n), psi)
