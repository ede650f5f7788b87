"""Rate tables and boundedness sweeps built on the integration engine.

All comparisons with unknown constants are made through exponents: slopes
of log2 quantities in k, or signs of closed-form exponents.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .extension import extend
from .fields import (
    SMOOTH_FAMILY,
    field_from_name,
    field_sec6,
    field_sec7,
    field_thm53,
    thm53_log2_head_mass,
)
from .geometry import (
    CombSpec,
    MushroomSpec,
    RegionTag,
    build_mushroom,
    collar_log2_measure,
    conjugate_exponent,
    threshold_p,
    unit_ball_volume,
    unit_sphere_area,
    _corner_triangle_factor,
)
from .norms import (
    cutoff_power_integral,
    cylinder_integral,
    log2_series_tail,
    log2_sobolev_norm,
    lp_norm,
    plane_seminorm,
    series_tail,
    sobolev_seminorm,
)
from .quadrature import QuadratureSpec


class ExperimentError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------


def _num(x):
    if x is None:
        return None
    return None if not math.isfinite(x) else float(x)


@dataclass
class RateRow:
    k: int
    quantity: str
    analytic_log2: Optional[float] = None
    quad_log2: Optional[float] = None
    formula_log2: Optional[float] = None
    stderr: float = 0.0

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "quantity": self.quantity,
            "analytic_log2": _num(self.analytic_log2),
            "quad_log2": _num(self.quad_log2),
            "formula_log2": _num(self.formula_log2),
            "stderr": self.stderr,
        }


@dataclass
class RateTable:
    name: str
    rows: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add(self, *args, **kw) -> RateRow:
        row = RateRow(*args, **kw)
        self.rows.append(row)
        return row

    def series(self, quantity: str, column: str = "quad_log2") -> list:
        return [(r.k, getattr(r, column)) for r in self.rows if r.quantity == quantity]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "meta": self.meta,
            "fits": self.fits,
            "verdicts": self.verdicts,
            "rows": [r.to_dict() for r in self.rows],
        }

    def csv_rows(self) -> list:
        return [
            (r.k, r.quantity, _num(r.analytic_log2), _num(r.quad_log2), _num(r.formula_log2), r.stderr)
            for r in self.rows
        ]


CSV_HEADER = ("k", "quantity", "analytic_log2", "quad_log2", "formula_log2", "stderr")


def fit_exponent(rows: Sequence[tuple], window: Optional[tuple] = None) -> tuple[float, float]:
    """Least-squares slope of ``(k, log2 value)`` rows; residual is the max deviation."""
    pts = [(k, v) for k, v in rows if window is None or window[0] <= k <= window[1]]
    if len(pts) < 3:
        raise ExperimentError("fit_exponent needs at least 3 rows in the window")
    k = np.array([p[0] for p in pts], dtype=float)
    v = np.array([p[1] for p in pts], dtype=float)
    if np.ptp(k) == 0:
        raise ExperimentError("fit_exponent needs distinct k values")
    slope, icpt = np.polyfit(k, v, 1)
    resid = float(np.max(np.abs(v - (slope * k + icpt))))
    return float(slope), resid


def _record_fit(table: RateTable, quantity: str, window, expected: Optional[float], column="quad_log2"):
    slope, resid = fit_exponent(table.series(quantity, column), window)
    entry = {"slope": slope, "residual": resid, "window": list(window), "column": column}
    if expected is not None:
        entry["expected"] = expected
        entry["rel_error"] = abs(slope - expected) / abs(expected) if expected else abs(slope)
    table.fits[quantity] = entry
    return slope


def rate_exponent(n: int, p: float, q: float) -> float:
    """``(n-1)/q*_{n-1} - (n-1)/p``; the ratio formula grows without bound iff this is negative."""
    qs = conjugate_exponent(q, n - 1)
    return (n - 1) / qs - (n - 1) / p


def threshold_grid(count: int = 50) -> list:
    """Deterministic (n, p, q) triples with 1 <= q < n-1 and p > q, avoiding the threshold itself."""
    out = []
    i = 0
    while len(out) < count:
        n = 3 + i % 3
        q = 1.0 + (n - 2.2) * ((i * 7) % 11) / 11.0
        thr = threshold_p(n, q)
        # spread p over (q, 3 thr) on both sides of the threshold
        frac = ((i * 13) % 17 + 0.5) / 17.0
        p = q + frac * (3 * thr - q)
        if abs(p - thr) > 1e-6 * thr:
            out.append((n, round(p, 6), round(q, 6)))
        i += 1
    return out


def threshold_verdicts(triples: Sequence[tuple]) -> list:
    """Per triple: the rate-exponent sign test, the stem-series test and the threshold test."""
    rows = []
    for n, p, q in triples:
        beta = p * q / (p - q)
        alpha = 2 * (n - 1 - beta) * (1 / (n - 1) + p / q)
        rows.append({
            "n": n, "p": p, "q": q,
            "threshold": threshold_p(n, q),
            "ratio_unbounded": rate_exponent(n, p, q) < 0,
            "stem_series_convergent": series_tail(alpha, 1)[0],
            "below_threshold": p < threshold_p(n, q),
        })
    return rows


# ---------------------------------------------------------------------------
# Homogeneous counterexample
# ---------------------------------------------------------------------------


def homog_counterexample_report(spec: MushroomSpec, mlist: Sequence[int], quad: Optional[QuadratureSpec] = None) -> RateTable:
    """Gradient energies and L^q masses of the counterexample field, head by head."""
    quad = quad or QuadratureSpec()
    mmax = max(mlist)
    if mmax > spec.m:
        raise ExperimentError(f"mlist exceeds the domain's m = {spec.m}")
    n, p, q = spec.n, spec.p, spec.q
    u = field_thm53(spec)
    lw = math.log2(unit_ball_volume(n - 1))
    table = RateTable("homog", meta={"spec": spec.to_dict(), "mlist": list(mlist)})
    ks = list(range(1, mmax + 1))
    grad = sobolev_seminorm(u, [RegionTag("Stem", k) for k in ks], p, quad, spec)
    mass = lp_norm(u, [RegionTag("Head", k) for k in ks], q, quad, spec)
    g_quad = [c.log2_value for c in grad.contributions]
    m_quad = [c.log2_value for c in mass.contributions]
    for k in ks:
        table.add(k, "stem_grad_energy", lw - 2.0 * k, g_quad[k - 1])
        table.add(k, "head_mass", thm53_log2_head_mass(spec, k), m_quad[k - 1])
    for m in sorted(mlist):
        an_g = lw + math.log2(sum(4.0 ** -k for k in range(1, m + 1)))
        an_m = float(np.logaddexp2.reduce([thm53_log2_head_mass(spec, k) for k in range(1, m + 1)]))
        table.add(m, "grad_partial_sum", an_g, float(np.logaddexp2.reduce(g_quad[:m])))
        table.add(m, "mass_partial_sum", an_m, float(np.logaddexp2.reduce(m_quad[:m])))
    sums = [r.quad_log2 for r in table.rows if r.quantity == "mass_partial_sum"]
    table.meta["grad_limit"] = unit_ball_volume(n - 1) / 3.0
    table.meta["log2_mass_last_over_first"] = sums[-1] - sums[0]
    table.verdicts["mass_strictly_increasing"] = bool(all(b > a for a, b in zip(sums, sums[1:])))
    table.verdicts["grad_bounded"] = bool(
        all(2.0 ** r.quad_log2 <= table.meta["grad_limit"] * (1 + 1e-9) for r in table.rows if r.quantity == "grad_partial_sum")
    )
    return table


# ---------------------------------------------------------------------------
# Operator-norm sweep
# ---------------------------------------------------------------------------


def collar_weight_table(spec: MushroomSpec, quad: Optional[QuadratureSpec] = None, ref_rho: float = 0.25) -> RateTable:
    """Per-k integrals of ``|grad L^i|^beta``, ``beta = pq/(p-q)``, over the collar pieces.

    Corner pieces scale exactly like ``rho^{n-beta}``; the side piece is
    ``rho^{-beta}`` times its closed-form volume.  The formula column holds
    these models (corner constant taken from one reference radius), and the
    meta block the series tails in closed form next to a brute-force sum
    of the quadrature rows continued by the model.
    """
    quad = quad or QuadratureSpec()
    n, p, q = spec.n, spec.p, spec.q
    beta = p * q / (p - q)
    table = RateTable("collar_weights", meta={"beta": beta})
    log2_CD = cutoff_power_integral(ref_rho, beta, "DL", n, quad) - (n - beta) * math.log2(ref_rho)
    table.meta["log2_corner_constant"] = log2_CD
    stem_rate = 2 * (1 / (n - 1) + p / q)

    def side_model(log2_rho):
        return collar_log2_measure(n, log2_rho, "Side") - beta * log2_rho

    families = {
        "head_D": (spec.log2_tilde_r, lambda lr: log2_CD + (n - beta) * lr, "DL"),
        "head_side": (spec.log2_tilde_r, side_model, "Side"),
        "stem_D": (spec.log2_r, lambda lr: log2_CD + (n - beta) * lr, "DL"),
        "stem_side": (spec.log2_r, side_model, "Side"),
    }
    tails = {}
    for name, (log2_radii, model, sub) in families.items():
        quad_vals = []
        for k in spec.ks:
            lr = float(log2_radii[k - 1])
            val = cutoff_power_integral(2.0**lr, beta, sub, n, quad)
            quad_vals.append(val)
            table.add(k, name, None, val, model(lr))
        # series exponents in k: the radius is 2^{-(k+1)} for heads, 2^{-stem_rate k} for stems
        per_k = 1.0 if name.startswith("head") else stem_rate
        offset = 1.0 if name.startswith("head") else 0.0
        if sub == "DL":
            terms = [(log2_CD - (n - beta) * per_k * offset, (n - beta) * per_k, 1.0)]
        else:
            a = unit_ball_volume(n - 1) * (2 ** (n - 1) - 1)
            b = 2 * unit_sphere_area(n - 2) * _corner_triangle_factor(n)
            terms = [
                (math.log2(a) - (n - 1 - beta) * per_k * offset, (n - 1 - beta) * per_k, 1.0),
                (math.log2(b) - (n - beta) * per_k * offset, (n - beta) * per_k, -1.0),
            ]
        convergent = all(series_tail(alpha, 1)[0] for _, alpha, _ in terms)
        if convergent:
            closed = sum(sign * 2.0 ** (c + log2_series_tail(alpha, 1)) for c, alpha, sign in terms)
            K = 10_000
            model_terms = [model(-(k + offset) * per_k) for k in range(spec.m + 1, K + 1)]
            brute_log2 = float(np.logaddexp2.reduce(np.array(quad_vals + model_terms)))
            closed_log2 = math.log2(closed)
            rel = abs(2.0 ** (brute_log2 - closed_log2) - 1.0)
        else:
            closed_log2, brute_log2, rel = math.inf, math.inf, None
        tails[name] = {
            "exponents": [alpha for _, alpha, _ in terms],
            "convergent": convergent,
            "closed_log2": _num(closed_log2),
            "numeric_log2": _num(brute_log2),
            "rel_error": rel,
        }
    table.meta["tails"] = tails
    table.verdicts["all_convergent"] = all(t["convergent"] for t in tails.values())
    return table


def operator_norm_sweep(
    spec: MushroomSpec,
    family: Sequence[str] = SMOOTH_FAMILY,
    mlist: Sequence[int] = (8, 12),
    quad: Optional[QuadratureSpec] = None,
    threads: Optional[int] = None,
) -> RateTable:
    """Ratios ``||E u||_{W^{1,q}(C)} / ||u||_{W^{1,p}(Omega^m)}`` over a field family and truncations."""
    quad = quad or QuadratureSpec()
    n, p, q = spec.n, spec.p, spec.q
    table = RateTable("opnorm", meta={"spec": spec.to_dict(), "family": list(family), "mlist": list(mlist)})

    for m in mlist:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sp = build_mushroom(n, p, q, m, None if spec.placement == "diagonal" else spec.z[:m])
        best = -math.inf
        for name in family:
            u = field_from_name(name, sp)
            den = log2_sobolev_norm(u, "omega", p, quad, sp, threads)
            if not math.isfinite(den):
                raise ExperimentError(f"field {name} has zero W^(1,p) norm")
            num = log2_sobolev_norm(extend(sp, u), "all", q, quad, sp, threads)
            table.add(m, f"ratio:{name}", None, num - den)
            table.add(m, f"ext_norm:{name}", None, num)
            table.add(m, f"norm:{name}", None, den)
            best = max(best, num - den)
        table.add(m, "max_ratio", None, best)
    maxes = table.series("max_ratio")
    if len(maxes) >= 2:
        (_, a), (_, b) = maxes[0], maxes[-1]
        table.meta["max_ratio_rel_change"] = abs(2.0 ** (b - a) - 1.0)
    weights = collar_weight_table(build_mushroom(n, p, q, max(mlist)) if spec.strict_regime else spec, quad)
    table.rows.extend(weights.rows)
    table.meta["collar_tails"] = weights.meta["tails"]
    table.meta["log2_corner_constant"] = weights.meta["log2_corner_constant"]
    table.verdicts["collar_series_convergent"] = weights.verdicts["all_convergent"]
    table.verdicts["strict_regime"] = spec.strict_regime
    return table


# ---------------------------------------------------------------------------
# Rate tables
# ---------------------------------------------------------------------------


def _default_window(kmax: int) -> tuple:
    return (3, kmax - 1)


def rate_section7(spec: MushroomSpec, kmax: int, quad: Optional[QuadratureSpec] = None, window: Optional[tuple] = None) -> RateTable:
    """Norms of the single-mushroom fields u_k and the ratio formula, per k."""
    if kmax > spec.m:
        raise ExperimentError(f"kmax = {kmax} exceeds m = {spec.m}")
    quad = quad or QuadratureSpec()
    window = tuple(window or _default_window(kmax))
    n, p, q = spec.n, spec.p, spec.q
    lw = math.log2(unit_ball_volume(n - 1))
    e = rate_exponent(n, p, q)
    qs = conjugate_exponent(q, n - 1)
    table = RateTable("rate7", meta={"spec": spec.to_dict(), "kmax": kmax, "window": list(window)})
    for k in range(1, kmax + 1):
        u = field_sec7(spec, k)
        lt, lr = spec.log2_tilde_r[k - 1], spec.log2_r[k - 1]
        analytic = (lw + np.logaddexp2((n - 1) * lt, (n - 1) * lr + math.log2(1 + 1 / (p + 1)))) / p
        own = [RegionTag("Stem", k), RegionTag("Head", k)]
        quad_norm = log2_sobolev_norm(u, own, p, quad, spec)
        table.add(k, "norm_W1p", float(analytic), quad_norm)
        support = own + [RegionTag(kind, k, s) for kind in ("HeadCollar", "StemCollar") for s in ("DL", "Side", "DU")]
        ext_norm = log2_sobolev_norm(extend(spec, u), support, q, quad, spec)
        table.add(k, "ext_norm_W1q", None, ext_norm)
        table.add(k, "ratio_measured", None, ext_norm - quad_norm, -(k + 2) * e)
        table.add(k, "ratio_formula", None, None, -(k + 2) * e)
        table.add(k, "trace_bound", None, None, -(k + 2) * (n - 1) / qs)
    _record_fit(table, "norm_W1p", window, -(n - 1) / p)
    _record_fit(table, "ratio_measured", window, -e)
    _record_fit(table, "ratio_formula", window, -e, column="formula_log2")
    _record_fit(table, "trace_bound", window, -(n - 1) / qs, column="formula_log2")
    table.verdicts["ratio_unbounded"] = e < 0
    table.verdicts["below_threshold"] = p < threshold_p(n, q)
    table.verdicts["consistent"] = table.verdicts["ratio_unbounded"] == table.verdicts["below_threshold"]
    return table


def rate_section6(
    comb: CombSpec, kmax: int, p: float, q: float, quad: Optional[QuadratureSpec] = None, window: Optional[tuple] = None,
) -> RateTable:
    """Norms of the comb fields u_k, their slice seminorms and the ratio formula, per k."""
    if kmax > comb.kmax:
        raise ExperimentError(f"kmax = {kmax} exceeds the comb's kmax = {comb.kmax}")
    if not (1 <= q < comb.n - 1 and p > q):
        raise ExperimentError("need 1 <= q < n-1 and p > q")
    quad = quad or QuadratureSpec()
    window = tuple(window or _default_window(kmax))
    n = comb.n
    omega = unit_ball_volume(n - 1)
    e = rate_exponent(n, p, q)
    qs = conjugate_exponent(q, n - 1)
    table = RateTable(
        "rate6",
        meta={"comb": {"n": n, "kmax": comb.kmax, "aspect_shrink": comb.aspect_shrink}, "p": p, "q": q,
              "kmax": kmax, "window": list(window)},
    )
    for k in range(1, kmax + 1):
        u = field_sec6(comb, k)
        rho, h, c = comb.radius(k), comb.height(k), comb.center(k)
        V = omega * rho ** (n - 1) * h
        analytic = math.log2(0.5 * V * (1 + 1 / (p + 1) + (2 / h) ** p)) / p
        lp = cylinder_integral(u, c, rho, -h, 0.0, p, "lp", quad, breaks=(-h / 2,))
        gp = cylinder_integral(u, c, rho, -h, 0.0, p, "grad", quad, breaks=(-h / 2,))
        table.add(k, "norm_W1p", analytic, math.log2(lp + gp) / p)
        slice_an = q * math.log2(2 / h) + math.log2(omega) + (n - 1) * math.log2(rho)
        table.add(k, "plane_seminorm", slice_an, math.log2(plane_seminorm(u, -h / 4, q, quad, comb)))
        table.add(k, "ratio_formula", None, None, -(k + 2) * e)
        table.add(k, "trace_bound", None, None, -(k + 2) * (n - 1) / qs)
    _record_fit(table, "norm_W1p", window, -(n - 1) / p)
    _record_fit(table, "plane_seminorm", window, None if comb.aspect_shrink else -(n - 1.0))
    _record_fit(table, "ratio_formula", window, -e, column="formula_log2")
    _record_fit(table, "trace_bound", window, -(n - 1) / qs, column="formula_log2")
    table.verdicts["ratio_unbounded"] = e < 0
    table.verdicts["below_threshold"] = p < threshold_p(n, q)
    table.verdicts["consistent"] = table.verdicts["ratio_unbounded"] == table.verdicts["below_threshold"]
    return table
