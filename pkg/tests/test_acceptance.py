"""Acceptance criteria 1-10, one test each; every test prints a PASS/FAIL line."""

import math

import numpy as np
import pytest

from sobexlab import cutoffs
from sobexlab.experiments import (
    homog_counterexample_report,
    operator_norm_sweep,
    rate_exponent,
    rate_section6,
    rate_section7,
    threshold_grid,
    threshold_verdicts,
)
from sobexlab.extension import extend, trace_jump
from sobexlab.fields import SMOOTH_FAMILY, field_coordinate, field_from_name
from sobexlab.geometry import (
    SIDE,
    build_comb,
    build_cusp,
    build_mushroom,
    collar_subregion,
    region_measure,
    threshold_p,
    unit_ball_volume,
    validate_placement,
)
from sobexlab.maps import apply, head_reflection, jacobian, stem_reflection
from sobexlab.norms import integrate, mc_volume, mushroom_regions, poincare_quotient
from sobexlab.quadrature import QuadratureSpec

MAIN = (3, 5.0, 1.0)


def report(number: int, title: str, checks: dict):
    """Print one line for the criterion and fail with the names of the broken checks."""
    bad = [name for name, ok in checks.items() if not ok]
    status = "PASS" if not bad else "FAIL"
    detail = "all checks hold" if not bad else "failed: " + ", ".join(bad)
    print(f"\n[{status}] criterion {number}: {title} ({detail})")
    assert not bad, f"criterion {number}: {', '.join(bad)}"


@pytest.fixture(scope="module")
def main_spec():
    return build_mushroom(*MAIN, 12)


# 1 -------------------------------------------------------------------------


def test_geometry_fidelity(main_spec):
    k = np.arange(1, 13)
    log_tr = np.log2(main_spec.tilde_r)
    log_r = np.log2(main_spec.r)
    # for (3, 5, 1) the stem radii are exactly 2^{-11k}
    tr_ok = np.max(np.abs(log_tr + (k + 1)) / (k + 1)) <= 1e-14
    r_ok = np.max(np.abs(log_r + 11 * k) / (11 * k)) <= 1e-14
    vol, err = mc_volume(main_spec, 10**6, seed=20240601)
    exact = sum(region_measure(main_spec, t)[0] for t in mushroom_regions(main_spec, "omega"))
    placement = validate_placement(main_spec)
    print(f"\nMC volume {vol:.6f} +- {err:.2e}, region sum {exact:.6f}, z = {abs(vol - exact) / err:.2f}")
    print(f"placement: {len(placement.violations)} violations, first: {placement.first()}")
    report(1, "geometry fidelity", {
        "tilde_r_log2": tr_ok,
        "r_log2": r_ok,
        "mc_volume_3sigma": abs(vol - exact) <= 3 * err,
        "validate_placement": placement.ok,
    })


# 2 -------------------------------------------------------------------------


def corner_samples(rng, r, count, sub):
    u, v = rng.random((2, 4 * count))
    keep = u + v < 1
    d, x = (u[keep] * r / 2)[:count], (v[keep] * r / 2)[:count]
    return r / 2 + d, (x if sub == "DL" else 1 - x)


def side_samples(rng, r, count):
    s = r / 2 + rng.random(4 * count) * r / 2
    xn = rng.random(4 * count)
    keep = collar_subregion(s, xn, r) == SIDE
    return s[keep][:count], xn[keep][:count]


def test_cutoff_properties(main_spec):
    rng = np.random.default_rng(2)
    radii = [2 * main_spec.tilde_r[0], 2 * main_spec.r[0], 2 * main_spec.r[-1]]
    pou = 0.0
    for r in radii:
        s = r / 2 + rng.random(10**5) * r / 2
        xn = rng.random(10**5)
        pou = max(pou, float(np.max(np.abs(cutoffs.eval_Li(s, xn, r) + cutoffs.eval_Lo(s, xn, r) - 1))))
    bound_ok, fd_rel = True, 0.0
    # corners of the deepest collars are below float resolution in x_n
    for r in (0.5, 2.0**-10, 2.0**-21):
        for sub in ("DL", "DU", "Side"):
            s, xn = side_samples(rng, r, 10**4) if sub == "Side" else corner_samples(rng, r, 10**4, sub)
            ds, dx = cutoffs.local_grad_Li(s, xn, r)
            bound_ok &= bool(np.all(np.hypot(ds, dx) <= cutoffs.gradient_bound(s, xn, r) * (1 + 1e-12)))
            # finite differences away from the cone interfaces and the corner circle
            d, w = s - r / 2, np.minimum(xn, 1 - xn)
            gap = 1e-3 * r
            clear = (np.abs(d + w - r / 2) > gap) & (np.hypot(d, w) > gap) & (w > gap) & (d > gap) & (d < r / 2 - gap)
            s, xn = s[clear], xn[clear]
            h = 1e-6 * r
            ds, dx = cutoffs.local_grad_Li(s, xn, r)
            # divide by the representable step, not the nominal one
            sp, sm, xp, xm = s + h, s - h, xn + h, xn - h
            fds = (cutoffs.eval_Li(sp, xn, r) - cutoffs.eval_Li(sm, xn, r)) / (sp - sm)
            fdx = (cutoffs.eval_Li(s, xp, r) - cutoffs.eval_Li(s, xm, r)) / (xp - xm)
            fd_rel = max(fd_rel, float(np.max(np.hypot(ds - fds, dx - fdx) / np.hypot(ds, dx))))
    print(f"\npartition of unity max error {pou:.2e}; FD max relative error {fd_rel:.2e}")
    report(2, "cut-off properties", {
        "partition_of_unity": pou <= 1e-12,
        "gradient_bounds": bound_ok,
        "finite_differences": fd_rel <= 1e-6,
    })


# 3 -------------------------------------------------------------------------


def annulus_points(rng, c, rho, count, t0):
    th = 2 * np.pi * rng.random(count)
    s = np.sqrt(rho**2 + rng.random(count) * 3 * rho**2)
    X = np.stack([c[0] + s * np.cos(th), c[1] + s * np.sin(th), t0 + rng.random(count)], axis=1)
    return X, np.pi * 3 * rho**2


def image_integral(f, c, rho, t0):
    """Tensor Gauss rule over the image annulus rho/2 < s < rho."""
    xs, ws = np.polynomial.legendre.leggauss(40)
    sr, wr = rho / 2 + (xs + 1) * rho / 4, ws * rho / 4
    tt, wt = t0 + (xs + 1) / 2, ws / 2
    ang = 2 * np.pi * np.arange(64) / 64
    S, T, A = np.meshgrid(sr, tt, ang, indexing="ij")
    W = np.broadcast_to((wr * sr)[:, None, None] * wt[None, :, None] * (2 * np.pi / 64), S.shape)
    Y = np.stack([c[0] + S * np.cos(A), c[1] + S * np.sin(A), T], axis=-1).reshape(-1, 3)
    return float(np.sum(W.ravel() * f(Y)))


def test_reflection_estimates(main_spec):
    rng = np.random.Generator(np.random.Philox(3))
    det_ok, cov = True, {}
    # deeper stem collars are narrower than float spacing at their centers
    for kind, k in (("head", 1), ("head", 12), ("stem", 1), ("stem", 2)):
        refl = head_reflection(main_spec, k) if kind == "head" else stem_reflection(main_spec, k)
        c, rho = refl.center, refl.rho
        t0 = 2.0 if kind == "head" else 1.0
        X, area = annulus_points(rng, c, rho, 400000, t0)
        det, _ = jacobian(refl, X)
        det_ok &= bool(det.min() >= 1 / 8 - 1e-12 and det.max() <= 1 / 2 + 1e-12)
        # smooth test field in coordinates scaled to the collar
        f = lambda Y: 1 + ((Y[:, 0] - c[0]) / rho) ** 2 + np.cos(3 * (Y[:, 1] - c[1]) / rho) * Y[:, 2]
        vals = f(apply(refl, X)) * det * area
        mc, err = vals.mean(), vals.std() / math.sqrt(len(vals))
        exact = image_integral(f, c, rho, t0)
        cov[f"{kind}{k}"] = abs(mc - exact) / err
    print("\nchange of variables z-scores: " + ", ".join(f"{key} {z:.2f}" for key, z in cov.items()))
    report(3, "reflection estimates", {
        "jacobian_range": det_ok,
        **{f"change_of_variables_{key}": z <= 3 for key, z in cov.items()},
    })


# 4 -------------------------------------------------------------------------


def test_extension_interfaces(main_spec):
    checks, worst = {}, 0.0
    for face in ("stem_lateral", "stem_collar_outer", "cube_top"):
        for k in (1, 2):
            for name in SMOOTH_FAMILY:
                rep = trace_jump(main_spec, field_from_name(name, main_spec), face, k)
                worst = max(worst, rep.sup)
                checks[f"{face}_k{k}_{name}"] = rep.n_points > 0 and rep.sup <= 1e-8
    bottom = trace_jump(main_spec, field_from_name("const:1", main_spec), "head_bottom", 1)
    checks["head_bottom_unit_jump"] = abs(bottom.sup - 1.0) <= 1e-6
    print(f"\nlargest continuous-face jump {worst:.2e}; head-bottom jump for u = 1: {bottom.sup:.9f}")
    report(4, "extension interface behaviour", checks)


# 5 -------------------------------------------------------------------------


def test_counterexample_energies(main_spec):
    tab = homog_counterexample_report(main_spec, list(range(1, 13)))
    rows = lambda q: [r for r in tab.rows if r.quantity == q]
    grad_err = max(
        abs(2.0**r.quad_log2 - math.pi * sum(4.0**-j for j in range(1, r.k + 1))) / (math.pi / 3)
        for r in rows("grad_partial_sum")
    )
    mass_err = max(abs(2.0 ** (r.quad_log2 - 2 * (r.k - 1)) / math.pi - 1) for r in rows("head_mass"))
    sums = [r.quad_log2 for r in rows("mass_partial_sum")]
    growth = sums[-1] - sums[0]
    limit_ok = tab.meta["grad_limit"] == pytest.approx(unit_ball_volume(2) / 3, rel=1e-15)
    print(f"\ngrad partial sums max error {grad_err:.2e}; head masses max rel error {mass_err:.2e}; "
          f"mass last/first = 2^{growth:.2f}")
    report(5, "counterexample energies", {
        "grad_partial_sums": grad_err <= 1e-10 and limit_ok,
        "head_masses_1pct": mass_err <= 0.01,
        "mass_strictly_increasing": all(b > a for a, b in zip(sums, sums[1:])),
        "mass_divergence_1e3": growth > math.log2(1e3),
    })


# 6 -------------------------------------------------------------------------


def test_operator_boundedness(main_spec):
    tab = operator_norm_sweep(main_spec, SMOOTH_FAMILY, (8, 12))
    change = tab.meta["max_ratio_rel_change"]
    tails = tab.meta["collar_tails"]
    print(f"\nmax ratio by m: {tab.series('max_ratio')}; rel change {change:.4f}")
    print("tail rel errors: " + ", ".join(f"{k} {v['rel_error']:.1e}" for k, v in tails.items()))
    report(6, "operator boundedness", {
        "max_ratio_change_20pct": change <= 0.2,
        **{f"tail_{k}": v["convergent"] and v["rel_error"] <= 1e-6 for k, v in tails.items()},
    })


# 7 -------------------------------------------------------------------------


def test_single_mushroom_rates():
    spec = build_mushroom(*MAIN, 11)
    tab = rate_section7(spec, 11, window=(3, 10))
    fit = tab.fits["norm_W1p"]
    rows = threshold_verdicts(threshold_grid(50))
    flips = all(r["ratio_unbounded"] == r["below_threshold"] for r in rows)
    at_threshold = max(abs(rate_exponent(r["n"], threshold_p(r["n"], r["q"]), r["q"])) for r in rows)
    sides = {r["below_threshold"] for r in rows}
    print(f"\nnorm slope {fit['slope']:.6f} vs {fit['expected']:.6f}; exponent at threshold max {at_threshold:.1e}")
    report(7, "single-mushroom rates", {
        "norm_slope_5pct": abs(fit["slope"] / fit["expected"] - 1) <= 0.05,
        "sign_flip_consistent": flips and len(rows) == 50,
        "zero_at_threshold": at_threshold <= 1e-12,
        "grid_spans_threshold": sides == {True, False},
    })


# 8 -------------------------------------------------------------------------


def test_comb_rates():
    n, p, q = 3, 1.5, 1.0
    tab = rate_section6(build_comb(n, 12), 12, p, q, window=(3, 10))
    norm, plane = tab.fits["norm_W1p"], tab.fits["plane_seminorm"]
    print(f"\nnorm slope {norm['slope']:.6f} vs {-(n - 1) / p:.6f}; plane slope {plane['slope']:.6f} vs {-(n - 1.0)}")
    report(8, "comb rates", {
        "norm_slope_5pct": abs(norm["slope"] / (-(n - 1) / p) - 1) <= 0.05,
        "plane_slope_5pct": abs(plane["slope"] / (-(n - 1.0)) - 1) <= 0.05,
        "verdict_matches_threshold": tab.verdicts["ratio_unbounded"] == (p < q * (n - 1) / (n - 1 - q)),
    })


# 9 -------------------------------------------------------------------------


def cusp_axial_variance():
    """Variance of t under the section area of the t^2 cusp joined to its ball."""
    P = np.polynomial.Polynomial
    roots = P([2, -4, 1, 0, 1]).roots()
    t_star = min(r.real for r in roots if abs(r.imag) < 1e-12 and 0.6 < r.real < 1)
    pieces = [(P([0, 0, 0, 0, 1]), 0.0, t_star), (P([-2, 4, -1]), t_star, 2 + math.sqrt(2))]
    t = P([0, 1])
    moment = lambda j: sum((A * t**j).integ()(b) - (A * t**j).integ()(a) for A, a, b in pieces)
    m0, m1, m2 = moment(0), moment(1), moment(2)
    return m2 / m0 - (m1 / m0) ** 2


def test_poincare_quotients():
    cube = poincare_quotient("cube", field_coordinate(3, 0), 2.0)
    cusp = poincare_quotient(build_cusp(3, 2.0), field_coordinate(3, 0), 2.0)
    oracle = cusp_axial_variance()
    print(f"\ncube quotient {cube.quotient:.12f} (1/12 = {1 / 12:.12f}); "
          f"cusp quotient {cusp.quotient:.10f} vs {oracle:.10f}, diam^2 = {cusp.diameter_p:.4f}")
    report(9, "Poincare quotients", {
        "cube_one_twelfth": abs(cube.quotient * 12 - 1) <= 0.005,
        "cusp_closed_form_1pct": abs(cusp.quotient / oracle - 1) <= 0.01,
        "cusp_below_diam_sq": cusp.quotient <= cusp.diameter_p,
    })


# 10 ------------------------------------------------------------------------


def test_determinism_and_cross_validation():
    spec = build_mushroom(*MAIN, 3)
    tensor = QuadratureSpec()
    mc = QuadratureSpec(method="monte-carlo", samples=200000)
    checks = {}
    E = extend(spec, field_from_name("thm53", spec))
    for quad in (tensor, mc):
        runs = [integrate(E, "all", 1.0, kind, quad, spec, threads=t).to_dict() for t in (1, 4) for kind in ("lp", "grad")]
        checks[f"threads_bit_identical_{quad.method}"] = runs[:2] == runs[2:]
    # E(u) lies in W^{1,q} of the whole cylinder and u in W^{1,p} of the domain;
    # p-th gradient powers over the collar corners are infinite
    names = list(SMOOTH_FAMILY) + ["thm53"] + [f"sec7:{k}" for k in spec.ks]
    plan = (("lp", spec.q, "all"), ("grad", spec.q, "all"), ("lp", spec.p, "omega"), ("grad", spec.p, "omega"))
    worst, pairs, misses = 0.0, 0, []
    for name in names:
        E = extend(spec, field_from_name(name, spec))
        for kind, p, regions in plan:
            a = integrate(E, regions, p, kind, mc, spec)
            b = integrate(E, regions, p, kind, tensor, spec)
            for x, y in zip(a.contributions, b.contributions):
                gap = abs(x.value - y.value)
                z = gap / x.stderr if x.stderr > 0 else (0.0 if gap <= 1e-12 * abs(y.value) else math.inf)
                worst, pairs = max(worst, z), pairs + 1
                if z > 3:
                    misses.append(f"{name}/{kind}/p={p}/{x.region}")
    print(f"\n{pairs} field/region/integrand triples, largest |tensor - MC| / stderr = {worst:.2f}")
    checks["tensor_vs_mc_3sigma"] = not misses
    if misses:
        print("outside 3 sigma: " + ", ".join(misses))
    report(10, "determinism and engine cross-validation", checks)
