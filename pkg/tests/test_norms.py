import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad as scipy_quad

from sobexlab.extension import extend
from sobexlab.fields import ScalarField, field_coordinate, field_from_name, field_thm53
from sobexlab.geometry import RegionTag, build_cusp, collar_log2_measure, omega_log2_measure
from sobexlab.norms import (
    NormReport,
    NumericalError,
    cusp_breakpoints,
    cutoff_power_integral,
    cylinder_integral,
    integrate,
    log2_series_tail,
    lp_norm,
    mc_volume,
    mushroom_regions,
    plane_seminorm,
    plane_seminorm_mc,
    poincare_quotient,
    series_tail,
    sobolev_seminorm,
)
from sobexlab.quadrature import QuadratureSpec, collar_section_offsets

ONE = "const:1"


def corner_oracle(rho, beta):
    """log2 of int |grad L^i|^beta over D^L (n = 3) in polar coordinates about the corner."""
    def g(phi):
        c = math.cos(phi) + math.sin(phi)
        R = rho / c
        return c ** (-2 * beta) * (rho * R ** (2 - beta) / (2 - beta) + math.cos(phi) * R ** (3 - beta) / (3 - beta))

    return math.log2(2 * math.pi * scipy_quad(g, 0, math.pi / 2, epsabs=0, epsrel=1e-13)[0])


def test_region_selectors(small_spec):
    assert len(mushroom_regions(small_spec, "all")) == 1 + 3 + 3 + 1 + 18 + 0 * 1 + 0
    assert [str(t) for t in mushroom_regions(small_spec, "cube")] == ["Cube"]
    with pytest.raises(ValueError):
        mushroom_regions(small_spec, "nowhere")


def test_domain_volume_by_quadrature(spec):
    rep = lp_norm(field_from_name(ONE, spec), "omega", 1.0, spec=spec)
    assert rep.log2_total == pytest.approx(omega_log2_measure(spec), abs=1e-12)


def test_slab_volume(spec):
    rep = lp_norm(field_from_name(ONE, spec), ["Slab"], 1.0, spec=spec)
    expected = 1 - math.pi * sum(4 * 2.0 ** (-22 * k) for k in spec.ks)
    assert rep.total == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("sub", ["DL", "Side", "DU"])
def test_stem_collar_volumes(spec, sub):
    for k in (1, 7, 12):
        rep = lp_norm(field_from_name(ONE, spec), [RegionTag("StemCollar", k, sub)], 1.0, spec=spec)
        assert rep.log2_total == pytest.approx(collar_log2_measure(3, spec.log2_r[k - 1], sub), abs=1e-10)


def test_counterexample_stem_energies(spec):
    rep = sobolev_seminorm(field_thm53(spec), [RegionTag("Stem", k) for k in (1, 5, 12)], spec.p, spec=spec)
    for c, k in zip(rep.contributions, (1, 5, 12)):
        assert c.log2_value == pytest.approx(math.log2(math.pi) - 2 * k, abs=1e-12)


def truncation_bound(beta, quad=QuadratureSpec()):
    """Relative mass of l^{1-beta} left in the innermost graded cell."""
    return (quad.grading**quad.levels) ** (2 - beta)


@pytest.mark.parametrize("rho", [0.25, 2.0**-11, 2.0**-40])
@pytest.mark.parametrize("beta", [1.0, 1.25, 1.75])
def test_corner_weight_against_polar_oracle(rho, beta):
    tol = max(1e-9, 10 * truncation_bound(beta))
    assert cutoff_power_integral(rho, beta, "DL", 3) == pytest.approx(corner_oracle(rho, beta), abs=tol)
    assert cutoff_power_integral(rho, beta, "DU", 3) == pytest.approx(corner_oracle(rho, beta), abs=tol)


def distance_integral(rho, q, quad, sub="DL"):
    s, t, w, d, lo, hi = collar_section_offsets(rho, 1.0, sub, 3, quad)
    a = lo if sub == "DL" else hi
    return 2 * math.pi * float(np.sum(w * np.hypot(d, a) ** -q))


@pytest.mark.parametrize("q", [1.0, 1.5, 1.9])
@pytest.mark.parametrize("sub", ["DL", "DU"])
def test_graded_rule_resolves_the_corner_singularity(q, sub):
    """int_{D^L} dist^{-q} is stable under refinement of the graded rule."""
    rho = 0.125
    vals = [distance_integral(rho, q, QuadratureSpec().refined(f), sub) for f in (1.0, 1.5, 2.0)]
    assert max(vals) / min(vals) - 1 <= 0.005
    # exact value: 2 pi int_0^{pi/2} int_0^{R} l^{1-q} (rho + l cos phi) dl dphi
    exact = 2 * math.pi * scipy_quad(
        lambda p: (rho * (rho / (math.cos(p) + math.sin(p))) ** (2 - q) / (2 - q)
                   + math.cos(p) * (rho / (math.cos(p) + math.sin(p))) ** (3 - q) / (3 - q)),
        0, math.pi / 2, epsabs=0, epsrel=1e-12,
    )[0]
    assert vals[0] == pytest.approx(exact, rel=0.005)


def test_deep_corner_nodes_keep_their_offsets():
    # nodes at 1e-28 of the leg collapse onto the corner in (s, t) but not in the offsets
    s, t, w, d, lo, hi = collar_section_offsets(2.0**-30, 1.0, "DU", 3, QuadratureSpec())
    assert np.any(s == 2.0**-30) and np.any(t == 1.0)
    assert np.all(np.hypot(d, hi) > 0)


def test_series_tail():
    ok, total = series_tail(1.0)
    assert ok and total == pytest.approx(1.0)
    ok, total = series_tail(2.0, 3)
    assert total == pytest.approx(sum(4.0 ** -k for k in range(3, 200)), rel=1e-14)
    assert series_tail(0.0) == (False, math.inf)
    assert series_tail(-1.0)[0] is False
    assert log2_series_tail(1.0) == pytest.approx(0.0, abs=1e-15)
    assert 2 ** log2_series_tail(1e-9) == pytest.approx(series_tail(1e-9)[1], rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 50), st.integers(1, 20))
def test_series_tail_against_partial_sums(alpha, k0):
    _, total = series_tail(alpha, k0)
    K = k0 + int(60 / alpha) + 200
    partial = math.fsum(2.0 ** (-alpha * k) for k in range(k0, K))
    assert total == pytest.approx(partial, rel=1e-10)


def test_cube_poincare():
    rep = poincare_quotient("cube", field_coordinate(3, 0), 2.0)
    assert rep.quotient == pytest.approx(1 / 12, rel=1e-12)
    assert rep.volume == pytest.approx(1.0)


def cusp_axial_oracle():
    """Variance of t under the section area of the t^2 cusp joined to the ball (piecewise polynomials)."""
    P = np.polynomial.Polynomial
    # crossing of t^4 with the ball slice 2 - (t - 2)^2
    roots = (P([2, -4, 1, 0, 1])).roots()
    t_star = min(r.real for r in roots if abs(r.imag) < 1e-12 and 0.6 < r.real < 1)
    top = 2 + math.sqrt(2)
    pieces = [(P([0, 0, 0, 0, 1]), 0.0, t_star), (P([-2, 4, -1]), t_star, top)]
    t = P([0, 1])

    def moment(j):
        return sum(((A * t**j).integ()(b) - (A * t**j).integ()(a)) for A, a, b in pieces)

    m0, m1, m2 = moment(0), moment(1), moment(2)
    return m2 / m0 - (m1 / m0) ** 2, math.pi * m0, t_star


def test_cusp_breakpoints_and_oracle():
    cusp = build_cusp(3, 2.0)
    var, vol, t_star = cusp_axial_oracle()
    bps = cusp_breakpoints(cusp)
    assert bps[2] == pytest.approx(t_star, abs=1e-12)
    rep = poincare_quotient(cusp, field_coordinate(3, 0), 2.0)
    assert rep.quotient == pytest.approx(var, rel=1e-8)
    assert rep.volume == pytest.approx(vol, rel=1e-8)
    assert rep.quotient <= rep.diameter_p


def test_poincare_rejects_constant():
    with pytest.raises(NumericalError):
        poincare_quotient("cube", field_from_name(ONE, n=3), 2.0)


def test_cylinder_integral():
    f = field_coordinate(3, 2)
    # int_{B(0,1/2) x (0,1)} t dx = pi/4 * 1/2
    assert cylinder_integral(f, np.zeros(2), 0.5, 0.0, 1.0, 1.0) == pytest.approx(math.pi / 8, rel=1e-12)
    assert cylinder_integral(f, np.zeros(2), 0.5, 0.0, 1.0, 3.0, "grad") == pytest.approx(math.pi / 4, rel=1e-12)


def test_thread_count_does_not_change_bits(small_spec):
    f = extend(small_spec, field_from_name("trig:3", small_spec))
    a = integrate(f, "all", 1.0, "grad", spec=small_spec, threads=1).to_dict()
    b = integrate(f, "all", 1.0, "grad", spec=small_spec, threads=4).to_dict()
    assert a == b


def test_monte_carlo_is_seeded(small_spec):
    quad = QuadratureSpec(method="monte-carlo", samples=20000)
    f = extend(small_spec, field_from_name("poly:2", small_spec))
    a = integrate(f, "all", 2.0, "lp", quad, small_spec, threads=1).to_dict()
    b = integrate(f, "all", 2.0, "lp", quad, small_spec, threads=3).to_dict()
    c = integrate(f, "all", 2.0, "lp", QuadratureSpec(method="monte-carlo", samples=20000, seed=1), small_spec).to_dict()
    assert a == b
    assert a != c


def test_monte_carlo_matches_tensor_on_smooth_regions(small_spec):
    f = extend(small_spec, field_from_name("poly:2", small_spec))
    mc = integrate(f, "omega", 2.0, "lp", QuadratureSpec(method="monte-carlo", samples=100000), small_spec)
    tq = integrate(f, "omega", 2.0, "lp", QuadratureSpec(), small_spec)
    for a, b in zip(mc.contributions, tq.contributions):
        assert abs(a.value - b.value) <= 4 * a.stderr + 1e-12 * b.value


def test_non_finite_values_are_reported(small_spec):
    bad = ScalarField("nan", 3, lambda X: np.full(X.shape[0], np.nan))
    with pytest.raises(NumericalError, match="Cube"):
        lp_norm(bad, ["Cube"], 2.0, spec=small_spec)


def test_bad_arguments(small_spec):
    f = field_from_name(ONE, small_spec)
    with pytest.raises(ValueError):
        integrate(f, "cube", 0.5, spec=small_spec)
    with pytest.raises(ValueError):
        integrate(f, "cube", 2.0, "hessian", spec=small_spec)


def test_report_serialization(small_spec):
    rep = lp_norm(field_from_name(ONE, small_spec), "omega", 1.0, spec=small_spec)
    d = rep.to_dict()
    assert d["method"] == "tensor" and len(d["regions"]) == 7
    assert rep.csv_rows()[0][0] == "Cube"
    assert rep.norm == pytest.approx(rep.total)
    empty = NormReport("lp", 2.0, "tensor")
    assert empty.log2_total == -math.inf and empty.to_dict()["log2_total"] is None


def test_mc_volume(small_spec):
    v, err = mc_volume(small_spec, 200000, seed=3)
    assert abs(v - 2 ** omega_log2_measure(small_spec)) <= 3 * err
    assert mc_volume(small_spec, 1000, 3) == mc_volume(small_spec, 1000, 3)


def test_plane_slices(small_spec):
    u = field_from_name("poly:1", small_spec)
    grad = np.array([1, 1 / 2, 1 / 3])
    assert plane_seminorm(extend(small_spec, u), 0.5, 1.0) == pytest.approx(np.linalg.norm(grad), rel=1e-12)
    E = extend(small_spec, field_from_name("poly:2", small_spec))
    for t in (1.3, 2.4):
        tensor = plane_seminorm(E, t, 1.0)
        mc, err = plane_seminorm_mc(E, small_spec, t, 1.0, 200000, seed=5)
        assert abs(tensor - mc) <= 4 * err
