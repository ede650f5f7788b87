import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sobexlab.maps import (
    SLAB_R1,
    MapDomainError,
    apply,
    differential,
    fd_jacobian_det,
    head_reflection,
    jacobian,
    pullback_gradient,
    stem_reflection,
)


def annulus_points(rng, center, rho, count, t0=1.0):
    th = 2 * np.pi * rng.random(count)
    s = rho * (1 + rng.random(count))
    X = np.empty((count, 3))
    X[:, 0] = center[0] + s * np.cos(th)
    X[:, 1] = center[1] + s * np.sin(th)
    X[:, 2] = t0 + rng.random(count)
    return X


def test_slab_reflection(spec):
    X = np.array([[0.3, 0.4, 1.25]])
    assert np.allclose(apply(SLAB_R1, X), [[0.3, 0.4, 0.75]])
    det, op = jacobian(SLAB_R1, X)
    assert det[0] == 1 and op[0] == 1
    with pytest.raises(MapDomainError):
        apply(SLAB_R1, np.array([0.3, 0.4, 2.5]))


def test_collar_reflection_swaps_walls(spec):
    refl = head_reflection(spec, 1)
    c, rho = refl.center, refl.rho
    X = np.array([[c[0] + rho, c[1], 2.5], [c[0] + 2 * rho, c[1], 2.5]])
    Y = apply(refl, X)
    assert np.allclose(Y[:, 0] - c[0], [rho, rho / 2])
    assert np.allclose(Y[:, 2], 2.5)
    with pytest.raises(MapDomainError):
        apply(refl, np.array([c[0] + 0.5 * rho, c[1], 2.5]))


@pytest.mark.parametrize("which", ["head", "stem"])
def test_jacobian_determinant_range(spec, which):
    refl = head_reflection(spec, 1) if which == "head" else stem_reflection(spec, 1)
    rng = np.random.default_rng(4)
    X = annulus_points(rng, refl.center, refl.rho, 5000)
    det, op = jacobian(refl, X)
    assert det.min() >= 1 / 8 - 1e-12 and det.max() <= 1 / 2 + 1e-12
    assert np.allclose(op, 1.0)
    D = differential(refl, X)
    assert np.allclose(np.abs(np.linalg.det(D)), det, rtol=1e-10)
    assert np.all(np.linalg.norm(D, ord=2, axis=(1, 2)) <= op + 1e-12)


def test_jacobian_against_finite_differences(spec):
    refl = head_reflection(spec, 2)
    rng = np.random.default_rng(5)
    X = annulus_points(rng, refl.center, refl.rho * 1.01, 50, t0=2.0)
    X = X[np.hypot(*(X[:, :2] - refl.center).T) < 1.98 * refl.rho]
    det, _ = jacobian(refl, X)
    fd = np.array([fd_jacobian_det(refl, x, 1e-6) for x in X])
    assert np.allclose(fd, det, rtol=1e-7)


def test_pullback_gradient_against_finite_differences(spec):
    refl = head_reflection(spec, 1)
    f = lambda Y: np.sin(Y[:, 0]) * Y[:, 1] + Y[:, 2] ** 2
    gf = lambda Y: np.stack([np.cos(Y[:, 0]) * Y[:, 1], np.sin(Y[:, 0]), 2 * Y[:, 2]], axis=1)
    X = np.array([[0.25 + 0.3, 0.25 + 0.1, 2.4], [0.25 - 0.2, 0.25 + 0.3, 2.7]])
    G = pullback_gradient(refl, X, gf(apply(refl, X)))
    h = 1e-6
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (f(apply(refl, X + e)) - f(apply(refl, X - e))) / (2 * h)
        assert np.allclose(G[:, j], fd, atol=1e-7)


def test_change_of_variables(spec):
    """int_A f(R x) |J(x)| dx equals int_{R(A)} f(y) dy; Monte Carlo vs tensor rule."""
    refl = head_reflection(spec, 1)
    c, rho = refl.center, refl.rho
    f = lambda Y: 1 + (Y[:, 0] - c[0]) ** 2 + np.cos(3 * Y[:, 1]) * Y[:, 2]
    rng = np.random.Generator(np.random.Philox(11))
    N = 400000
    th = 2 * np.pi * rng.random(N)
    s = np.sqrt(rho**2 + rng.random(N) * 3 * rho**2)  # uniform in the annulus
    X = np.stack([c[0] + s * np.cos(th), c[1] + s * np.sin(th), 2 + rng.random(N)], axis=1)
    area = np.pi * 3 * rho**2
    vals = f(apply(refl, X)) * jacobian(refl, X)[0] * area
    mc, err = vals.mean(), vals.std() / np.sqrt(N)
    # image annulus rho/2 < s < rho with a tensor Gauss rule
    xs, ws = np.polynomial.legendre.leggauss(40)
    sr = rho / 2 + (xs + 1) * rho / 4
    wr = ws * rho / 4
    tt = 2.5 + xs / 2
    wt = ws / 2
    ang = 2 * np.pi * np.arange(64) / 64
    S, T, A = np.meshgrid(sr, tt, ang, indexing="ij")
    W = (wr[:, None, None] * sr[:, None, None]) * wt[None, :, None] * (2 * np.pi / 64)
    Y = np.stack([c[0] + S * np.cos(A), c[1] + S * np.sin(A), T], axis=-1).reshape(-1, 3)
    exact = float(np.sum(np.broadcast_to(W, S.shape).ravel() * f(Y)))
    assert abs(mc - exact) <= 3 * err


@settings(max_examples=50, deadline=None)
@given(st.floats(1.0, 2.0), st.floats(0, 2 * np.pi), st.integers(1, 4))
def test_collar_reflection_radial_profile(a, th, k):
    from sobexlab.geometry import build_mushroom

    refl = head_reflection(build_mushroom(3, 5.0, 1.0, 4), k)
    c, rho = refl.center, refl.rho
    x = np.array([c[0] + a * rho * np.cos(th), c[1] + a * rho * np.sin(th), 2.3])
    y = apply(refl, x)
    d = y[:2] - c
    assert np.hypot(*d) == pytest.approx(1.5 * rho - 0.5 * a * rho, rel=1e-9)
    # same direction from the axis
    assert np.dot(d, [np.cos(th), np.sin(th)]) > 0
    assert y[2] == x[2]
