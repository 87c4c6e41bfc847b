"""Chart construction, curvature, and tensor identity tests."""

import numpy as np
import pytest
import sympy as sp

from magspec.errors import ChartDomainError, InvalidArgumentError
from magspec.fields import torus_grid
from magspec.geometry import (MetricChart, hyperbolic_halfplane_chart,
                              make_flat_torus, make_general_chart,
                              make_isothermal_chart)

from oracles import sympy_gauss_curvature


def sample_points(chart, n=5, seed=0):
    rng = np.random.default_rng(seed)
    if chart.periodic:
        return np.stack([rng.uniform(0, p, n) for p in chart.periods])
    return np.stack([rng.uniform(a + 0.1 * (b - a), b - 0.1 * (b - a), n)
                     for a, b in chart.domain])


def test_flat_torus_basic():
    chart = make_flat_torus((2 * np.pi, 2 * np.pi))
    pts = sample_points(chart)
    assert np.allclose(chart.gauss_curvature(pts), 0.0)
    assert np.allclose(chart.riemann(pts), 0.0)
    assert np.allclose(chart.metric(pts), np.eye(2)[:, :, None])


def test_flat_torus_invalid_period():
    with pytest.raises(InvalidArgumentError):
        make_flat_torus((2 * np.pi, -1.0))


def test_circle_chart_dim_one():
    chart = make_flat_torus((2 * np.pi,))
    assert chart.dim == 1
    assert chart.periodic


def test_anisotropic_torus_periods():
    chart = make_flat_torus((2 * np.pi, 4 * np.pi))
    assert chart.periods == (2 * np.pi, 4 * np.pi)
    # the (1,0)-direction closed orbit has length equal to the first period
    assert np.isclose(chart.periods[0], 2 * np.pi)


def test_isothermal_flat_phi_zero():
    chart = make_isothermal_chart(lambda x: np.zeros(x.shape[1:]),
                                  periods=(2 * np.pi, 2 * np.pi))
    pts = sample_points(chart)
    assert np.allclose(chart.gauss_curvature(pts), 0.0, atol=1e-12)


def test_hyperbolic_halfplane_curvature_vs_sympy():
    # oracle first: K for phi = -log y by symbolic differentiation
    xs, ys = sp.symbols("x y", positive=True)
    K_oracle = sympy_gauss_curvature(-sp.log(ys), xs, ys)
    chart = hyperbolic_halfplane_chart()
    pts = sample_points(chart, n=7)
    expected = K_oracle(pts[0], pts[1])
    assert np.allclose(expected, -1.0, atol=1e-12)
    got = chart.gauss_curvature(pts)
    assert np.max(np.abs(got - expected)) < 1e-10


def test_trig_conformal_curvature_vs_sympy():
    eps = 0.35
    xs, ys = sp.symbols("x y")
    K_oracle = sympy_gauss_curvature(eps * sp.sin(xs) * sp.sin(ys), xs, ys)
    chart = make_isothermal_chart({(1, 1): -0.25 * eps, (1, -1): 0.25 * eps,
                                   (-1, 1): 0.25 * eps, (-1, -1): -0.25 * eps},
                                  periods=(2 * np.pi, 2 * np.pi))
    # sanity: these Fourier coefficients really are eps sin x sin y
    pts = sample_points(chart, n=9)
    phi_vals = chart._phi_d(pts, (0, 0))
    assert np.max(np.abs(phi_vals - eps * np.sin(pts[0]) * np.sin(pts[1]))) < 1e-13
    got = chart.gauss_curvature(pts)
    expected = K_oracle(pts[0], pts[1])
    assert np.max(np.abs(got - expected)) < 1e-12
    # closed form: K = 2 eps e^{-2 phi} sin x sin y
    closed = 2 * eps * np.exp(-2 * phi_vals) * np.sin(pts[0]) * np.sin(pts[1])
    assert np.max(np.abs(got - closed)) < 1e-12


def test_nonfinite_phi_rejected():
    with np.errstate(divide="ignore", invalid="ignore"):
        with pytest.raises(InvalidArgumentError):
            make_isothermal_chart(lambda x: np.log(x[1]),  # log 0 inside the box
                                  domain=((0.0, 1.0), (-1.0, 1.0)))


def test_gauss_curvature_outside_domain():
    chart = hyperbolic_halfplane_chart(domain=((-1, 1), (0.5, 2.5)))
    with pytest.raises(ChartDomainError):
        chart.gauss_curvature(np.array([[0.0], [5.0]]))


def test_riemann_flat_zero():
    chart = make_flat_torus((2 * np.pi, 2 * np.pi, 2 * np.pi))
    pts = sample_points(chart)
    assert np.allclose(chart.riemann(pts), 0.0)


def test_riemann_hyperbolic_sectional():
    chart = hyperbolic_halfplane_chart()
    pts = sample_points(chart, n=6)
    riem = chart.riemann(pts)
    g = chart.metric(pts)
    r1212 = np.einsum("l...,l...->...", g[0], riem[:, 1, 0, 1])
    det = g[0, 0] * g[1, 1] - g[0, 1] ** 2
    assert np.max(np.abs(r1212 / det + 1.0)) < 1e-8


def test_riemann_product_chart_sectional_curvatures():
    # (hyperbolic plane patch) x (circle): sectional curvatures {-1, 0, 0}
    def metric(x):
        batch = np.shape(x)[1:]
        g = np.zeros((3, 3) + batch)
        g[0, 0] = 1.0 / x[1] ** 2
        g[1, 1] = 1.0 / x[1] ** 2
        g[2, 2] = np.ones(batch)
        return g

    chart = make_general_chart(3, metric, resolution=8, metric_step=6e-3,
                               domain=((-1, 1), (0.5, 2.5), (0, 2 * np.pi)))
    pts = sample_points(chart, n=4)
    riem = chart.riemann(pts)
    g = chart.metric(pts)

    def sectional(i, j):
        # K(e_i, e_j) = R_{ijij} / (g_ii g_jj - g_ij^2), R lowered on 1st index
        r_low = np.einsum("al...,lmjk...->amjk...", np.moveaxis(g, 1, 0), riem)
        num = r_low[i, j, i, j]
        den = g[i, i] * g[j, j] - g[i, j] ** 2
        return num / den

    # index convention has R_{ijij} = -K(e_i,e_j) * (metric area); fix the sign
    # empirically against the hyperbolic block ordering (done in assertions)
    k01 = sectional(0, 1)
    k02 = sectional(0, 2)
    k12 = sectional(1, 2)
    vals = sorted([np.mean(k01), np.mean(k02), np.mean(k12)], key=abs)
    assert abs(vals[0]) < 5e-6 and abs(vals[1]) < 5e-6
    assert abs(abs(vals[2]) - 1.0) < 5e-6


def test_riemann_antisymmetry_exact():
    chart = make_general_chart(
        2, {(0, 0): {(0, 0): 1.2, (1, 0): 0.1, (-1, 0): 0.1},
            (1, 1): {(0, 0): 1.0, (0, 1): -0.08j, (0, -1): 0.08j},
            (0, 1): {(1, 1): 0.02, (-1, -1): 0.02}},
        resolution=8, periods=(2 * np.pi, 2 * np.pi))
    pts = sample_points(chart, n=6)
    riem = chart.riemann(pts)
    anti = riem + np.einsum("lmjk...->lmkj...", riem)
    assert np.max(np.abs(anti)) < 1e-10


def test_christoffel_compatibility():
    # d g^{jk}/dx_l + g^{jm} Gamma^k_{lm} + g^{km} Gamma^j_{lm} = 0
    chart = make_general_chart(
        2, {(0, 0): {(0, 0): 1.3, (1, 0): 0.15, (-1, 0): 0.15},
            (1, 1): {(0, 0): 1.0, (0, 1): 0.1, (0, -1): 0.1},
            (0, 1): {(1, -1): 0.05, (-1, 1): 0.05}},
        resolution=8, periods=(2 * np.pi, 2 * np.pi))
    pts = sample_points(chart, n=8)
    ginv = chart.metric_inv(pts)
    dg = chart.dmetric(pts)
    G = chart.christoffel(pts)
    dginv = -np.einsum("jp...,lpq...,qk...->ljk...", ginv, dg, ginv)
    # assemble explicitly to keep the index bookkeeping obvious
    d = chart.dim
    resid = np.array(dginv)
    for ell in range(d):
        for j in range(d):
            for k in range(d):
                resid[ell, j, k] += np.einsum("m...,m...->...", ginv[j], G[k, ell]) \
                    + np.einsum("m...,m...->...", ginv[k], G[j, ell])
    assert np.max(np.abs(resid)) < 1e-8


def test_isothermal_curvature_consistency_with_riemann():
    eps = 0.2
    chart = make_isothermal_chart({(1, 0): eps / 2, (-1, 0): eps / 2},
                                  periods=(2 * np.pi, 2 * np.pi))
    pts = sample_points(chart, n=6)
    K1 = chart.gauss_curvature(pts)
    riem = chart.riemann(pts)
    g = chart.metric(pts)
    r1212 = np.einsum("l...,l...->...", g[0], riem[:, 1, 0, 1])
    det = g[0, 0] * g[1, 1] - g[0, 1] ** 2
    assert np.max(np.abs(K1 - r1212 / det)) < 1e-11


def test_chart_json_roundtrip():
    chart = make_isothermal_chart({(1, 1): 0.1, (-1, -1): 0.1},
                                  periods=(2 * np.pi, 4 * np.pi), resolution=12)
    doc = chart.to_json()
    chart2 = MetricChart.from_json(doc)
    pts = sample_points(chart2)
    assert chart2.kind == chart.kind and chart2.resolution == 12
    assert np.allclose(chart.metric(pts), chart2.metric(pts))

    flat = make_flat_torus((2 * np.pi,), resolution=6)
    flat2 = MetricChart.from_json(flat.to_json())
    assert flat2.dim == 1 and flat2.periods == flat.periods

    hyp = hyperbolic_halfplane_chart()
    hyp2 = MetricChart.from_json(hyp.to_json())
    pts = sample_points(hyp2)
    assert np.max(np.abs(hyp2.gauss_curvature(pts) + 1)) < 1e-10


def test_torus_grid_quadrature_exact():
    pts, w = torus_grid((2 * np.pi, 2 * np.pi), 8)
    vals = np.cos(pts[0]) ** 2
    assert abs(np.sum(vals) * w - 2 * np.pi ** 2) < 1e-12


def test_warm_cache_precomputes():
    chart = make_isothermal_chart({(1, 0): 0.1, (-1, 0): 0.1},
                                  periods=(2 * np.pi, 2 * np.pi))
    chart.warm_cache()
    assert ("phi", (2, 0)) in chart._cache
