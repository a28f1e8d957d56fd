import numpy as np
import pytest

from vfe.errors import DomainError
from vfe.geometry import (
    BallGeometry,
    SampledGraph,
    axis_jet_from_chart,
    ball_chart,
    curve_length,
    length_second_variation_ball,
    moebius_ball_raw,
    moebius_to_cylindrical,
    reparametrize_by_arclength,
)


def _ambient_rz(rho, x, z):
    chart, _ = ball_chart(rho, delta=0.9)
    p = chart.chart_map(np.array([x, 0.0]), rho * (z + 1))
    return np.hypot(p[0], p[1]), p[2]


@pytest.mark.parametrize(
    "rho,x,z,R,Z",
    [(1.0, 0.0, 0.5, 0.0, 0.5), (1.0, 0.5, 0.0, 0.5, 0.0), (2.0, 0.5, 0.5, 20 / 17, 12 / 17)],
)
def test_ball_chart_map_examples(rho, x, z, R, Z):
    assert np.allclose(moebius_to_cylindrical(x, z, rho), (R, Z), atol=1e-15)
    assert np.allclose(_ambient_rz(rho, x, z), (R, Z), atol=1e-14)


def test_ball_chart_invariants(rng):
    rho = 0.3
    chart, jet = ball_chart(rho)
    assert chart.L0 == pytest.approx(2 * rho, abs=1e-15)
    s = rng.uniform(0, chart.L0, 200)
    r = chart.delta * np.sqrt(rng.uniform(0, 1, 200))
    a = rng.uniform(0, 2 * np.pi, 200)
    u = np.stack([r * np.cos(a), r * np.sin(a)], -1)
    g = chart.metric(u, s)
    assert np.max(np.abs(g[:, 0, 2])) <= 1e-12 and np.max(np.abs(g[:, 1, 2])) <= 1e-12
    assert np.allclose(g, np.swapaxes(g, 1, 2))
    assert np.all(np.linalg.eigvalsh(g[:, :2, :2]) > 0)
    g_axis = chart.g33(np.zeros((200, 2)), s)
    assert np.max(np.abs(g_axis - 1)) <= 1e-10
    assert np.all(np.linalg.eigvalsh(jet.g_perp_axis(s)) > 0)


def test_nonpositive_rho_is_domain_error():
    with pytest.raises(DomainError):
        ball_chart(0.0)
    with pytest.raises(DomainError):
        BallGeometry(-1.0)


def test_pullback_matches_metric(rng):
    rho = 0.7
    chart, _ = ball_chart(rho)
    h = 1e-6
    for _ in range(100):
        s = rng.uniform(0.02, chart.L0 - 0.02)
        u = rng.uniform(-0.35, 0.35, 2)
        cols = []
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            cols.append((chart.chart_map(u + e, s) - chart.chart_map(u - e, s)) / (2 * h))
        cols.append((chart.chart_map(u, s + h) - chart.chart_map(u, s - h)) / (2 * h))
        J = np.stack(cols, -1)
        assert np.allclose(J.T @ J, chart.metric(u, s), atol=1e-8)
        assert np.allclose(chart.frame(u, s), J, atol=1e-8)


def test_axis_jet_matches_finite_differences(rng):
    rho = 0.2
    chart, jet = ball_chart(rho)
    fd_jet = axis_jet_from_chart(chart)
    s = np.linspace(0.01, chart.L0 - 0.01, 25)
    h = 1e-5
    for _ in range(5):
        d = rng.standard_normal(2)
        ud = np.broadcast_to(d, s.shape + (2,))
        fd = (chart.g33(h * ud, s) - chart.g33(-h * ud, s)) / (2 * h)
        assert np.allclose(jet.dg33(s) @ d, fd, atol=1e-8)
    assert np.allclose(jet.d2g33(s), fd_jet.d2g33(s), atol=1e-6 * np.max(np.abs(jet.d2g33(s))))
    assert np.allclose(jet.g_perp_axis(s), fd_jet.g_perp_axis(s), atol=1e-14)


def test_numeric_arclength_matches_exact_chart():
    rho = 0.4
    metric, cmap, zr = moebius_ball_raw(rho)
    num = reparametrize_by_arclength(metric, zr, 0.5, cmap, nodes=401)
    exact, _ = ball_chart(rho)
    assert num.L0 == pytest.approx(2 * rho, rel=1e-12)
    s = np.linspace(0, num.L0, 33)
    assert np.max(np.abs(num.g33(np.zeros((33, 2)), s) - 1)) <= 1e-10
    u = np.full((33, 2), 0.2)
    assert np.allclose(num.metric(u, s), exact.metric(u, s), rtol=1e-8, atol=1e-12)


def test_axis_length():
    for rho in (1.0, 0.1):
        chart, _ = ball_chart(rho)
        assert curve_length(SampledGraph.axis(chart, 11), chart) == pytest.approx(2 * rho, rel=1e-14)


def test_curve_outside_chart_names_node():
    chart, _ = ball_chart(1.0)
    u = np.zeros((11, 2))
    u[7, 0] = 0.6
    with pytest.raises(DomainError, match="node 7"):
        curve_length(SampledGraph(np.linspace(0, 2, 11), u), chart)


def test_length_refinement_order():
    chart, _ = ball_chart(1.0)

    def curve(n):
        return SampledGraph.from_function(
            lambda s: np.stack([0.2 * np.sin(np.pi * s / 2), 0.1 * np.cos(s)], -1), chart.L0, n
        )

    ref = curve_length(curve(8193), chart)
    errs = [abs(curve_length(curve(n), chart) - ref) for n in (33, 65, 129)]
    assert errs[0] / errs[1] >= 3 and errs[1] / errs[2] >= 3


def test_length_second_variation_examples():
    z = np.linspace(-1, 1, 4001)
    zero = np.zeros_like(z)
    assert length_second_variation_ball(zero, zero, 1.0, z) == 0.0
    ones = np.ones_like(z)
    assert length_second_variation_ball(ones, zero, 1.0, z, convention="taylor") == pytest.approx(-8 / 3, rel=1e-6)
    assert length_second_variation_ball(ones, zero, 1.0, z) == pytest.approx(-16 / 3, rel=1e-6)
    assert length_second_variation_ball(z, zero, 1.0, z, convention="taylor") == pytest.approx(4 / 5, rel=1e-6)
    with pytest.raises(ValueError):
        length_second_variation_ball(z, z[:-1], 1.0, z)


def test_length_second_variation_matches_chart_length():
    rho = 1.0
    chart, _ = ball_chart(rho)
    n = 2001
    s = np.linspace(0, chart.L0, n)
    m = s / rho - 1
    x = 1 - m * m
    th = 0.7 * m
    base = np.stack([x * np.cos(th), x * np.sin(th)], -1)
    t = 1e-3

    def L(tt):
        return curve_length(SampledGraph(s, tt * base), chart)

    fd = (L(t) - 2 * L(0.0) + L(-t)) / t**2
    closed = length_second_variation_ball(x, th, rho, m)
    assert fd == pytest.approx(closed, rel=1e-4)
