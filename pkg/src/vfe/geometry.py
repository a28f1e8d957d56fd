"""Tube coordinates around a reference curve, sampled graphs and curve lengths.

A chart is described in coordinates ``(u, z)`` where ``u = (u1, u2)`` is the
horizontal displacement from the axis and ``z`` runs along the axis in
arclength, so that ``g33(0, z) = 1`` and ``g13 = g23 = 0``.

The small ball of radius ``rho`` is the reference analytic geometry. Its
axis is a diameter and the chart is built from the Moebius coordinates

    R = rho x (1 + m^2) / (1 + x^2 m^2),   Z = rho m (1 - x^2) / (1 + x^2 m^2),

with ``m`` in (-1, 1) and ``x = |u|``. Arclength along the axis is
``s = rho (m + 1)``.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from .errors import DomainError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TubeChart:
    """Coordinate chart around a reference curve.

    Parameters
    ----------
    L0 : float
        Arclength of the axis.
    delta : float
        Tube radius; admissible displacements satisfy ``|u| < delta``.
    metric : callable
        ``metric(u, z) -> (..., 3, 3)`` with ``u`` of shape ``(..., 2)`` and
        ``z`` of shape ``(...)``.
    chart_map : callable, optional
        ``chart_map(u, z) -> (..., 3)`` ambient point.
    jacobian : callable, optional
        ``jacobian(u, z) -> (..., 3, 3)`` whose columns are the ambient
        derivatives along ``u1``, ``u2`` and ``z``. Falls back to central
        differences of ``chart_map``.
    complex_safe : bool
        True when ``metric``, ``chart_map`` and ``jacobian`` accept complex
        input analytically (enables complex-step derivatives).
    """

    L0: float
    delta: float
    metric: Callable
    chart_map: Optional[Callable] = None
    jacobian: Optional[Callable] = None
    complex_safe: bool = False
    name: str = "user"

    def g33(self, u, z):
        return self.metric(u, z)[..., 2, 2]

    def g_perp(self, u, z):
        return self.metric(u, z)[..., :2, :2]

    def frame(self, u, z, h=1e-6):
        """Ambient Jacobian of the chart, shape ``(..., 3, 3)``."""
        if self.jacobian is not None:
            return self.jacobian(u, z)
        if self.chart_map is None:
            raise DomainError(f"chart {self.name!r} has no chart_map")
        u = np.asarray(u, dtype=float)
        z = np.asarray(z, dtype=float)
        cols = []
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            cols.append((self.chart_map(u + e, z) - self.chart_map(u - e, z)) / (2 * h))
        cols.append((self.chart_map(u, z + h) - self.chart_map(u, z - h)) / (2 * h))
        return np.stack(cols, axis=-1)

    def check_inside(self, u, frac=1.0):
        """Raise DomainError naming the first node with ``|u| >= frac*delta``."""
        r = np.hypot(np.real(u[..., 0]), np.real(u[..., 1]))
        bad = np.flatnonzero(~(r < frac * self.delta))
        if bad.size:
            k = int(bad[0])
            raise DomainError(
                f"curve leaves the chart domain at node {k}: |u|={r.ravel()[k]:.6g} "
                f">= {frac * self.delta:.6g}"
            )


@dataclass(frozen=True)
class AxisJet:
    """Taylor data of the metric along the axis.

    Attributes
    ----------
    g_perp_axis : callable
        ``z -> (..., 2, 2)`` perpendicular metric on the axis.
    dg33 : callable
        ``z -> (..., 2)`` covector, ``(dg33)(u) = dg33(z) @ u``.
    d2g33 : callable
        ``z -> (..., 2, 2)`` symmetric matrix, ``(d2g33)(u, v) = u @ d2g33(z) @ v``.
    """

    g_perp_axis: Callable
    dg33: Callable
    d2g33: Callable

    def length_lagrangian(self, z, u):
        """Quadratic length correction ``(1/4) d2g33(u,u) - (1/8) dg33(u)^2``."""
        u = np.asarray(u)
        d1 = np.einsum("...i,...i->...", self.dg33(z), u)
        d2 = np.einsum("...i,...ij,...j->...", u, self.d2g33(z), u)
        return 0.25 * d2 - 0.125 * d1**2


@dataclass(frozen=True)
class BallGeometry:
    rho: float

    def __post_init__(self):
        if not (self.rho > 0):
            raise DomainError(f"ball radius must be positive, got {self.rho}")


@dataclass(frozen=True)
class SampledGraph:
    """Graph ``z -> Gamma0(z) + u(z)`` sampled on a grid.

    Parameters
    ----------
    z_nodes : (M,) array
        Strictly increasing, from 0 to L0.
    u_values : (M, 2) array
        Displacements at the nodes.
    """

    z_nodes: np.ndarray
    u_values: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z_nodes, dtype=float)
        u = np.asarray(self.u_values)
        if not np.iscomplexobj(u):
            u = u.astype(float)
        if z.ndim != 1 or z.size < 2:
            raise ValueError("z_nodes must be a 1-D array with at least 2 nodes")
        if u.shape != (z.size, 2):
            raise ValueError(f"u_values must have shape ({z.size}, 2), got {u.shape}")
        if np.any(np.diff(z) <= 0):
            raise ValueError("z_nodes must be strictly increasing")
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(u))):
            raise ValueError("non-finite values in sampled graph")
        object.__setattr__(self, "z_nodes", z)
        object.__setattr__(self, "u_values", u)

    @property
    def M(self):
        return self.z_nodes.size

    def scaled(self, t):
        return SampledGraph(self.z_nodes, t * self.u_values)

    @classmethod
    def axis(cls, chart, n):
        """The axis itself (u = 0) on a uniform grid of ``n`` nodes."""
        return cls(np.linspace(0.0, chart.L0, n), np.zeros((n, 2)))

    @classmethod
    def from_function(cls, func, L0, n):
        """Sample ``func(z) -> (n, 2)`` on a uniform grid of ``n`` nodes."""
        z = np.linspace(0.0, L0, n)
        return cls(z, np.asarray(func(z), dtype=float).reshape(n, 2))


def element_samples(z, u):
    """Per-element trapezoid samples of a piecewise-linear graph.

    Each element contributes its two endpoints with weight ``h_e / 2`` and
    the element slope.

    Returns
    -------
    zk, uk, vk, wk : arrays
        Node coordinate, nodal displacement, element slope and weight for
        the ``2(M-1)`` samples.
    node, elem : int arrays
        Node and element index of every sample.
    h : (M-1,) array
        Element lengths.
    """
    z = np.asarray(z)
    h = np.diff(z)
    v = np.diff(u, axis=0) / h[:, None]
    M = z.size
    left = np.arange(M - 1)
    node = np.concatenate([left, left + 1])
    elem = np.concatenate([left, left])
    return z[node], u[node], v[elem], 0.5 * h[elem], node, elem, h


def curve_length(curve, chart, ell=1.0):
    """Length of a sampled graph in the chart metric.

    Parameters
    ----------
    curve : SampledGraph
    chart : TubeChart
    ell : float
        Horizontal blow-up scale; the perpendicular metric is divided by
        ``ell**2`` (``ell = 1`` is the plain length).

    Returns
    -------
    float
        Trapezoid quadrature of ``sqrt(g33 + |u'|^2_g / ell^2)``.
    """
    chart.check_inside(curve.u_values)
    zk, uk, vk, wk, _, _, _ = element_samples(curve.z_nodes, curve.u_values)
    return float(np.sum(wk * length_density(chart, zk, uk, vk, ell)))


def length_density(chart, zk, uk, vk, ell=1.0):
    g = chart.metric(uk, zk)
    gp = g[..., :2, :2]
    quad_form = np.einsum("...i,...ij,...j->...", vk, gp, vk)
    return np.sqrt(g[..., 2, 2] + quad_form / ell**2)


def _ball_pieces(u, s, rho):
    m = s / rho - 1.0
    u1 = u[..., 0]
    u2 = u[..., 1]
    a = u1 * u1 + u2 * u2
    q = 1.0 + a * m * m
    return m, u1, u2, a, q


def _ball_metric(rho):
    def metric(u, s):
        u = np.asarray(u)
        m, _, _, a, q = _ball_pieces(u, np.asarray(s), rho)
        gp = (rho * (1 + m * m) / q) ** 2
        g33 = ((1 - a) / q) ** 2
        out = np.zeros(np.broadcast(a, m).shape + (3, 3), dtype=np.result_type(a, m))
        out[..., 0, 0] = gp
        out[..., 1, 1] = gp
        out[..., 2, 2] = g33
        return out

    return metric


def _ball_map(rho):
    def chart_map(u, s):
        u = np.asarray(u)
        m, u1, u2, a, q = _ball_pieces(u, np.asarray(s), rho)
        F = rho * (1 + m * m) / q
        return np.stack([F * u1, F * u2, rho * m * (1 - a) / q], axis=-1)

    return chart_map


def _ball_jacobian(rho):
    def jac(u, s):
        u = np.asarray(u)
        m, u1, u2, a, q = _ball_pieces(u, np.asarray(s), rho)
        q2 = q * q
        F = rho * (1 + m * m) / q
        dF = -2 * rho * (1 + m * m) * m * m / q2
        dZ = -2 * rho * m * (1 + m * m) / q2
        Fm = 2 * rho * m * (1 - a) / q2
        Zm = rho * (1 - a) * (1 - a * m * m) / q2
        out = np.empty(np.broadcast(a, m).shape + (3, 3), dtype=np.result_type(a, m))
        out[..., 0, 0] = F + dF * u1 * u1
        out[..., 0, 1] = dF * u1 * u2
        out[..., 1, 0] = dF * u2 * u1
        out[..., 1, 1] = F + dF * u2 * u2
        out[..., 2, 0] = dZ * u1
        out[..., 2, 1] = dZ * u2
        # d/ds = (1/rho) d/dm
        out[..., 0, 2] = Fm * u1 / rho
        out[..., 1, 2] = Fm * u2 / rho
        out[..., 2, 2] = Zm / rho
        return out

    return jac


def moebius_to_cylindrical(x, m, rho):
    """Ball Moebius coordinates ``(x, m)`` to meridian coordinates ``(R, Z)``."""
    x = np.asarray(x, dtype=float)
    m = np.asarray(m, dtype=float)
    q = 1 + x * x * m * m
    return rho * x * (1 + m * m) / q, rho * m * (1 - x * x) / q


def ball_axis_jet(rho):
    """Closed-form axis data of the ball chart."""

    def g_perp_axis(s):
        m = np.asarray(s) / rho - 1
        gp = (rho * (1 + m * m)) ** 2
        return gp[..., None, None] * np.eye(2)

    def dg33(s):
        return np.zeros(np.shape(s) + (2,))

    def d2g33(s):
        m = np.asarray(s) / rho - 1
        return (-4 * (1 + m * m))[..., None, None] * np.eye(2)

    return AxisJet(g_perp_axis, dg33, d2g33)


def ball_chart(rho, delta=0.5):
    """Arclength tube chart of the ball around its vertical diameter.

    Parameters
    ----------
    rho : float
        Ball radius.
    delta : float
        Tube radius in Moebius units, must lie in (0, 1).

    Returns
    -------
    chart : TubeChart
    jet : AxisJet
    """
    if not (rho > 0):
        raise DomainError(f"ball radius must be positive, got {rho}")
    if not (0 < delta < 1):
        raise DomainError(f"ball tube radius must lie in (0, 1), got {delta}")
    chart = TubeChart(
        L0=2.0 * rho,
        delta=delta,
        metric=_ball_metric(rho),
        chart_map=_ball_map(rho),
        jacobian=_ball_jacobian(rho),
        complex_safe=True,
        name=f"ball(rho={rho:g})",
    )
    return chart, ball_axis_jet(rho)


def moebius_ball_raw(rho):
    """Ball chart in the raw Moebius axis variable ``m`` (not arclength).

    Returns ``(metric, chart_map, m_range)``; used to exercise
    :func:`reparametrize_by_arclength`.
    """
    amb = _ball_map(rho)
    met = _ball_metric(rho)

    def chart_map(u, m):
        return amb(u, rho * (np.asarray(m) + 1))

    def metric(u, m):
        g = met(u, rho * (np.asarray(m) + 1)).copy()
        g[..., 2, 2] *= rho * rho
        return g

    return metric, chart_map, (-1.0, 1.0)


def reparametrize_by_arclength(metric, z_range, delta, chart_map=None, nodes=2001, name="user"):
    """Turn a chart with a non-unit-speed axis into an arclength chart.

    The axis speed ``sigma(z) = sqrt(g_zz(0, z))`` is integrated by adaptive
    quadrature on a grid, the map ``z -> s`` is inverted by monotone cubic
    interpolation, and the new axis derivative uses ``dz/ds = 1/sigma``.

    Parameters
    ----------
    metric : callable
        ``metric(u, z)`` in the raw axis variable.
    z_range : tuple
        ``(z_a, z_b)`` endpoints of the raw axis variable.
    delta : float
        Tube radius.
    chart_map : callable, optional
        Raw ambient map.
    nodes : int
        Grid used for the cumulative quadrature.

    Returns
    -------
    TubeChart
    """
    za, zb = z_range
    zg = np.linspace(za, zb, nodes)

    def speed(z):
        return float(np.sqrt(metric(np.zeros(2), np.asarray(z))[2, 2]))

    pieces = [quad(speed, zg[i], zg[i + 1], epsabs=1e-15, epsrel=1e-13)[0] for i in range(nodes - 1)]
    sg = np.concatenate([[0.0], np.cumsum(pieces)])
    L0 = float(sg[-1])
    z_of_s = PchipInterpolator(sg, zg)
    log.debug("arclength reparametrization: L0=%.15g over %d nodes", L0, nodes)

    def _z(s):
        return z_of_s(np.clip(np.asarray(s, dtype=float), 0.0, L0))

    def new_metric(u, s):
        z = _z(s)
        g = np.array(metric(u, z), copy=True)
        sig = np.sqrt(metric(np.zeros(np.shape(z) + (2,)), z)[..., 2, 2])
        g[..., 2, 2] = g[..., 2, 2] / sig**2
        return g

    new_map = None
    if chart_map is not None:

        def new_map(u, s):
            return chart_map(u, _z(s))

    return TubeChart(L0=L0, delta=delta, metric=new_metric, chart_map=new_map, name=name)


def _second_directional(f, w, h):
    # 5-point stencil for d^2/dt^2 f(t w) at t = 0
    return (-f(2 * h * w) + 16 * f(h * w) - 30 * f(0 * w) + 16 * f(-h * w) - f(-2 * h * w)) / (12 * h * h)


def axis_jet_from_chart(chart, h1=1e-5, h2=1e-3):
    """Axis data by central differences of the chart metric.

    First derivatives use step ``h1``; second derivatives use a 5-point
    stencil with step ``h2`` and polarization for the mixed entry.
    """

    def g_perp_axis(z):
        z = np.asarray(z, dtype=float)
        return chart.g_perp(np.zeros(z.shape + (2,)), z)

    def _g33_along(z):
        z = np.asarray(z, dtype=float)

        def f(w):
            return chart.g33(np.broadcast_to(w, z.shape + (2,)), z)

        return f

    def dg33(z):
        f = _g33_along(z)
        cols = []
        for i in range(2):
            e = np.zeros(2)
            e[i] = 1.0
            cols.append((f(h1 * e) - f(-h1 * e)) / (2 * h1))
        return np.stack(cols, axis=-1)

    def d2g33(z):
        f = _g33_along(z)
        e1 = np.array([1.0, 0.0])
        e2 = np.array([0.0, 1.0])
        a11 = _second_directional(f, e1, h2)
        a22 = _second_directional(f, e2, h2)
        a12 = (_second_directional(f, e1 + e2, h2) - _second_directional(f, e1 - e2, h2)) / 4
        return np.stack([np.stack([a11, a12], -1), np.stack([a12, a22], -1)], -2)

    return AxisJet(g_perp_axis, dg33, d2g33)


def length_second_variation_ball(x_path, theta_path, rho, z=None, convention="derivative"):
    """Second variation of the ball length along ``u = t x (cos theta, sin theta)``.

    Parameters
    ----------
    x_path, theta_path : array
        Radial and angular profiles sampled on the Moebius grid ``z``.
    rho : float
        Ball radius.
    z : array, optional
        Grid in (-1, 1); uniform on [-1, 1] by default.
    convention : {"derivative", "taylor"}
        ``"derivative"`` returns d^2/dt^2 |Gamma_t| at t=0,
        ``rho * int (1+z^2)^2 (x'^2 + x^2 theta'^2) - 2 x^2 (1+z^2) dz``.
        ``"taylor"`` returns the t^2 coefficient (half of it).

    Returns
    -------
    float
    """
    x = np.asarray(x_path, dtype=float)
    th = np.asarray(theta_path, dtype=float)
    if z is None:
        z = np.linspace(-1.0, 1.0, x.size)
    z = np.asarray(z, dtype=float)
    if x.shape != th.shape or x.shape != z.shape:
        raise ValueError(f"mismatched grids: x{x.shape}, theta{th.shape}, z{z.shape}")
    val = rho * _ball_polar_integrals(x, th, z, kinetic=1.0, lin=-2.0, quart=0.0)
    if convention == "derivative":
        return val
    if convention == "taylor":
        return 0.5 * val
    raise ValueError(f"unknown convention {convention!r}")


def _ball_polar_integrals(x, th, z, kinetic, lin, quart):
    # per-element trapezoid of
    #   kinetic*(1+z^2)^2 (x'^2 + x^2 th'^2) + lin*x^2 (1+z^2) + quart*x^2 (1+z^2)^2
    h = np.diff(z)
    xp = np.diff(x) / h
    tp = np.diff(th) / h
    tot = 0.0
    for sl in (slice(0, -1), slice(1, None)):
        zz = z[sl]
        xx = x[sl]
        w = (1 + zz * zz)
        f = kinetic * w * w * (xp * xp + xx * xx * tp * tp) + lin * xx * xx * w + quart * xx * xx * w * w
        tot += np.sum(0.5 * h * f)
    return float(tot)
