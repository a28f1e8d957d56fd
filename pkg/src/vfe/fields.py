"""Magnetic-field data: Meissner curl of the ball, flux functionals,
Biot-Savart fields of closed curves and the C_Omega estimator."""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .errors import ConvergenceError, DomainError, SingularityError
from .geometry import BallGeometry, element_samples

log = logging.getLogger(__name__)

# (cosh r - sinh r / r) / r^2 = sum_k 2k r^(2k-2) / (2k+1)!
_SERIES = np.array([2 * k / float(np.prod(np.arange(1, 2 * k + 2))) for k in range(1, 10)])


def _core(r):
    """``(cosh r - sinh r / r) / r^2``, complex-safe, series near 0."""
    r = np.asarray(r)
    small = np.abs(np.real(r)) < 0.5
    r2 = r * r
    ser = np.zeros_like(r2)
    for c in _SERIES[::-1]:
        ser = ser * r2 + c
    rs = np.where(small, 1.0, r)
    direct = (np.cosh(rs) - np.sinh(rs) / rs) / (rs * rs)
    return np.where(small, ser, direct)


def ball_curl(points, rho):
    """Ambient curl of the Meissner field in the ball of radius ``rho``.

    Parameters
    ----------
    points : (..., 3) array
    rho : float

    Returns
    -------
    (..., 3) array
        ``kappa(r) * (-Y, X, 0)`` with
        ``kappa(r) = 3 rho / (2 sinh rho) * (cosh r - sinh r / r) / r^2``.
    """
    p = np.asarray(points)
    X, Y, Z = p[..., 0], p[..., 1], p[..., 2]
    r = np.sqrt(X * X + Y * Y + Z * Z)
    k = 1.5 * rho / np.sinh(rho) * _core(r)
    return np.stack([-k * Y, k * X, 0 * k], axis=-1)


def ball_meissner_curl(rho, r, phi):
    """Azimuthal component of curl B0 in the ball at radius ``r``, polar angle ``phi``.

    Returns ``(3 rho / (2 sinh rho)) (cosh r - sinh r / r) sin(phi) / r``;
    the removable singularity at ``r = 0`` is handled by a power series.
    """
    r = np.asarray(r, dtype=float)
    if not (rho > 0):
        raise DomainError(f"ball radius must be positive, got {rho}")
    if np.any(r < 0) or np.any(r > rho * (1 + 1e-12)):
        raise DomainError(f"radius must lie in [0, rho={rho}]")
    val = 1.5 * rho / np.sinh(rho) * _core(r) * r * np.sin(phi)
    return val if val.ndim else float(val)


def flux_gamma0_ball(rho):
    """Flux of curl B0 through the meridian half-disk of the ball.

    Nested adaptive quadrature over ``0 <= r <= rho``, ``0 <= phi <= pi`` of
    ``curl B0 . e_theta`` with area element ``r dr dphi``.
    """
    if not (rho > 0):
        raise DomainError(f"ball radius must be positive, got {rho}")
    pref = 1.5 * rho / np.sinh(rho)
    scale = rho**3
    val, err = integrate.dblquad(
        lambda phi, r: pref * float(_core(r)) * r * r * np.sin(phi),
        0.0,
        rho,
        0.0,
        np.pi,
        epsabs=1e-13 * scale,
        epsrel=1e-13,
    )
    log.debug("flux_gamma0_ball(rho=%g) = %.16g (+- %.2g)", rho, val, err)
    return float(val)


@dataclass(frozen=True)
class FieldJet:
    """Axis data of the 2-form dB0 in tube coordinates.

    Attributes
    ----------
    dB0_u_e3 : callable
        ``z -> (..., 2)``; ``dB0(u, e3) = dB0_u_e3(z) @ u``.
    dB0_uv : callable
        ``z -> (...)``; ``dB0(u, v) = dB0_uv(z) * (u1 v2 - u2 v1)``.
    ddB0_u_e3 : callable
        ``z -> (..., 2, 2)`` matrix P with ``(d_a dB0)(b, e3) = a @ P @ b``.
    """

    dB0_u_e3: Callable
    dB0_uv: Callable
    ddB0_u_e3: Callable

    def shifted(self, c):
        """Copy with a constant covector added to ``dB0_u_e3``."""
        c = np.asarray(c, dtype=float)
        f = self.dB0_u_e3
        return FieldJet(lambda z: f(z) + c, self.dB0_uv, self.ddB0_u_e3)

    def scaled(self, factor):
        """Copy with the whole 2-form multiplied by ``factor``."""
        a, b, c = self.dB0_u_e3, self.dB0_uv, self.ddB0_u_e3
        return FieldJet(lambda z: factor * a(z), lambda z: factor * b(z), lambda z: factor * c(z))


def ball_field_jet(rho):
    """Closed-form FieldJet of the ball: only the radial second-order term survives."""

    def zero_cov(s):
        return np.zeros(np.shape(s) + (2,))

    def zero(s):
        return np.zeros(np.shape(s))

    def dd(s):
        m = np.asarray(s, dtype=float) / rho - 1
        k = 1.5 * rho / np.sinh(rho) * _core(rho * np.abs(m))
        return (-k * (rho * (1 + m * m)) ** 2)[..., None, None] * np.eye(2)

    return FieldJet(zero_cov, zero, dd)


def two_form(chart, curl, u, z, a, b):
    """Evaluate ``dB0`` at chart point ``(u, z)`` on chart vectors ``a, b`` (each ``(..., 3)``)."""
    J = chart.frame(u, z)
    Ja = np.einsum("...ij,...j->...i", J, a)
    Jb = np.einsum("...ij,...j->...i", J, b)
    c = curl(chart.chart_map(u, z))
    return np.einsum("...i,...i->...", c, np.cross(Ja, Jb))


def field_jet_from_curl(chart, curl, h=1e-5):
    """FieldJet by pulling back an ambient curl through the chart.

    ``dB0`` values on the axis are evaluated directly; the derivative
    in ``u`` uses central differences with step ``h``.
    """

    def _vecs(z, u2d):
        z = np.asarray(z, dtype=float)
        u = np.broadcast_to(np.asarray(u2d, dtype=float), z.shape + (2,))
        return z, u

    e = [np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0])]

    def dB0_u_e3(z):
        z, u0 = _vecs(z, np.zeros(2))
        return np.stack([two_form(chart, curl, u0, z, e[i], e[2]) for i in range(2)], -1)

    def dB0_uv(z):
        z, u0 = _vecs(z, np.zeros(2))
        return two_form(chart, curl, u0, z, e[0], e[1])

    def ddB0_u_e3(z):
        rows = []
        for a in range(2):
            z_, up = _vecs(z, h * e[a][:2])
            _, um = _vecs(z, -h * e[a][:2])
            rows.append(
                np.stack(
                    [
                        (two_form(chart, curl, up, z_, e[b], e[2]) - two_form(chart, curl, um, z_, e[b], e[2]))
                        / (2 * h)
                        for b in range(2)
                    ],
                    -1,
                )
            )
        return np.stack(rows, -2)

    return FieldJet(dB0_u_e3, dB0_uv, ddB0_u_e3)


_GL_CACHE = {}


def gauss01(n):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    if n not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = (0.5 * (x + 1), 0.5 * w)
    return _GL_CACHE[n]


def flux_density(chart, curl, zk, uk, vk, s):
    """``dB0`` at ``(s u, z)`` on ``(u, e3 + s u')`` for samples ``(zk, uk, vk)``."""
    zero = np.zeros(np.shape(zk))
    a = np.stack([uk[..., 0], uk[..., 1], zero], -1)
    b = np.stack([s * vk[..., 0], s * vk[..., 1], zero + 1.0], -1)
    return two_form(chart, curl, s * uk, zk, a, b)


def flux_difference(curve, chart, curl, n_s=4):
    """Flux change ``<B0, Gamma> - <B0, Gamma0>`` by Stokes over the swept surface.

    The surface ``(s, z) -> Gamma0(z) + s u(z)``, ``s`` in [0, 1], is
    integrated with Gauss-Legendre in ``s`` and per-element trapezoid in ``z``.

    Parameters
    ----------
    curve : SampledGraph
    chart : TubeChart
        Must provide ``chart_map``.
    curl : callable
        Ambient ``curl B0``, ``(..., 3) -> (..., 3)``.
    n_s : int
        Gauss nodes across the surface.
    """
    chart.check_inside(curve.u_values)
    zk, uk, vk, wk, _, _, _ = element_samples(curve.z_nodes, curve.u_values)
    sq, ws = gauss01(n_s)
    total = 0.0
    for s, w in zip(sq, ws):
        total += w * np.sum(wk * flux_density(chart, curl, zk, uk, vk, s))
    return float(total)


# ---------------------------------------------------------------- Biot-Savart


@dataclass(frozen=True)
class ClosedCurve3D:
    """Closed curve in R^3, as a polyline or a periodic parametrization.

    Parameters
    ----------
    points : (n, 3) array, optional
        Polyline vertices; the closing segment back to the first vertex is implicit.
    param, dparam : callable, optional
        ``t -> (..., 3)`` position and velocity, periodic with ``period``.
    n_quad : int
        Trapezoid nodes for the parametric form (spectrally accurate).
    """

    points: Optional[np.ndarray] = None
    param: Optional[Callable] = None
    dparam: Optional[Callable] = None
    period: float = 2 * np.pi
    n_quad: int = 1024

    def __post_init__(self):
        if self.points is None:
            if self.param is None or self.dparam is None:
                raise ValueError("need either points or (param, dparam)")
            return
        P = np.asarray(self.points, dtype=float)
        if P.ndim != 2 or P.shape[1] != 3 or P.shape[0] < 3:
            raise ValueError("polyline needs at least 3 vertices in R^3")
        seg = np.roll(P, -1, axis=0) - P
        if np.any(np.linalg.norm(seg, axis=1) == 0):
            raise ValueError("consecutive vertices must be distinct")
        object.__setattr__(self, "points", P)

    @property
    def is_polyline(self):
        return self.points is not None

    def nodes(self):
        """Quadrature nodes, velocities and weights for the parametric form."""
        t = np.arange(self.n_quad) * (self.period / self.n_quad)
        return self.param(t), self.dparam(t), self.period / self.n_quad

    def segments(self):
        P = self.points
        return P, np.roll(P, -1, axis=0)

    def sample(self, n=4096):
        """Dense points along the curve."""
        if self.is_polyline:
            a, b = self.segments()
            k = max(1, n // len(a))
            t = np.arange(k) / k
            return (a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]).reshape(-1, 3)
        t = np.arange(n) * (self.period / n)
        return self.param(t)


def circle(radius=1.0, center=(0.0, 0.0, 0.0), n_quad=1024):
    """Parametric circle in a horizontal plane."""
    c = np.asarray(center, dtype=float)

    def param(t):
        t = np.asarray(t)
        return c + radius * np.stack([np.cos(t), np.sin(t), 0 * t], -1)

    def dparam(t):
        t = np.asarray(t)
        return radius * np.stack([-np.sin(t), np.cos(t), 0 * t], -1)

    return ClosedCurve3D(param=param, dparam=dparam, n_quad=n_quad)


def _segment_distance(p, a, b):
    # p (P,3), a,b (S,3) -> distances (P,S), parameter t (P,S)
    L = b - a
    LL = np.einsum("si,si->s", L, L)
    ap = p[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("psi,si->ps", ap, L) / LL, 0.0, 1.0)
    d = ap - t[..., None] * L[None]
    return np.sqrt(np.einsum("psi,psi->ps", d, d)), t


def distance_to_curve(curve, p, chunk=2048):
    p = np.atleast_2d(np.asarray(p, dtype=float))
    if curve.is_polyline:
        a, b = curve.segments()
        out = np.empty(len(p))
        for i in range(0, len(p), chunk):
            out[i : i + chunk] = _segment_distance(p[i : i + chunk], a, b)[0].min(axis=1)
        return out
    q = curve.sample(8 * curve.n_quad)
    out = np.empty(len(p))
    for i in range(0, len(p), chunk):
        d = p[i : i + chunk, None, :] - q[None]
        out[i : i + chunk] = np.sqrt(np.einsum("psi,psi->ps", d, d)).min(axis=1)
    return out


def _bs_polyline(p, a, b):
    r1 = a[None] - p[:, None]
    r2 = b[None] - p[:, None]
    L = (b - a)[None]
    c = np.cross(r1, L)
    c2 = np.einsum("psi,psi->ps", c, c)
    n1 = np.sqrt(np.einsum("psi,psi->ps", r1, r1))
    n2 = np.sqrt(np.einsum("psi,psi->ps", r2, r2))
    coef = np.einsum("psi,psi->ps", L, r2) / n2 - np.einsum("psi,psi->ps", L, r1) / n1
    ok = c2 > 1e-300
    coef = np.where(ok, 0.5 * coef / np.where(ok, c2, 1.0), 0.0)
    return np.einsum("ps,psi->pi", coef, c)


def _bs_param(p, g, dg, w):
    d = g[None] - p[:, None]
    r3 = np.einsum("psi,psi->ps", d, d) ** 1.5
    return 0.5 * w * np.einsum("ps,psi->pi", 1.0 / r3, np.cross(d, dg[None]))


def biot_savart_eval(curve, p, chunk=1024, check=True):
    """Biot-Savart field ``X(p) = 1/2 int (G - p)/|G - p|^3 x G' dt``.

    Polylines are integrated exactly segment by segment; parametric curves
    by the periodic trapezoid rule.

    Parameters
    ----------
    curve : ClosedCurve3D
    p : (..., 3) array
    check : bool
        Raise SingularityError when a point is within 1e-12 of the curve.

    Returns
    -------
    (..., 3) array
    """
    p = np.asarray(p, dtype=float)
    shape = p.shape
    pts = p.reshape(-1, 3)
    if check:
        d = distance_to_curve(curve, pts)
        if np.any(d <= 1e-12):
            k = int(np.argmin(d))
            raise SingularityError(f"evaluation point {pts[k]} lies on the curve")
    out = np.empty_like(pts)
    if curve.is_polyline:
        a, b = curve.segments()
        for i in range(0, len(pts), chunk):
            out[i : i + chunk] = _bs_polyline(pts[i : i + chunk], a, b)
    else:
        g, dg, w = curve.nodes()
        for i in range(0, len(pts), chunk):
            out[i : i + chunk] = _bs_param(pts[i : i + chunk], g, dg, w)
    return out.reshape(shape)


def nearest_point(curve, p):
    """Closest curve point and unit tangent there.

    Raises
    ------
    DomainError
        If two well-separated curve points are (numerically) equally close.
    """
    p = np.asarray(p, dtype=float)
    if curve.is_polyline:
        a, b = curve.segments()
        d, t = _segment_distance(p[None], a, b)
        d, t = d[0], t[0]
        dmin = d.min()
        cand = np.flatnonzero(d <= dmin * (1 + 1e-9) + 1e-14)
        q = a[cand] + t[cand, None] * (b - a)[cand]
        if np.max(np.linalg.norm(q - q[0], axis=1)) > 1e-9 * max(1.0, dmin):
            raise DomainError(f"nearest-point projection of {p} is not unique")
        tang = b[cand] - a[cand]
        tang = (tang / np.linalg.norm(tang, axis=1, keepdims=True)).sum(axis=0)
        return q[0], tang / np.linalg.norm(tang)

    n = 8 * curve.n_quad
    T = curve.period
    t = np.arange(n) * (T / n)
    g = curve.param(t)
    dist = np.linalg.norm(g - p, axis=1)
    loc = np.flatnonzero((dist <= np.roll(dist, 1)) & (dist <= np.roll(dist, -1)))
    dmin = dist[loc].min()
    best = []
    for k in loc:
        res = optimize.minimize_scalar(
            lambda s: np.linalg.norm(curve.param(np.array(s)) - p),
            bounds=(t[k] - T / n, t[k] + T / n),
            method="bounded",
            options={"xatol": 1e-14 * T},
        )
        best.append((res.fun, res.x))
    best.sort()
    if len(best) > 1 and best[1][0] <= best[0][0] * (1 + 1e-9) + 1e-14:
        q0 = curve.param(np.array(best[0][1]))
        q1 = curve.param(np.array(best[1][1]))
        if np.linalg.norm(q0 - q1) > 1e-6 * max(dmin, 1e-12):
            raise DomainError(f"nearest-point projection of {p} is not unique")
    ts = best[0][1]
    tang = curve.dparam(np.array(ts))
    return curve.param(np.array(ts)), tang / np.linalg.norm(tang)


def biot_savart_nearfield(curve, p):
    """Leading singular part ``(pG - p)/|pG - p|^2 x tau(pG)`` of the Biot-Savart field."""
    p = np.asarray(p, dtype=float)
    q, tau = nearest_point(curve, p)
    d = q - p
    n2 = float(d @ d)
    if n2 <= 1e-24:
        raise SingularityError(f"point {p} lies on the curve")
    return np.cross(d / n2, tau)


def circulation(field_fn, loop_param, loop_dparam, n=256):
    """Line integral of ``field_fn`` around a periodic loop by the trapezoid rule."""
    t = np.arange(n) * (2 * np.pi / n)
    return float(np.sum(np.einsum("ni,ni->n", field_fn(loop_param(t)), loop_dparam(t))) * (2 * np.pi / n))


# ---------------------------------------------------------------- C_Omega


def diameter_with_arc(rho_ball=1.0, arc_radius=2.0, n_arc=256):
    """Vertical diameter of the ball closed outside it by a half circle in the xz-plane.

    The straight part runs from ``(0,0,-arc_radius)`` to ``(0,0,arc_radius)``
    as a single exact segment.
    """
    if arc_radius <= rho_ball:
        raise DomainError("closing arc must stay outside the ball")
    t = np.linspace(0.0, np.pi, n_arc + 1)[1:-1]
    arc = np.stack([arc_radius * np.sin(t), 0 * t, arc_radius * np.cos(t)], -1)
    pts = np.vstack([[0.0, 0.0, -arc_radius], [0.0, 0.0, arc_radius], arc])
    return ClosedCurve3D(points=pts)


@dataclass
class COmegaEstimate:
    value: float
    rho: np.ndarray
    energy: np.ndarray
    counterterm: np.ndarray
    sums: np.ndarray
    order: float
    converged: bool
    notes: list = field(default_factory=list)

    def rows(self):
        return [
            (float(r), float(e), float(c), float(s))
            for r, e, c, s in zip(self.rho, self.energy, self.counterterm, self.sums)
        ]


def _ball_energy_outside_tube(curve, rho_b, rho_cut, n_log, n_outer, n_z, n_theta, split=0.5):
    Rm = split * rho_b
    th = np.arange(n_theta) * (2 * np.pi / n_theta)
    xg, wg = gauss01(n_z)

    def shell(R, wR):
        # wR already carries dR; volume element R dR dtheta dZ
        total = 0.0
        for Ri, wi in zip(R, wR):
            zmax = np.sqrt(max(rho_b * rho_b - Ri * Ri, 0.0))
            Z = -zmax + 2 * zmax * xg
            wz = 2 * zmax * wg
            P = np.stack(
                [
                    np.broadcast_to(Ri * np.cos(th)[:, None], (n_theta, n_z)),
                    np.broadcast_to(Ri * np.sin(th)[:, None], (n_theta, n_z)),
                    np.broadcast_to(Z[None, :], (n_theta, n_z)),
                ],
                -1,
            ).reshape(-1, 3)
            X = biot_savart_eval(curve, P, check=False)
            f = np.einsum("pi,pi->p", X, X).reshape(n_theta, n_z)
            total += wi * Ri * (2 * np.pi / n_theta) * float(np.sum(f.sum(axis=0) * wz))
        return total

    xs, ws = gauss01(n_log)
    a, b = np.log(rho_cut), np.log(Rm)
    R1 = np.exp(a + (b - a) * xs)
    w1 = (b - a) * ws * R1
    x2, w2 = gauss01(n_outer)
    al0 = np.arcsin(split)
    al = al0 + (np.pi / 2 - al0) * x2
    R2 = rho_b * np.sin(al)
    wR2 = (np.pi / 2 - al0) * w2 * rho_b * np.cos(al)
    return 0.5 * (shell(R1, w1) + shell(R2, wR2))


def c_omega_estimate(
    geometry=None,
    curve=None,
    rho_cuts=(0.2, 0.1, 0.05),
    multiplicity=1,
    n_log=32,
    n_outer=16,
    n_z=32,
    n_theta=24,
    strict=True,
):
    """Approximate C_Omega for the ball with the vertical diameter as Gamma0.

    Evaluates ``S(rho) = 1/2 int_{ball, R > rho} |X|^2 + pi L0 log(rho)``
    for each cut radius, with ``X`` the Biot-Savart field of ``curve``, and
    extrapolates ``rho -> 0`` by Richardson with the observed order. The
    induced-field and gauge corrections of the exact constant are omitted.

    Parameters
    ----------
    geometry : BallGeometry, optional
        Defaults to the unit ball.
    curve : ClosedCurve3D, optional
        Closed curve containing the vertical diameter; defaults to
        :func:`diameter_with_arc`.
    rho_cuts : sequence of float
        Strictly decreasing, at least three values, geometric ratio.
    multiplicity : int
        The field is multiplied by this integer; energy and counterterm scale
        by its square.
    strict : bool
        Raise ConvergenceError when successive differences do not decrease.

    Returns
    -------
    COmegaEstimate
    """
    geometry = geometry or BallGeometry(1.0)
    rb = geometry.rho
    curve = curve or diameter_with_arc(rb, 2 * rb)
    rc = np.asarray(rho_cuts, dtype=float)
    if rc.size < 3 or np.any(np.diff(rc) >= 0) or rc[-1] <= 0 or rc[0] >= 0.5 * rb:
        raise DomainError("rho_cuts must be >= 3 strictly decreasing values in (0, rho_ball/2)")
    L0 = 2 * rb
    m2 = float(multiplicity) ** 2
    energy = np.array(
        [m2 * _ball_energy_outside_tube(curve, rb, r, n_log, n_outer, n_z, n_theta) for r in rc]
    )
    counter = m2 * np.pi * L0 * np.log(rc)
    sums = energy + counter
    diffs = np.abs(np.diff(sums))
    converged = bool(np.all(diffs[1:] < diffs[:-1]))
    ratio = rc[-2] / rc[-1]
    d1, d2 = sums[-2] - sums[-3], sums[-1] - sums[-2]
    notes = []
    if d1 != 0 and d2 != 0 and d2 / d1 > 0 and abs(d2) < abs(d1):
        order = float(np.log(abs(d1 / d2)) / np.log(ratio))
        value = float(sums[-1] + d2 / (ratio**order - 1))
    else:
        order = float("nan")
        value = float(sums[-1])
        notes.append("no Richardson step: differences not geometric")
    for r, e, s in zip(rc, energy, sums):
        log.info("C_Omega: rho=%.4g energy=%.10g sum=%.10g", r, e, s)
    if not converged and strict:
        raise ConvergenceError(
            f"C_Omega sequence not Cauchy: successive differences {diffs.tolist()}",
            trace=list(zip(rc.tolist(), sums.tolist())),
        )
    return COmegaEstimate(value, rc, energy, counter, sums, order, converged, notes)
