"""Isoflux ratio, its second variation Q and related quantities.

The ratio of a graph ``Gamma = Gamma0 + u`` is flux over length,
``R(Gamma) = <B0, Gamma> / |Gamma|``. Around a critical axis its second
variation is ``-Q(u)`` with

    Q(u) = (2 R0 / L0) int  1/2 |u'|^2_{g.} + L_L(z, u) - L_B(z, u, u') / R0  dz,

    L_L = 1/4 d2g33(u, u) - 1/8 dg33(u)^2,
    L_B = 1/2 (dB0(u, u') + (d_u dB0)(u, e3)).
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from . import fields
from .errors import DomainError, VFEError
from .geometry import (
    SampledGraph,
    TubeChart,
    AxisJet,
    axis_jet_from_chart,
    ball_chart,
    curve_length,
    element_samples,
    length_density,
    _ball_polar_integrals,
)
from .optim import lbfgs

log = logging.getLogger(__name__)

_J = np.array([[0.0, 1.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class RatioContext:
    """Everything needed to evaluate the ratio near the axis.

    Parameters
    ----------
    chart : TubeChart
    axis_jet : AxisJet
    field_jet : FieldJet
    flux0 : float
        Flux through the axis.
    curl : callable
        Ambient curl of B0.
    n_s : int
        Gauss nodes across the swept surface.
    """

    chart: TubeChart
    axis_jet: AxisJet
    field_jet: "fields.FieldJet"
    flux0: float
    curl: Callable
    n_s: int = 4

    def __post_init__(self):
        if not (self.flux0 > 0):
            raise DomainError(f"axis flux must be positive, got {self.flux0}")

    @property
    def R0(self):
        return self.flux0 / self.chart.L0

    @property
    def L0(self):
        return self.chart.L0


def ball_context(rho, delta=0.5, n_s=4):
    """RatioContext of the ball of radius ``rho`` around its vertical diameter."""
    chart, jet = ball_chart(rho, delta)
    return RatioContext(
        chart=chart,
        axis_jet=jet,
        field_jet=fields.ball_field_jet(rho),
        flux0=fields.flux_gamma0_ball(rho),
        curl=lambda p: fields.ball_curl(p, rho),
        n_s=n_s,
    )


def make_context(chart, curl, flux0, axis_jet=None, field_jet=None, n_s=4):
    """RatioContext for a user chart; missing jets are built by finite differences."""
    axis_jet = axis_jet or axis_jet_from_chart(chart)
    field_jet = field_jet or fields.field_jet_from_curl(chart, curl)
    return RatioContext(chart, axis_jet, field_jet, float(flux0), curl, n_s)


def flux(curve, ctx):
    """Total flux ``<B0, Gamma>``."""
    return ctx.flux0 + fields.flux_difference(curve, ctx.chart, ctx.curl, ctx.n_s)


def ratio(curve, ctx):
    """Isoflux ratio ``<B0, Gamma> / |Gamma|``."""
    L = curve_length(curve, ctx.chart)
    if not (L > 0):
        raise DomainError("degenerate curve of zero length")
    return flux(curve, ctx) / L


# ------------------------------------------------------------------ gradient


def _local_derivs(fn, zk, uk, vk, complex_ok, h=None):
    """Derivatives of ``fn(z, u, v)`` in each component of ``u`` and ``v``."""
    du = np.empty(uk.shape)
    dv = np.empty(vk.shape)
    for j in range(2):
        e = np.zeros(2)
        e[j] = 1.0
        if complex_ok:
            hh = 1e-30
            du[:, j] = np.imag(fn(zk, uk + 1j * hh * e, vk)) / hh
            dv[:, j] = np.imag(fn(zk, uk, vk + 1j * hh * e)) / hh
        else:
            hu = 1e-7 * np.maximum(1.0, np.abs(uk[:, j]))[:, None] * e
            hv = 1e-7 * np.maximum(1.0, np.abs(vk[:, j]))[:, None] * e
            du[:, j] = (fn(zk, uk + hu, vk) - fn(zk, uk - hu, vk)) / (2 * hu[:, j])
            dv[:, j] = (fn(zk, uk, vk + hv) - fn(zk, uk, vk - hv)) / (2 * hv[:, j])
    return du, dv


def _assemble(M, node, elem, h, wk, du, dv):
    g = np.zeros((M, 2))
    np.add.at(g, node, wk[:, None] * du)
    gv = wk[:, None] * dv / h[elem][:, None]
    np.add.at(g, elem + 1, gv)
    np.add.at(g, elem, -gv)
    return g


def length_and_gradient(curve, chart):
    zk, uk, vk, wk, node, elem, h = element_samples(curve.z_nodes, curve.u_values)

    def dens(z, u, v):
        return length_density(chart, z, u, v)

    val = float(np.sum(wk * dens(zk, uk, vk)))
    du, dv = _local_derivs(dens, zk, uk, vk, chart.complex_safe)
    return val, _assemble(curve.M, node, elem, h, wk, du, dv)


def flux_difference_and_gradient(curve, ctx):
    zk, uk, vk, wk, node, elem, h = element_samples(curve.z_nodes, curve.u_values)
    sq, ws = fields.gauss01(ctx.n_s)

    def dens(z, u, v):
        out = 0.0
        for s, w in zip(sq, ws):
            out = out + w * fields.flux_density(ctx.chart, ctx.curl, z, u, v, s)
        return out

    val = float(np.sum(wk * dens(zk, uk, vk)))
    du, dv = _local_derivs(dens, zk, uk, vk, ctx.chart.complex_safe)
    return val, _assemble(curve.M, node, elem, h, wk, du, dv)


def ratio_and_gradient(curve, ctx):
    """Ratio and its exact gradient with respect to the nodal displacements.

    Returns
    -------
    value : float
    grad : (M, 2) array
    """
    ctx.chart.check_inside(curve.u_values)
    L, gL = length_and_gradient(curve, ctx.chart)
    dF, gF = flux_difference_and_gradient(curve, ctx)
    F = ctx.flux0 + dF
    return F / L, (gF * L - F * gL) / (L * L)


# ------------------------------------------------------------------ Q form


@dataclass(frozen=True)
class QFormSpec:
    """Integrand data of the quadratic form Q.

    Each coefficient is a callable of ``z`` returning arrays with trailing
    shape ``(2, 2)`` (``LBa`` returns a scalar):

    ``G``      perpendicular axis metric g.
    ``LL``     symmetric matrix of the length Lagrangian, ``L_L = u.LL.u``.
    ``LBs``    symmetric matrix of the field Lagrangian part ``1/2 (d_u dB0)(u, e3)``.
    ``LBa``    coefficient ``w`` of the antisymmetric part ``w (u1 v2 - u2 v1)``.
    """

    L0: float
    R0: float
    G: Callable
    LL: Callable
    LBs: Callable
    LBa: Callable

    @classmethod
    def from_context(cls, ctx):
        aj, fj = ctx.axis_jet, ctx.field_jet

        def LL(z):
            d1 = aj.dg33(z)
            return 0.25 * aj.d2g33(z) - 0.125 * d1[..., :, None] * d1[..., None, :]

        def LBs(z):
            P = fj.ddB0_u_e3(z)
            return 0.25 * (P + np.swapaxes(P, -1, -2))

        def LBa(z):
            return 0.5 * fj.dB0_uv(z)

        return cls(ctx.L0, ctx.R0, aj.g_perp_axis, LL, LBs, LBa)

    @classmethod
    def synthetic_isotropic(cls, L0=1.0, mass=1.0):
        """``Q(u) = int 1/2 |u'|^2 + mass/2 |u|^2`` with g. = identity."""
        eye = np.eye(2)
        return cls(
            L0=L0,
            R0=L0 / 2,
            G=lambda z: np.broadcast_to(eye, np.shape(z) + (2, 2)),
            LL=lambda z: np.broadcast_to(0.5 * mass * eye, np.shape(z) + (2, 2)),
            LBs=lambda z: np.zeros(np.shape(z) + (2, 2)),
            LBa=lambda z: np.zeros(np.shape(z)),
        )

    @classmethod
    def pure_kinetic(cls, L0=1.0, R0=0.5):
        """``Q(u) = (2 R0 / L0) int 1/2 |u'|^2`` with g. = identity."""
        eye = np.eye(2)
        zero2 = lambda z: np.zeros(np.shape(z) + (2, 2))  # noqa: E731
        return cls(
            L0=L0,
            R0=R0,
            G=lambda z: np.broadcast_to(eye, np.shape(z) + (2, 2)),
            LL=zero2,
            LBs=zero2,
            LBa=lambda z: np.zeros(np.shape(z)),
        )

    def with_field_scale(self, factor):
        """Copy with the field Lagrangian multiplied by ``factor``."""
        s, a = self.LBs, self.LBa
        return replace(self, LBs=lambda z: factor * s(z), LBa=lambda z: factor * a(z))


def q_matrix(spec, z):
    """Symmetric matrix ``A`` with ``Q(u) = U.A.U``, ``U = u.ravel()`` (node-major)."""
    z = np.asarray(z, dtype=float)
    M = z.size
    n = 2 * M
    B = np.zeros((n, n))
    h = np.diff(z)
    c = 2 * spec.R0 / spec.L0
    for side in (0, 1):
        zk = z[side : M - 1 + side]
        G = np.asarray(spec.G(zk))
        LL = np.asarray(spec.LL(zk))
        Ls = np.asarray(spec.LBs(zk))
        La = np.asarray(spec.LBa(zk))
        for e in range(M - 1):
            w = 0.5 * h[e] * c
            i, j = 2 * e, 2 * e + 2
            k = 2 * (e + side)
            D = np.zeros((2, n))
            D[:, j : j + 2] = np.eye(2) / h[e]
            D[:, i : i + 2] -= np.eye(2) / h[e]
            B += w * 0.5 * D.T @ G[e] @ D
            Kb = LL[e] - Ls[e] / spec.R0
            B[k : k + 2, k : k + 2] += w * Kb
            # antisymmetric field term  -(w/R0) * La * u_k . J . v_e
            B[k : k + 2, :] += -(w / spec.R0) * La[e] * (_J @ D)
    A = 0.5 * (B + B.T)
    return A


class DiscreteQ:
    """Element-wise evaluation of Q on a fixed grid.

    Summing local terms avoids the cancellation of ``U.A.U`` between large
    stiffness entries, so values are accurate to rounding relative to Q.
    """

    def __init__(self, spec, z):
        self.z = np.asarray(z, dtype=float)
        M = self.z.size
        self.h = np.diff(self.z)
        self.c = 2 * spec.R0 / spec.L0
        self.parts = []
        for side in (0, 1):
            zk = self.z[side : M - 1 + side]
            G = np.asarray(spec.G(zk))
            K = np.asarray(spec.LL(zk)) - np.asarray(spec.LBs(zk)) / spec.R0
            a = np.asarray(spec.LBa(zk)) / spec.R0
            self.parts.append((side, G, K, a))

    def value(self, U):
        """Q of displacements ``U`` with shape ``(..., M, 2)``; returns shape ``(...)``."""
        U = np.asarray(U)
        M = self.z.size
        v = np.diff(U, axis=-2) / self.h[:, None]
        tot = 0.0
        for side, G, K, a in self.parts:
            u = U[..., side : M - 1 + side, :]
            kin = 0.5 * np.einsum("...ei,eij,...ej->...e", v, G, v)
            pot = np.einsum("...ei,eij,...ej->...e", u, K, u)
            cross = a * (u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0])
            tot = tot + np.sum(0.5 * self.h * (kin + pot - cross), axis=-1)
        return self.c * tot


def gram_matrix(spec, z):
    """H1 Gram matrix ``int <u', v'>_g. + <u, v>_g.`` with the same quadrature."""
    z = np.asarray(z, dtype=float)
    M = z.size
    n = 2 * M
    Gm = np.zeros((n, n))
    h = np.diff(z)
    for side in (0, 1):
        zk = z[side : M - 1 + side]
        G = np.asarray(spec.G(zk))
        for e in range(M - 1):
            w = 0.5 * h[e]
            i, j = 2 * e, 2 * e + 2
            k = 2 * (e + side)
            D = np.zeros((2, n))
            D[:, j : j + 2] = np.eye(2) / h[e]
            D[:, i : i + 2] -= np.eye(2) / h[e]
            Gm += w * D.T @ G[e] @ D
            Gm[k : k + 2, k : k + 2] += w * G[e]
    return 0.5 * (Gm + Gm.T)


def q_form(u, spec):
    """Quadratic form Q evaluated on a sampled displacement.

    Parameters
    ----------
    u : SampledGraph
    spec : QFormSpec
    """
    return float(DiscreteQ(spec, u.z_nodes).value(u.u_values))


def criticality_residual(ctx, z_samples, u_directions):
    """Max of ``|dB0(u, e3) - (R0/2) dg33(u)|`` over paired samples."""
    z = np.asarray(z_samples, dtype=float)
    u = np.asarray(u_directions, dtype=float).reshape(z.shape + (2,))
    a = np.einsum("...i,...i->...", ctx.field_jet.dB0_u_e3(z), u)
    b = np.einsum("...i,...i->...", ctx.axis_jet.dg33(z), u)
    return float(np.max(np.abs(a - 0.5 * ctx.R0 * b)))


@dataclass
class Spectrum:
    lambda_min: float
    lambda_max: float
    alpha_Q: float
    eigenvalues: np.ndarray
    basis_size: int
    lambda_min_refined: Optional[float] = None
    lambda_max_refined: Optional[float] = None


def _pencil(spec, M):
    z = np.linspace(0.0, spec.L0, M)
    A = q_matrix(spec, z)
    Gm = gram_matrix(spec, z)
    try:
        linalg.cholesky(Gm)
    except linalg.LinAlgError as exc:
        raise VFEError("H1 Gram matrix is not positive definite") from exc
    return linalg.eigh(A, Gm, eigvals_only=True)


def q_spectrum(spec, basis_size, refine=True):
    """Extreme generalized eigenvalues of Q against the g.-weighted H1 Gram matrix.

    Parameters
    ----------
    spec : QFormSpec
    basis_size : int
        Number of grid nodes M (the basis has 2M hat functions).
    refine : bool
        Also solve on the doubled grid (2M - 1 nodes).

    Returns
    -------
    Spectrum
        ``alpha_Q`` is the largest Rayleigh quotient.
    """
    if basis_size < 4:
        raise ValueError("basis_size must be at least 4")
    ev = _pencil(spec, basis_size)
    out = Spectrum(float(ev[0]), float(ev[-1]), float(ev[-1]), ev, basis_size)
    if refine:
        ev2 = _pencil(spec, 2 * basis_size - 1)
        out.lambda_min_refined = float(ev2[0])
        out.lambda_max_refined = float(ev2[-1])
    log.info("q_spectrum M=%d: lambda_min=%.6g lambda_max=%.6g", basis_size, out.lambda_min, out.lambda_max)
    return out


# ------------------------------------------------------------------ ball closed form


def ball_hessian_closed_form(x_path, theta_path, rho, z=None, variant="corrected"):
    """Small-ball second derivative of the ratio along ``u = t x (cos theta, sin theta)``.

    Parameters
    ----------
    x_path, theta_path : array
        Profiles on the Moebius grid ``z`` in [-1, 1].
    rho : float
    z : array, optional
        Uniform on [-1, 1] by default.
    variant : {"corrected", "printed"}
        ``"corrected"``:
        ``-(rho^2/12) int (1+z^2)^2 (x'^2 + x^2 theta'^2) - (rho^2/4) int x^2 (1+z^2)^2
        + (rho^2/6) int x^2 (1+z^2)``.
        ``"printed"``:
        ``-(rho^2/24) int (1+z^2)^2 (x'^2 + x^2 theta'^2) + x^2 (1+z^2)``.
        Both omit higher order terms in rho.
    """
    x = np.asarray(x_path, dtype=float)
    th = np.asarray(theta_path, dtype=float)
    if z is None:
        z = np.linspace(-1.0, 1.0, x.size)
    z = np.asarray(z, dtype=float)
    if x.shape != th.shape or x.shape != z.shape:
        raise ValueError("mismatched grids")
    r2 = rho * rho
    if variant == "corrected":
        return r2 * _ball_polar_integrals(x, th, z, kinetic=-1 / 12, lin=1 / 6, quart=-1 / 4)
    if variant == "printed":
        return r2 * _ball_polar_integrals(x, th, z, kinetic=-1 / 24, lin=-1 / 24, quart=0.0)
    raise ValueError(f"unknown variant {variant!r}")


# ------------------------------------------------------------------ Q_ell


def axial_length(curve, chart):
    """``<Gamma> = int sqrt(g33(Gamma)) dz`` (cutoff identically one)."""
    zk, uk, _, wk, _, _, _ = element_samples(curve.z_nodes, curve.u_values)
    return float(np.sum(wk * np.sqrt(chart.g33(uk, zk))))


def q_ell(curve, ell, ctx):
    """Horizontally blown-up excess functional ``Q_ell``.

    ``ell^2 (|Gamma|_gtilde - <Gamma>) + (<Gamma> - L0) - (flux change) / R0``
    with ``gtilde = g33 dz^2 + ell^-2 g_perp``. Requires the curve to stay in
    the half tube ``|u| < delta/2``.
    """
    if not (0 < ell <= 1):
        raise DomainError(f"ell must lie in (0, 1], got {ell}")
    ctx.chart.check_inside(curve.u_values, frac=0.5)
    ax = axial_length(curve, ctx.chart)
    Lt = curve_length(curve, ctx.chart, ell=ell)
    dF = fields.flux_difference(curve, ctx.chart, ctx.curl, ctx.n_s)
    return ell * ell * (Lt - ax) + (ax - ctx.L0) - dF / ctx.R0


# ------------------------------------------------------------------ maximization


@dataclass
class MaximizeResult:
    curve: SampledGraph
    value: float
    initial_value: float
    n_iter: int
    converged: bool
    message: str
    trace: list = field(default_factory=list)


def maximize_ratio(initial, ctx, tol=1e-12, max_iter=500, memory=12):
    """Ascent on the discretized ratio starting from ``initial``.

    Quasi-Newton steps preconditioned by the H1 Riesz map, with a
    backtracking search that rejects trial curves leaving the chart domain.

    Parameters
    ----------
    initial : SampledGraph
    ctx : RatioContext
    tol : float
        Stop when the H1-dual norm of the gradient, relative to R0, is below ``tol``.

    Returns
    -------
    MaximizeResult
        ``trace`` rows are ``(iteration, ratio, gradient_norm)``.
    """
    ctx.chart.check_inside(initial.u_values)
    z = initial.z_nodes
    spec = QFormSpec.from_context(ctx)
    Gm = gram_matrix(spec, z)
    cho = linalg.cho_factor(Gm)
    scale = 1.0 / ctx.R0

    def fun(U):
        val, g = ratio_and_gradient(SampledGraph(z, U.reshape(-1, 2)), ctx)
        return -val * scale, -g.ravel() * scale

    def precond(v):
        return linalg.cho_solve(cho, v)

    def gnorm(g):
        return float(np.sqrt(max(g @ linalg.cho_solve(cho, g), 0.0)))

    def admissible(U):
        r = np.hypot(U[0::2], U[1::2])
        return bool(np.all(r < ctx.chart.delta))

    res = lbfgs(
        fun,
        initial.u_values.ravel(),
        tol=tol,
        max_iter=max_iter,
        memory=memory,
        precond=precond,
        gnorm=gnorm,
        admissible=admissible,
        max_step=0.25 * ctx.chart.delta,
    )
    trace = [(it, -f / scale, gn) for it, f, gn, _, _ in res.trace]
    curve = SampledGraph(z, res.x.reshape(-1, 2))
    if not res.converged:
        log.warning("maximize_ratio stopped: %s", res.message)
    return MaximizeResult(curve, -res.f / scale, trace[0][1], res.n_iter, res.converged, res.message, trace)
