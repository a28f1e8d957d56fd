"""Degree-one radial vortex profile, the core constant gamma, and planar energy checks.

The profile solves ``f'' + f'/r - f/r^2 + f(1 - f^2) = 0`` with ``f(0) = 0``
and ``f(inf) = 1``; ``gamma`` is the constant term in the logarithmic growth
of its energy on a disk of radius R.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConvergenceError, DomainError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RadialProfile:
    """Samples of the radial profile on a uniform grid over [0, R_max]."""

    r_nodes: np.ndarray
    f_values: np.ndarray
    residual: float = float("nan")
    trace: list = field(default_factory=list, compare=False)

    def __post_init__(self):
        r = np.asarray(self.r_nodes, dtype=float)
        f = np.asarray(self.f_values, dtype=float)
        if r.shape != f.shape or r.ndim != 1 or r.size < 3:
            raise ValueError("r_nodes and f_values must be 1-D arrays of equal length")
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise ValueError("r_nodes must start at 0 and increase strictly")
        object.__setattr__(self, "r_nodes", r)
        object.__setattr__(self, "f_values", f)

    @property
    def R_max(self):
        return float(self.r_nodes[-1])

    def __call__(self, r):
        return np.interp(r, self.r_nodes, self.f_values)

    def check_invariants(self):
        """Return a list of violated profile invariants (empty if all hold)."""
        f = self.f_values
        bad = []
        if f[0] != 0.0:
            bad.append("f(0) != 0")
        if np.any(np.diff(f) <= 0):
            bad.append("f not strictly increasing")
        if np.any(f < 0) or np.any(f >= 1):
            bad.append("f outside [0, 1)")
        if self.R_max >= 20 and f[-1] <= 0.99:
            bad.append("f(R_max) <= 0.99")
        return bad

    def rows(self):
        return list(zip(self.r_nodes.tolist(), self.f_values.tolist()))


def far_field(R):
    """Boundary closure ``1 - 1/(2 R^2)`` from the large-r expansion."""
    return 1.0 - 0.5 / R**2


def _residual(f, r, h):
    fi = f[1:-1]
    ri = r[1:-1]
    return (f[2:] - 2 * fi + f[:-2]) / h**2 + (f[2:] - f[:-2]) / (2 * h * ri) - fi / ri**2 + fi * (1 - fi**2)


def solve_f0(R_max=100.0, node_count=8001, tol=1e-10, max_iter=50):
    """Solve for the radial profile by damped Newton on second-order finite differences.

    Parameters
    ----------
    R_max : float
        Outer radius, at least 20.
    node_count : int
        Uniform grid nodes, at least 2000.
    tol : float
        Max-norm tolerance on the interior residual.

    Returns
    -------
    RadialProfile

    Raises
    ------
    ConvergenceError
        Newton did not reach ``tol``; ``trace`` holds the residual history.
    """
    if R_max < 20:
        raise DomainError(f"R_max must be >= 20, got {R_max}")
    if node_count < 2000:
        raise DomainError(f"node_count must be >= 2000, got {node_count}")
    r = np.linspace(0.0, R_max, int(node_count))
    h = r[1] - r[0]
    ri = r[1:-1]
    f = np.tanh(r / 1.5)
    f[0] = 0.0
    f[-1] = far_field(R_max)
    upper = (1 / h**2 + 1 / (2 * h * ri))[:-1]
    lower = (1 / h**2 - 1 / (2 * h * ri))[1:]
    res = _residual(f, r, h)
    rn = float(np.max(np.abs(res)))
    trace = [rn]
    for _ in range(max_iter):
        if rn < tol:
            break
        fi = f[1:-1]
        ab = np.zeros((3, ri.size))
        ab[0, 1:] = upper
        ab[2, :-1] = lower
        ab[1] = -2 / h**2 - 1 / ri**2 + 1 - 3 * fi**2
        d = solve_banded((1, 1), ab, -res)
        step = 1.0
        while True:
            ft = f.copy()
            ft[1:-1] += step * d
            rt = _residual(ft, r, h)
            rtn = float(np.max(np.abs(rt)))
            if rtn < rn or step < 1e-4:
                break
            step *= 0.5
        if not rtn < rn:
            break
        f, res, rn = ft, rt, rtn
        trace.append(rn)
    if not rn < tol:
        raise ConvergenceError(f"profile Newton stalled at residual {rn:.3e}", trace=trace, last=f)
    log.info("solve_f0 R_max=%g n=%d residual=%.2e iters=%d", R_max, node_count, rn, len(trace) - 1)
    return RadialProfile(r, f, rn, trace)


def _restrict(profile, R):
    if not (0 < R <= profile.R_max * (1 + 1e-12)):
        raise DomainError(f"R={R} outside the profile range (0, {profile.R_max}]")
    r, f = profile.r_nodes, profile.f_values
    k = int(np.searchsorted(r, R, side="left"))
    if k < r.size and np.isclose(r[k], R, rtol=1e-13, atol=0):
        return r[: k + 1], f[: k + 1]
    return np.append(r[:k], R), np.append(f[:k], profile(R))


def _energy(r, f, scale=1.0):
    """``int_0^R (f'^2 + f^2/r^2 + (1 - f^2)^2/2) r dr`` for ``f / scale``, cellwise midpoint rule."""
    h = np.diff(r)
    fp = np.diff(f) / h / scale
    rm = 0.5 * (r[1:] + r[:-1])
    fm = 0.5 * (f[1:] + f[:-1]) / scale
    return float(np.sum((fp**2 + fm**2 / rm**2 + 0.5 * (1 - fm**2) ** 2) * rm * h))


def gamma_from_profile(profile, R):
    """``2 pi I(R) - pi log R`` with ``I(R) = (1/2) int_0^R (|f'|^2 + f^2/r^2 + (1-f^2)^2/2) r dr``."""
    r, f = _restrict(profile, R)
    return np.pi * _energy(r, f) - np.pi * np.log(R)


@dataclass(frozen=True)
class GammaEstimate:
    value: float
    err: float
    R: float
    history: list  # (R, gamma_est(R))


def gamma_estimate(profile, R=None, n_halvings=3):
    """``gamma_est(R)`` with error bar ``|gamma_est(R) - gamma_est(R/2)|``.

    ``history`` holds ``(R / 2^k, gamma_est)`` for ``k = n_halvings .. 0``.
    """
    R = profile.R_max if R is None else R
    hist = [(R / 2**k, gamma_from_profile(profile, R / 2**k)) for k in range(n_halvings, -1, -1)]
    return GammaEstimate(hist[-1][1], abs(hist[-1][1] - hist[-2][1]), R, hist)


def disk_vortex_energy(eps, r_eps, profile):
    """Energy of the normalized profile ``f(r/eps) / f(r_eps/eps)`` on the disk of radius ``r_eps``.

    ``2 pi int_0^S (f'^2 + f^2/s^2 + (1 - f^2)^2/2) s ds`` in the stretched
    variable, with ``f`` divided by ``f(S)`` and ``S = r_eps / eps``.
    """
    if not (eps > 0 and r_eps > 0):
        raise DomainError("eps and r_eps must be positive")
    S = r_eps / eps
    r, f = _restrict(profile, S)
    return 2 * np.pi * _energy(r, f, scale=f[-1])


# perforated disk


def _bump(s):
    """C-infinity cutoff: 1 for s <= 1/2, 0 for s >= 1."""
    s = np.asarray(s, dtype=float)
    t = np.clip(2 * s - 1, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1 / np.where(t > 0, t, 1)), 0.0)
        b = np.where(t < 1, np.exp(-1 / np.where(t < 1, 1 - t, 1)), 0.0)
    return b / (a + b)


def _gauss_panels(edges, n):
    x, w = np.polynomial.legendre.leggauss(n)
    e = np.asarray(edges, dtype=float)
    a, b = e[:-1, None], e[1:, None]
    return (0.5 * (b - a) * x + 0.5 * (a + b)).ravel(), (0.5 * (b - a) * w).ravel()


def _point_field_sq(X, Y, pts):
    vx = np.zeros_like(X)
    vy = np.zeros_like(X)
    for px, py in pts:
        dx, dy = X - px, Y - py
        d2 = dx * dx + dy * dy
        vx += dx / d2
        vy += dy / d2
    return vx * vx + vy * vy


@dataclass(frozen=True)
class PerforatedCheck:
    numeric: float
    closed_form: float
    deviation: float

    def as_dict(self):
        return dict(numeric=self.numeric, closed_form=self.closed_form, deviation=self.deviation)


def perforated_closed_form(points, delta, r):
    """``-pi sum_{i != j} log|x_i - x_j| + pi N log(1/r) + pi N^2 log delta``."""
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    N = p.shape[0]
    d = np.linalg.norm(p[:, None] - p[None, :], axis=-1)
    off = ~np.eye(N, dtype=bool)
    return float(-np.pi * np.sum(np.log(d[off])) + np.pi * N * np.log(1 / r) + np.pi * N * N * np.log(delta))


def perforated_renormalized_check(points, delta, r, n_theta=512, n_gauss=16):
    """Compare the planar vortex energy outside small disks with its closed form.

    ``numeric = (1/2) int |sum_j (x_j - x)^perp / |x_j - x|^2|^2`` over
    ``D(0, delta)`` minus the disks ``D(x_i, r)``. A smooth partition of
    unity splits the integrand into polar patches around each point
    (log-radial Gauss, periodic trapezoid) and a remainder that vanishes near
    the points and is integrated on a polar grid centred at the origin.

    Raises
    ------
    DomainError
        Points coincide, exclusion disks overlap or leave ``D(0, delta)``.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    N = p.shape[0]
    if N < 1:
        raise DomainError("at least one point is required")
    if not (delta > 0 and r > 0):
        raise DomainError("delta and r must be positive")
    norms = np.linalg.norm(p, axis=1)
    if np.any(norms + r >= delta):
        raise DomainError("exclusion disks must lie inside D(0, delta)")
    gap = np.inf
    if N > 1:
        d = np.linalg.norm(p[:, None] - p[None, :], axis=-1)
        gap = float(d[~np.eye(N, dtype=bool)].min())
        if gap <= 2 * r:
            raise DomainError(f"exclusion disks overlap (gap {gap:g} <= 2r = {2 * r:g})")
    # patch radii: disjoint patches, inside the big disk, and larger than the exclusion disk
    a = np.minimum(0.45 * gap, 0.9 * (delta - norms))
    if np.any(a <= 2 * r):
        raise DomainError("exclusion radius too large relative to the point spacing")

    th = 2 * np.pi * np.arange(n_theta) / n_theta
    c, s = np.cos(th), np.sin(th)
    total = 0.0

    def psi_sum(X, Y):
        out = np.zeros_like(X)
        for (px, py), ai in zip(p, a):
            out += _bump(np.hypot(X - px, Y - py) / ai)
        return out

    for (px, py), ai in zip(p, a):
        lo, mid, hi = np.log(r), np.log(0.5 * ai), np.log(ai)
        n_in = max(2, int(np.ceil((mid - lo) / 1.0)))
        edges = np.concatenate([np.linspace(lo, mid, n_in + 1), np.linspace(mid, hi, 5)[1:]])
        t, wt = _gauss_panels(edges, n_gauss)
        rho = np.exp(t)
        X = px + rho[:, None] * c[None, :]
        Y = py + rho[:, None] * s[None, :]
        F = 0.5 * _point_field_sq(X, Y, p) * _bump(rho / ai)[:, None]
        total += float(np.sum(F * (rho**2 * wt)[:, None])) * (2 * np.pi / n_theta)

    # remainder on a polar grid about the origin, graded toward the scale of the patches
    rmin = 0.25 * float(a.min())
    n_geo = max(4, int(np.ceil(np.log(delta / rmin) / np.log(1.5))))
    edges = np.concatenate([[0.0], np.geomspace(rmin, delta, n_geo + 1)])
    for (px, py), ai in zip(p, a):
        nr = np.hypot(px, py)
        edges = np.concatenate([edges, [nr - ai, nr - 0.5 * ai, nr, nr + 0.5 * ai, nr + ai]])
    edges = np.unique(np.clip(edges, 0.0, delta))
    rho, wr = _gauss_panels(edges, n_gauss)
    n_bg = 4 * n_theta
    thb = 2 * np.pi * np.arange(n_bg) / n_bg
    for k0 in range(0, rho.size, 64):
        rk, wk = rho[k0 : k0 + 64], wr[k0 : k0 + 64]
        X = rk[:, None] * np.cos(thb)[None, :]
        Y = rk[:, None] * np.sin(thb)[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            F = 0.5 * _point_field_sq(X, Y, p) * (1 - psi_sum(X, Y))
        F = np.where(np.isfinite(F), F, 0.0)
        total += float(np.sum(F * (rk * wk)[:, None])) * (2 * np.pi / n_bg)

    cf = perforated_closed_form(p, delta, r)
    return PerforatedCheck(total, cf, total - cf)
