"""Renormalized energy of N filaments and its minimization.

For blown-up displacements ``u_1..u_N`` on a shared grid,

    W_N = pi L0 N sum_i Q(u_i) - pi int sum_{i != j} log |u_i - u_j|_{g.} dz,

the interaction summing over ordered pairs.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import ConvergenceError, DomainError, SingularityError
from .isoflux import DiscreteQ, q_matrix
from .optim import lbfgs

log = logging.getLogger(__name__)

SEPARATION_GUARD = 1e-8


@dataclass(frozen=True)
class FilamentFamily:
    """N graphs sharing a grid.

    Parameters
    ----------
    z : (M,) array
        Shared grid on [0, L0].
    U : (N, M, 2) array
        Displacements.
    endpoint_mode : {"free", "clamped"}
        In clamped mode the first and last nodes of every curve are fixed.
    """

    z: np.ndarray
    U: np.ndarray
    endpoint_mode: str = "free"

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        U = np.asarray(self.U, dtype=float)
        if U.ndim != 3 or U.shape[1:] != (z.size, 2):
            raise ValueError(f"displacements must have shape (N, {z.size}, 2), got {U.shape}")
        if self.endpoint_mode not in ("free", "clamped"):
            raise ValueError(f"unknown endpoint_mode {self.endpoint_mode!r}")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "U", U)

    @property
    def N(self):
        return self.U.shape[0]

    @property
    def M(self):
        return self.z.size

    def with_U(self, U):
        return FilamentFamily(self.z, U, self.endpoint_mode)

    def min_separation(self, spec=None):
        if self.N < 2:
            return np.inf
        G = _metric(spec, self.z)
        d = self.U[:, None] - self.U[None, :]
        n2 = np.einsum("ijka,kab,ijkb->ijk", d, G, d)
        iu = np.triu_indices(self.N, 1)
        return float(np.sqrt(n2[iu].min()))

    def rows(self):
        """``(curve_index, z, u_x, u_y)`` rows for serialization."""
        return [
            (i, float(self.z[k]), float(self.U[i, k, 0]), float(self.U[i, k, 1]))
            for i in range(self.N)
            for k in range(self.M)
        ]


@dataclass(frozen=True)
class WnValue:
    total: float
    confinement: float
    interaction: float


def node_weights(z):
    h = np.diff(z)
    w = np.zeros(z.size)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def _metric(spec, z):
    if spec is None:
        return np.broadcast_to(np.eye(2), (np.size(z), 2, 2))
    return np.asarray(spec.G(np.asarray(z)))


class _Wn:
    """Cached matrices for repeated energy/gradient evaluations on one grid."""

    def __init__(self, spec, z):
        self.spec = spec
        self.z = np.asarray(z, dtype=float)
        self.A = q_matrix(spec, self.z)
        self.Q = DiscreteQ(spec, self.z)
        self.G = _metric(spec, self.z)
        self.w = node_weights(self.z)

    def pair_data(self, U):
        d = U[:, None] - U[None, :]  # (N, N, M, 2)
        Gd = np.einsum("kab,ijkb->ijka", self.G, d)
        n2 = np.einsum("ijka,ijka->ijk", d, Gd)
        N = U.shape[0]
        off = ~np.eye(N, dtype=bool)
        if N > 1:
            bad = np.argwhere(off[:, :, None] & ~(n2 > 0))
            if bad.size:
                i, j, k = (int(v) for v in bad[0])
                raise SingularityError(f"curves {i} and {j} coincide at node {k}: infinite energy")
        return Gd, n2, off

    def energy(self, U):
        N = U.shape[0]
        L0 = self.spec.L0
        conf = np.pi * L0 * N * float(np.sum(self.Q.value(U)))
        inter = 0.0
        if N > 1:
            _, n2, off = self.pair_data(U)
            logs = 0.5 * np.log(np.where(off[:, :, None], n2, 1.0))
            inter = -np.pi * float(np.sum(logs.sum(axis=(0, 1)) * self.w))
        return WnValue(conf + inter, conf, inter)

    def gradient(self, U):
        N = U.shape[0]
        L0 = self.spec.L0
        g = 2 * np.pi * L0 * N * (U.reshape(N, -1) @ self.A).reshape(U.shape)
        if N > 1:
            Gd, n2, off = self.pair_data(U)
            inv = np.where(off[:, :, None], 1.0 / np.where(off[:, :, None], n2, 1.0), 0.0)
            g -= 2 * np.pi * self.w[None, :, None] * np.einsum("ijk,ijka->ika", inv, Gd)
        return g


def wn_energy(family, spec):
    """Renormalized energy of a filament family.

    Parameters
    ----------
    family : FilamentFamily
    spec : QFormSpec

    Returns
    -------
    WnValue
    """
    return _Wn(spec, family.z).energy(family.U)


def wn_gradient(family, spec):
    """Exact gradient of the discrete W_N with respect to every nodal value, shape (N, M, 2)."""
    return _Wn(spec, family.z).gradient(family.U)


def _free_mask(family):
    mask = np.ones(family.M, dtype=bool)
    if family.endpoint_mode == "clamped":
        mask[[0, -1]] = False
    return mask


def el_residual(family, spec):
    """Max-norm of the discrete Euler-Lagrange operator.

    The gradient at each free node is divided by its trapezoid weight, which
    approximates the pointwise functional derivative (including the natural
    boundary rows in free mode).
    """
    W = _Wn(spec, family.z)
    g = W.gradient(family.U) / W.w[None, :, None]
    g = g[:, _free_mask(family)]
    return float(np.max(np.abs(g))) if g.size else 0.0


def isotropic_radius(N, spec):
    """Radius of the constant regular N-gon minimizing the constant-curve reduction."""
    if N < 2:
        return 0.0
    z = np.linspace(0.0, spec.L0, 17)
    A = q_matrix(spec, z)
    q0 = 0.0
    for a in range(2):
        e = np.zeros((z.size, 2))
        e[:, a] = 1.0
        q0 += 0.5 * float(e.ravel() @ A @ e.ravel())
    if q0 <= 0:
        return 0.1
    return float(np.sqrt((N - 1) / (2 * N * q0)))


def initial_family(N, spec, M=65, seed=0, noise=1e-3, endpoint_mode="free", clamped=None):
    """Regular N-gon (constant in z) with radius from the 1-D reduction plus noise.

    In clamped mode ``clamped`` has shape (N, 2, 2): start and end values of
    each curve; the interior starts from the straight interpolation.
    """
    rng = np.random.default_rng(seed)
    z = np.linspace(0.0, spec.L0, M)
    if endpoint_mode == "clamped":
        c = np.asarray(clamped, dtype=float).reshape(N, 2, 2)
        t = (z / spec.L0)[None, :, None]
        U = c[:, 0][:, None, :] * (1 - t) + c[:, 1][:, None, :] * t
        U[:, 1:-1] += noise * rng.standard_normal((N, M - 2, 2))
        return FilamentFamily(z, U, "clamped")
    a = isotropic_radius(N, spec)
    ang = 2 * np.pi * np.arange(N) / N
    base = a * np.stack([np.cos(ang), np.sin(ang)], -1)
    U = np.broadcast_to(base[:, None, :], (N, M, 2)).copy()
    U += noise * rng.standard_normal(U.shape)
    return FilamentFamily(z, U, "free")


@dataclass
class WnMinimizeResult:
    family: FilamentFamily
    value: WnValue
    residual: float
    n_iter: int
    trace: list = field(default_factory=list)


def wn_minimize(
    N,
    spec,
    initial=None,
    M=65,
    endpoint_mode="free",
    clamped=None,
    tolerance=1e-7,
    max_iter=5000,
    seed=0,
    noise=1e-3,
):
    """Minimize W_N over filament families on a fixed grid.

    Parameters
    ----------
    N : int
    spec : QFormSpec
    initial : FilamentFamily, optional
        Defaults to :func:`initial_family`.
    M : int
        Grid nodes when ``initial`` is not given.
    endpoint_mode : {"free", "clamped"}
    clamped : array (N, 2, 2), optional
        Endpoint values for clamped mode.
    tolerance : float
        Stop when :func:`el_residual` drops below this value.

    Returns
    -------
    WnMinimizeResult
        ``trace`` rows are ``(iter, energy, grad_norm, min_separation)``.

    Raises
    ------
    ConvergenceError
        Line search stagnation or iteration budget exhausted; ``last`` holds the last family.
    """
    if N < 1:
        raise DomainError("N must be >= 1")
    fam = initial or initial_family(N, spec, M, seed, noise, endpoint_mode, clamped)
    if fam.N != N:
        raise DomainError(f"initial family has {fam.N} curves, expected {N}")
    W = _Wn(spec, fam.z)
    e0 = W.energy(fam.U)
    mask = _free_mask(fam)
    fixed = fam.U.copy()
    Mf = int(mask.sum())

    # base inverse Hessian: confinement block plus a nodal interaction estimate
    idx = np.flatnonzero(np.repeat(mask, 2))
    Af = W.A[np.ix_(idx, idx)]
    sep = fam.min_separation(spec) if N > 1 else 1.0
    tau = 2 * np.pi * max(N - 1, 1) / max(min(sep, 1.0), 1e-2) ** 2
    wf = np.repeat(W.w[mask], 2)
    P = 2 * np.pi * spec.L0 * N * Af + tau * np.diag(wf)
    cho = linalg.cho_factor(P)
    winv = 1.0 / wf

    def unpack(x):
        U = fixed.copy()
        U[:, mask] = x.reshape(N, Mf, 2)
        return U

    def fun(x):
        U = unpack(x)
        e = W.energy(U).total
        g = W.gradient(U)[:, mask]
        return e, g.ravel()

    def precond(v):
        return linalg.cho_solve(cho, v.reshape(N, -1).T).T.ravel()

    def gnorm(g):
        return float(np.max(np.abs(g.reshape(N, -1) * winv))) if g.size else 0.0

    def admissible(x):
        if N < 2:
            return True
        return fam.with_U(unpack(x)).min_separation(spec) >= SEPARATION_GUARD

    res = lbfgs(
        fun,
        fam.U[:, mask].ravel(),
        tol=tolerance,
        max_iter=max_iter,
        precond=precond,
        gnorm=gnorm,
        admissible=admissible,
        max_step=0.25 * max(sep if np.isfinite(sep) else 1.0, 1e-3),
        max_backtracks=50,
        monitor=lambda x: fam.with_U(unpack(x)).min_separation(spec),
    )
    out = fam.with_U(unpack(res.x))
    trace = [(it, f, gn, sep_k) for it, f, gn, _, sep_k in res.trace]
    if not res.converged:
        raise ConvergenceError(f"wn_minimize: {res.message}", trace=trace, last=out)
    val = W.energy(out.U)
    if val.total > e0.total:
        raise ConvergenceError("wn_minimize increased the energy", trace=trace, last=out)
    resid = el_residual(out, spec)
    log.info("wn_minimize N=%d: W=%.12g residual=%.3e iters=%d", N, val.total, resid, res.n_iter)
    return WnMinimizeResult(out, val, resid, res.n_iter, trace)
