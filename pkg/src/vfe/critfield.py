"""Critical-field arithmetic: k_N, H_N, the energy expansion and the optimal filament count.

All formulas are explicit in ``|log eps|``, the isoflux constants ``R0, L0``,
the core constant ``gamma``, the domain constant ``C_Omega`` and the table of
minimal renormalized energies ``minW``.
"""

import logging
from dataclasses import dataclass, field, asdict
from typing import Mapping

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, MissingMinWError, VFEError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConstants:
    """Constants entering the energy expansion.

    Parameters
    ----------
    R0, L0 : float
        Maximal isoflux ratio and length of the maximizing curve.
    C_Omega, gamma : float
        Domain constant and vortex-core constant.
    J0 : float
        Meissner energy coefficient; 0 means energies are excesses over h^2 J0.
    minW : mapping
        ``N -> min W_N`` for N >= 1; ``minW[0] = 0`` is implied.
    """

    R0: float
    L0: float
    C_Omega: float = 0.0
    gamma: float = 0.0
    J0: float = 0.0
    minW: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.R0 > 0 and self.L0 > 0):
            raise DomainError("R0 and L0 must be positive")
        object.__setattr__(self, "minW", {int(k): float(v) for k, v in dict(self.minW).items()})

    def W(self, N):
        if N == 0:
            return 0.0
        try:
            return self.minW[N]
        except KeyError:
            raise MissingMinWError(f"minW[{N}] is not available (have {sorted(self.minW)})") from None

    def as_dict(self):
        return asdict(self)


def _abs_log(eps):
    if not (0 < eps < 1):
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    return -np.log(eps)


def _xlogy(a, b):
    return 0.0 if a == 0 else a * np.log(b)


def k_N(N, consts):
    """Additive constant of the N-th critical field.

    ``(N-1) log(1/N) + ((N^2-3N+2)/2) log((N-1)/N)
    + (minW[N] - minW[N-1] + gamma L0 + (2N-1) C_Omega) / (pi L0)``,
    with ``0 log 0 = 0`` at N = 1.
    """
    if N < 1:
        raise DomainError("N must be >= 1")
    c = consts
    return (
        (N - 1) * np.log(1.0 / N)
        + _xlogy((N * N - 3 * N + 2) / 2.0, (N - 1) / N)
        + (c.W(N) - c.W(N - 1) + c.gamma * c.L0 + (2 * N - 1) * c.C_Omega) / (np.pi * c.L0)
    )


def H_N(N, eps, consts):
    """``(1/(2 R0)) (|log eps| + (N-1) log(|log eps| / (2 R0)) + k_N)``."""
    le = _abs_log(eps)
    R0 = consts.R0
    return (le + (N - 1) * np.log(le / (2 * R0)) + k_N(N, consts)) / (2 * R0)


def Hc1_expansion(eps, consts):
    """``(1/(2 R0)) (|log eps| + (gamma L0 + C_Omega) / (pi L0))``."""
    c = consts
    return (_abs_log(eps) + (c.gamma * c.L0 + c.C_Omega) / (np.pi * c.L0)) / (2 * c.R0)


@dataclass(frozen=True)
class EnergyBreakdown:
    N: int
    h_ex: float
    K: float
    meissner: float
    log_h: float
    flux_gain: float
    log_N: float
    min_W: float
    core: float
    domain: float
    total: float
    excess_only: bool

    def as_dict(self):
        return asdict(self)


def energy_expansion(N, h_ex, eps, consts):
    """Term-by-term energy of N filaments at applied field ``h_ex``.

    ``h^2 J0 + (pi/2) L0 N(N-1) log h - 2 pi K R0 L0 N log|log eps|
    - (pi/2) L0 N(N-1) log N + minW[N] + gamma N L0 + N^2 C_Omega``
    with ``K = (h - |log eps|/(2 R0)) / log|log eps|``.
    """
    le = _abs_log(eps)
    c = consts
    lle = np.log(le)
    K = (h_ex - le / (2 * c.R0)) / lle
    nn = N * (N - 1)
    terms = dict(
        meissner=h_ex * h_ex * c.J0,
        log_h=0.5 * np.pi * c.L0 * nn * np.log(h_ex) if nn else 0.0,
        flux_gain=-2 * np.pi * K * c.R0 * c.L0 * N * lle,
        log_N=-0.5 * np.pi * c.L0 * nn * np.log(N) if nn else 0.0,
        min_W=c.W(N),
        core=c.gamma * N * c.L0,
        domain=N * N * c.C_Omega,
    )
    total = sum(terms.values())
    return EnergyBreakdown(N=N, h_ex=h_ex, K=K, total=total, excess_only=(c.J0 == 0), **terms)


def g_eps(N, h_ex, eps, consts, log_scale="literal"):
    """Energy of the best N-filament configuration used to select N.

    ``h^2 J0 + pi L0 N |log eps| - 2 pi N L0 R0 h + pi L0 N(N-1) log sqrt(h/N)
    + N^2 C_Omega + minW[N] + gamma L0 N``.

    Parameters
    ----------
    log_scale : {"literal", "frozen"}
        ``"frozen"`` evaluates the ``log sqrt(h/N)`` factor at the leading
        order field ``|log eps| / (2 R0)`` instead of ``h``; with this choice
        the break-even fields are exactly H_N.
    """
    le = _abs_log(eps)
    c = consts
    if log_scale == "literal":
        hl = h_ex
    elif log_scale == "frozen":
        hl = le / (2 * c.R0)
    else:
        raise ValueError(f"unknown log_scale {log_scale!r}")
    inter = np.pi * c.L0 * N * (N - 1) * 0.5 * np.log(hl / N) if N > 1 else 0.0
    return (
        h_ex * h_ex * c.J0
        + np.pi * c.L0 * N * le
        - 2 * np.pi * N * c.L0 * c.R0 * h_ex
        + inter
        + N * N * c.C_Omega
        + c.W(N)
        + c.gamma * c.L0 * N
    )


def optimal_N(h_ex, eps, consts, N_max, log_scale="literal"):
    """Filament count in ``0..N_max`` minimizing :func:`g_eps`; ties go to the smaller N."""
    if N_max < 1:
        raise DomainError("N_max must be >= 1")
    best, best_val = 0, g_eps(0, h_ex, eps, consts, log_scale)
    for N in range(1, N_max + 1):
        v = g_eps(N, h_ex, eps, consts, log_scale)
        if v < best_val:
            best, best_val = N, v
    return best


def break_even_field(N, eps, consts, log_scale="literal"):
    """Field at which ``g_eps(N) = g_eps(N-1)``.

    The difference is strictly decreasing in ``h`` above ``(N-1)/(2 R0)``;
    the root is bracketed by expanding around H_N and refined by Brent's method.
    """
    if N < 1:
        raise DomainError("N must be >= 1")

    def diff(h):
        return g_eps(N, h, eps, consts, log_scale) - g_eps(N - 1, h, eps, consts, log_scale)

    h0 = H_N(N, eps, consts)
    floor = (N - 1) / (2 * consts.R0) if log_scale == "literal" else 0.0
    lo, hi = max(0.5 * h0, floor * (1 + 1e-9) + 1e-12), 2 * h0 + 1.0
    for _ in range(200):
        if diff(lo) > 0:
            break
        lo = floor + 0.5 * (lo - floor)
    for _ in range(200):
        if diff(hi) < 0:
            break
        hi *= 2
    if not (diff(lo) > 0 > diff(hi)):
        raise VFEError(f"could not bracket the break-even field for N={N}")
    return brentq(diff, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


@dataclass
class CriticalFieldTable:
    eps: float
    rows: list  # (N, k_N, H_N, g_eps at H_N)
    increasing: bool

    def as_rows(self):
        return list(self.rows)


def critical_field_table(eps, consts, N_max, log_scale="literal"):
    """Rows ``(N, k_N, H_N, g_eps(N, H_N))`` for ``N = 1..N_max``."""
    rows = []
    for N in range(1, N_max + 1):
        h = H_N(N, eps, consts)
        rows.append((N, k_N(N, consts), h, g_eps(N, h, eps, consts, log_scale)))
    Hs = [r[2] for r in rows]
    inc = bool(np.all(np.diff(Hs) > 0))
    if not inc:
        log.warning("H_N not increasing at eps=%g: %s", eps, Hs)
    return CriticalFieldTable(eps, rows, inc)
