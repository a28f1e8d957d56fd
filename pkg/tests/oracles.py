"""Independent reference solutions used by the tests."""

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import fsolve


def toda_shooting(ends, L0=1.0, R0=0.5, rtol=1e-12):
    """Clamped N-curve Euler-Lagrange solve for the pure-kinetic renormalized energy.

    Solves ``N R0 u_i'' = -sum_{j != i} (u_i - u_j) / |u_i - u_j|^2`` on
    ``[0, L0]`` with ``u_i(0), u_i(L0)`` from ``ends``
    of shape ``(N, 2, 2)`` by shooting on the initial slopes.

    Returns
    -------
    callable
        ``z -> (N, len(z), 2)`` dense solution.
    """
    ends = np.asarray(ends, dtype=float)
    N = ends.shape[0]
    c = N * R0

    def rhs(z, y):
        u = y[: 2 * N].reshape(N, 2)
        d = u[:, None] - u[None, :]
        n2 = np.einsum("ija,ija->ij", d, d)
        np.fill_diagonal(n2, 1.0)
        f = -np.einsum("ij,ija->ia", 1.0 / n2, d)
        return np.concatenate([y[2 * N :], (f / c).ravel()])

    u0 = ends[:, 0].ravel()
    u1 = ends[:, 1].ravel()

    def shoot(p):
        sol = solve_ivp(rhs, (0.0, L0), np.concatenate([u0, p]), method="DOP853", rtol=rtol, atol=rtol)
        return sol.y[: 2 * N, -1] - u1

    p0 = (u1 - u0) / L0
    p = fsolve(shoot, p0, xtol=1e-13)
    sol = solve_ivp(
        rhs, (0.0, L0), np.concatenate([u0, p]), method="DOP853", rtol=rtol, atol=rtol, dense_output=True
    )

    def evaluate(z):
        y = sol.sol(np.asarray(z, dtype=float))
        return y[: 2 * N].reshape(N, 2, -1).transpose(0, 2, 1)

    return evaluate
