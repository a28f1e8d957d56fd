"""Limited-memory quasi-Newton minimization with a guarded backtracking search.

The line search can reject trial points through an ``admissible`` callback
(chart domain, filament separation), which is why this is not delegated to
scipy.
"""

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class LBFGSResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    n_iter: int
    converged: bool
    message: str
    trace: list = field(default_factory=list)


def lbfgs(
    fun,
    x0,
    tol,
    max_iter=1000,
    memory=12,
    precond=None,
    gnorm=None,
    admissible=None,
    max_step=None,
    max_backtracks=50,
    c1=1e-4,
    monitor=None,
):
    """Minimize ``fun`` by L-BFGS with Armijo backtracking.

    Near the optimum, where energy differences reach rounding level, a trial
    step is also accepted under the approximate Wolfe condition (energy not
    above ``f + 1e-14 |f|`` and a reduced directional derivative).

    Parameters
    ----------
    fun : callable
        ``fun(x) -> (f, g)``.
    x0 : array
        Starting point (flattened internally).
    tol : float
        Stop when ``gnorm(g) < tol``.
    precond : callable, optional
        Applies the base inverse Hessian ``H0 @ v``; scaled each iteration
        by ``s.y / y.H0.y``.
    gnorm : callable, optional
        Stopping measure, default max-abs.
    admissible : callable, optional
        ``admissible(x) -> bool``; rejected trial points count as backtracks.
    max_step : float, optional
        Cap on the max-abs size of the first trial step of each iteration.
    max_backtracks : int
        Backtracks allowed within one iteration before giving up.
    monitor : callable, optional
        ``monitor(x) -> float`` recorded with every accepted iterate.

    Returns
    -------
    LBFGSResult
        ``trace`` holds ``(iteration, f, gnorm, step, monitor)`` tuples.
    """
    x = np.array(x0, dtype=float).ravel()
    shape = np.shape(x0)
    precond = precond or (lambda v: v)
    gnorm = gnorm or (lambda g: float(np.max(np.abs(g))) if g.size else 0.0)

    def ev(xf):
        f, g = fun(xf.reshape(shape))
        return float(f), np.asarray(g, dtype=float).ravel()

    mon = monitor or (lambda xf: float("nan"))
    f, g = ev(x)
    trace = [(0, f, gnorm(g), 0.0, mon(x.reshape(shape)))]
    S, Y = deque(maxlen=memory), deque(maxlen=memory)
    gamma = 1.0
    for it in range(1, max_iter + 1):
        gn = gnorm(g)
        if gn < tol:
            return LBFGSResult(x.reshape(shape), f, g.reshape(shape), it - 1, True, "gradient below tolerance", trace)
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y in reversed(list(zip(S, Y))):
            a = (s @ q) / (y @ s)
            alphas.append(a)
            q -= a * y
        r = gamma * precond(q)
        for (s, y), a in zip(zip(S, Y), reversed(alphas)):
            b = (y @ r) / (y @ s)
            r += (a - b) * s
        d = -r
        slope = g @ d
        if not slope < 0:
            S.clear()
            Y.clear()
            d = -precond(g)
            slope = g @ d
        step = 1.0
        if max_step is not None:
            dm = float(np.max(np.abs(d)))
            if dm * step > max_step:
                step = max_step / dm
        accepted = False
        for _ in range(max_backtracks):
            xt = x + step * d
            if admissible is None or admissible(xt.reshape(shape)):
                try:
                    ft, gt = ev(xt)
                except (ValueError, FloatingPointError):
                    ft, gt = np.inf, None
                if np.isfinite(ft):
                    armijo = ft <= f + c1 * step * slope
                    # approximate Wolfe: energy flat to rounding, directional derivative reduced
                    dt = gt @ d
                    approx = ft <= f + 1e-14 * abs(f) and 0.9 * slope <= dt <= (2 * c1 - 1) * slope
                    if armijo or approx:
                        accepted = True
                        break
            step *= 0.5
            if step * np.max(np.abs(d)) <= 1e-16 * max(1.0, float(np.max(np.abs(x)))):
                break
        if not accepted:
            msg = f"line search failed {max_backtracks} times at iteration {it}"
            log.warning(msg)
            return LBFGSResult(x.reshape(shape), f, g.reshape(shape), it - 1, False, msg, trace)
        s = xt - x
        y = gt - g
        sy = s @ y
        if sy > 1e-14 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
            Hy = precond(y)
            gamma = sy / (y @ Hy)
        x, f, g = xt, ft, gt
        trace.append((it, f, gnorm(g), step, mon(x.reshape(shape))))
    gn = gnorm(g)
    ok = gn < tol
    msg = "gradient below tolerance" if ok else f"max_iter={max_iter} reached (gnorm={gn:.3e})"
    return LBFGSResult(x.reshape(shape), f, g.reshape(shape), max_iter, ok, msg, trace)
