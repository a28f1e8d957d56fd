import numpy as np

from vfe.geometry import SampledGraph


def smooth_variation(rng, ctx, n=201, size=0.3):
    """Random smooth displacement over the ball chart, scaled to sup-norm ``size``."""
    rho = ctx.L0 / 2
    z = np.linspace(0, ctx.L0, n)
    m = z / rho - 1
    c = rng.normal(size=(4, 2))
    u = np.stack(
        [
            c[0, 0] + c[1, 0] * m + c[2, 0] * np.sin(2 * m) + c[3, 0] * m**2,
            c[0, 1] + c[1, 1] * m + c[2, 1] * np.cos(3 * m) + c[3, 1] * m**3,
        ],
        -1,
    )
    return SampledGraph(z, u / np.abs(u).max() * size), m


def second_difference(f, t=1e-3):
    return (f(t) - 2 * f(0.0) + f(-t)) / t**2
