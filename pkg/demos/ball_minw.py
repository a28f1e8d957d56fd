"""Compute min W_N for the small-ball quadratic form and print config lines.

Usage: python3 demos/ball_minw.py [rho] [N_max]
"""

import sys

from vfe import isoflux, renorm


def main():
    rho = float(sys.argv[1]) if len(sys.argv) > 1 else 0.1
    n_max = int(sys.argv[2]) if len(sys.argv) > 2 else 5
    spec = isoflux.QFormSpec.from_context(isoflux.ball_context(rho))
    for N in range(1, n_max + 1):
        res = renorm.wn_minimize(N, spec, M=33)
        value = 0.0 if N == 1 else res.value.total
        print(f"model.minW.{N} = {value:.6g}")


if __name__ == "__main__":
    main()
