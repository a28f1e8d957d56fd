"""Batch front-end: ``vfe <subcommand> [--config FILE] [--set key=value ...] [--out DIR] [--seed N]``.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 solver
non-convergence, 1 any other package error.
"""

import os

_threads = os.environ.get("VFE_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import logging  # noqa: E402
import re  # noqa: E402
import sys  # noqa: E402
from dataclasses import dataclass  # noqa: E402
from typing import Any, Callable  # noqa: E402

import numpy as np  # noqa: E402

from . import critfield, fields, geometry, isoflux, profile, renorm  # noqa: E402
from .errors import ConfigError, ConvergenceError, DomainError, VFEError  # noqa: E402
from .io import parse_flat_config, write_csv, write_flat_config  # noqa: E402

log = logging.getLogger("vfe.cli")

SUBCOMMANDS = (
    "ball-setup",
    "isoflux-maximize",
    "q-spectrum",
    "wn-minimize",
    "critical-fields",
    "optimal-n",
    "profile-gamma",
    "perforated-check",
    "c-omega",
)


# ------------------------------------------------------------------ config schema


def _opt_float(s):
    return None if s in ("", "none", "None") else float(s)


def _float_list(s):
    return [float(t) for t in s.replace(";", ",").split(",") if t.strip()]


def _points(s):
    pts = []
    for chunk in s.split(";"):
        if chunk.strip():
            xy = [float(t) for t in chunk.split(",")]
            if len(xy) != 2:
                raise ValueError(f"point {chunk!r} must have two coordinates")
            pts.append(xy)
    return pts


def _choice(*opts):
    def parse(s):
        if s not in opts:
            raise ValueError(f"must be one of {', '.join(opts)}")
        return s

    return parse


def _positive(parse):
    def f(s):
        v = parse(s)
        if not v > 0:
            raise ValueError("must be positive")
        return v

    return f


@dataclass(frozen=True)
class Key:
    parse: Callable
    default: str
    help: str


KEYS = {
    "seed": Key(int, "0", "random seed for initializers"),
    "geometry.ball.rho": Key(_positive(float), "0.1", "ball radius"),
    "geometry.delta": Key(_positive(float), "0.5", "tube radius of the ball chart"),
    "disc.M": Key(_positive(int), "65", "grid nodes along the axis"),
    "disc.basis_size": Key(_positive(int), "32", "grid nodes for q-spectrum"),
    "disc.n_s": Key(_positive(int), "4", "Gauss nodes across swept surfaces"),
    "isoflux.amplitude": Key(float, "0.05", "size of the random initial displacement"),
    "isoflux.modes": Key(_positive(int), "3", "sine modes in the random initial displacement"),
    "isoflux.tolerance": Key(_positive(float), "1e-10", "relative dual gradient tolerance"),
    "isoflux.max_iter": Key(_positive(int), "500", "iteration budget"),
    "qform.spec": Key(_choice("ball", "synthetic", "pure_kinetic"), "ball", "quadratic form source"),
    "qform.mass": Key(float, "1.0", "mass of the synthetic isotropic form"),
    "qform.L0": Key(_positive(float), "1.0", "length for synthetic and pure-kinetic forms"),
    "qform.R0": Key(_positive(float), "0.5", "R0 for the pure-kinetic form"),
    "renorm.N": Key(_positive(int), "2", "number of filaments"),
    "renorm.endpoint_mode": Key(_choice("free", "clamped"), "free", "endpoint condition"),
    "renorm.clamped": Key(
        _float_list, "", "clamped endpoints: per curve x0,y0,x1,y1 (4N numbers)"
    ),
    "renorm.noise": Key(float, "1e-3", "initial noise amplitude"),
    "renorm.tolerance": Key(_positive(float), "1e-7", "Euler-Lagrange residual tolerance"),
    "renorm.max_iter": Key(_positive(int), "5000", "iteration budget"),
    "model.R0": Key(_opt_float, "", "isoflux ratio maximum (empty: from the ball)"),
    "model.L0": Key(_opt_float, "", "length of the maximizing curve (empty: from the ball)"),
    "model.C_Omega": Key(float, "0", "domain constant"),
    "model.gamma": Key(float, "0", "vortex-core constant"),
    "model.J0": Key(float, "0", "Meissner coefficient (0: energies are excesses)"),
    "scenario.eps": Key(_positive(float), "1e-3", "Ginzburg-Landau parameter"),
    "scenario.N_max": Key(_positive(int), "5", "largest filament count"),
    "scenario.h_min": Key(_opt_float, "", "sweep start (empty: H_1 / 2)"),
    "scenario.h_max": Key(_opt_float, "", "sweep end (empty: H_{N_max} + 1)"),
    "scenario.h_points": Key(_positive(int), "1000", "sweep points"),
    "scenario.log_scale": Key(_choice("literal", "frozen"), "literal", "log factor in g_eps"),
    "profile.R_max": Key(_positive(float), "100", "outer radius of the profile solve"),
    "profile.nodes": Key(_positive(int), "8001", "profile grid nodes"),
    "perforated.points": Key(_points, "0.05,0;-0.05,0", "points as x,y;x,y;..."),
    "perforated.delta": Key(_positive(float), "1.0", "outer radius"),
    "perforated.r": Key(_positive(float), "1e-3", "exclusion radius"),
    "perforated.n_theta": Key(_positive(int), "512", "angular nodes"),
    "comega.ball_radius": Key(_positive(float), "1.0", "ball radius"),
    "comega.rho_cuts": Key(_float_list, "0.2,0.1,0.05", "decreasing cut radii"),
    "comega.multiplicity": Key(_positive(int), "1", "integer multiple of the curve"),
    "comega.n_log": Key(_positive(int), "32", "log-radial Gauss nodes"),
    "comega.n_outer": Key(_positive(int), "16", "outer radial Gauss nodes"),
    "comega.n_z": Key(_positive(int), "32", "axial Gauss nodes"),
    "comega.n_theta": Key(_positive(int), "24", "angular nodes"),
}

_MINW = re.compile(r"^model\.minW\.(\d+)$")


@dataclass
class RunConfig:
    values: dict
    minW: dict
    raw: dict

    def __getitem__(self, k):
        return self.values[k]

    def resolved_items(self, subcommand):
        items = [("subcommand", subcommand)]
        items += [(k, self.raw[k]) for k in sorted(KEYS)]
        items += [(f"model.minW.{n}", self.raw[f"model.minW.{n}"]) for n in sorted(self.minW)]
        return items


def accepted_keys():
    return sorted(KEYS) + ["model.minW.<N>"]


def build_config(file_items=None, overrides=None, seed=None):
    """Merge defaults, file entries and ``--set`` overrides, then validate every value.

    Raises
    ------
    ConfigError
        Unknown key (the message lists accepted keys) or an unparsable value.
    """
    raw = {k: spec.default for k, spec in KEYS.items()}
    for src in (file_items or {}), (overrides or {}):
        for k, v in src.items():
            if k not in KEYS and not _MINW.match(k):
                raise ConfigError(f"unknown key {k!r}; accepted keys: {', '.join(accepted_keys())}")
            raw[k] = v
    if seed is not None:
        raw["seed"] = str(seed)
    values, minW = {}, {}
    for k, v in raw.items():
        m = _MINW.match(k)
        try:
            if m:
                minW[int(m.group(1))] = float(v)
            else:
                values[k] = KEYS[k].parse(v)
        except ValueError as exc:
            raise ConfigError(f"invalid value for {k}: {v!r} ({exc})") from None
    if values["seed"] < 0:
        raise ConfigError("seed must be non-negative")
    return RunConfig(values, minW, raw)


# ------------------------------------------------------------------ subcommands


def _ball_R0_L0(cfg):
    R0, L0 = cfg["model.R0"], cfg["model.L0"]
    if R0 is None or L0 is None:
        rho = cfg["geometry.ball.rho"]
        L0b = 2 * rho
        R0b = fields.flux_gamma0_ball(rho) / L0b
        R0 = R0b if R0 is None else R0
        L0 = L0b if L0 is None else L0
    return R0, L0


def _constants(cfg, N_needed):
    R0, L0 = _ball_R0_L0(cfg)
    missing = [n for n in range(1, N_needed + 1) if n not in cfg.minW]
    if missing:
        raise ConfigError(
            f"model.minW missing for N={missing}; supply model.minW.<N> for N=1..{N_needed}"
        )
    return critfield.ModelConstants(
        R0=R0, L0=L0, C_Omega=cfg["model.C_Omega"], gamma=cfg["model.gamma"], J0=cfg["model.J0"], minW=cfg.minW
    )


def _qspec(cfg):
    kind = cfg["qform.spec"]
    if kind == "synthetic":
        return isoflux.QFormSpec.synthetic_isotropic(cfg["qform.L0"], cfg["qform.mass"])
    if kind == "pure_kinetic":
        return isoflux.QFormSpec.pure_kinetic(cfg["qform.L0"], cfg["qform.R0"])
    ctx = isoflux.ball_context(cfg["geometry.ball.rho"], cfg["geometry.delta"], cfg["disc.n_s"])
    return isoflux.QFormSpec.from_context(ctx)


def cmd_ball_setup(cfg, out):
    rho = cfg["geometry.ball.rho"]
    chart, jet = geometry.ball_chart(rho, cfg["geometry.delta"])
    fj = fields.ball_field_jet(rho)
    flux0 = fields.flux_gamma0_ball(rho)
    s = np.linspace(0.0, chart.L0, cfg["disc.M"])
    gp, d1, d2, P = jet.g_perp_axis(s), jet.dg33(s), jet.d2g33(s), fj.ddB0_u_e3(s)
    rows = [
        (s[k], gp[k, 0, 0], gp[k, 1, 1], d1[k, 0], d1[k, 1], d2[k, 0, 0], d2[k, 1, 1], P[k, 0, 0], P[k, 1, 1])
        for k in range(s.size)
    ]
    write_csv(
        os.path.join(out, "ball_axis_jet.csv"),
        ["s", "g_perp_11", "g_perp_22", "dg33_1", "dg33_2", "d2g33_11", "d2g33_22", "ddB0_11", "ddB0_22"],
        rows,
    )
    write_csv(
        os.path.join(out, "ball_summary.csv"),
        ["rho", "L0", "flux0", "R0", "rho3_over_3"],
        [(rho, chart.L0, flux0, flux0 / chart.L0, rho**3 / 3)],
    )
    print(f"rho={rho:.17g} L0={chart.L0:.17g} flux0={flux0:.17g} R0={flux0 / chart.L0:.17g}")


def cmd_isoflux_maximize(cfg, out):
    rho = cfg["geometry.ball.rho"]
    ctx = isoflux.ball_context(rho, cfg["geometry.delta"], cfg["disc.n_s"])
    rng = np.random.default_rng(cfg["seed"])
    z = np.linspace(0.0, ctx.L0, cfg["disc.M"])
    t = z / ctx.L0
    k = np.arange(1, cfg["isoflux.modes"] + 1)
    coef = rng.standard_normal((k.size, 2)) / k[:, None]
    U = cfg["isoflux.amplitude"] * np.sin(np.pi * np.outer(t, k)) @ coef + cfg["isoflux.amplitude"] * rng.standard_normal(2) * 0.5
    res = isoflux.maximize_ratio(
        geometry.SampledGraph(z, U), ctx, tol=cfg["isoflux.tolerance"], max_iter=cfg["isoflux.max_iter"]
    )
    write_csv(
        os.path.join(out, "isoflux_curve.csv"),
        ["z", "u_x", "u_y"],
        [(z[i], res.curve.u_values[i, 0], res.curve.u_values[i, 1]) for i in range(z.size)],
    )
    write_csv(os.path.join(out, "isoflux_trace.csv"), ["iteration", "ratio", "gradient_norm"], res.trace)
    print(
        f"ratio={res.value:.17g} R0={ctx.R0:.17g} initial={res.initial_value:.17g} "
        f"max_u={np.max(np.abs(res.curve.u_values)):.3e} iterations={res.n_iter}"
    )
    if not res.converged:
        raise ConvergenceError(f"isoflux-maximize: {res.message}", trace=res.trace, last=res.curve)


def cmd_q_spectrum(cfg, out):
    spec = _qspec(cfg)
    sp = isoflux.q_spectrum(spec, cfg["disc.basis_size"], refine=True)
    write_csv(
        os.path.join(out, "q_spectrum.csv"),
        ["basis_size", "lambda_min", "lambda_max", "lambda_min_refined", "lambda_max_refined"],
        [(sp.basis_size, sp.lambda_min, sp.lambda_max, sp.lambda_min_refined, sp.lambda_max_refined)],
    )
    write_csv(os.path.join(out, "q_eigenvalues.csv"), ["index", "eigenvalue"], list(enumerate(sp.eigenvalues)))
    print(f"lambda_min={sp.lambda_min:.17g} lambda_max={sp.lambda_max:.17g}")
    if not sp.lambda_min > 0:
        log.warning("Q is not positive on this basis: lambda_min=%g", sp.lambda_min)


def cmd_wn_minimize(cfg, out):
    N = cfg["renorm.N"]
    spec = _qspec(cfg)
    mode = cfg["renorm.endpoint_mode"]
    clamped = None
    if mode == "clamped":
        c = cfg["renorm.clamped"]
        if len(c) != 4 * N:
            raise ConfigError(f"renorm.clamped needs 4N = {4 * N} numbers, got {len(c)}")
        clamped = np.asarray(c).reshape(N, 2, 2)
    res = renorm.wn_minimize(
        N,
        spec,
        M=cfg["disc.M"],
        endpoint_mode=mode,
        clamped=clamped,
        tolerance=cfg["renorm.tolerance"],
        max_iter=cfg["renorm.max_iter"],
        seed=cfg["seed"],
        noise=cfg["renorm.noise"],
    )
    fam = res.family
    write_csv(os.path.join(out, "wn_family.csv"), ["curve", "z", "u_x", "u_y"], fam.rows())
    write_csv(
        os.path.join(out, "wn_trace.csv"), ["iteration", "energy", "grad_norm", "min_separation"], res.trace
    )
    write_csv(
        os.path.join(out, "wn_summary.csv"),
        ["N", "M", "W", "confinement", "interaction", "el_residual", "min_separation", "iterations"],
        [
            (
                N,
                fam.M,
                res.value.total,
                res.value.confinement,
                res.value.interaction,
                res.residual,
                fam.min_separation(spec) if N > 1 else float("nan"),
                res.n_iter,
            )
        ],
    )
    print(f"W={res.value.total:.17g} residual={res.residual:.3e} iterations={res.n_iter}")


def cmd_critical_fields(cfg, out):
    eps, N_max = cfg["scenario.eps"], cfg["scenario.N_max"]
    c = _constants(cfg, N_max)
    tab = critfield.critical_field_table(eps, c, N_max, cfg["scenario.log_scale"])
    write_csv(os.path.join(out, "critical_fields.csv"), ["N", "k_N", "H_N", "g_eps_N"], tab.rows)
    print(f"Hc1={critfield.Hc1_expansion(eps, c):.17g} increasing={int(tab.increasing)}")


def cmd_optimal_n(cfg, out):
    eps, N_max = cfg["scenario.eps"], cfg["scenario.N_max"]
    c = _constants(cfg, N_max)
    lo = cfg["scenario.h_min"]
    hi = cfg["scenario.h_max"]
    lo = 0.5 * critfield.H_N(1, eps, c) if lo is None else lo
    hi = critfield.H_N(N_max, eps, c) + 1.0 if hi is None else hi
    if not (0 < lo < hi):
        raise ConfigError(f"need 0 < scenario.h_min < scenario.h_max, got {lo}, {hi}")
    hs = np.linspace(lo, hi, cfg["scenario.h_points"])
    ls = cfg["scenario.log_scale"]
    Ns = [critfield.optimal_N(h, eps, c, N_max, ls) for h in hs]
    write_csv(os.path.join(out, "optimal_n.csv"), ["h_ex", "N"], zip(hs, Ns))
    mono = all(b >= a for a, b in zip(Ns, Ns[1:]))
    print(f"points={hs.size} max_N={max(Ns)} nondecreasing={int(mono)}")


def cmd_profile_gamma(cfg, out):
    prof = profile.solve_f0(cfg["profile.R_max"], cfg["profile.nodes"])
    g = profile.gamma_estimate(prof)
    write_csv(os.path.join(out, "profile.csv"), ["r", "f"], prof.rows())
    write_csv(os.path.join(out, "gamma_convergence.csv"), ["R", "gamma_est"], g.history)
    print(f"gamma_est={g.value:.17g} err={g.err:.17g}")


def cmd_perforated_check(cfg, out):
    pts = cfg["perforated.points"]
    res = profile.perforated_renormalized_check(
        pts, cfg["perforated.delta"], cfg["perforated.r"], n_theta=cfg["perforated.n_theta"]
    )
    write_csv(
        os.path.join(out, "perforated_check.csv"),
        ["N", "delta", "r", "numeric", "closed_form", "deviation"],
        [(len(pts), cfg["perforated.delta"], cfg["perforated.r"], res.numeric, res.closed_form, res.deviation)],
    )
    print(f"numeric={res.numeric:.17g} closed_form={res.closed_form:.17g} deviation={res.deviation:.3e}")


def cmd_c_omega(cfg, out):
    est = fields.c_omega_estimate(
        geometry.BallGeometry(cfg["comega.ball_radius"]),
        rho_cuts=cfg["comega.rho_cuts"],
        multiplicity=cfg["comega.multiplicity"],
        n_log=cfg["comega.n_log"],
        n_outer=cfg["comega.n_outer"],
        n_z=cfg["comega.n_z"],
        n_theta=cfg["comega.n_theta"],
    )
    write_csv(os.path.join(out, "c_omega.csv"), ["rho", "energy", "counterterm", "sum"], est.rows())
    print(f"C_Omega_approx={est.value:.17g} order={est.order:.3g}")


COMMANDS = {
    "ball-setup": cmd_ball_setup,
    "isoflux-maximize": cmd_isoflux_maximize,
    "q-spectrum": cmd_q_spectrum,
    "wn-minimize": cmd_wn_minimize,
    "critical-fields": cmd_critical_fields,
    "optimal-n": cmd_optimal_n,
    "profile-gamma": cmd_profile_gamma,
    "perforated-check": cmd_perforated_check,
    "c-omega": cmd_c_omega,
}


# ------------------------------------------------------------------ entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _parser():
    p = _Parser(prog="vfe", description="Vortex-filament energetics batch runner.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="flat key = value file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a key (repeatable)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, help="random seed (overrides the seed key)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(subcommand, config_path=None, overrides=None, out=".", seed=None):
    """Run one subcommand and write its artifacts into ``out``; returns the exit code."""
    file_items = {}
    if config_path:
        try:
            with open(config_path) as fh:
                file_items = parse_flat_config(fh.read(), config_path)
        except OSError as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from None
    cfg = build_config(file_items, overrides, seed)
    os.makedirs(out, exist_ok=True)
    write_flat_config(os.path.join(out, f"resolved_config_{subcommand}.txt"), cfg.resolved_items(subcommand))
    COMMANDS[subcommand](cfg, out)
    return 0


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    logging.basicConfig(
        stream=sys.stderr, level=logging.WARNING, format="level=%(levelname)s logger=%(name)s msg=%(message)s"
    )
    try:
        args = _parser().parse_args(argv)
        if args.verbose:
            logging.getLogger("vfe").setLevel(logging.INFO)
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            k, v = item.split("=", 1)
            overrides[k.strip()] = v.strip()
        return run(args.subcommand, args.config, overrides, args.out, args.seed)
    except (ConfigError, DomainError) as exc:
        log.error("validation error: %s", exc)
        return 2
    except ConvergenceError as exc:
        tail = exc.trace[-3:] if exc.trace else []
        log.error("no convergence: %s; last trace rows %s", exc, tail)
        return 3
    except VFEError as exc:
        log.error("error: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
