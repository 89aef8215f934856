"""fundsol command line and service entry points."""

import argparse
import sys
from contextlib import asynccontextmanager
from typing import NamedTuple

import numpy as np
import uvicorn
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from loguru import logger

from fundsol.__about__ import __version__
from fundsol.config import (
    COMMANDS,
    DataFamilyConfig,
    RunConfig,
    configure_logging,
    get_log_level,
    get_output_dir,
    get_seed,
    get_threads,
    load_config,
)
from fundsol.decay import compact_decay_audit, derivative_kernel_check, envelope_check, sharpness_check
from fundsol.errors import ConfigError, FundsolError, SymbolError
from fundsol.grid import GridFunction
from fundsol.kernel import kernel_eval_many
from fundsol.levelset import find_threshold, sigma_audit
from fundsol.model import CertificateStatus
from fundsol.phase import decomposition_audit, find_audit_threshold, phase_inequality_audit
from fundsol.propagator import (
    MIN_FAMILY,
    build_family,
    default_t_grid,
    highfreq_check,
    large_t_check,
    lpq_exponent_fit,
    random_bandlimited,
)
from fundsol.reports import emit_plotdata, write_json
from fundsol.routes import api, health
from fundsol.sphere import sphere_grid, unit
from fundsol.symbol import PolynomialSymbol, certify, load_symbol

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


@asynccontextmanager
async def lifespan(_app: FastAPI):
    """Lifespan events for the FastAPI application; nothing to set up beyond logging."""
    logger.info(f"fundsol service {__version__} starting")
    yield
    logger.info("fundsol service stopped")


app = FastAPI(
    title="fundsol",
    description="Fundamental solutions of higher-order Schrodinger equations",
    docs_url="/docs",
    redoc_url="/redoc",
    openapi_url="/openapi.json",
    lifespan=lifespan,
)

# Add CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include routers
app.include_router(health)  # /health endpoint
app.include_router(api, prefix="/api")  # /api endpoints


class ServerConfig(NamedTuple):
    """Server configuration."""

    host: str = "0.0.0.0"
    port: int = 8000


class Outcome(NamedTuple):
    report: object
    passed: bool
    failures: list[str]


def _direction(p: PolynomialSymbol, direction: list[float] | None) -> np.ndarray:
    return unit(direction) if direction is not None else np.eye(p.n)[0]


def _family(
    cfg: DataFamilyConfig, p: PolynomialSymbol, regime: str, t_grid: list[float], seed: int, a_cut: float | None = None
) -> list[GridFunction]:
    """Initial data of an exponent fit; an unset grid is sized for the largest time of t_grid."""
    if cfg.type == "random_bandlimited":
        count = len(cfg.widths) if cfg.widths else MIN_FAMILY
        return [random_bandlimited(p.n, cfg.points_per_axis, cfg.extent, cfg.band, seed + i) for i in range(count)]
    if cfg.type == "shifted_gaussian" and a_cut is None:
        raise ConfigError("shifted_gaussian data needs a_cut (highfreq only)")
    shift = a_cut if cfg.type == "shifted_gaussian" else None
    grid = None if cfg.points_per_axis is None or cfg.extent is None else (cfg.points_per_axis, cfg.extent)
    return build_family(p, regime, t_grid, cfg.widths, shift, cfg.center_factor, grid)


def _run_certify(config: RunConfig, p: PolynomialSymbol) -> Outcome:
    certificate = certify(p, config.certify.sphere_density)
    failures = [
        f"{name}: {status.value}"
        for name, status in (("elliptic", certificate.elliptic_status), ("nondegenerate", certificate.nondegenerate_status))
        if status is not CertificateStatus.CERTIFIED
    ]
    return Outcome(certificate, certificate.passed, failures)


def _run_rho_audit(config: RunConfig, p: PolynomialSymbol) -> Outcome:
    cfg = config.rho_audit
    a = find_threshold(p).a
    if 2.0 * a >= cfg.s_max:
        raise ConfigError(f"rho_audit.s_max = {cfg.s_max:g} must exceed 2a = {2.0 * a:g}")
    omegas = sphere_grid(p.n, cfg.sphere_points) if cfg.sphere_points else None
    audit = sigma_audit(p, cfg.k_max, np.geomspace(2.0 * a, cfg.s_max, cfg.s_points), omegas, a)
    failures = [f"k={k}: constant not stable under grid refinement" for k, ok in audit.stable.items() if not ok]
    return Outcome(audit, audit.passed, failures)


def _run_phase_audit(config: RunConfig, p: PolynomialSymbol) -> Outcome:
    cfg = config.phase_audit
    u = _direction(p, cfg.direction)
    a1 = find_audit_threshold(p)
    if a1 >= cfg.s_max:
        raise ConfigError(f"phase_audit.s_max = {cfg.s_max:g} must exceed a1 = {a1:g}")
    s_grid = np.geomspace(a1, cfg.s_max, cfg.s_points)
    audits = [phase_inequality_audit(p, u, t, r, s_grid) for t in cfg.t_values for r in cfg.r_values]
    failures = [f"t={a.t:g}, r={a.r:g}: {fit.name}" for a in audits for fit in a.inequalities if not fit.passed]
    return Outcome(audits, all(a.passed for a in audits), failures)


def _run_sphere_decomp(config: RunConfig, p: PolynomialSymbol) -> Outcome:
    cfg = config.sphere_decomp
    lams = np.geomspace(cfg.lam_min, cfg.lam_max, cfg.lam_points)
    audit = decomposition_audit(p, _direction(p, cfg.direction), cfg.s, lams, cfg.cap_radius)
    failures = [f"|Psi_{k}| varies by {v:.3g}" for k, v in audit.psi_variation.items() if v >= 2.0]
    if not audit.psi0_weighted_decreasing:
        failures.append("|Psi_0| lambda^2 is not decreasing")
    return Outcome(audit, audit.passed, failures)


def _run_kernel(config: RunConfig, p: PolynomialSymbol) -> Outcome:
    cfg = config.kernel
    values = kernel_eval_many(p, cfg.t, cfg.points, cfg.strategy, threads=config.threads)
    return Outcome(values, True, [])


def _run_decay(config: RunConfig, p: PolynomialSymbol) -> Outcome:
    cfg = config.decay
    if cfg.compact_k is not None:
        audit = compact_decay_audit(p, cfg.compact_k)
        failures = [] if audit.slope_passed else [f"slope {audit.slope:.3f} above {audit.bound_slope:.3f}"]
        if not audit.joint_passed:
            failures.append(f"joint bound grows: binned slope {audit.joint_slope:.3f}")
        return Outcome(audit, audit.passed, failures)
    if cfg.alpha is not None:
        fit = derivative_kernel_check(p, tuple(cfg.alpha), cfg.regime, cfg.times, cfg.scales)
    else:
        fit = envelope_check(p, cfg.regime, cfg.times, cfg.scales, strategy=cfg.strategy, threads=config.threads)
    failures = [] if fit.passed else [f"max ratio {fit.max_ratio:.3g} not stable (refined {fit.refined_max_ratio})", *fit.notes]
    return Outcome(fit, fit.passed, failures)


def _run_sharpness(config: RunConfig, _p: PolynomialSymbol | None) -> Outcome:
    cfg = config.sharpness
    report = sharpness_check(cfg.m, cfg.n, cfg.window, cfg.count, cfg.tolerance)
    return Outcome(report, report.passed, [] if report.passed else [f"slope {report.slope:.4f} against {-report.mu:.4f}"])


def _run_lpq(config: RunConfig, p: PolynomialSymbol) -> Outcome:
    cfg = config.lpq
    t_grid = cfg.t_grid or default_t_grid(cfg.regime)
    family = _family(cfg.family, p, cfg.regime, t_grid, config.seed)
    if cfg.regime == "large_t":
        estimate = large_t_check(p, *cfg.pair, family, t_grid, cfg.tolerance, workers=config.threads)
    else:
        estimate = lpq_exponent_fit(p, *cfg.pair, family, t_grid, cfg.regime, cfg.tolerance, workers=config.threads)
    failures = [] if estimate.passed else [f"fitted {estimate.fitted_exponent:.4f}, predicted {estimate.predicted_exponent:.4f}"]
    return Outcome(estimate, estimate.passed, failures)


def _run_highfreq(config: RunConfig, p: PolynomialSymbol) -> Outcome:
    cfg = config.highfreq
    t_grid = cfg.t_grid or default_t_grid("all_t")
    family = _family(cfg.family, p, "all_t", t_grid, config.seed, cfg.a_cut)
    estimate = highfreq_check(p, *cfg.pair, cfg.a_cut, family, t_grid, cfg.tolerance, workers=config.threads)
    bound = estimate.predicted_exponent
    failures = [] if estimate.passed else [f"fitted {estimate.fitted_exponent:.4f} above the bound {bound:.4f}"]
    return Outcome(estimate, estimate.passed, failures)


RUNNERS = {
    "certify": _run_certify,
    "rho-audit": _run_rho_audit,
    "phase-audit": _run_phase_audit,
    "sphere-decomp": _run_sphere_decomp,
    "kernel": _run_kernel,
    "decay": _run_decay,
    "sharpness": _run_sharpness,
    "lpq": _run_lpq,
    "highfreq": _run_highfreq,
}


def run_command(config: RunConfig) -> int:
    """Execute config.command, write its JSON summary and CSV sweeps, and return the exit status.

    Returns:
        0 when every audit of the command passes, 1 when one fails or a numerical guard trips,
        2 for configuration, symbol and input errors
    """
    command = config.command
    if command not in RUNNERS:
        logger.error(f"No command given; expected one of {', '.join(COMMANDS)}")
        return EXIT_CONFIG
    logger.info(f"Running {command} with output in {config.output_dir}")
    try:
        if config.symbol is None and command != "sharpness":
            raise ConfigError(f"{command} needs a symbol file")
        p = load_symbol(config.symbol) if config.symbol is not None else None
        outcome = RUNNERS[command](config, p)
    except (ConfigError, SymbolError) as e:
        logger.error(f"{command}: {e}")
        return EXIT_CONFIG
    except ValueError as e:
        logger.error(f"{command}: invalid input: {e}")
        return EXIT_CONFIG
    except FundsolError as e:
        logger.error(f"{command} failed: {e}")
        write_json(
            config.output_dir / f"{command.replace('-', '_')}.json",
            {"command": command, "config": config, "error": f"{type(e).__name__}: {e}", "passed": False, "version": __version__},
        )
        return EXIT_FAILED

    summary = {
        "command": command,
        "config": config,
        "failures": outcome.failures,
        "passed": outcome.passed,
        "report": outcome.report,
        "version": __version__,
    }
    write_json(config.output_dir / f"{command.replace('-', '_')}.json", summary)
    emit_plotdata(command, outcome.report, config.output_dir)
    for failure in outcome.failures:
        logger.warning(f"{command}: {failure}")
    logger.info(f"{command} {'passed' if outcome.passed else 'failed'}")
    return EXIT_OK if outcome.passed else EXIT_FAILED


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--symbol", help="Symbol file (TOML)")
    common.add_argument("--config", help="Run configuration file (TOML)")
    common.add_argument("--output-dir", help="Directory for JSON and CSV artifacts")
    common.add_argument("--threads", type=int, help="Worker cap (default: available cores)")
    common.add_argument("--seed", type=int, help="Seed for randomized data")
    common.add_argument("--log-level", help="loguru level (default: INFO)")

    parser = argparse.ArgumentParser(description="Fundamental solutions of higher-order Schrodinger equations")
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("certify", parents=[common], help="Certify ellipticity and non-degeneracy")
    sub.add_argument("--sphere-density", type=int)

    sub = commands.add_parser("rho-audit", parents=[common], help="Symbol-class audit of the level-set radius")
    sub.add_argument("--k-max", type=int)
    sub.add_argument("--sphere-points", type=int)

    sub = commands.add_parser("phase-audit", parents=[common], help="Radial phase inequality audits")
    sub.add_argument("--s-max", type=float)
    sub.add_argument("--direction", type=_floats)

    sub = commands.add_parser("sphere-decomp", parents=[common], help="Stationary decomposition of the sphere integral")
    sub.add_argument("--s", type=float)
    sub.add_argument("--cap-radius", type=float)
    sub.add_argument("--direction", type=_floats)

    sub = commands.add_parser("kernel", parents=[common], help="Evaluate I(t, x)")
    sub.add_argument("--t", type=float)
    sub.add_argument("--x", type=_floats, action="append", help="Point as comma-separated coordinates, repeatable")
    sub.add_argument("--strategy", choices=["auto", "fft", "split"])

    sub = commands.add_parser("decay", parents=[common], help="Envelope, derivative and compact-piece decay checks")
    sub.add_argument("--regime", type=lambda v: v.replace("-", "_"), choices=["small_t", "large_t"])
    sub.add_argument("--compact-k", type=int)
    sub.add_argument("--alpha", type=lambda v: [int(a) for a in v.split(",")], help="Derivative multi-index, e.g. 1,0")
    sub.add_argument("--strategy", choices=["auto", "fft", "split"])

    sub = commands.add_parser("sharpness", parents=[common], help="Sharp spatial exponent for |xi|^m")
    sub.add_argument("--m", type=int)
    sub.add_argument("--n", type=int)

    sub = commands.add_parser("lpq", parents=[common], help="L^p-L^q time exponent fit")
    sub.add_argument("--pair", help="p,q with inf allowed, e.g. 1,inf")
    sub.add_argument("--regime", type=lambda v: v.replace("-", "_"), choices=["small_t", "large_t"])

    sub = commands.add_parser("highfreq", parents=[common], help="Exponent fit for spectrally cut data")
    sub.add_argument("--pair", help="p,q with inf allowed, e.g. 1,inf")
    sub.add_argument("--a-cut", type=float)

    sub = commands.add_parser("serve", help="Run the HTTP service")
    sub.add_argument("--host", default="0.0.0.0", help="Host to bind to")
    sub.add_argument("--port", type=int, default=8000, help="Port to bind to")
    sub.add_argument("--log-level", help="loguru level (default: INFO)")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Merge the config file with command line flags; flags win."""
    arg = vars(args)
    sections = {
        "certify": {"sphere_density": arg.get("sphere_density")},
        "rho_audit": {"k_max": arg.get("k_max"), "sphere_points": arg.get("sphere_points")},
        "phase_audit": {"s_max": arg.get("s_max"), "direction": arg.get("direction")},
        "sphere_decomp": {"s": arg.get("s"), "cap_radius": arg.get("cap_radius"), "direction": arg.get("direction")},
        "kernel": {"t": arg.get("t"), "points": arg.get("x"), "strategy": arg.get("strategy")},
        "decay": {
            "regime": arg.get("regime"),
            "compact_k": arg.get("compact_k"),
            "alpha": arg.get("alpha"),
            "strategy": arg.get("strategy"),
        },
        "sharpness": {"m": arg.get("m"), "n": arg.get("n")},
        "lpq": {"pair": arg.get("pair"), "regime": arg.get("regime")},
        "highfreq": {"pair": arg.get("pair"), "a_cut": arg.get("a_cut")},
    }
    section = args.command.replace("-", "_")
    return load_config(
        args.config,
        command=args.command,
        symbol=args.symbol,
        output_dir=get_output_dir(args.output_dir) if args.output_dir or not args.config else None,
        threads=get_threads(args.threads),
        seed=get_seed(args.seed) if args.seed is not None or not args.config else None,
        **{section: sections[section]},
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(get_log_level(args.log_level))
    if args.command == "serve":
        config = ServerConfig(args.host, args.port)
        logger.info(f"Starting fundsol service on {config.host}:{config.port}")
        uvicorn.run(app, host=config.host, port=config.port)
        return EXIT_OK
    try:
        config = config_from_args(args)
    except ConfigError as e:
        logger.error(str(e))
        return EXIT_CONFIG
    return run_command(config)


def run():
    """Console script entry point."""
    sys.exit(main())


if __name__ == "__main__":
    run()
