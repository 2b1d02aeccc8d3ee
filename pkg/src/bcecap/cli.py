"""Command-line front end: drives the solvers and emits deterministic CSVs.

Subcommands
-----------
mi-curve / mmse-curve   information and MMSE curves for one alphabet
policy                  one power allocation at a given rate weight
boundary                decode-order threshold curve z1*(z2)
region                  effective-capacity frontier over the weight sweep
queue-validate          buffer simulation against the configured exponents

Every run is reproducible from its output alone: CSV headers carry the
tool version, the config hash, the seed, and the full resolved config.
Exit codes: 0 success; 2 bad usage or configuration; 3 solver failure
(including a region sweep with more than 20% failed points); 4 I/O
failure.  The BCECAP_OUT environment variable sets the default output
directory.
"""

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .awgn import DEFAULT_QUAD, LN2
from .config import (
    ExperimentConfig,
    parse_config,
    parse_pairs,
)
from .constellation import GAUSSIAN, standard_constellation
from .csvio import write_csv
from .effcap import effective_capacity, region_boundary, solve_region_point
from .errors import ConfigError, SolverError
from .queuesim import estimate_theta, simulate, tail_points
from .ratemodel import RateModel
from .regions import DecodingBoundary, boundary_gap, build_boundary, refit_boundary

MAX_FAILED_FRACTION = 0.2

FIG2_K_DB = (-6.88, 4.97, 8.61)
FIG2_P_DB = (0.0, -5.0)
FIG3_INPUTS = ("bpsk", "qam16", "gaussian")
FIG3_P_DB = (5.0, 0.0, -5.0)
FIG4_THETAS = (0.001, 0.01, 0.1)


def _config_from_args(args, base_lines=()) -> ExperimentConfig:
    """Merge file config and --set overrides; overrides win."""
    pairs = dict(parse_pairs("\n".join(base_lines)))
    if args.config is not None:
        pairs.update(parse_pairs(Path(args.config).read_text(encoding="utf-8")))
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip() or not value.strip():
            raise ConfigError(f"--set expects key=value, got {item!r}")
        pairs[key.strip()] = value.strip()
    return parse_config("\n".join(f"{k} = {v}" for k, v in pairs.items()))


def _out_dir(args, config: ExperimentConfig | None = None) -> Path:
    chosen = (
        args.out
        or (config.out_dir if config is not None else None)
        or os.environ.get("BCECAP_OUT")
        or "."
    )
    path = Path(chosen)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _parse_float_list(raw: str, flag: str) -> tuple:
    try:
        values = tuple(float(tok) for tok in raw.split(",") if tok.strip())
    except ValueError:
        raise ConfigError(f"{flag}: expected comma-separated numbers") from None
    if not values:
        raise ConfigError(f"{flag}: empty list")
    return values


def _named_input(name: str):
    if name.strip().lower() == "gaussian":
        return GAUSSIAN
    return standard_constellation(name)


def cmd_curves(args) -> int:
    inp = _named_input(args.input)
    intf = _named_input(args.interferer) if args.interferer else inp
    snr = np.asarray(_parse_float_list(args.snr, "--snr"), dtype=float)
    if np.any(snr < 0):
        raise ConfigError("--snr values must be nonnegative")
    if np.any(np.diff(snr) <= 0):
        raise ConfigError("--snr values must be strictly increasing")
    if args.int_ratio < 0:
        raise ConfigError("--int-ratio must be nonnegative")

    model = RateModel(DEFAULT_QUAD)
    q = args.int_ratio * snr
    rows = zip(
        snr,
        model.mi_cond(inp, snr) / LN2,
        model.mmse_cond(inp, snr),
        model.mi_unc(inp, intf, snr, q) / LN2,
        model.down(inp, intf, snr, q),
    )
    path = _out_dir(args) / f"{args.command.replace('-', '_')}_{inp.name}.csv"
    write_csv(
        path,
        ("snr", "mi_bits", "mmse", "mi_interf_bits", "mmse_interf"),
        rows,
        meta={"input": inp.name, "interferer": intf.name, "int_ratio": args.int_ratio},
    )
    print(path)
    return 0


def _solve_point(config: ExperimentConfig, lambda1: float):
    grid = config.grid()
    policy, boundary, outer_iters = solve_region_point(
        grid,
        config.rule,
        config.input1,
        config.input2,
        config.qos,
        config.p_avg,
        lambda1,
        settings=config.settings,
    )
    return grid, policy, boundary, outer_iters


def _rule_meta(config: ExperimentConfig, boundary: DecodingBoundary, meta: dict):
    meta["rule"] = boundary.rule
    if boundary.rule != config.rule:
        meta["rule_fallback"] = True


def cmd_policy(args) -> int:
    config = _config_from_args(args)
    grid, policy, boundary, outer_iters = _solve_point(config, args.lambda1)
    in21 = boundary.order_21(grid.z1, grid.z2)
    rows = [
        (z1, z2, w, "21" if last1 else "12", p1, p2)
        for z1, z2, w, last1, p1, p2 in zip(
            grid.z1, grid.z2, grid.weights, in21, policy.p1, policy.p2
        )
    ]
    meta = {
        "lambda1": args.lambda1,
        "epsilon": policy.epsilon,
        "psi1": policy.psi1,
        "psi2": policy.psi2,
        "outer_iters": outer_iters,
        "max_kkt_residual": policy.diagnostics["max_kkt_residual"],
        "power_spent": float(np.sum(grid.weights * (policy.p1 + policy.p2))),
    }
    _rule_meta(config, boundary, meta)
    path = _out_dir(args, config) / f"{args.tag}.csv"
    write_csv(
        path,
        ("z1", "z2", "weight", "region", "P1", "P2"),
        rows,
        config=config,
        meta=meta,
    )
    print(path)
    return 0


def cmd_boundary(args) -> int:
    config = _config_from_args(args)
    z2_samples = np.linspace(
        0.0, float(config.spec2.ppf(0.999)), config.boundary_samples
    )
    meta = {"lambda1": args.lambda1, "z_max": config.boundary_z_max}

    if config.rule == "theorem2" and config.qos.theta1 == config.qos.theta2:
        _, policy, coarse, _ = _solve_point(config, args.lambda1)
        dense = DecodingBoundary(z2_samples, coarse.threshold(z2_samples), "theorem2")
        boundary = refit_boundary(
            dense,
            config.input1,
            config.input2,
            policy.model,
            policy.power_fn(),
            config.boundary_z_max,
        )
        finite = np.isfinite(boundary.z1_star)
        residuals = np.full_like(boundary.z1_star, np.nan)
        if np.any(finite):
            residuals[finite] = np.abs(
                boundary_gap(
                    boundary.z1_star[finite],
                    boundary.z2_samples[finite],
                    policy.power_fn(),
                    config.input1,
                    config.input2,
                    policy.model,
                )
            )
    else:
        rule = config.rule
        if rule == "theorem2":
            print(
                "warning: gap-based rule needs equal QoS exponents; "
                "using strongest_last",
                file=sys.stderr,
            )
            rule = "strongest_last"
        boundary = build_boundary(
            z2_samples, rule, config.input1, config.input2, RateModel(DEFAULT_QUAD)
        )
        residuals = np.full_like(boundary.z1_star, np.nan)

    _rule_meta(config, boundary, meta)
    rows = [
        (z2, star, res, boundary.rule)
        for z2, star, res in zip(boundary.z2_samples, boundary.z1_star, residuals)
    ]
    path = _out_dir(args, config) / f"{args.tag}.csv"
    write_csv(path, ("z2", "z1_star", "residual_nats", "rule"), rows,
              config=config, meta=meta)
    print(path)
    return 0


def _preset_variants(args) -> list:
    """(tag, config) pairs for a preset, honoring --set overrides last."""
    name = args.preset

    def cfg(tag: str, lines: list) -> tuple:
        merged = argparse.Namespace(config=args.config, set=args.set)
        return tag, _config_from_args(merged, base_lines=lines)

    base = ["input1 = bpsk", "input2 = bpsk"]
    if name == "fig2":
        return [
            cfg(
                f"fig2_K{k:+.2f}dB_P{p:+.0f}dB",
                base + [f"fading.K_dB = {k}", f"power.p_avg_dB = {p}"],
            )
            for k in FIG2_K_DB
            for p in FIG2_P_DB
        ]
    if name == "fig3":
        return [
            cfg(
                f"fig3_{mod}_P{p:+.0f}dB",
                [
                    f"input1 = {mod}",
                    f"input2 = {mod}",
                    "fading.K_dB = -6.88",
                    f"power.p_avg_dB = {p}",
                ],
            )
            for mod in FIG3_INPUTS
            for p in FIG3_P_DB
        ]
    if name == "fig4":
        thetas = (
            _parse_float_list(args.theta, "--theta") if args.theta else FIG4_THETAS
        )
        return [
            cfg(
                f"fig4_theta{theta:g}",
                base
                + [
                    "fading.K_dB = -6.88",
                    "power.p_avg_dB = 5",
                    f"qos.theta1 = {theta!r}",
                    f"qos.theta2 = {theta!r}",
                ],
            )
            for theta in thetas
        ]
    raise ConfigError(f"unknown preset {name!r}")


def _run_region_variant(tag: str, config: ExperimentConfig, out: Path) -> float:
    """Solve one frontier, write its CSV, return the failed fraction."""
    grid = config.grid()
    points = region_boundary(
        grid,
        config.rule,
        config.input1,
        config.input2,
        config.qos,
        config.p_avg,
        settings=config.settings,
        lambdas=config.lambda_sweep,
    )
    rows = [
        (p.lambda1, p.a1, p.a2, p.epsilon, p.iters, p.status) for p in points
    ]
    failed = sum(not p.ok for p in points) / len(points)
    meta = {
        "rule": config.rule,
        "points": len(points),
        "failed_fraction": failed,
    }
    write_csv(
        out / f"{tag}.csv",
        ("lambda1", "a1_bits_s_hz", "a2_bits_s_hz", "epsilon", "iters", "status"),
        rows,
        config=config,
        meta=meta,
    )
    print(out / f"{tag}.csv")
    return failed


def cmd_region(args) -> int:
    if args.preset:
        variants = _preset_variants(args)
    else:
        if args.config is None and not args.set:
            raise ConfigError("region needs --config, --set pairs, or --preset")
        variants = [(args.tag, _config_from_args(args))]

    out = _out_dir(args, variants[0][1])
    if args.threads > 1 and len(variants) > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            futures = [
                pool.submit(_run_region_variant, tag, config, out)
                for tag, config in variants
            ]
            failed_fractions = [f.result() for f in futures]
    else:
        failed_fractions = [
            _run_region_variant(tag, config, out) for tag, config in variants
        ]
    if max(failed_fractions) > MAX_FAILED_FRACTION:
        print(
            f"solver error: {max(failed_fractions):.0%} of sweep points failed",
            file=sys.stderr,
        )
        return 3
    return 0


def cmd_queue_validate(args) -> int:
    config = _config_from_args(args)
    grid, policy, boundary, _ = _solve_point(config, args.lambda1)
    r1, r2 = policy.rates_bits()
    qos = config.qos
    a1 = effective_capacity(qos.theta1, qos.t_frame, qos.bandwidth, r1, grid)
    a2 = effective_capacity(qos.theta2, qos.t_frame, qos.bandwidth, r2, grid)
    arrivals = (config.queue_arrival_scale * a1, config.queue_arrival_scale * a2)

    out = _out_dir(args, config)
    for seed in config.queue_seeds:
        traces = simulate(policy, boundary, arrivals, config.queue_n_frames, seed)
        rows = []
        tail_rows = []
        theta_hats = []
        for user, (trace, theta, arrival) in enumerate(
            zip(traces, (qos.theta1, qos.theta2), arrivals), start=1
        ):
            if trace.unstable:
                theta_hat, ci = float("nan"), float("nan")
            else:
                estimate = estimate_theta(trace)
                theta_hat, ci = estimate.value, estimate.ci_halfwidth
                for q_bits, ccdf in zip(*tail_points(trace)):
                    tail_rows.append((user, q_bits, ccdf))
            theta_hats.append(theta_hat)
            rows.append((user, arrival, theta, theta_hat, ci, not trace.unstable))
        meta = {
            "lambda1": args.lambda1,
            "arrival_scale": config.queue_arrival_scale,
            "effective_capacity_1": a1,
            "effective_capacity_2": a2,
            "n_frames": config.queue_n_frames,
        }
        _rule_meta(config, boundary, meta)
        path = out / f"{args.tag}_seed{seed}.csv"
        write_csv(
            path,
            ("user", "arrival_rate", "theta_target", "theta_hat",
             "ci_halfwidth", "stable"),
            rows,
            config=config,
            seed=seed,
            meta=meta,
        )
        print(path)
        # exceedance curve behind each theta_hat, for downstream tail plots
        tail_path = out / f"{args.tag}_tail_seed{seed}.csv"
        tail_meta = dict(meta, theta_hat_1=theta_hats[0], theta_hat_2=theta_hats[1])
        write_csv(
            tail_path,
            ("user", "q_bits", "ccdf"),
            tail_rows,
            config=config,
            seed=seed,
            meta=tail_meta,
        )
        print(tail_path)
    return 0


def _add_common(sub, tag_default: str | None = None):
    sub.add_argument("--config", help="experiment config file")
    sub.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )
    sub.add_argument("--out", help="output directory (default $BCECAP_OUT or .)")
    if tag_default is not None:
        sub.add_argument("--tag", default=tag_default, help="output file stem")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bcecap",
        description="Effective-capacity regions of a two-user fading "
        "broadcast channel under arbitrary input alphabets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("mi-curve", "mmse-curve"):
        p = sub.add_parser(
            name, help="information and MMSE curves against SNR for one alphabet"
        )
        p.add_argument("--input", required=True, help="bpsk, qpsk, qam16, gaussian")
        p.add_argument(
            "--snr", required=True, help="comma-separated SNR grid (linear, ascending)"
        )
        p.add_argument("--interferer", help="interfering alphabet (default: --input)")
        p.add_argument(
            "--int-ratio",
            type=float,
            default=1.0,
            help="interference-to-signal power ratio (default 1)",
        )
        p.add_argument("--out", help="output directory (default $BCECAP_OUT or .)")
        p.set_defaults(func=cmd_curves)

    p = sub.add_parser("policy", help="solve one power allocation")
    _add_common(p, tag_default="policy")
    p.add_argument("--lambda1", type=float, default=0.5, help="rate weight in [0, 1]")
    p.set_defaults(func=cmd_policy)

    p = sub.add_parser("boundary", help="decode-order threshold curve")
    _add_common(p, tag_default="boundary")
    p.add_argument("--lambda1", type=float, default=0.5, help="rate weight in [0, 1]")
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("region", help="effective-capacity frontier sweep")
    _add_common(p, tag_default="region")
    p.add_argument("--preset", choices=("fig2", "fig3", "fig4"))
    p.add_argument("--theta", help="override preset QoS exponents (comma list)")
    p.add_argument(
        "--threads", type=int, default=1, help="parallel preset variants (default 1)"
    )
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("queue-validate", help="buffer simulation against the QoS target")
    _add_common(p, tag_default="queue_validate")
    p.add_argument("--lambda1", type=float, default=0.5, help="rate weight in [0, 1]")
    p.set_defaults(func=cmd_queue_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
