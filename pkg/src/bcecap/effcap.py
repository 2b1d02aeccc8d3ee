"""Per-buffer effective capacity and the two-user rate-region sweep.

Effective capacity of a service process with instantaneous rate r(z1, z2)
under a QoS exponent theta is

    a = -(1/(theta T B)) ln E{ exp(-theta T B r) }    [bits/sec/Hz]

computed with log-sum-exp stabilization; below the ergodic threshold it is
the plain mean rate. The region boundary traces the weighted sum-rate
maximizers over a sweep of lambda1: each point co-optimizes the decoding
boundary and the power policy (the gap-based rule depends on the powers, so
the two are interleaved until the boundary stops moving), then evaluates
both users' effective capacities under the joint fading expectation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .awgn import DEFAULT_QUAD
from .constellation import InputKind
from .errors import ConfigError, SolverError
from .fading import FadingGrid, expect
from .power import (
    THETA_ERGODIC,
    PowerPolicy,
    QoSParams,
    SolverSettings,
    run_algorithm1,
)
from .ratemodel import RateModel
from .regions import (
    DecodingBoundary,
    build_boundary,
    constant_powers,
    refit_boundary,
)

# weight used in place of exact 0/1 for interior sweep points
LAMBDA_MIN = 1e-3


@dataclass
class RegionPoint:
    """One boundary point of the effective-capacity region."""

    lambda1: float
    a1: float
    a2: float
    epsilon: float
    iters: int
    status: str
    policy_ref: str = ""
    policy: PowerPolicy | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return not self.status.startswith("failed")


def effective_capacity(theta: float, t_frame: float, bandwidth: float,
                       rates_bits, grid: FadingGrid) -> float:
    """Effective capacity (bits/sec/Hz) of a rate field over the fading grid.

    The exponent collapses to the mean rate below the ergodic threshold.
    """
    if theta < 0:
        raise ConfigError("QoS exponent must be nonnegative")
    rates_bits = np.asarray(rates_bits, dtype=float)
    if not np.all(np.isfinite(rates_bits)):
        raise SolverError("non-finite rate in effective-capacity expectation")
    if theta < THETA_ERGODIC:
        return expect(grid, rates_bits)
    beta = theta * t_frame * bandwidth
    return float(-logsumexp(-beta * rates_bits, b=grid.weights) / beta)


def _boundary_move(old: DecodingBoundary, new: DecodingBoundary) -> float:
    """Relative L-infinity displacement between two boundary fits; infinite
    thresholds count as moved unless they stay infinite."""
    a, b = old.z1_star, new.z1_star
    if np.any(np.isinf(a) != np.isinf(b)):
        return np.inf
    f = np.isfinite(a)
    if not np.any(f):
        return 0.0
    scale = max(float(np.max(np.abs(a[f]))), 1e-12)
    return float(np.max(np.abs(a[f] - b[f]))) / scale


def solve_region_point(
    grid: FadingGrid,
    rule: str,
    input1: InputKind,
    input2: InputKind,
    qos: QoSParams,
    p_avg: float,
    lambda1: float,
    model: RateModel | None = None,
    settings: SolverSettings | None = None,
    max_refits: int = 5,
    boundary_move_tol: float = 0.01,
) -> tuple[PowerPolicy, DecodingBoundary, int]:
    """Co-optimize decoding boundary and power policy at one weight.

    The gap-based rule needs powers to place its boundary, and the policy
    needs the boundary to assign decode orders, so the two are alternated:
    first fit uses an equal constant split of the budget, later fits use the
    current policy re-solved at the probe points. Returns the last policy,
    the boundary it was solved against, and the number of policy solves.
    """
    model = model or RateModel(DEFAULT_QUAD)
    if rule == "theorem2" and qos.theta1 != qos.theta2:
        # the gap criterion is only established for equal QoS exponents;
        # fall back to the always-valid ordering rather than extrapolate
        warnings.warn(
            "gap-based decoding regions need theta1 == theta2; "
            "using strongest_last instead",
            stacklevel=2,
        )
        rule = "strongest_last"
    z2_grid = np.unique(grid.z2)
    z_max = 4.0 * (1.0 + float(np.max(grid.z1)))

    def fit(powers) -> DecodingBoundary:
        return build_boundary(
            z2_grid, rule, input1, input2, model, powers=powers, z_max=z_max
        )

    if max_refits < 1:
        raise ConfigError("need at least one policy solve")
    boundary = fit(constant_powers(0.5 * p_avg, 0.5 * p_avg))
    policy = None
    total_outer = 0
    for _ in range(max_refits):
        policy = run_algorithm1(
            grid, boundary, input1, input2, qos, p_avg, lambda1, model, settings
        )
        total_outer += policy.diagnostics["outer_iters"]
        if rule != "theorem2":
            break
        refit = refit_boundary(
            boundary, input1, input2, model, policy.power_fn(), z_max
        )
        flips = float(np.mean(
            refit.order_21(grid.z1, grid.z2) != boundary.order_21(grid.z1, grid.z2)
        ))
        policy.diagnostics["boundary_move"] = _boundary_move(boundary, refit)
        policy.diagnostics["assignment_flips"] = flips
        if flips == 0.0:
            # no node changed decode order, so the policy is already optimal
            # under the refit curve; adopt the refit as the better estimate
            # (the curve may keep drifting where the grid has no mass)
            policy.boundary = refit
            break
        if policy.diagnostics["boundary_move"] < boundary_move_tol:
            break
        boundary = refit
    return policy, policy.boundary, total_outer


def _evaluate(policy: PowerPolicy, grid: FadingGrid, qos: QoSParams) -> tuple[float, float]:
    r1, r2 = policy.rates_bits()
    a1 = effective_capacity(qos.theta1, qos.t_frame, qos.bandwidth, r1, grid)
    a2 = effective_capacity(qos.theta2, qos.t_frame, qos.bandwidth, r2, grid)
    return a1, a2


def region_boundary(
    grid: FadingGrid,
    rule: str,
    input1: InputKind,
    input2: InputKind,
    qos: QoSParams,
    p_avg: float,
    model: RateModel | None = None,
    settings: SolverSettings | None = None,
    lambdas=None,
) -> list[RegionPoint]:
    """Sweep lambda1 and return the region boundary points, sorted by weight.

    Exact 0/1 weights are solved twice: once substituted inward by
    LAMBDA_MIN (the sweep point proper) and once exactly, as a separately
    tagged single-user endpoint run. Failures are recorded on their point
    and warned about, never dropped.
    """
    model = model or RateModel(DEFAULT_QUAD)
    if lambdas is None:
        lambdas = np.linspace(0.0, 1.0, 21)
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(lambdas < 0.0) or np.any(lambdas > 1.0):
        raise ConfigError("sweep weights must lie in [0, 1]")
    if np.any(np.diff(lambdas) < 0.0):
        raise ConfigError("sweep weights must be sorted")

    jobs: list[tuple[float, float, str]] = []
    for lam in lambdas:
        if lam == 0.0:
            jobs.append((0.0, LAMBDA_MIN, "ok"))
            jobs.append((0.0, 0.0, "endpoint"))
        elif lam == 1.0:
            jobs.append((1.0, 1.0 - LAMBDA_MIN, "ok"))
            jobs.append((1.0, 1.0, "endpoint"))
        else:
            jobs.append((lam, lam, "ok"))

    points = []
    for lam_nominal, lam_solve, tag in jobs:
        ref = f"{rule}:lambda1={lam_solve:.6g}"
        try:
            policy, _, iters = solve_region_point(
                grid, rule, input1, input2, qos, p_avg, lam_solve, model, settings
            )
            a1, a2 = _evaluate(policy, grid, qos)
            points.append(RegionPoint(
                lambda1=lam_nominal, a1=a1, a2=a2, epsilon=policy.epsilon,
                iters=iters, status=tag, policy_ref=ref, policy=policy,
            ))
        except SolverError as err:
            warnings.warn(f"region point lambda1={lam_solve:g} failed: {err}")
            points.append(RegionPoint(
                lambda1=lam_nominal, a1=np.nan, a2=np.nan, epsilon=np.nan,
                iters=0, status=f"failed: {err}", policy_ref=ref,
            ))
    points.sort(key=lambda p: (p.lambda1, p.status == "endpoint"))
    _check_concavity(points)
    return points


def _check_concavity(points: list[RegionPoint], tol: float = 1e-4) -> None:
    """The region is convex, so its frontier sorted by a1 must have
    nonincreasing slopes; violations are worth a warning, not an abort."""
    ok = [p for p in points if p.ok and p.status == "ok"]
    ok.sort(key=lambda p: p.a1)
    slopes = []
    for prev, cur in zip(ok[:-1], ok[1:]):
        da1 = cur.a1 - prev.a1
        if abs(da1) < 1e-12:
            continue
        slopes.append((cur.a2 - prev.a2) / da1)
    for s_prev, s_cur in zip(slopes[:-1], slopes[1:]):
        if s_cur > s_prev + tol:
            warnings.warn(
                f"frontier concavity violated: slope rose {s_prev:.6g} -> {s_cur:.6g}"
            )
            return
