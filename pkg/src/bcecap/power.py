"""Optimal power allocation over the fading grid under QoS weighting.

The weighted effective-capacity objective with an average-power constraint
yields per-node stationarity conditions coupling the two users. With decode
order (2,1) at a node (user 1 clean, user 2 interfered) the marginal-utility
balance is, in bits and per watt,

    user u (interfered):  (lam_u/psi_u) e^{-b_u r_u} z_u D_u(z_u P_u, z_u P_c) / ln2 = eps
    user c (clean):       (lam_c/psi_c) e^{-b_c r_c} z_c M_c(z_c P_c) / ln2
                        + (lam_u/psi_u) e^{-b_u r_u} z_u [D_c(z_u P_c, z_u P_u) - M_c(z_u P_c)] / ln2 = eps

where D is the interference-marginalized SNR derivative of the mutual
information, M the interference-free MMSE, b_j = theta_j T B, and the cross
term prices the harm extra clean-user power does to the interfered user at
the latter's receiver. Order (1,2) swaps the roles. Negative roots clamp to
zero.

Solution is a triple nest: per-node alternating bisections (inner), a
bisection on ln eps driving the average total power to the budget (middle),
and a damped fixed point on the normalizers psi_j = E{e^{-b_j r_j}} (outer).
All node math is vectorized across the grid.

The alternation damps its clean-power step adaptively; nodes where it still
cycles (deep saturation at very small eps, or several stationary points) are
re-solved one at a time by maximizing the node's actual Lagrangian
contribution on a log grid and polishing with damped coordinate ascent. The
argmax of (bounded utility - eps * power) stays well conditioned even where
the root structure of the stationarity equations does not.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .awgn import DEFAULT_QUAD, LN2
from .constellation import InputKind
from .errors import ConfigError, SolverError
from .fading import FadingGrid
from .ratemodel import RateModel
from .regions import DecodingBoundary, instantaneous_rates

# below this the QoS exponent is treated as the ergodic limit (psi = 1)
THETA_ERGODIC = 1e-8


@dataclass(frozen=True)
class QoSParams:
    """Per-user QoS exponents (1/bits) and the frame/bandwidth scaling."""

    theta1: float
    theta2: float
    t_frame: float = 1.0
    bandwidth: float = 100.0

    def __post_init__(self):
        if self.theta1 < 0 or self.theta2 < 0:
            raise ConfigError("QoS exponents must be nonnegative")
        if self.t_frame <= 0 or self.bandwidth <= 0:
            raise ConfigError("frame duration and bandwidth must be positive")

    def beta(self, user: int) -> float:
        """Exponential tilt per bits/sec/Hz of rate; zero in the ergodic
        regime."""
        th = self.theta1 if user == 1 else self.theta2
        return 0.0 if th < THETA_ERGODIC else th * self.t_frame * self.bandwidth


@dataclass(frozen=True)
class SolverSettings:
    inner_tol_scale: float = 1e-6
    inner_max_iters: int = 200
    bisect_max_iters: int = 90
    psi_tol: float = 1e-4
    psi_max_iters: int = 50
    power_rel_tol: float = 1e-3
    eps_lo: float = 1e-3
    eps_hi: float = 1e3
    eps_max_expand: int = 6
    eps_max_iters: int = 200
    bracket_samples: int = 5
    basin_scan: int = 40
    fallback_scan: int = 96
    fallback_max_iters: int = 30


@dataclass
class PowerPolicy:
    """Converged allocation with everything needed to re-evaluate it."""

    grid: FadingGrid
    boundary: DecodingBoundary
    p1: np.ndarray
    p2: np.ndarray
    epsilon: float
    psi1: float
    psi2: float
    lambda1: float
    qos: QoSParams
    input1: InputKind
    input2: InputKind
    model: RateModel
    p_avg: float
    settings: SolverSettings = field(default_factory=SolverSettings)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.p1 < 0) or np.any(self.p2 < 0):
            raise SolverError("negative power in policy")
        total = float(np.sum(self.grid.weights * (self.p1 + self.p2)))
        if total > self.p_avg * (1.0 + 1e-3):
            raise SolverError("policy exceeds power budget", {"total": total})
        if not (0.0 < self.psi1 <= 1.0 and 0.0 < self.psi2 <= 1.0):
            raise SolverError("normalizers out of range", {"psi1": self.psi1, "psi2": self.psi2})

    def rates_bits(self, z1=None, z2=None, p1=None, p2=None):
        """Instantaneous rate pair in bits/sec/Hz (grid nodes by default)."""
        z1 = self.grid.z1 if z1 is None else z1
        z2 = self.grid.z2 if z2 is None else z2
        p1 = self.p1 if p1 is None else p1
        p2 = self.p2 if p2 is None else p2
        r1, r2 = instantaneous_rates(
            z1, z2, p1, p2, self.input1, self.input2, self.boundary, self.model
        )
        return r1 / LN2, r2 / LN2

    def powers_at(self, z1, z2) -> tuple[np.ndarray, np.ndarray]:
        """Re-solve the per-node conditions at arbitrary fading coordinates
        with the stored multipliers (used off-grid: simulation, boundary
        refits)."""
        z1 = np.atleast_1d(np.asarray(z1, dtype=float))
        z2 = np.atleast_1d(np.asarray(z2, dtype=float))
        in21 = self.boundary.order_21(z1, z2)
        return _solve_nodes(
            z1, z2, in21, self.epsilon, self.psi1, self.psi2, self.lambda1,
            self.qos, self.input1, self.input2, self.model, self.settings,
            scale=self.p_avg,
        )

    def power_fn(self) -> Callable:
        def powers(z1, z2):
            return self.powers_at(z1, z2)

        return powers


# ---------------------------------------------------------------------------
# Per-node stationarity equations (vectorized over node groups).
# ---------------------------------------------------------------------------


@dataclass
class _Group:
    """Nodes in clean/interfered role coordinates.

    The weight/normalizer/exponent parameters may be scalars (nodes sharing
    one decode order) or per-node arrays (both orders fused into a single
    vectorized solve when the users share an input kind)."""

    z_c: np.ndarray
    z_u: np.ndarray
    lam_c: float | np.ndarray
    lam_u: float | np.ndarray
    psi_c: float | np.ndarray
    psi_u: float | np.ndarray
    beta_c: float | np.ndarray
    beta_u: float | np.ndarray
    input_c: InputKind
    input_u: InputKind
    model: RateModel

    def rate_u(self, p_u, p_c):
        return self.model.mi_unc(self.input_u, self.input_c, self.z_u * p_u, self.z_u * p_c) / LN2

    def rate_c(self, p_c):
        return self.model.mi_cond(self.input_c, self.z_c * p_c) / LN2

    def lhs_u(self, p_u, p_c):
        """Marginal utility of interfered-user power against eps."""
        r_u = self.rate_u(p_u, p_c)
        down = self.model.down(self.input_u, self.input_c, self.z_u * p_u, self.z_u * p_c)
        return (self.lam_u / self.psi_u) * np.exp(-self.beta_u * r_u) * self.z_u * down / LN2

    def lhs_c(self, p_c, p_u):
        """Marginal utility of clean-user power (own gain minus the harm
        inflicted on the interfered user at that user's receiver)."""
        r_c = self.rate_c(p_c)
        own = (self.lam_c / self.psi_c) * np.exp(-self.beta_c * r_c) * self.z_c \
            * self.model.mmse_cond(self.input_c, self.z_c * p_c)
        r_u = self.rate_u(p_u, p_c)
        cross_down = self.model.down(self.input_c, self.input_u, self.z_u * p_c, self.z_u * p_u)
        cross = (self.lam_u / self.psi_u) * np.exp(-self.beta_u * r_u) * self.z_u \
            * (cross_down - self.model.mmse_cond(self.input_c, self.z_u * p_c))
        return (own + cross) / LN2

    def objective(self, p_c, p_u, eps):
        """Per-node Lagrangian: weighted utilities minus the power price.

        The stationarity equations above are exactly its partial derivatives
        set to zero, so its maximizer is the node solution whenever roots are
        ambiguous.
        """
        gain_c = _utility(self.lam_c, self.beta_c, self.psi_c, self.rate_c(p_c))
        gain_u = _utility(self.lam_u, self.beta_u, self.psi_u, self.rate_u(p_u, p_c))
        return gain_c + gain_u - eps * (p_c + p_u)


def _utility(lam, beta, psi, r_bits):
    """QoS-tilted rate utility whose derivative is the lhs_* marginal.

    Array-safe in every parameter; beta = 0 entries take the ergodic
    (linear) limit."""
    beta = np.asarray(beta, dtype=float)
    safe = np.where(beta == 0.0, 1.0, beta)
    tilted = lam * (1.0 - np.exp(-safe * r_bits)) / (safe * psi)
    return np.where(beta == 0.0, (lam / psi) * r_bits, tilted)


def _vector_bisect(lhs, eps, settings: SolverSettings, z_c, z_u, scale,
                   audit=False, width_tol=None):
    """Per-node root of lhs(p) = eps for a family that starts above eps at
    p = 0 on active nodes and eventually falls below it.

    Returns (roots, ambiguous) where ``ambiguous`` marks nodes whose sampled
    bracket shows lhs - eps crossing zero more than once; the bisection root
    there is one of several and the caller should fall back to maximizing the
    node objective outright. The audit is skipped unless requested.
    ``width_tol`` loosens the bracket-width stop for callers that only need
    roots as precise as their own current iterate.
    """
    g0 = lhs(np.zeros_like(z_c))
    active = g0 > eps
    ambiguous = np.zeros(g0.shape, dtype=bool)
    if not np.any(active):
        return np.zeros_like(g0), ambiguous
    hi = np.full_like(g0, max(1.0, 2.0 * scale))
    for _ in range(70):
        mask = active & (lhs(hi) > eps)
        if not np.any(mask):
            break
        hi = np.where(mask, hi * 2.0, hi)
    else:
        i = int(np.argmax(mask))
        raise SolverError(
            "marginal utility never falls below eps",
            {"z_c": float(z_c[i]), "z_u": float(z_u[i]), "eps": eps},
        )
    if audit:
        signs = [np.ones_like(g0)]
        for t in np.linspace(0.0, 1.0, settings.bracket_samples + 2)[1:-1]:
            signs.append(np.where(lhs(hi * t) > eps, 1.0, -1.0))
        signs.append(-np.ones_like(g0))
        flips = sum((a != b) for a, b in zip(signs[:-1], signs[1:]))
        ambiguous = active & (flips > 1)
    lo = np.zeros_like(g0)
    tol = width_tol if width_tol is not None else 1e-12 * max(1.0, scale)
    for _ in range(settings.bisect_max_iters):
        if np.max((hi - lo)[active], initial=0.0) <= tol:
            break
        mid = 0.5 * (lo + hi)
        above = lhs(mid) > eps
        lo = np.where(active & above, mid, lo)
        hi = np.where(active & ~above, mid, hi)
    out = np.where(active, 0.5 * (lo + hi), 0.0)
    return np.maximum(out, 0.0), ambiguous


def _rep(v, k: int):
    """Per-node parameter repeated k times per node (scalars pass through)."""
    return np.repeat(v, k) if isinstance(v, np.ndarray) else v


def _take_group(group: _Group, idx: np.ndarray) -> _Group:
    """Sub-group at the given node indices (per-node parameters sliced)."""
    def pick(v):
        return v[idx] if isinstance(v, np.ndarray) else v

    return _Group(
        group.z_c[idx], group.z_u[idx],
        pick(group.lam_c), pick(group.lam_u),
        pick(group.psi_c), pick(group.psi_u),
        pick(group.beta_c), pick(group.beta_u),
        group.input_c, group.input_u, group.model,
    )


def _objective_scan(sub: _Group, eps: float, k: int, hi: np.ndarray):
    """Per-node argmax of the node objective over 2-D log grids [0, 2 hi]^2."""
    n = sub.z_c.size
    frac = np.concatenate(([0.0], np.geomspace(1e-9, 2.0, k)))
    axis = hi[:, None] * frac[None, :]                    # (n, k+1)
    p_c = np.repeat(axis[:, :, None], k + 1, axis=2)
    p_u = np.repeat(axis[:, None, :], k + 1, axis=1)
    m = (k + 1) ** 2
    rep = _Group(
        np.repeat(sub.z_c, m), np.repeat(sub.z_u, m),
        _rep(sub.lam_c, m), _rep(sub.lam_u, m),
        _rep(sub.psi_c, m), _rep(sub.psi_u, m),
        _rep(sub.beta_c, m), _rep(sub.beta_u, m),
        sub.input_c, sub.input_u, sub.model,
    )
    vals = rep.objective(p_c.reshape(-1), p_u.reshape(-1), eps).reshape(n, m)
    best = np.argmax(vals, axis=1)
    rows = np.arange(n)
    return p_c.reshape(n, -1)[rows, best], p_u.reshape(n, -1)[rows, best]


def _fallback_block(sub: _Group, eps: float, settings: SolverSettings,
                    scale: float, pc_init: np.ndarray, pu_init: np.ndarray):
    """Recover nodes the alternation could not settle: maximize each node
    objective on a 2-D log grid, then polish with damped coordinate ascent,
    keeping the best iterate seen per node."""
    n = pc_init.size
    tol = settings.inner_tol_scale * max(1.0, scale)
    zeros = np.zeros(n)

    # outer corner of the scan box: all marginals safely below eps
    hi = np.maximum(max(4.0, 4.0 * scale), np.maximum(8.0 * pc_init, 8.0 * pu_init))
    for _ in range(80):
        worst = np.maximum.reduce([
            sub.lhs_u(hi, zeros), sub.lhs_u(hi, hi),
            sub.lhs_c(hi, zeros), sub.lhs_c(hi, hi),
        ])
        mask = worst >= eps
        if not mask.any():
            break
        hi = np.where(mask, 2.0 * hi, hi)
    pc, pu = zeros.copy(), zeros.copy()
    active = np.ones(n, dtype=bool)
    for _ in range(4):
        idx = np.flatnonzero(active)
        pc[idx], pu[idx] = _objective_scan(_take_group(sub, idx), eps,
                                           settings.fallback_scan, hi[idx])
        edge = 0.99 * 2.0 * hi[idx]
        still = (pc[idx] >= edge) | (pu[idx] >= edge)
        active[idx] = still
        if not active.any():
            break
        hi = np.where(active, 16.0 * hi, hi)

    best_val = sub.objective(pc, pu, eps)
    best_pc, best_pu = pc.copy(), pu.copy()
    alpha = np.ones(n)
    prev_inc = np.zeros(n)
    pu_prev = pu.copy()
    done = np.zeros(n, dtype=bool)
    out_pc, out_pu = pc.copy(), pu.copy()
    width = 1e-9 * max(1.0, scale)
    for _ in range(settings.fallback_max_iters):
        pu_star, _ = _vector_bisect(
            lambda p: sub.lhs_u(p, pc), eps, settings, sub.z_c, sub.z_u, scale,
            width_tol=width,
        )
        pc_star, _ = _vector_bisect(
            lambda p: sub.lhs_c(p, pu_star), eps, settings, sub.z_c, sub.z_u, scale,
            width_tol=width,
        )
        cand = sub.objective(pc_star, pu_star, eps)
        better = ~done & (cand > best_val)
        best_val = np.where(better, cand, best_val)
        best_pc = np.where(better, pc_star, best_pc)
        best_pu = np.where(better, pu_star, best_pu)
        inc = pc_star - pc
        newly = ~done & (np.maximum(np.abs(inc), np.abs(pu_star - pu_prev)) <= tol)
        out_pc = np.where(newly, pc_star, out_pc)
        out_pu = np.where(newly, pu_star, out_pu)
        done |= newly
        if done.all():
            break
        osc = inc * prev_inc < 0.0
        alpha = np.where(osc, np.maximum(0.5 * alpha, 1.0 / 64.0), alpha)
        pc = np.where(done, pc, np.maximum(pc + alpha * inc, 0.0))
        pu_prev = np.where(done, pu_prev, pu_star)
        prev_inc = np.where(done, prev_inc, inc)
        pu = pu_star
    out_pc = np.where(done, out_pc, best_pc)
    out_pu = np.where(done, out_pu, best_pu)
    return out_pc, out_pu


def _fallback_nodes(group: _Group, idx: np.ndarray, eps: float,
                    settings: SolverSettings, scale: float,
                    pc_init: np.ndarray, pu_init: np.ndarray):
    """Vectorized fallback over the stuck subset, chunked to bound the
    memory of the (nodes x scan-grid) objective evaluation."""
    out_c = np.empty(idx.size)
    out_u = np.empty(idx.size)
    per_node = (settings.fallback_scan + 1) ** 2
    block = max(1, 2_000_000 // per_node)
    for start in range(0, idx.size, block):
        sl = slice(start, start + block)
        sub = _take_group(group, idx[sl])
        out_c[sl], out_u[sl] = _fallback_block(
            sub, eps, settings, scale, pc_init[sl], pu_init[sl]
        )
    return out_c, out_u


def _basin_scan(group: _Group, eps: float, settings: SolverSettings, scale: float):
    """Coarse vectorized argmax of the node objective over a per-node log
    grid. The stationarity system can have several basins (typically "clean
    user gets the power" vs "interfered user gets the power"); starting the
    alternation inside the best basin keeps the solve on the global node
    optimum and makes it history-free."""
    n = group.z_c.size
    zeros = np.zeros(n)
    hi = np.full(n, max(2.0, 2.0 * scale))
    for _ in range(80):
        worst = np.maximum.reduce([
            group.lhs_u(hi, zeros), group.lhs_u(hi, hi),
            group.lhs_c(hi, zeros), group.lhs_c(hi, hi),
        ])
        mask = worst >= eps
        if not mask.any():
            break
        hi = np.where(mask, 2.0 * hi, hi)
    k = settings.basin_scan
    frac = np.concatenate(([0.0], np.geomspace(1e-7, 2.0, k)))
    ax = hi[:, None] * frac[None, :]                      # (n, k+1)
    p_c = np.repeat(ax[:, :, None], k + 1, axis=2)        # (n, k+1, k+1)
    p_u = np.repeat(ax[:, None, :], k + 1, axis=1)
    m = (k + 1) ** 2
    sub = _Group(
        np.repeat(group.z_c, m), np.repeat(group.z_u, m),
        _rep(group.lam_c, m), _rep(group.lam_u, m),
        _rep(group.psi_c, m), _rep(group.psi_u, m),
        _rep(group.beta_c, m), _rep(group.beta_u, m),
        group.input_c, group.input_u, group.model,
    )
    vals = sub.objective(p_c.ravel(), p_u.ravel(), eps).reshape(n, (k + 1) ** 2)
    best = np.argmax(vals, axis=1)
    rows = np.arange(n)
    return p_c.reshape(n, -1)[rows, best], p_u.reshape(n, -1)[rows, best]


def _solve_group(group: _Group, eps: float, settings: SolverSettings, scale: float):
    """Damped alternating per-node bisections to the joint root (P_c, P_u),
    started inside the objective's best basin; nodes that cycle or show
    ambiguous root structure go to the single-node objective fallback."""
    n = group.z_c.size
    p_c, _ = _basin_scan(group, eps, settings, scale)
    tol = settings.inner_tol_scale * max(1.0, scale)
    floor_w = 1e-12 * max(1.0, scale)
    width = 1e-3 * max(1.0, scale)
    p_u = np.zeros(n)
    step = np.ones(n)
    prev_inc = np.zeros(n)
    for _ in range(settings.inner_max_iters):
        p_u_new, _ = _vector_bisect(
            lambda p: group.lhs_u(p, p_c), eps, settings, group.z_c, group.z_u, scale,
            width_tol=width,
        )
        p_c_star, _ = _vector_bisect(
            lambda p: group.lhs_c(p, p_u_new), eps, settings, group.z_c, group.z_u, scale,
            width_tol=width,
        )
        inc = p_c_star - p_c
        delta = np.maximum(np.abs(inc), np.abs(p_u_new - p_u))
        worst = float(np.max(delta, initial=0.0))
        if worst <= tol and width <= 0.5 * tol:
            p_c, p_u = p_c_star, p_u_new
            break
        # bisect only as finely as the alternation has earned so far
        width = max(floor_w, min(0.25 * width, 0.05 * max(worst, tol)))
        osc = inc * prev_inc < 0.0
        step = np.where(osc, np.maximum(0.5 * step, 1.0 / 64.0), np.minimum(1.25 * step, 1.0))
        p_c = np.maximum(p_c + step * inc, 0.0)
        p_u = p_u_new
        prev_inc = inc
    # audited verification pass at the landing point
    p_u_fin, bad_u = _vector_bisect(
        lambda p: group.lhs_u(p, p_c), eps, settings, group.z_c, group.z_u, scale, audit=True
    )
    p_c_fin, bad_c = _vector_bisect(
        lambda p: group.lhs_c(p, p_u_fin), eps, settings, group.z_c, group.z_u, scale, audit=True
    )
    delta = np.maximum(np.abs(p_c_fin - p_c), np.abs(p_u_fin - p_u))
    stuck = (delta > 3.0 * tol) | bad_u | bad_c
    p_c, p_u = p_c_fin, p_u_fin
    stuck_idx = np.flatnonzero(stuck)
    if stuck_idx.size:
        p_c[stuck_idx], p_u[stuck_idx] = _fallback_nodes(
            group, stuck_idx, eps, settings, scale,
            p_c[stuck_idx], p_u[stuck_idx],
        )
    return p_c, p_u


def _solve_nodes(
    z1, z2, in21, eps, psi1, psi2, lambda1, qos, input1, input2, model,
    settings: SolverSettings, scale: float = 1.0,
):
    """Solve every node's stationarity system in role coordinates.

    With a shared input kind the two decode-order groups fuse into one
    vectorized solve with per-node role parameters; distinct inputs keep one
    group per order (the rate tables differ between roles there).
    """
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    p1 = np.zeros_like(z1)
    p2 = np.zeros_like(p1)
    lam2 = 1.0 - lambda1
    b1, b2 = qos.beta(1), qos.beta(2)
    m21 = np.asarray(in21, dtype=bool)
    if input1.key == input2.key:
        g = _Group(
            np.where(m21, z1, z2), np.where(m21, z2, z1),
            np.where(m21, lambda1, lam2), np.where(m21, lam2, lambda1),
            np.where(m21, psi1, psi2), np.where(m21, psi2, psi1),
            np.where(m21, b1, b2), np.where(m21, b2, b1),
            input1, input2, model,
        )
        p_c, p_u = _solve_group(g, eps, settings, scale)
        p1 = np.where(m21, p_c, p_u)
        p2 = np.where(m21, p_u, p_c)
        return p1, p2
    if np.any(m21):  # user 1 clean, user 2 interfered
        g = _Group(z1[m21], z2[m21], lambda1, lam2, psi1, psi2, b1, b2, input1, input2, model)
        p1[m21], p2[m21] = _solve_group(g, eps, settings, scale)
    m12 = ~m21
    if np.any(m12):  # user 2 clean, user 1 interfered
        g = _Group(z2[m12], z1[m12], lam2, lambda1, psi2, psi1, b2, b1, input2, input1, model)
        p2[m12], p1[m12] = _solve_group(g, eps, settings, scale)
    return p1, p2


def solve_node(
    z1: float, z2: float, order_21: bool, epsilon: float, psi1: float, psi2: float,
    lambda1: float, qos: QoSParams, input1: InputKind, input2: InputKind,
    model: RateModel, settings: SolverSettings | None = None,
) -> tuple[float, float]:
    """Single-node power pair under given multipliers (scalar convenience)."""
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    if not (0.0 < psi1 <= 1.0 and 0.0 < psi2 <= 1.0):
        raise ConfigError("normalizers must lie in (0, 1]")
    p1, p2 = _solve_nodes(
        np.array([z1], dtype=float), np.array([z2], dtype=float),
        np.array([order_21]), epsilon, psi1, psi2, lambda1, qos,
        input1, input2, model, settings or SolverSettings(),
    )
    return float(p1[0]), float(p2[0])


# ---------------------------------------------------------------------------
# Residuals and the full nested solve.
# ---------------------------------------------------------------------------


def kkt_residuals(policy: PowerPolicy) -> tuple[np.ndarray, np.ndarray]:
    """Stationarity residuals (lhs - eps) for the P1- and P2-equations at
    every grid node under the stored multipliers."""
    g = policy.grid
    in21 = policy.boundary.order_21(g.z1, g.z2)
    lam2 = 1.0 - policy.lambda1
    b1, b2 = policy.qos.beta(1), policy.qos.beta(2)
    res1 = np.zeros(g.size)
    res2 = np.zeros(g.size)
    m21 = np.asarray(in21, dtype=bool)
    if np.any(m21):
        grp = _Group(
            g.z1[m21], g.z2[m21], policy.lambda1, lam2, policy.psi1, policy.psi2,
            b1, b2, policy.input1, policy.input2, policy.model,
        )
        res1[m21] = grp.lhs_c(policy.p1[m21], policy.p2[m21]) - policy.epsilon
        res2[m21] = grp.lhs_u(policy.p2[m21], policy.p1[m21]) - policy.epsilon
    m12 = ~m21
    if np.any(m12):
        grp = _Group(
            g.z2[m12], g.z1[m12], lam2, policy.lambda1, policy.psi2, policy.psi1,
            b2, b1, policy.input2, policy.input1, policy.model,
        )
        res2[m12] = grp.lhs_c(policy.p2[m12], policy.p1[m12]) - policy.epsilon
        res1[m12] = grp.lhs_u(policy.p1[m12], policy.p2[m12]) - policy.epsilon
    return res1, res2


def run_algorithm1(
    grid: FadingGrid,
    boundary: DecodingBoundary,
    input1: InputKind,
    input2: InputKind,
    qos: QoSParams,
    p_avg: float,
    lambda1: float,
    model: RateModel | None = None,
    settings: SolverSettings | None = None,
) -> PowerPolicy:
    """Nested fixed-point solve for the optimal PowerPolicy.

    Outer: damped iteration on (psi1, psi2) from 1. Middle: bisection on
    ln eps until the average power meets the budget. Inner: vectorized
    alternating bisections per node.
    """
    if p_avg <= 0:
        raise ConfigError("average power budget must be positive")
    if not 0.0 <= lambda1 <= 1.0:
        raise ConfigError("lambda1 must lie in [0, 1]")
    model = model or RateModel(DEFAULT_QUAD)
    settings = settings or SolverSettings()
    in21 = boundary.order_21(grid.z1, grid.z2)
    b1, b2 = qos.beta(1), qos.beta(2)

    def solve_for(eps: float, psi1: float, psi2: float):
        return _solve_nodes(
            grid.z1, grid.z2, in21, eps, psi1, psi2, lambda1, qos,
            input1, input2, model, settings, scale=p_avg,
        )

    def total_power(p1, p2) -> float:
        return float(np.sum(grid.weights * (p1 + p2)))

    def solve_eps(psi1: float, psi2: float, hint: tuple[float, float] | None):
        """Root of total(eps) = p_avg on ln eps by bracketed Illinois secant;
        average power decreases in eps."""
        lo, hi = (settings.eps_lo, settings.eps_hi) if hint is None else hint
        budget_tol = settings.power_rel_tol * p_avg
        pair_lo = solve_for(lo, psi1, psi2)
        t_lo = total_power(*pair_lo)
        for _ in range(settings.eps_max_expand):
            if t_lo >= p_avg:
                break
            lo /= 100.0
            pair_lo = solve_for(lo, psi1, psi2)
            t_lo = total_power(*pair_lo)
        else:
            raise SolverError("power budget unreachable: eps bracket exhausted low")
        if abs(t_lo - p_avg) <= budget_tol:
            return lo, pair_lo[0], pair_lo[1], 1
        pair_hi = solve_for(hi, psi1, psi2)
        t_hi = total_power(*pair_hi)
        for _ in range(settings.eps_max_expand):
            if t_hi <= p_avg:
                break
            hi *= 100.0
            pair_hi = solve_for(hi, psi1, psi2)
            t_hi = total_power(*pair_hi)
        else:
            raise SolverError("power budget unreachable: eps bracket exhausted high")
        if abs(t_hi - p_avg) <= budget_tol:
            return hi, pair_hi[0], pair_hi[1], 1
        xlo, xhi = np.log(lo), np.log(hi)
        flo, fhi = t_lo - p_avg, t_hi - p_avg
        last_side = 0
        eps = hi
        tot = t_hi
        for it in range(settings.eps_max_iters):
            span = xhi - xlo
            x = (xlo * fhi - xhi * flo) / (fhi - flo)
            x = min(max(x, xlo + 1e-3 * span), xhi - 1e-3 * span)
            eps = float(np.exp(x))
            p1, p2 = solve_for(eps, psi1, psi2)
            tot = total_power(p1, p2)
            if abs(tot - p_avg) <= budget_tol:
                return eps, p1, p2, it + 1
            if tot > p_avg:
                if last_side == 1:
                    fhi *= 0.5
                xlo, flo, last_side = x, tot - p_avg, 1
            else:
                if last_side == -1:
                    flo *= 0.5
                xhi, fhi, last_side = x, tot - p_avg, -1
        raise SolverError(
            "eps search did not meet the power budget",
            {"eps": eps, "total": tot, "target": p_avg},
        )

    psi1 = psi2 = 1.0
    psi_trace = []
    eps_hint = None
    eps_iters = 0
    prev_step = (0.0, 0.0)
    for outer in range(settings.psi_max_iters):
        eps, p1, p2, its = solve_eps(psi1, psi2, eps_hint)
        eps_iters += its
        eps_hint = (eps / 8.0, eps * 8.0)
        r1, r2 = instantaneous_rates(
            grid.z1, grid.z2, p1, p2, input1, input2, boundary, model
        )
        psi1_new = float(np.sum(grid.weights * np.exp(-b1 * r1 / LN2))) if b1 > 0 else 1.0
        psi2_new = float(np.sum(grid.weights * np.exp(-b2 * r2 / LN2))) if b2 > 0 else 1.0
        psi_trace.append((psi1_new, psi2_new))
        d1, d2 = psi1_new - psi1, psi2_new - psi2
        if abs(d1) <= settings.psi_tol and abs(d2) <= settings.psi_tol:
            psi1, psi2 = psi1_new, psi2_new
            break
        # damp on sign-alternating increments to kill oscillation
        damp1 = 0.5 if d1 * prev_step[0] < 0 else 1.0
        damp2 = 0.5 if d2 * prev_step[1] < 0 else 1.0
        psi1 += damp1 * d1
        psi2 += damp2 * d2
        prev_step = (d1, d2)
    else:
        raise SolverError(
            "normalizer fixed point did not converge",
            {"trace": psi_trace, "psi_tol": settings.psi_tol},
        )

    # final consistent solve at the converged normalizers
    eps, p1, p2, its = solve_eps(psi1, psi2, eps_hint)
    eps_iters += its
    total = total_power(p1, p2)
    policy = PowerPolicy(
        grid=grid, boundary=boundary, p1=p1, p2=p2, epsilon=eps,
        psi1=min(psi1, 1.0), psi2=min(psi2, 1.0), lambda1=lambda1, qos=qos,
        input1=input1, input2=input2, model=model, p_avg=p_avg,
        settings=settings,
        diagnostics={
            "outer_iters": outer + 1,
            "eps_iters": eps_iters,
            "total_power": total,
            "power_gap_rel": abs(total - p_avg) / p_avg,
            "psi_trace": psi_trace,
        },
    )
    res1, res2 = kkt_residuals(policy)
    act1, act2 = policy.p1 > 0, policy.p2 > 0
    policy.diagnostics["max_kkt_residual"] = float(
        max(
            np.max(np.abs(res1[act1]), initial=0.0),
            np.max(np.abs(res2[act2]), initial=0.0),
        )
    )
    return policy
