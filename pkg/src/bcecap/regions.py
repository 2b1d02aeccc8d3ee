"""Decoding-order regions of the (z1, z2) fading-power plane.

With superposition coding and successive cancellation there are two decode
orders: (2,1) — receiver 1 cancels user 2's symbol before decoding its own,
so user 1 sees a clean channel while user 2 is decoded under interference —
and (1,2), the mirror image. A sampled curve z1*(z2) splits the plane:

    order (2,1)  <=>  z1 > z1*(z2).

Orientation: the rule-based boundary is the downward zero crossing of

    g(z1) = I(x1, x2; y1, y2) - I(x1; y1 | x2) - I(x2; y2 | x1),

which starts nonnegative at z1 = 0 (it equals the interference-limited rate
of user 1 there) and goes negative where the pair of clean single-user rates
exceeds the joint information the two receivers can carry; past that point
order (2,1) applies. A slice with g > 0 throughout carries order (1,2)
everywhere (sentinel +inf); g < 0 throughout maps to 0. Discrete inputs
saturate, so g is always positive at large z1 and slices genuinely exhibit
zero or two crossings; multiple crossings are reported as an error rather
than resolved by fiat.

Rates and the gap are evaluated in nats through a RateModel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .constellation import InputKind
from .errors import ConfigError, SolverError
from .ratemodel import RateModel

RULES = ("theorem2", "strongest_last", "fixed_order_12", "fixed_order_21")

# powers(z1_array, z2_array) -> (p1_array, p2_array), the transmit powers in
# force at those fading coordinates (constant, or backed by a solved policy).
PowerFn = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


def constant_powers(p1: float, p2: float) -> PowerFn:
    def powers(z1, z2):
        shape = np.broadcast_shapes(np.shape(z1), np.shape(z2))
        return np.full(shape, float(p1)), np.full(shape, float(p2))

    return powers


@dataclass(frozen=True)
class DecodingBoundary:
    """Sampled decode-order threshold z1*(z2).

    z1_star entries may be +inf (order (1,2) along that whole slice) or 0
    (order (2,1) everywhere). Between samples the threshold interpolates
    piecewise-linearly; outside the sampled range it extends as a constant.
    """

    z2_samples: np.ndarray
    z1_star: np.ndarray
    rule: str

    def __post_init__(self):
        z2 = np.atleast_1d(np.asarray(self.z2_samples, dtype=float))
        z1 = np.atleast_1d(np.asarray(self.z1_star, dtype=float))
        object.__setattr__(self, "z2_samples", z2)
        object.__setattr__(self, "z1_star", z1)
        if z2.shape != z1.shape or z2.ndim != 1:
            raise ConfigError("boundary samples must be aligned 1-D arrays")
        if z2.size == 0:
            raise ConfigError("boundary needs at least one sample")
        if np.any(np.diff(z2) <= 0):
            raise ConfigError("z2 samples must be strictly increasing")
        if np.any(np.isnan(z1)) or np.any(z1 < 0):
            raise ConfigError("z1_star must be nonnegative (inf allowed)")
        if self.rule not in RULES:
            raise ConfigError(f"unknown decoding rule: {self.rule!r}")

    def threshold(self, z2) -> np.ndarray:
        """Piecewise-linear z1*(z2) with constant extension and infinity-safe
        segment blending."""
        z2 = np.asarray(z2, dtype=float)
        xs, ys = self.z2_samples, self.z1_star
        if xs.size == 1:
            return np.full(z2.shape, ys[0])
        idx = np.clip(np.searchsorted(xs, z2, side="right") - 1, 0, xs.size - 2)
        x0, x1 = xs[idx], xs[idx + 1]
        y0, y1 = ys[idx], ys[idx + 1]
        t = np.clip((z2 - x0) / (x1 - x0), 0.0, 1.0)
        with np.errstate(invalid="ignore"):
            out = (1.0 - t) * y0 + t * y1
        # a segment touching infinity is infinite strictly between its
        # endpoints; at the endpoints the sample value wins (avoids 0 * inf)
        interior = (t > 0) & (t < 1)
        out = np.where(interior & (np.isinf(y0) | np.isinf(y1)), np.inf, out)
        out = np.where(t == 0, y0, out)
        out = np.where(t == 1, y1, out)
        return out

    def order_21(self, z1, z2) -> np.ndarray:
        """True where the decode order is (2,1): z1 above the threshold."""
        z1 = np.asarray(z1, dtype=float)
        return z1 > self.threshold(z2)


def boundary_gap(
    z1,
    z2,
    powers: PowerFn,
    input1: InputKind,
    input2: InputKind,
    model: RateModel,
) -> np.ndarray:
    """g(z1, z2) in nats: joint two-receiver information at the combined gain
    minus both interference-free single-user rates."""
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    p1, p2 = powers(z1, z2)
    zsum = z1 + z2
    joint = model.mi_joint(input1, input2, zsum * p1, zsum * p2)
    return joint - model.mi_cond(input1, z1 * p1) - model.mi_cond(input2, z2 * p2)


def _slice_crossings(
    z2: float,
    powers: PowerFn,
    input1: InputKind,
    input2: InputKind,
    model: RateModel,
    z_max: float,
    root_tol: float,
    scan_points: int,
) -> tuple[list[float], float]:
    """All refined zero crossings of the order gap on [0, z_max], plus the
    mean gap for the no-crossing sentinel choice."""
    mesh = np.linspace(0.0, z_max, scan_points)
    z2v = np.full_like(mesh, z2)
    g = boundary_gap(mesh, z2v, powers, input1, input2, model)
    if not np.all(np.isfinite(g)):
        raise SolverError("order gap not finite along slice", {"z2": z2})

    def refine(lo: float, hi: float, glo: float) -> float:
        tol = root_tol * max(1.0, z_max)
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            gm = float(boundary_gap(np.array([mid]), np.array([z2]), powers, input1, input2, model)[0])
            if (gm > 0) == (glo > 0):
                lo, glo = mid, gm
            else:
                hi = mid
        return 0.5 * (lo + hi)

    sign_flip = np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)
    roots = [refine(mesh[i], mesh[i + 1], g[i]) for i in sign_flip]
    return roots, float(g.mean())


def solve_boundary(
    z2: float,
    powers: PowerFn,
    input1: InputKind,
    input2: InputKind,
    model: RateModel,
    z_max: float,
    root_tol: float = 1e-8,
    scan_points: int = 800,
) -> float:
    """Zero crossing of the order gap along one z2 slice.

    Scans [0, z_max], then bisects the single bracketed crossing to
    root_tol * max(1, z_max). No crossing maps to the sentinels described on
    DecodingBoundary; several crossings raise with their locations.
    """
    if z_max <= 0:
        raise ConfigError("z_max must be positive")
    roots, g_mean = _slice_crossings(
        z2, powers, input1, input2, model, z_max, root_tol, scan_points
    )
    if not roots:
        return np.inf if g_mean > 0 else 0.0
    if len(roots) > 1:
        raise SolverError(
            "order gap crosses zero more than once along slice; no single "
            "threshold exists",
            {"z2": z2, "crossings": roots},
        )
    return roots[0]


def refit_boundary(
    old: DecodingBoundary,
    input1: InputKind,
    input2: InputKind,
    model: RateModel,
    powers: PowerFn,
    z_max: float,
    root_tol: float = 1e-8,
    scan_points: int = 800,
    guard_cells: float = 2.0,
) -> DecodingBoundary:
    """Boundary refit for policy/boundary interleaved solves.

    A policy solved against `old` allocates power discontinuously across the
    old thresholds, so mid-iteration the gap acquires a spurious crossing
    inside that jump. Crossings within guard_cells scan cells of the old
    threshold are attributed to the jump and dropped, unless nothing else
    crosses — the converged case, where jump and root coincide.
    """
    if old.rule != "theorem2":
        raise ConfigError("refit applies to the gap-based rule only")
    if z_max <= 0:
        raise ConfigError("z_max must be positive")
    guard = guard_cells * z_max / (scan_points - 1)
    stars = np.empty_like(old.z1_star)
    for k, z2 in enumerate(old.z2_samples):
        roots, g_mean = _slice_crossings(
            float(z2), powers, input1, input2, model, z_max, root_tol, scan_points
        )
        if not roots:
            stars[k] = np.inf if g_mean > 0 else 0.0
            continue
        t_old = old.z1_star[k]
        clear = [
            r for r in roots
            if not (np.isfinite(t_old) and abs(r - t_old) <= guard)
        ]
        if len(clear) == 1:
            stars[k] = clear[0]
        elif not clear:
            stars[k] = min(roots, key=lambda r: abs(r - t_old))
        else:
            raise SolverError(
                "order gap crosses zero more than once along slice; no single "
                "threshold exists",
                {"z2": float(z2), "crossings": roots},
            )
    return DecodingBoundary(old.z2_samples.copy(), stars, "theorem2")


def build_boundary(
    z2_grid: np.ndarray,
    rule: str,
    input1: InputKind,
    input2: InputKind,
    model: RateModel,
    powers: PowerFn | None = None,
    z_max: float | None = None,
    root_tol: float = 1e-8,
    scan_points: int = 800,
) -> DecodingBoundary:
    """Boundary over a z2 grid for one decoding rule.

    The gap-based rule needs the power context and a z1 search cap; the
    analytic rules need neither.
    """
    z2_grid = np.atleast_1d(np.asarray(z2_grid, dtype=float))
    if rule == "strongest_last":
        return DecodingBoundary(z2_grid, z2_grid.copy(), rule)
    if rule == "fixed_order_21":
        return DecodingBoundary(z2_grid, np.zeros_like(z2_grid), rule)
    if rule == "fixed_order_12":
        return DecodingBoundary(z2_grid, np.full_like(z2_grid, np.inf), rule)
    if rule != "theorem2":
        raise ConfigError(f"unknown decoding rule: {rule!r}")
    if powers is None or z_max is None:
        raise ConfigError("gap-based boundary needs a power context and z_max")
    stars = np.array(
        [
            solve_boundary(z2, powers, input1, input2, model, z_max, root_tol, scan_points)
            for z2 in z2_grid
        ]
    )
    return DecodingBoundary(z2_grid, stars, rule)


def instantaneous_rates(
    z1,
    z2,
    p1,
    p2,
    input1: InputKind,
    input2: InputKind,
    boundary: DecodingBoundary,
    model: RateModel,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-user rates in nats at fading coordinates under the boundary's
    decode order: the user decoded last sees no interference, the other is
    decoded under the full interfering power."""
    z1, z2, p1, p2 = np.broadcast_arrays(
        np.asarray(z1, float), np.asarray(z2, float), np.asarray(p1, float), np.asarray(p2, float)
    )
    in21 = boundary.order_21(z1, z2)
    r1_clean = model.mi_cond(input1, z1 * p1)
    r1_intf = model.mi_unc(input1, input2, z1 * p1, z1 * p2)
    r2_clean = model.mi_cond(input2, z2 * p2)
    r2_intf = model.mi_unc(input2, input1, z2 * p2, z2 * p1)
    return np.where(in21, r1_clean, r1_intf), np.where(in21, r2_intf, r2_clean)
