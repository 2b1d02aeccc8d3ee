"""Effective-capacity and region-sweep tests against closed forms and an
independent single-user solver oracle."""

import warnings

import numpy as np
import pytest

from bcecap.awgn import LN2, QuadratureSpec
from bcecap.constellation import GAUSSIAN, standard_constellation
from bcecap.effcap import (
    effective_capacity,
    region_boundary,
    solve_region_point,
)
from bcecap.errors import ConfigError, SolverError
from bcecap.fading import FadingGrid, RicianSpec, build_grid, expect
from bcecap.power import QoSParams, SolverSettings
from bcecap.ratemodel import RateModel

QUAD = QuadratureSpec()
BPSK = standard_constellation("bpsk")
QOS = QoSParams(theta1=0.01, theta2=0.01, t_frame=1.0, bandwidth=100.0)


def flat_grid(weights):
    """Minimal grid carrying only node weights, for expectation tests."""
    w = np.asarray(weights, dtype=float)
    z = np.linspace(1.0, 2.0, w.size)
    return FadingGrid(z1=z, z2=z[::-1].copy(), weights=w, method="quantile")


@pytest.fixture(scope="module")
def model():
    return RateModel(QUAD)


@pytest.fixture(scope="module")
def grid8():
    spec = RicianSpec.from_db(-6.88)
    return build_grid(spec, spec, n_per_dim=8)


@pytest.fixture(scope="module")
def sweep(grid8, model):
    """Five-weight sweep on a symmetric BPSK setup, with captured warnings."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        points = region_boundary(
            grid8, "strongest_last", BPSK, BPSK, QOS, p_avg=1.0, model=model,
            lambdas=[0.0, 0.25, 0.5, 0.75, 1.0],
        )
    return points, caught


class TestEffectiveCapacity:
    def test_constant_rate_is_exact(self):
        grid = flat_grid([0.3, 0.5, 0.2])
        rates = np.full(3, 0.731)
        for theta in (1e-6, 0.01, 1.0):
            a = effective_capacity(theta, 1.0, 100.0, rates, grid)
            assert a == pytest.approx(0.731, abs=1e-12)

    def test_two_node_closed_form(self):
        grid = flat_grid([0.5, 0.5])
        ra, rb = 0.2, 1.4
        # theta*T*B = 1 makes the tilted expectation directly readable
        a = effective_capacity(0.01, 1.0, 100.0, np.array([ra, rb]), grid)
        expected = -np.log(0.5 * np.exp(-ra) + 0.5 * np.exp(-rb))
        assert a == pytest.approx(expected, rel=1e-12)

    def test_ergodic_threshold_continuity(self):
        rng = np.random.default_rng(7)
        w = rng.random(20)
        grid = flat_grid(w / w.sum())
        rates = rng.uniform(0.1, 2.0, 20)
        mean = expect(grid, rates)
        below = effective_capacity(5e-9, 1.0, 100.0, rates, grid)
        above = effective_capacity(2e-8, 1.0, 100.0, rates, grid)
        assert below == mean
        assert above == pytest.approx(mean, rel=1e-5)

    def test_jensen_bounds(self):
        rng = np.random.default_rng(11)
        w = rng.random(40)
        grid = flat_grid(w / w.sum())
        rates = rng.uniform(0.0, 3.0, 40)
        a = effective_capacity(0.05, 1.0, 100.0, rates, grid)
        assert rates.min() - 1e-12 <= a <= expect(grid, rates) + 1e-12

    def test_monotone_in_theta(self):
        rng = np.random.default_rng(3)
        w = rng.random(25)
        grid = flat_grid(w / w.sum())
        rates = rng.uniform(0.2, 2.5, 25)
        thetas = [1e-6, 1e-4, 1e-3, 0.01, 0.1, 1.0]
        values = [effective_capacity(t, 1.0, 100.0, rates, grid) for t in thetas]
        assert all(v1 >= v2 - 1e-12 for v1, v2 in zip(values[:-1], values[1:]))

    def test_matches_direct_formula(self):
        grid = flat_grid([0.25, 0.25, 0.5])
        rates = np.array([0.1, 0.9, 0.4])
        beta = 0.02 * 1.0 * 100.0
        direct = -np.log(grid.weights @ np.exp(-beta * rates)) / beta
        a = effective_capacity(0.02, 1.0, 100.0, rates, grid)
        assert a == pytest.approx(direct, rel=1e-12)

    def test_extreme_exponent_stays_finite(self):
        grid = flat_grid([0.1, 0.9])
        rates = np.array([0.5, 5.0])
        # direct exponentiation would underflow at beta = 1000
        a = effective_capacity(10.0, 1.0, 100.0, rates, grid)
        assert np.isfinite(a)
        assert rates.min() <= a <= expect(grid, rates)

    def test_validation(self):
        grid = flat_grid([1.0])
        with pytest.raises(ConfigError):
            effective_capacity(-0.01, 1.0, 100.0, np.array([1.0]), grid)
        with pytest.raises(SolverError):
            effective_capacity(0.01, 1.0, 100.0, np.array([np.nan]), grid)
        with pytest.raises(SolverError):
            effective_capacity(0.0, 1.0, 100.0, np.array([np.nan]), grid)


class TestRegionSweep:
    def test_point_layout(self, sweep):
        points, _ = sweep
        assert len(points) == 7
        assert [p.lambda1 for p in points] == [0.0, 0.0, 0.25, 0.5, 0.75, 1.0, 1.0]
        assert [p.status for p in points] == [
            "ok", "endpoint", "ok", "ok", "ok", "ok", "endpoint",
        ]
        assert all(p.ok for p in points)

    def test_no_warnings_emitted(self, sweep):
        _, caught = sweep
        assert [str(w.message) for w in caught] == []

    def test_endpoints_shut_off_the_unweighted_user(self, sweep):
        points, _ = sweep
        lo = next(p for p in points if p.lambda1 == 0.0 and p.status == "endpoint")
        hi = next(p for p in points if p.lambda1 == 1.0 and p.status == "endpoint")
        assert lo.a1 == pytest.approx(0.0, abs=1e-12)
        assert hi.a2 == pytest.approx(0.0, abs=1e-12)
        assert lo.a2 > 0.1
        assert hi.a1 > 0.1

    def test_frontier_monotone_in_weight(self, sweep):
        points, _ = sweep
        ok = [p for p in points if p.status == "ok"]
        a1 = np.array([p.a1 for p in ok])
        a2 = np.array([p.a2 for p in ok])
        assert np.all(np.diff(a1) > -5e-4)
        assert np.all(np.diff(a2) < 5e-4)

    def test_jensen_per_point(self, sweep, grid8):
        points, _ = sweep
        for p in points:
            if p.policy is None:
                continue
            r1, r2 = p.policy.rates_bits()
            assert p.a1 <= expect(grid8, r1) + 1e-9
            assert p.a2 <= expect(grid8, r2) + 1e-9

    def test_symmetric_midpoint(self, sweep):
        points, _ = sweep
        mid = next(p for p in points if p.lambda1 == 0.5)
        assert abs(mid.a1 - mid.a2) < 1e-3

    def test_interior_runs_carry_policies(self, sweep):
        points, _ = sweep
        for p in points:
            assert p.policy is not None
            assert p.policy_ref.startswith("strongest_last:lambda1=")
            assert p.iters >= 1
            assert np.isfinite(p.epsilon) and p.epsilon > 0

    def test_single_user_endpoint_matches_oracle(self, sweep, grid8, model):
        points, _ = sweep
        hi = next(p for p in points if p.lambda1 == 1.0 and p.status == "endpoint")
        oracle = _single_user_effcap(
            grid8.z1, grid8.weights, BPSK, model,
            theta=QOS.theta1, t_frame=1.0, bandwidth=100.0, p_avg=1.0,
        )
        assert hi.a1 == pytest.approx(oracle, abs=1e-3)

    def test_lambda_min_substitution_stays_close_to_endpoint(self, sweep):
        points, _ = sweep
        near = next(p for p in points if p.lambda1 == 1.0 and p.status == "ok")
        exact = next(p for p in points if p.lambda1 == 1.0 and p.status == "endpoint")
        assert near.a1 == pytest.approx(exact.a1, abs=5e-3)
        assert near.a2 < 5e-3

    def test_sweep_validation(self, grid8, model):
        with pytest.raises(ConfigError):
            region_boundary(grid8, "strongest_last", BPSK, BPSK, QOS, 1.0,
                            model=model, lambdas=[0.5, 0.2])
        with pytest.raises(ConfigError):
            region_boundary(grid8, "strongest_last", BPSK, BPSK, QOS, 1.0,
                            model=model, lambdas=[-0.1, 1.0])

    def test_failures_are_recorded_not_raised(self, grid8, model):
        bad = SolverSettings(psi_max_iters=0)
        with pytest.warns(UserWarning, match="region point"):
            points = region_boundary(
                grid8, "strongest_last", BPSK, BPSK, QOS, 1.0,
                model=model, settings=bad, lambdas=[0.5],
            )
        assert len(points) == 1
        assert not points[0].ok
        assert points[0].status.startswith("failed")
        assert np.isnan(points[0].a1) and np.isnan(points[0].a2)


@pytest.fixture(scope="module")
def grid6():
    spec = RicianSpec.from_db(-6.88)
    return build_grid(spec, spec, n_per_dim=6)


class TestTheorem2Interleave:
    def test_unequal_exponents_fall_back(self, grid6, model):
        qos = QoSParams(theta1=0.01, theta2=0.02, t_frame=1.0, bandwidth=100.0)
        with pytest.warns(UserWarning, match="strongest_last"):
            policy, boundary, _ = solve_region_point(
                grid6, "theorem2", BPSK, BPSK, qos, p_avg=1.0, lambda1=0.5,
                model=model,
            )
        assert boundary.rule == "strongest_last"
        assert policy.boundary.rule == "strongest_last"

    def test_boundary_refits_converge(self, grid6, model):
        policy, boundary, iters = solve_region_point(
            grid6, "theorem2", GAUSSIAN, GAUSSIAN, QOS, p_avg=1.0,
            lambda1=0.4, model=model,
        )
        assert boundary.rule == "theorem2"
        converged = (policy.diagnostics["assignment_flips"] == 0.0
                     or policy.diagnostics["boundary_move"] < 0.01)
        assert converged
        assert boundary is policy.boundary
        total = expect(policy.grid, policy.p1 + policy.p2)
        assert total == pytest.approx(1.0, rel=2e-3)

    def test_refit_guard(self, grid6, model):
        with pytest.raises(ConfigError):
            solve_region_point(
                grid6, "theorem2", GAUSSIAN, GAUSSIAN, QOS, p_avg=1.0,
                lambda1=0.4, model=model, max_refits=0,
            )

    def test_larger_grid_converges_too(self, grid8, model):
        # the refit must survive the transient where the policy's power jump
        # at the old threshold straddles zero
        policy, boundary, _ = solve_region_point(
            grid8, "theorem2", GAUSSIAN, GAUSSIAN, QOS, p_avg=1.0,
            lambda1=0.4, model=model,
        )
        converged = (policy.diagnostics["assignment_flips"] == 0.0
                     or policy.diagnostics["boundary_move"] < 0.01)
        assert converged
        assert boundary.rule == "theorem2"
        total = expect(policy.grid, policy.p1 + policy.p2)
        assert total == pytest.approx(1.0, rel=2e-3)


def _single_user_effcap(z, w, inp, model, theta, t_frame, bandwidth, p_avg):
    """One-user power solver built from scratch: plain vector bisection per
    node, bisection on ln(eps) for the budget, damped psi iteration."""
    beta = theta * t_frame * bandwidth

    def powers(eps, psi):
        def margin(p):
            r = model.mi_cond(inp, z * p) / LN2
            return np.exp(-beta * r) * z * model.mmse_cond(inp, z * p) / (LN2 * psi) - eps

        active = margin(np.zeros_like(z)) > 0.0
        lo = np.zeros_like(z)
        hi = np.ones_like(z)
        for _ in range(90):
            grow = active & (margin(hi) > 0.0)
            if not grow.any():
                break
            hi = np.where(grow, 2.0 * hi, hi)
        for _ in range(90):
            mid = 0.5 * (lo + hi)
            pos = margin(mid) > 0.0
            lo = np.where(pos, mid, lo)
            hi = np.where(pos, hi, mid)
        return np.where(active, 0.5 * (lo + hi), 0.0)

    def budget_eps(psi):
        le_lo, le_hi = np.log(1e-9), np.log(1e4)
        for _ in range(70):
            mid = 0.5 * (le_lo + le_hi)
            if w @ powers(np.exp(mid), psi) > p_avg:
                le_lo = mid
            else:
                le_hi = mid
        return np.exp(0.5 * (le_lo + le_hi))

    psi = 1.0
    for _ in range(100):
        p = powers(budget_eps(psi), psi)
        r = model.mi_cond(inp, z * p) / LN2
        psi_new = float(w @ np.exp(-beta * r))
        if abs(psi_new - psi) < 1e-11:
            psi = psi_new
            break
        psi += 0.7 * (psi_new - psi)
    p = powers(budget_eps(psi), psi)
    r = model.mi_cond(inp, z * p) / LN2
    return float(-np.log(w @ np.exp(-beta * r)) / beta)
