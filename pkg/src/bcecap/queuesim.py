"""Queue-level validation of effective-capacity targets.

Simulates both transmitter buffers under constant arrivals and
fading-driven service, then estimates the tail-decay exponent of the
stationary queue and compares it against the configured QoS exponent.
Fading is redrawn independently every frame from the policy grid's
probability measure, matching the block-fading model the policy was
solved under.
"""

from dataclasses import dataclass

import numpy as np

from .awgn import LN2
from .errors import ConfigError, SolverError
from .power import PowerPolicy
from .regions import DecodingBoundary, instantaneous_rates

# tail regression uses thresholds between these exceedance levels
MIN_EXCEEDANCES = 50
N_THRESHOLDS = 15


@dataclass(frozen=True)
class QueueTrace:
    """One user's simulated buffer history.

    Queue lengths and thresholds are in bits; arrival_rate is bits/frame.
    """

    frames: int
    queue_samples: np.ndarray
    arrival_rate: float
    thresholds: np.ndarray
    overflow_counts: np.ndarray
    unstable: bool

    def __post_init__(self):
        if np.any(self.queue_samples < 0):
            raise SolverError("queue lengths must be nonnegative")
        if np.any(np.diff(self.overflow_counts) > 0):
            raise SolverError("overflow counts must be nonincreasing")


@dataclass(frozen=True)
class ThetaEstimate:
    """Tail-decay exponent (1/bits) with its regression half-width."""

    value: float
    ci_halfwidth: float
    n_thresholds: int


def _lindley(increments: np.ndarray) -> np.ndarray:
    """Reflected random walk Q_n = max(0, Q_{n-1} + X_n) from Q_0 = 0,
    via the running-minimum identity Q_n = M_n - min(0, min_{k<=n} M_k)."""
    walk = np.cumsum(increments)
    return walk - np.minimum(np.minimum.accumulate(walk), 0.0)


def _default_thresholds(samples: np.ndarray) -> np.ndarray:
    """Evenly spaced tail thresholds from the median positive queue up to
    the level still crossed MIN_EXCEEDANCES times."""
    positive = samples[samples > 0]
    if positive.size <= MIN_EXCEEDANCES:
        return np.empty(0)
    lo = float(np.median(positive))
    hi = float(np.quantile(positive, 1.0 - MIN_EXCEEDANCES / samples.size))
    if hi <= lo:
        return np.empty(0)
    return np.linspace(lo, hi, N_THRESHOLDS)


def _make_trace(queue: np.ndarray, arrival_bits: float,
                increments: np.ndarray) -> QueueTrace:
    n = queue.size
    drift = float(np.mean(increments[n // 2:]))
    thresholds = _default_thresholds(queue)
    counts = (queue[None, :] >= thresholds[:, None]).sum(axis=1) \
        if thresholds.size else np.empty(0, dtype=int)
    return QueueTrace(
        frames=n,
        queue_samples=queue,
        arrival_rate=arrival_bits,
        thresholds=thresholds,
        overflow_counts=counts,
        unstable=drift > 0.0,
    )


def simulate(
    policy: PowerPolicy,
    boundary: DecodingBoundary,
    arrival_rates: tuple[float, float],
    n_frames: int,
    seed: int,
) -> tuple[QueueTrace, QueueTrace]:
    """Run both buffers for n_frames and return a trace per user.

    arrival_rates are in bits/sec/Hz (the unit of effective capacity);
    each frame the buffers gain a_j*T*B bits and drain the instantaneous
    service r_j*T*B of that frame's fading draw.
    """
    a1, a2 = float(arrival_rates[0]), float(arrival_rates[1])
    if a1 < 0 or a2 < 0:
        raise ConfigError("arrival rates must be nonnegative")
    if n_frames < 10_000:
        raise ConfigError("need at least 10^4 frames for a tail estimate")

    grid = policy.grid
    r1, r2 = instantaneous_rates(
        grid.z1, grid.z2, policy.p1, policy.p2,
        policy.input1, policy.input2, boundary, policy.model,
    )
    r1, r2 = r1 / LN2, r2 / LN2
    tb = policy.qos.t_frame * policy.qos.bandwidth
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    nodes = rng.choice(grid.size, size=n_frames, p=grid.weights)

    traces = []
    for a, r in ((a1, r1), (a2, r2)):
        increments = a * tb - r[nodes] * tb
        queue = _lindley(increments)
        traces.append(_make_trace(queue, a * tb, increments))
    return traces[0], traces[1]


def tail_points(trace: QueueTrace, q_thresholds=None):
    """Usable (threshold, exceedance probability) pairs of the tail fit.

    Only thresholds crossed at least MIN_EXCEEDANCES times qualify; these
    are exactly the points estimate_theta regresses over.
    """
    if q_thresholds is None:
        q_thresholds = trace.thresholds
    q = np.asarray(q_thresholds, dtype=float)
    if q.size:
        counts = (trace.queue_samples[None, :] >= q[:, None]).sum(axis=1)
        usable = counts >= MIN_EXCEEDANCES
        q, counts = q[usable], counts[usable]
    else:
        counts = np.empty(0, dtype=int)
    return q, counts / trace.frames


def estimate_theta(trace: QueueTrace, q_thresholds=None) -> ThetaEstimate:
    """Tail exponent by least squares on ln Pr(Q >= q) against q.

    Only thresholds with at least MIN_EXCEEDANCES exceedances enter; fewer
    than 3 such thresholds cannot anchor a slope.
    """
    q, ccdf = tail_points(trace, q_thresholds)
    if q.size < 3:
        raise SolverError(
            "insufficient tail mass for a decay estimate",
            {"usable_thresholds": int(q.size)},
        )
    log_ccdf = np.log(ccdf)
    coeffs, residuals, *_ = np.polyfit(q, log_ccdf, 1, full=True)
    slope = float(coeffs[0])
    dof = q.size - 2
    if dof > 0 and residuals.size:
        var = float(residuals[0]) / dof
        se = np.sqrt(var / np.sum((q - q.mean()) ** 2))
    else:
        se = 0.0
    return ThetaEstimate(
        value=abs(slope),
        ci_halfwidth=float(1.96 * se),
        n_thresholds=int(q.size),
    )
