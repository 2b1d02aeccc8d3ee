"""Mutual information, MMSE, and power derivatives for one broadcast link.

The link observes v = sqrt(z) (sqrt(P_j) x_j + sqrt(P_m) x_m) + w after the
channel phase is absorbed (only the fading power z enters any of these
quantities; a rotation test pins that down). Everything reduces to functions
of the effective SNRs s = z P_j and q = z P_m.

Unit convention: mutual-information operations return bits per channel use;
power derivatives return nats per watt, consistent with dI/ds = MMSE holding
in nats. Conversion happens only at these boundaries.

Exact quadrature serves discrete/discrete pairs; Gaussian inputs have closed
reductions (a Gaussian interferer only rescales the noise; a Gaussian input
against a discrete interferer reduces to the interferer's conditional
quantities). The remaining mixed mutual informations use seeded Monte Carlo.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .constellation import Constellation, InputKind, is_gaussian
from .errors import ConfigError
from .quadrature import PairStats, axis_stats, complex_stats, posterior_means

LN2 = float(np.log(2.0))

_POINT = (np.zeros(1), np.ones(1))


@dataclass(frozen=True)
class QuadratureSpec:
    """Numerical settings for the information integrals."""

    nodes_per_dim: int = 48
    mc_samples: int = 200_000
    seed: int = 12345

    def __post_init__(self):
        if self.nodes_per_dim < 8:
            raise ConfigError("nodes_per_dim must be at least 8")
        if self.mc_samples < 1_000:
            raise ConfigError("mc_samples must be at least 1000")


DEFAULT_QUAD = QuadratureSpec()


@dataclass(frozen=True)
class LinkState:
    """Channel power and the two inputs seen by one receiver.

    z: fading power |h|^2 of this receiver's channel.
    p_j / input_j: power and alphabet of the symbol of interest.
    p_m / input_m: power and alphabet of the superposed interfering symbol.
    """

    z: float
    p_j: float
    p_m: float
    input_j: InputKind
    input_m: InputKind

    def __post_init__(self):
        if self.z < 0 or self.p_j < 0 or self.p_m < 0:
            raise ConfigError("powers and channel gains must be nonnegative")


# ---------------------------------------------------------------------------
# Exact vectorized statistics (nats), dispatched on the input-kind pair.
# ---------------------------------------------------------------------------


def cond_stats(inp: InputKind, s, quad: QuadratureSpec) -> tuple[np.ndarray, np.ndarray]:
    """Interference-free (mi, mmse) of ``inp`` at SNR ``s`` (arrays, nats)."""
    s = np.asarray(s, dtype=np.float64)
    if is_gaussian(inp):
        return np.log1p(s), 1.0 / (1.0 + s)
    st = _discrete_pair_stats(inp, None, s, np.zeros_like(s), quad)
    mi = np.clip(st.mi_unc, 0.0, inp.entropy_nats)
    mmse = np.clip(st.mmse_own, 0.0, None)
    return mi, mmse


def pair_stats(own: InputKind, intf: InputKind, s, q, quad: QuadratureSpec) -> PairStats:
    """Unconditional-link statistics of ``own`` under interference from
    ``intf`` at SNRs (s, q), arrays, nats. Deterministic for every input
    combination (Monte Carlo never enters here)."""
    s = np.asarray(s, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    shape = np.broadcast_shapes(s.shape, q.shape)
    s = np.broadcast_to(s, shape).astype(float)
    q = np.broadcast_to(q, shape).astype(float)

    if is_gaussian(own) and is_gaussian(intf):
        denom = 1.0 + s + q
        return PairStats(
            mi_unc=np.log1p(s / (1.0 + q)),
            mi_joint=np.log(denom),
            mmse_own=(1.0 + q) / denom,
            cross_e=np.sqrt(s * q) / denom,
        )
    if is_gaussian(intf):
        # Gaussian interferer: extra white noise of variance q.
        sig = s / (1.0 + q)
        mi, mmse = cond_stats(own, sig, quad)
        return PairStats(
            mi_unc=mi,
            mi_joint=mi + np.log1p(q),
            mmse_own=mmse,
            cross_e=np.sqrt(s * q) / (1.0 + q) * mmse,
        )
    if is_gaussian(own):
        # Gaussian input against a discrete interferer: everything reduces to
        # the interferer's conditional quantities at SNR q/(1+s).
        sig = q / (1.0 + s)
        mi_i, mmse_i = cond_stats(intf, sig, quad)
        mi_q, _ = cond_stats(intf, q, quad)
        return PairStats(
            mi_unc=np.log1p(s) + mi_i - mi_q,
            mi_joint=np.log1p(s) + mi_i,
            mmse_own=1.0 / (1.0 + s) + s * q * mmse_i / (1.0 + s) ** 2,
            cross_e=np.sqrt(s * q) / (1.0 + s) * mmse_i,
        )
    st = _discrete_pair_stats(own, intf, s, q, quad)
    st.mi_unc = np.clip(st.mi_unc, 0.0, own.entropy_nats)
    st.mi_joint = np.clip(st.mi_joint, 0.0, own.entropy_nats + intf.entropy_nats)
    st.mmse_own = np.clip(st.mmse_own, 0.0, None)
    return st


def _discrete_pair_stats(own: Constellation, intf, s, q, quad: QuadratureSpec) -> PairStats:
    n = quad.nodes_per_dim
    if intf is None:
        if own.iq_factors is not None:
            fi, fq = own.iq_factors
            out = axis_stats(fi.points, fi.probs, *_POINT, s, q, n)
            out += axis_stats(fq.points, fq.probs, *_POINT, s, q, n)
            return out
        return complex_stats(own.symbols, own.probs, np.zeros(1, complex), np.ones(1), s, q, n)
    if own.iq_factors is not None and intf.iq_factors is not None:
        oi, oq = own.iq_factors
        ii, iq_ = intf.iq_factors
        out = axis_stats(oi.points, oi.probs, ii.points, ii.probs, s, q, n)
        out += axis_stats(oq.points, oq.probs, iq_.points, iq_.probs, s, q, n)
        return out
    return complex_stats(own.symbols, own.probs, intf.symbols, intf.probs, s, q, n)


def d_mi_ds_unconditional(own: InputKind, intf: InputKind, s, q, quad: QuadratureSpec) -> np.ndarray:
    """d I(x; v) / ds with the interferer marginalized (nats per unit SNR):
    mmse + sqrt(q/s) (Re E{x x'*} - Re E{xhat xhat'*}). Vectorized; s > 0."""
    s = np.asarray(s, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    st = pair_stats(own, intf, s, q, quad)
    mean_prod = _mean_product(own, intf)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(q > 0, np.sqrt(np.divide(q, s, out=np.zeros_like(q + s), where=s > 0)), 0.0)
    return st.mmse_own + ratio * (mean_prod - st.cross_e)


def _mean_product(own: InputKind, intf: InputKind) -> float:
    mo = 0.0 if is_gaussian(own) else own.mean
    mi = 0.0 if is_gaussian(intf) else intf.mean
    return float((np.conj(mi) * mo).real)


# ---------------------------------------------------------------------------
# Public scalar operations (memoized).
# ---------------------------------------------------------------------------

_cache: dict[tuple, float] = {}
_CACHE_MAX = 400_000


def _memo(key, compute):
    hit = _cache.get(key)
    if hit is not None:
        return hit
    val = compute()
    if len(_cache) < _CACHE_MAX:
        _cache[key] = val
    return val


def _key(op, quad, *inputs, **floats):
    parts = [op, str(quad.nodes_per_dim)]
    parts += [inp.key for inp in inputs]
    parts += [f"{name}={val:.9e}" for name, val in sorted(floats.items())]
    return tuple(parts)


def mi_conditional(link: LinkState, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """I(x_j; v | x_m) in bits per channel use: single-user MI at s = z P_j."""
    s = link.z * link.p_j
    key = _key("mic", quad, link.input_j, s=s)
    return _memo(key, lambda: float(cond_stats(link.input_j, np.array([s]), quad)[0][0]) / LN2)


def mmse_conditional(link: LinkState, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """MMSE of x_j from the interference-cancelled observation, in [0, 1]."""
    s = link.z * link.p_j
    key = _key("mmsec", quad, link.input_j, s=s)
    val = _memo(key, lambda: float(cond_stats(link.input_j, np.array([s]), quad)[1][0]))
    return min(max(val, 0.0), 1.0)


def mi_with_interference(link: LinkState, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """I(x_j; v) in bits with x_m treated as noise (marginalized).

    Discrete pairs and any-Gaussian-reducible pairs are deterministic; the
    mixed Gaussian/discrete case is estimated by seeded Monte Carlo (see
    :func:`mi_with_interference_method`)."""
    s, q = link.z * link.p_j, link.z * link.p_m
    method = mi_with_interference_method(link)
    if method == "monte-carlo":
        key = _key("miu-mc", quad, link.input_j, link.input_m, s=s, q=q, n=float(quad.mc_samples), seed=float(quad.seed))
        return _memo(key, lambda: _mc_mi_with_interference(link.input_j, link.input_m, s, q, quad) / LN2)
    key = _key("miu", quad, link.input_j, link.input_m, s=s, q=q)
    return _memo(key, lambda: float(pair_stats(link.input_j, link.input_m, np.array([s]), np.array([q]), quad).mi_unc[0]) / LN2)


def mi_with_interference_method(link: LinkState) -> str:
    """Evaluation route recorded in output metadata."""
    gj, gm = is_gaussian(link.input_j), is_gaussian(link.input_m)
    if gj and gm:
        return "closed-form"
    if gj != gm and link.p_m > 0 and link.p_j > 0:
        return "monte-carlo"
    if gj:
        return "closed-form"
    return "gauss-hermite"


def d_mi_dp_conditional(link: LinkState, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """d I(x_j; v | x_m) / d P_j in nats per watt: z times the conditional
    MMSE at s = z P_j."""
    return link.z * mmse_conditional(link, quad)


def d_mi_dp_unconditional(link: LinkState, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """d I(x_j; v) / d P_j in nats per watt, interferer marginalized."""
    if link.p_j == 0:
        raise ConfigError("derivative singular at zero power; use one-sided finite difference")
    s, q = link.z * link.p_j, link.z * link.p_m
    key = _key("dmiu", quad, link.input_j, link.input_m, s=s, q=q)
    return link.z * _memo(
        key,
        lambda: float(d_mi_ds_unconditional(link.input_j, link.input_m, np.array([s]), np.array([q]), quad)[0]),
    )


def mmse_estimate(y, link: LinkState, which: str = "own", quad: QuadratureSpec = DEFAULT_QUAD):
    """Posterior-mean estimate of the selected symbol given observation(s) y
    under the superposed model sqrt(z)(sqrt(P_j) x_j + sqrt(P_m) x_m) + w."""
    if which not in ("own", "interferer"):
        raise ConfigError("which must be 'own' or 'interferer'")
    s, q = link.z * link.p_j, link.z * link.p_m
    y = np.atleast_1d(np.asarray(y, dtype=np.complex128))
    gj, gm = is_gaussian(link.input_j), is_gaussian(link.input_m)
    if gj and gm:
        xo = np.sqrt(s) / (1.0 + s + q) * y
        xi = np.sqrt(q) / (1.0 + s + q) * y
    elif gj:  # Gaussian own symbol, discrete interferer
        # Posterior over the interferer with the Gaussian part folded into
        # the noise (variance 1+s), then the linear estimate of x given x'.
        yn = y / np.sqrt(1.0 + s)
        _, xi = posterior_means(yn, np.zeros(1, complex), np.ones(1), link.input_m.symbols, link.input_m.probs, 0.0, q / (1.0 + s))
        xo = np.sqrt(s) / (1.0 + s) * (y - np.sqrt(q) * xi)
    elif gm:  # discrete own symbol, Gaussian interferer
        yn = y / np.sqrt(1.0 + q)
        xo, _ = posterior_means(yn, link.input_j.symbols, link.input_j.probs, np.zeros(1, complex), np.ones(1), s / (1.0 + q), 0.0)
        xi = np.sqrt(q) / (1.0 + q) * (y - np.sqrt(s) * xo)
    else:
        xo, xi = posterior_means(y, link.input_j.symbols, link.input_j.probs, link.input_m.symbols, link.input_m.probs, s, q)
    out = xo if which == "own" else xi
    return out if out.size > 1 else complex(out[0])


def joint_mutual_info(z1, z2, p1, p2, input1: InputKind, input2: InputKind, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """I(x_1, x_2; y_1, y_2) in bits for the two-receiver broadcast of the
    superposed symbol. Gaussian/Gaussian uses the rank-one closed form; any
    discrete input triggers the seeded Monte Carlo estimator."""
    if is_gaussian(input1) and is_gaussian(input2):
        return float(np.log1p((p1 + p2) * (z1 + z2))) / LN2
    key = _key("joint-mc", quad, input1, input2, z1=z1, z2=z2, p1=p1, p2=p2, n=float(quad.mc_samples), seed=float(quad.seed))
    return _memo(key, lambda: _mc_joint(z1, z2, p1, p2, input1, input2, quad)) / LN2


def joint_mutual_info_exact(z1, z2, p1, p2, input1: InputKind, input2: InputKind, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Deterministic joint MI in nats via the matched-filter reduction: the
    pair (y_1, y_2) is equivalent to one observation of the superposed symbol
    at combined gain z_1 + z_2."""
    zsum = z1 + z2
    st = pair_stats(input1, input2, np.array([zsum * p1]), np.array([zsum * p2]), DEFAULT_QUAD if quad is None else quad)
    return float(st.mi_joint[0])


# ---------------------------------------------------------------------------
# Monte Carlo estimators (seeded, deterministic per argument tuple).
# ---------------------------------------------------------------------------


def _rng_for(quad: QuadratureSpec, tag: str, *parts) -> np.random.Generator:
    h = hashlib.blake2b(digest_size=8)
    h.update(f"{tag}|{quad.seed}|{quad.mc_samples}".encode())
    for p in parts:
        h.update(f"|{p}".encode())
    return np.random.default_rng(int.from_bytes(h.digest(), "little"))


def _sample(inp: InputKind, n: int, rng) -> np.ndarray:
    if is_gaussian(inp):
        return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
    idx = rng.choice(inp.symbols.size, size=n, p=inp.probs)
    return inp.symbols[idx]


def _cnoise(n: int, rng) -> np.ndarray:
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)


def _mc_mi_with_interference(own, intf, s, q, quad: QuadratureSpec) -> float:
    """Mixed Gaussian/discrete MI in nats by Monte Carlo over (x, x', w)."""
    n = quad.mc_samples
    rng = _rng_for(quad, "miu", getattr(own, "key", ""), getattr(intf, "key", ""), f"{s:.9e}", f"{q:.9e}")
    x = _sample(own, n, rng)
    xp = _sample(intf, n, rng)
    w = _cnoise(n, rng)
    v = np.sqrt(s) * x + np.sqrt(q) * xp + w
    if is_gaussian(own):
        b, pb = intf.symbols, intf.probs
        d_cond = np.abs(v[:, None] - np.sqrt(s) * x[:, None] - np.sqrt(q) * b[None, :]) ** 2
        log_cond = _lse_rows(np.log(pb)[None, :] - d_cond)
        d_marg = np.abs(v[:, None] - np.sqrt(q) * b[None, :]) ** 2 / (1.0 + s)
        log_marg = _lse_rows(np.log(pb)[None, :] - d_marg) - np.log1p(s)
    else:
        a, pa = own.symbols, own.probs
        log_cond = -np.abs(v - np.sqrt(s) * x) ** 2 / (1.0 + q) - np.log1p(q)
        d_marg = np.abs(v[:, None] - np.sqrt(s) * a[None, :]) ** 2 / (1.0 + q)
        log_marg = _lse_rows(np.log(pa)[None, :] - d_marg) - np.log1p(q)
    return float(np.mean(log_cond - log_marg))


def _mc_joint(z1, z2, p1, p2, input1, input2, quad: QuadratureSpec) -> float:
    """Joint MI (nats) by Monte Carlo with log-domain mixture densities over
    the superposed alphabet."""
    n = quad.mc_samples
    rng = _rng_for(quad, "joint", getattr(input1, "key", ""), getattr(input2, "key", ""), f"{z1:.9e}", f"{z2:.9e}", f"{p1:.9e}", f"{p2:.9e}")
    x1 = _sample(input1, n, rng)
    x2 = _sample(input2, n, rng)
    w1 = _cnoise(n, rng)
    w2 = _cnoise(n, rng)
    u = np.sqrt(p1) * x1 + np.sqrt(p2) * x2
    y1 = np.sqrt(z1) * u + w1
    y2 = np.sqrt(z2) * u + w2
    g1, g2 = is_gaussian(input1), is_gaussian(input2)
    if not g1 and not g2:
        ub = (np.sqrt(p1) * input1.symbols[:, None] + np.sqrt(p2) * input2.symbols[None, :]).ravel()
        logp = np.log(np.repeat(input1.probs, input2.probs.size) * np.tile(input2.probs, input1.probs.size))
        d = (
            np.abs(y1[:, None] - np.sqrt(z1) * ub[None, :]) ** 2
            + np.abs(y2[:, None] - np.sqrt(z2) * ub[None, :]) ** 2
        )
        log_marg = _lse_rows(logp[None, :] - d)
        log_cond = -(np.abs(w1) ** 2 + np.abs(w2) ** 2)
        return float(np.mean(log_cond - log_marg))
    # Exactly one Gaussian input: mixture of correlated bivariate Gaussians
    # over the discrete alphabet; the Gaussian part adds rank-one covariance.
    if g1:
        pg, disc, pd = p1, input2, p2
    else:
        pg, disc, pd = p2, input1, p1
    det = 1.0 + pg * (z1 + z2)
    b = disc.symbols
    m1 = np.sqrt(z1 * pd) * b
    m2 = np.sqrt(z2 * pd) * b
    d1 = y1[:, None] - m1[None, :]
    d2 = y2[:, None] - m2[None, :]
    proj = np.sqrt(z1) * d1 + np.sqrt(z2) * d2
    quad_form = np.abs(d1) ** 2 + np.abs(d2) ** 2 - pg * np.abs(proj) ** 2 / det
    log_marg = _lse_rows(np.log(disc.probs)[None, :] - quad_form) - np.log(det)
    log_cond = -(np.abs(w1) ** 2 + np.abs(w2) ** 2)
    return float(np.mean(log_cond - log_marg))


def _lse_rows(logits):
    mx = logits.max(axis=-1)
    return mx + np.log(np.exp(logits - mx[..., None]).sum(axis=-1))
