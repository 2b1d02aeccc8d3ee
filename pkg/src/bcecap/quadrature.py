"""Gauss-Hermite kernels for information measures of discrete inputs in
complex Gaussian noise.

The observation model per link is v = sqrt(s) x + sqrt(q) x' + w with w
circularly symmetric unit-variance Gaussian, x the symbol of interest and x'
an independent interfering symbol. Every integral reduces to expectations
over the superposed center set {sqrt(s) a + sqrt(q) b}, evaluated with
physicists' Gauss-Hermite nodes: the complex density (1/pi) exp(-|v-c|^2)
factors into per-real-dimension weights exp(-t^2), so product constellations
(square QAM, BPSK, QPSK) integrate exactly per dimension on the real line
while arbitrary point sets use the tensor rule over the complex plane.

All rates returned here are in nats.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite import hermgauss

from .errors import ConfigError

# Cap on the intermediate (batch x nodes x centers) block size, in elements.
_BLOCK = 4_000_000


@lru_cache(maxsize=32)
def gh_nodes(n: int):
    """Physicists' Gauss-Hermite nodes and weights (sum w_k exp integrates
    against exp(-t^2))."""
    t, w = hermgauss(n)
    return t, w


@dataclass
class PairStats:
    """Per-link integral results, vectorized over an SNR batch (nats)."""

    mi_unc: np.ndarray  # I(x; v), interferer marginalized
    mi_joint: np.ndarray  # I(x, x'; v)
    mmse_own: np.ndarray  # E|x - E[x|v]|^2
    cross_e: np.ndarray  # Re E{ E[x|v] E[x'|v]^* }

    def __iadd__(self, other: "PairStats"):
        self.mi_unc = self.mi_unc + other.mi_unc
        self.mi_joint = self.mi_joint + other.mi_joint
        self.mmse_own = self.mmse_own + other.mmse_own
        self.cross_e = self.cross_e + other.cross_e
        return self


def _zeros(shape) -> PairStats:
    z = np.zeros(shape)
    return PairStats(z.copy(), z.copy(), z.copy(), z.copy())


def _check_finite(stats: PairStats):
    for arr in (stats.mi_unc, stats.mi_joint, stats.mmse_own, stats.cross_e):
        if not np.all(np.isfinite(arr)):
            raise ConfigError("quadrature overflow")


def axis_stats(a, pa, b, pb, s, q, n_nodes: int) -> PairStats:
    """One real dimension: own points ``a`` (probs ``pa``) against interferer
    points ``b`` (probs ``pb``) at SNR scalings ``s``/``q`` (arrays).

    Noise per real dimension has density exp(-t^2)/sqrt(pi) (half the unit
    complex variance in each component).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    pa = np.asarray(pa, dtype=np.float64)
    pb = np.asarray(pb, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    shape = np.broadcast_shapes(s.shape, q.shape)
    s = np.broadcast_to(s, shape).ravel()
    q = np.broadcast_to(q, shape).ravel()

    own_dead = a.size == 1
    int_dead = b.size == 1 and b[0] == 0.0
    if own_dead and a[0] == 0.0:
        out = _zeros(s.shape)
        if not int_dead:
            # Joint MI still sees the interferer through this dimension.
            sub = axis_stats(b, pb, np.zeros(1), np.ones(1), q, np.zeros_like(q), n_nodes)
            out.mi_joint = sub.mi_joint
        return _reshape(out, shape)

    t, w = gh_nodes(n_nodes)
    wn = w / np.sqrt(np.pi)
    m = t.size

    rs = np.sqrt(s)[:, None]
    rq = np.sqrt(q)[:, None]
    ca = rs * a[None, :]  # (K, na)
    cb = rq * b[None, :]  # (K, nb)
    na, nb = a.size, b.size
    j_own = np.repeat(np.arange(na), nb)
    j_int = np.tile(np.arange(nb), na)
    c = (ca[:, :, None] + cb[:, None, :]).reshape(-1, na * nb)  # (K, J)
    la = a[j_own]
    lb = b[j_int]
    logp = np.log(np.repeat(pa, nb) * np.tile(pb, na))
    pj = np.exp(logp)
    J = na * nb
    K = s.size

    # Interferer-only log-density ln sum_b pb exp(-(sqrt(q)(b0-b)+t)^2),
    # independent of the own symbol and of s.
    db = cb[:, :, None, None] + t[None, None, :, None] - cb[:, None, None, :]
    lb_logits = np.log(pb)[None, None, None, :] - db**2
    lse_int = _lse(lb_logits)  # (K, nb, m)

    out = _zeros(K)
    ea2 = float(np.sum(pa * a**2))
    chunk = max(1, _BLOCK // max(1, m * J))
    for k0 in range(0, K, chunk):
        sl = slice(k0, k0 + chunk)
        csl = c[sl]
        for j0 in range(J):
            v = csl[:, j0][:, None] + t[None, :]  # (Kc, m)
            logits = logp[None, None, :] - (v[:, :, None] - csl[:, None, :]) ** 2
            mx = logits.max(axis=-1)
            e = np.exp(logits - mx[:, :, None])
            ssum = e.sum(axis=-1)
            lse_all = mx + np.log(ssum)
            post = e / ssum[:, :, None]
            xo = post @ la
            xi = post @ lb
            wj = pj[j0]
            out.mi_unc[sl] += wj * ((lse_int[sl, j_int[j0], :] - lse_all) @ wn)
            out.mi_joint[sl] += wj * (-(lse_all @ wn))
            out.mmse_own[sl] -= wj * ((xo**2) @ wn)
            out.cross_e[sl] += wj * ((xo * xi) @ wn)
    out.mi_joint -= 0.5  # E[t^2] under the per-dimension noise weight
    out.mmse_own += ea2
    _check_finite(out)
    return _reshape(out, shape)


def complex_stats(sym_a, pa, sym_b, pb, s, q, n_nodes: int) -> PairStats:
    """General complex-plane variant of :func:`axis_stats` for arbitrary
    (non-product) constellations. Costly for large alphabets; square QAM goes
    through the per-dimension path instead."""
    sym_a = np.asarray(sym_a, dtype=np.complex128)
    sym_b = np.asarray(sym_b, dtype=np.complex128)
    pa = np.asarray(pa, dtype=np.float64)
    pb = np.asarray(pb, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    shape = np.broadcast_shapes(s.shape, q.shape)
    s = np.broadcast_to(s, shape).ravel()
    q = np.broadcast_to(q, shape).ravel()

    t, w = gh_nodes(n_nodes)
    tc = (t[:, None] + 1j * t[None, :]).ravel()
    wn = (w[:, None] * w[None, :]).ravel() / np.pi
    m = tc.size

    rs = np.sqrt(s)[:, None]
    rq = np.sqrt(q)[:, None]
    na, nb = sym_a.size, sym_b.size
    j_own = np.repeat(np.arange(na), nb)
    j_int = np.tile(np.arange(nb), na)
    ca = rs * sym_a[None, :]
    cb = rq * sym_b[None, :]
    c = (ca[:, :, None] + cb[:, None, :]).reshape(-1, na * nb)
    la = sym_a[j_own]
    lb = sym_b[j_int]
    logp = np.log(np.repeat(pa, nb) * np.tile(pb, na))
    pj = np.exp(logp)
    J = na * nb
    K = s.size

    db = cb[:, :, None, None] + tc[None, None, :, None] - cb[:, None, None, :]
    lb_logits = np.log(pb)[None, None, None, :] - np.abs(db) ** 2
    lse_int = _lse(lb_logits)  # (K, nb, m)

    out = _zeros(K)
    ea2 = float(np.sum(pa * np.abs(sym_a) ** 2))
    chunk = max(1, _BLOCK // max(1, m * J))
    for k0 in range(0, K, chunk):
        sl = slice(k0, k0 + chunk)
        csl = c[sl]
        for j0 in range(J):
            v = csl[:, j0][:, None] + tc[None, :]
            logits = logp[None, None, :] - np.abs(v[:, :, None] - csl[:, None, :]) ** 2
            mx = logits.max(axis=-1)
            e = np.exp(logits - mx[:, :, None])
            ssum = e.sum(axis=-1)
            lse_all = mx + np.log(ssum)
            post = e / ssum[:, :, None]
            xo = post @ la
            xi = post @ lb
            wj = pj[j0]
            out.mi_unc[sl] += wj * ((lse_int[sl, j_int[j0], :] - lse_all) @ wn)
            out.mi_joint[sl] += wj * (-(lse_all @ wn))
            out.mmse_own[sl] -= wj * ((np.abs(xo) ** 2) @ wn)
            out.cross_e[sl] += wj * ((xo * np.conj(xi)).real @ wn)
    out.mi_joint -= 1.0  # E|w|^2
    out.mmse_own += ea2
    _check_finite(out)
    return _reshape(out, shape)


def posterior_means(y, sym_a, pa, sym_b, pb, s: float, q: float):
    """MMSE estimates (E[x|v], E[x'|v]) of both symbols at observations ``y``
    under the superposed-center model, computed in the log domain."""
    y = np.atleast_1d(np.asarray(y, dtype=np.complex128))
    sym_a = np.asarray(sym_a, dtype=np.complex128)
    sym_b = np.asarray(sym_b, dtype=np.complex128)
    c = (np.sqrt(s) * sym_a[:, None] + np.sqrt(q) * sym_b[None, :]).ravel()
    la = np.repeat(sym_a, sym_b.size)
    lb = np.tile(sym_b, sym_a.size)
    logp = np.log(np.repeat(np.asarray(pa, float), sym_b.size) * np.tile(np.asarray(pb, float), sym_a.size))
    logits = logp[None, :] - np.abs(y[:, None] - c[None, :]) ** 2
    mx = logits.max(axis=-1, keepdims=True)
    e = np.exp(logits - mx)
    post = e / e.sum(axis=-1, keepdims=True)
    return post @ la, post @ lb


def _lse(logits):
    mx = logits.max(axis=-1)
    return mx + np.log(np.exp(logits - mx[..., None]).sum(axis=-1))


def _reshape(stats: PairStats, shape) -> PairStats:
    stats.mi_unc = stats.mi_unc.reshape(shape)
    stats.mi_joint = stats.mi_joint.reshape(shape)
    stats.mmse_own = stats.mmse_own.reshape(shape)
    stats.cross_e = stats.cross_e.reshape(shape)
    return stats
