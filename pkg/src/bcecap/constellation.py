"""Input alphabets for the broadcast channel: finite constellations and the
Gaussian reference input.

All constellations are normalized to unit average energy (sum p_i |s_i|^2 = 1)
so that transmit power enters the channel model only through the power
variables. Square QAM alphabets (and BPSK/QPSK) carry their I/Q product
factorization, which the quadrature engine exploits to integrate per real
dimension instead of over the complex plane.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

_PROB_TOL = 1e-9

STANDARD_NAMES = ("bpsk", "qpsk", "qam16", "qam64")


@dataclass(frozen=True)
class AxisFactor:
    """One real dimension of a product constellation."""

    points: np.ndarray
    probs: np.ndarray


@dataclass(frozen=True)
class Constellation:
    """Discrete complex input alphabet with symbol probabilities."""

    symbols: np.ndarray
    probs: np.ndarray
    name: str = "custom"
    # (I factor, Q factor) when the alphabet is a product of independent real
    # alphabets per dimension; None for general point sets.
    iq_factors: tuple[AxisFactor, AxisFactor] | None = field(default=None, repr=False)

    def __post_init__(self):
        symbols = np.asarray(self.symbols, dtype=np.complex128)
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "probs", probs)
        if symbols.ndim != 1 or probs.shape != symbols.shape:
            raise ConfigError("symbols and probs must be 1-D arrays of equal length")
        if symbols.size < 2:
            raise ConfigError("constellation needs at least two symbols")
        if np.any(probs < 0):
            raise ConfigError("negative probability mass")
        if abs(probs.sum() - 1.0) > _PROB_TOL:
            raise ConfigError(f"probabilities sum to {probs.sum():.12g}, not 1")
        if len(np.unique(symbols)) != symbols.size:
            raise ConfigError("duplicate symbols")
        energy = float(np.sum(probs * np.abs(symbols) ** 2))
        if abs(energy - 1.0) > 1e-12:
            raise ConfigError("constellation not unit energy; use custom_constellation")

    @property
    def size(self) -> int:
        return int(self.symbols.size)

    @property
    def mean(self) -> complex:
        return complex(np.sum(self.probs * self.symbols))

    @property
    def entropy_nats(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-np.sum(p * np.log(p)))

    @property
    def key(self) -> str:
        """Stable identity for caching, derived from the numeric content."""
        h = hashlib.blake2b(digest_size=10)
        h.update(self.symbols.tobytes())
        h.update(self.probs.tobytes())
        return f"{self.name}-{h.hexdigest()}"

    def rotated(self, phase_rad: float) -> "Constellation":
        """Same alphabet rotated in the complex plane (drops I/Q factors)."""
        rot = np.exp(1j * phase_rad) * self.symbols
        return Constellation(rot, self.probs.copy(), name=f"{self.name}-rot")


@dataclass(frozen=True)
class GaussianInput:
    """Circularly symmetric unit-variance Gaussian input."""

    name: str = "gaussian"

    @property
    def key(self) -> str:
        return "gaussian"


GAUSSIAN = GaussianInput()

InputKind = Constellation | GaussianInput


def is_gaussian(inp: InputKind) -> bool:
    return isinstance(inp, GaussianInput)


def _gray_axis_levels(bits: int) -> np.ndarray:
    """PAM levels ordered so that the binary label of position k is the Gray
    code of k (adjacent levels differ in one label bit)."""
    m = 1 << bits
    ascending = np.arange(-(m - 1), m, 2, dtype=np.float64)
    levels = np.empty(m)
    for i in range(m):
        levels[i ^ (i >> 1)] = ascending[i]
    return levels


def _square_qam(bits_per_axis: int, name: str) -> Constellation:
    levels = _gray_axis_levels(bits_per_axis)
    m = levels.size
    # Unit-energy scale: each axis contributes mean(levels^2).
    scale = 1.0 / np.sqrt(2.0 * np.mean(levels**2))
    axis = levels * scale
    re = np.repeat(axis, m)
    im = np.tile(axis, m)
    probs = np.full(m * m, 1.0 / (m * m))
    axis_probs = np.full(m, 1.0 / m)
    factors = (AxisFactor(axis, axis_probs), AxisFactor(axis.copy(), axis_probs.copy()))
    return Constellation(re + 1j * im, probs, name=name, iq_factors=factors)


def standard_constellation(name: str) -> Constellation:
    """Equiprobable, unit-energy, Gray-ordered standard alphabets."""
    kind = name.strip().lower()
    if kind == "bpsk":
        pts = np.array([1.0, -1.0], dtype=np.complex128)
        probs = np.array([0.5, 0.5])
        factors = (
            AxisFactor(np.array([1.0, -1.0]), probs.copy()),
            AxisFactor(np.array([0.0]), np.array([1.0])),
        )
        return Constellation(pts, probs, name="bpsk", iq_factors=factors)
    if kind == "qpsk":
        return _square_qam(1, "qpsk")
    if kind == "qam16":
        return _square_qam(2, "qam16")
    if kind == "qam64":
        return _square_qam(3, "qam64")
    raise ConfigError(f"unknown constellation: {name!r}")


def custom_constellation(symbols, probs, name: str = "custom") -> Constellation:
    """Arbitrary alphabet, rescaled to unit average energy."""
    symbols = np.asarray(symbols, dtype=np.complex128)
    probs = np.asarray(probs, dtype=np.float64)
    if symbols.ndim != 1 or probs.shape != symbols.shape:
        raise ConfigError("symbols and probs must be 1-D arrays of equal length")
    if np.any(probs < 0):
        raise ConfigError("negative probability mass")
    if abs(probs.sum() - 1.0) > _PROB_TOL:
        raise ConfigError(f"probabilities sum to {probs.sum():.12g}, not 1")
    probs = probs / probs.sum()
    energy = float(np.sum(probs * np.abs(symbols) ** 2))
    if energy <= 0:
        raise ConfigError("constellation has zero energy")
    return Constellation(symbols / np.sqrt(energy), probs, name=name)
