"""Rician ULA channels and channel-error samplers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import psd_sqrt


@dataclass(frozen=True)
class PathLossParams:
    d0: float = 10.0
    alpha: float = 2.0

    def __post_init__(self):
        if self.d0 <= 0 or self.alpha < 0:
            raise ValueError("need d0 > 0 and alpha >= 0")


@dataclass(frozen=True)
class ChannelLayout:
    """Geometry of one deployment: user/eavesdropper distances and Rician factor."""

    user_distances: tuple = (10.0, 14.0, 18.0)
    eav_distances: tuple = (8.0, 8.0)
    rician_k: float = 3.0
    path_loss: PathLossParams = field(default_factory=PathLossParams)


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """Nominal legitimate channels, eavesdropper channels and the draw's metadata."""

    legit: tuple
    eav: tuple
    user_distances: tuple
    eav_distances: tuple
    user_angles: tuple = ()
    eav_angles: tuple = ()

    def __post_init__(self):
        if not self.legit:
            raise ValueError("need at least one legitimate channel")
        n = len(self.legit[0])
        if any(len(h) != n for h in self.legit + self.eav):
            raise ValueError("all channel vectors must have the same length")

    @property
    def n_t(self) -> int:
        return len(self.legit[0])

    @property
    def n_users(self) -> int:
        return len(self.legit)

    @property
    def n_eav(self) -> int:
        return len(self.eav)

    def to_dict(self) -> dict:
        def enc(vs):
            return [[[float(z.real), float(z.imag)] for z in v] for v in vs]

        return {
            "legit": enc(self.legit),
            "eav": enc(self.eav),
            "user_distances": list(self.user_distances),
            "eav_distances": list(self.eav_distances),
            "user_angles": list(self.user_angles),
            "eav_angles": list(self.eav_angles),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelSet":
        def dec(vs):
            return tuple(np.array([complex(re, im) for re, im in v]) for v in vs)

        return cls(
            legit=dec(d["legit"]),
            eav=dec(d["eav"]),
            user_distances=tuple(d["user_distances"]),
            eav_distances=tuple(d["eav_distances"]),
            user_angles=tuple(d.get("user_angles", ())),
            eav_angles=tuple(d.get("eav_angles", ())),
        )


def path_loss(d: float, p: PathLossParams = PathLossParams()) -> float:
    """Large-scale power gain ``(d / d0) ** -alpha``."""
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")
    return float((d / p.d0) ** (-p.alpha))


def ula_los(n_antennas: int, angle: float) -> np.ndarray:
    """Unit-modulus half-wavelength ULA steering vector."""
    if n_antennas < 1:
        raise ValueError("need at least one antenna")
    m = np.arange(n_antennas)
    return np.exp(-1j * np.pi * m * np.sin(angle))


def cn(rng: np.random.Generator, size, var: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with per-entry variance ``var``."""
    s = np.sqrt(var / 2.0)
    return s * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def rician_channel(los, gain: float, k_r: float, rng: np.random.Generator) -> np.ndarray:
    """Rician mix of a LOS vector (``||los||^2 = gain``) and CN(0, gain I) scattering.

    ``k_r = inf`` returns the LOS part exactly.
    """
    los = np.asarray(los, dtype=complex)
    if k_r < 0:
        raise ValueError("Rician factor must be non-negative")
    if np.isinf(k_r):
        return los.copy()
    nlos = cn(rng, los.shape, gain)
    return np.sqrt(k_r / (1.0 + k_r)) * los + np.sqrt(1.0 / (1.0 + k_r)) * nlos


def terminal_channel(n_t: int, distance: float, layout: ChannelLayout, rng):
    """Draw one terminal's channel; returns ``(h, angle)``."""
    D = path_loss(distance, layout.path_loss)
    angle = rng.uniform(-np.pi / 2, np.pi / 2)
    los = ula_los(n_t, angle) * np.sqrt(D / n_t)
    return rician_channel(los, D, layout.rician_k, rng), float(angle)


def generate_channels(n_t: int, layout: ChannelLayout, rng: np.random.Generator) -> ChannelSet:
    """Nominal user channels and eavesdropper channels for one trial."""
    legit, ua = zip(*(terminal_channel(n_t, d, layout, rng) for d in layout.user_distances))
    if layout.eav_distances:
        eav, ea = zip(*(terminal_channel(n_t, d, layout, rng) for d in layout.eav_distances))
    else:
        eav, ea = (), ()
    return ChannelSet(
        legit=tuple(legit),
        eav=tuple(eav),
        user_distances=tuple(layout.user_distances),
        eav_distances=tuple(layout.eav_distances),
        user_angles=tuple(ua),
        eav_angles=tuple(ea),
    )


def trial_seed(base: int, trial: int) -> int:
    """Per-trial seed; independent of execution order."""
    return int(base) ^ int(trial)


def sample_bounded_error(epsilon: float, dim: int, surface: bool, rng) -> np.ndarray:
    """Uniform error on the complex ``epsilon``-sphere or inside the ball."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    z = cn(rng, dim)
    z /= np.linalg.norm(z)
    if surface:
        r = epsilon
    else:
        # uniform in a 2*dim real-dimensional ball
        r = epsilon * rng.uniform() ** (1.0 / (2 * dim))
    return r * z


def sample_bounded_errors(epsilon: float, dim: int, n: int, surface: bool, rng) -> np.ndarray:
    """Vectorised :func:`sample_bounded_error`; returns shape ``(n, dim)``."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    z = cn(rng, (n, dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    if surface:
        r = np.full(n, float(epsilon))
    else:
        r = epsilon * rng.uniform(size=n) ** (1.0 / (2 * dim))
    return r[:, None] * z


def sample_gaussian_error(theta, rng, n: int | None = None) -> np.ndarray:
    """``Theta^{1/2} z`` with ``z ~ CN(0, I)``; ``n`` draws stacked on axis 0."""
    root = psd_sqrt(theta)
    dim = root.shape[0]
    if n is None:
        return root @ cn(rng, dim)
    return cn(rng, (n, dim)) @ root.T
