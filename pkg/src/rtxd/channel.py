"""Random user activity and Rayleigh channel power gains.

All draws go through a caller-owned :class:`numpy.random.Generator`. Gains are
produced by inverse-CDF sampling of the exponential law so that a given stream
yields the same values on every platform.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STATIC = "static-per-frame"
IID_PER_SLOT = "iid-per-slot"
FADING_MODES = (STATIC, IID_PER_SLOT)


@dataclass(frozen=True)
class FadingSpec:
    mode: str = STATIC
    mean_gain: float = 1.0

    def __post_init__(self):
        if self.mode not in FADING_MODES:
            raise ValueError(f"unknown fading mode {self.mode!r}")
        if not self.mean_gain > 0:
            raise ValueError("mean_gain must be positive")


@dataclass(frozen=True)
class ActivitySpec:
    population: int
    access_prob: float

    def __post_init__(self):
        if self.population < 0:
            raise ValueError("population must be non-negative")
        if not 0.0 <= self.access_prob <= 1.0:
            raise ValueError("access_prob out of range")


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    """Child stream for one trial, a pure function of (seed, trial_index)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(trial_index),))
    return np.random.Generator(np.random.PCG64(ss))


def exponential_from_uniform(u, mean_gain: float):
    return -mean_gain * np.log1p(-np.asarray(u, dtype=float))


def draw_gain(spec: FadingSpec, rng: np.random.Generator, size=None):
    """|h|^2 for h ~ CN(0, mean_gain): exponential with mean ``spec.mean_gain``.

    ``size`` follows numpy conventions; ``None`` returns a Python float.
    """
    u = rng.random(size)
    g = exponential_from_uniform(u, spec.mean_gain)
    return float(g) if size is None else g


def draw_frame_gains(spec: FadingSpec, rng: np.random.Generator, n_users: int, n_slots: int = 1):
    """Gains for one frame.

    Static fading gives shape ``(n_users,)``; i.i.d. per-slot fading gives
    ``(n_users, n_slots)``.
    """
    if spec.mode == STATIC:
        return draw_gain(spec, rng, n_users)
    return draw_gain(spec, rng, (n_users, n_slots))


def draw_active_set(spec: ActivitySpec, rng: np.random.Generator) -> np.ndarray:
    """Indices of active users; each is active independently with ``access_prob``."""
    if spec.population == 0:
        return np.empty(0, dtype=np.int64)
    return np.flatnonzero(rng.random(spec.population) < spec.access_prob)
