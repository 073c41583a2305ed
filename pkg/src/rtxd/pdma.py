"""Power-domain multiple access: geometric received-power ladder, equiprobable
channel-gain regions, distributed power allocation, and outage probabilities.
"""
from __future__ import annotations

import bisect
import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats


class InvalidDesign(ValueError):
    """A PDMA/RDMA design parameter set that cannot be realised."""


class NumericDomainError(ArithmeticError):
    pass


SILENT = None
LN2 = math.log(2.0)


@dataclass(frozen=True)
class PowerLadder:
    target_sinr: float
    levels: int
    powers: tuple  # v_1 > v_2 > ... > v_L

    def tail_sums(self) -> tuple:
        """V_l, the sum of all levels below level l."""
        v = self.powers
        return tuple(math.fsum(v[l + 1:]) for l in range(self.levels))


@dataclass(frozen=True)
class RegionPartition:
    thresholds: tuple  # A_1 > A_2 > ... > A_L
    mean_gain: float

    @property
    def levels(self) -> int:
        return len(self.thresholds)

    @property
    def floor(self) -> float:
        return self.thresholds[-1]

    @property
    def tail_factor(self) -> float:
        return math.exp(self.floor / self.mean_gain)

    @functools.cached_property
    def _ascending(self) -> tuple:
        return self.thresholds[::-1]

    def region_of(self, gain: float):
        """1-based level whose region holds ``gain``; ``None`` below the floor."""
        if gain < self.floor:
            return None
        # thresholds descend; regions are [A_l, A_{l-1}) with A_0 = inf
        i = bisect.bisect_right(self._ascending, gain) - 1  # largest A with A <= gain
        return self.levels - i


def build_power_ladder(target_sinr: float, levels: int) -> PowerLadder:
    if not target_sinr > 0:
        raise InvalidDesign("target SINR must be positive")
    if int(levels) < 1:
        raise InvalidDesign("need at least one power level")
    L = int(levels)
    powers = tuple(target_sinr * (target_sinr + 1.0) ** (L - l) for l in range(1, L + 1))
    return PowerLadder(float(target_sinr), L, powers)


def gamma_for_budget(rate: float, budget: float) -> float:
    """Target SINR that makes ``frame_bound(rate, .)`` equal ``budget``."""
    return math.expm1(rate * LN2 / budget)


def frame_bound(rate: float, target_sinr: float) -> float:
    """Worst-case frame length R / log2(1 + target SINR) with distinct levels."""
    if not target_sinr > 0:
        raise InvalidDesign("target SINR must be positive")
    return rate * LN2 / math.log1p(target_sinr)


def threshold_for_drop_prob(mean_gain: float, drop_prob: float) -> float:
    """Gain floor below which a user stays silent, Pr(gain < floor) = drop_prob."""
    if not 0.0 <= drop_prob < 1.0:
        raise InvalidDesign("drop probability must lie in [0, 1)")
    return -mean_gain * math.log1p(-drop_prob)


def build_regions(mean_gain: float, levels: int, floor: float) -> RegionPartition:
    """Thresholds making every region equally likely given gain >= floor.

    Built upward from the floor by the recursion
    ``A_{l-1} = A_l + g ln(C L / (C L - exp(A_l / g)))`` with ``C = exp(A_L / g)``.
    """
    if floor < 0:
        raise InvalidDesign("floor must be non-negative")
    L = int(levels)
    if L < 1:
        raise InvalidDesign("need at least one region")
    g = mean_gain
    cl = math.exp(floor / g) * L
    a = [floor]
    for _ in range(L - 1):
        cur = a[-1]
        den = cl - math.exp(cur / g)
        if not den > 0:
            raise NumericDomainError("region recursion left its domain")
        a.append(cur + g * math.log(cl / den))
    return RegionPartition(tuple(reversed(a)), float(g))


def allocate_power(gain: float, ladder: PowerLadder, regions: RegionPartition):
    """Transmit power v_l / gain for the user's region, or ``None`` (silent)."""
    if gain < 0:
        raise ValueError("gain must be non-negative")
    level = regions.region_of(gain)
    if level is None:
        return SILENT
    return ladder.powers[level - 1] / gain


def allocate_levels(gains, regions: RegionPartition) -> np.ndarray:
    """Vectorised region lookup: 1-based level per gain, 0 for silent users."""
    gains = np.asarray(gains, dtype=float)
    asc = np.asarray(regions.thresholds[::-1])
    i = np.searchsorted(asc, gains, side="right") - 1
    return np.where(i < 0, 0, regions.levels - i)


def avg_power_bound(ladder: PowerLadder, floor: float) -> float:
    """Upper bound (G+1)^L / (L A_L) on the mean power of a transmitting user."""
    if floor <= 0:
        return math.inf
    return (ladder.target_sinr + 1.0) ** ladder.levels / (ladder.levels * floor)


def overflow_prob(K: int, p_a: float, L: int) -> float:
    """Pr(M > L) for M ~ Binomial(K, p_a)."""
    if L >= K:
        return 0.0
    return float(stats.binom.sf(L, K, p_a))


def collision_prob_exact(M: int, L: int) -> float:
    """Probability that M users picking uniformly among L levels are not all distinct."""
    if L < 1:
        raise ValueError("L must be >= 1")
    if M > L:
        return 1.0
    if M <= 1:
        return 0.0
    log_distinct = math.fsum(math.log1p(-i / L) for i in range(1, M))
    return -math.expm1(log_distinct)


def collision_prob_approx(M: int, L: int) -> float:
    return -math.expm1(-(M * M) / (2.0 * L))


def avg_collision_bound(K: int, p_a: float, L: int) -> float:
    """Jensen bound on E[approximate collision probability] over binomial M."""
    return -math.expm1(-(K * p_a / (2.0 * L)) * ((K - 1) * p_a + 1.0))
