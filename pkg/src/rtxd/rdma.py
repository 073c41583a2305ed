"""Rate-domain multiple access over i.i.d. block fading.

Users choose an initial code rate from a ladder matched to the ergodic
per-stage rate increments ``psi_M(U) - psi_{M-1}(U)``, where ``psi_M(x)`` is
``E[log2(1 + x * sum of M unit-mean exponential gains)]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .pdma import InvalidDesign

LN2 = math.log(2.0)
EULER_GAMMA = 0.57721566490153286061
_EPS = 1e-16
_FPMIN = 1e-300
_MAXIT = 10_000

CLOSED_FORM = "closed-form-rayleigh"
MONTE_CARLO = "monte-carlo"


# --- exponential integrals ----------------------------------------------------

def _e1_series_scaled(x: float) -> float:
    # E_1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k k!)
    total = 0.0
    term = 1.0
    for k in range(1, 200):
        term *= -x / k
        contrib = term / k
        total += contrib
        if abs(contrib) < _EPS * abs(total):
            break
    return math.exp(x) * (-EULER_GAMMA - math.log(x) - total)


def _en_cf_scaled(m: int, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for e^x E_m(x), x > 1
    b = x + m
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAXIT):
        a = -i * (m - 1 + i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"continued fraction for E_{m}({x}) did not converge")


def scaled_exp_integrals(max_order: int, x: float) -> np.ndarray:
    """``exp(x) * E_m(x)`` for m = 1..max_order.

    Small arguments use the E_1 series followed by the upward recurrence
    ``E_{m+1} = (exp(-x) - x E_m) / m``, which is stable for x <= 1. Larger
    arguments evaluate each order by continued fraction, since the recurrence
    amplifies error by roughly x/m per step there.
    """
    if not x > 0:
        raise ValueError("exponential integral needs x > 0")
    if max_order < 1:
        raise ValueError("order must be >= 1")
    out = np.empty(max_order)
    if x <= 1.0:
        s = _e1_series_scaled(x)
        out[0] = s
        for m in range(1, max_order):
            s = (1.0 - x * s) / m
            out[m] = s
    else:
        for m in range(1, max_order + 1):
            out[m - 1] = _en_cf_scaled(m, x)
    return out


def exp_integral(order: int, x: float) -> float:
    """E_m(x) = integral over t >= 1 of exp(-x t) t^-m."""
    return math.exp(-x) * float(scaled_exp_integrals(int(order), x)[-1])


# --- psi ----------------------------------------------------------------------

@dataclass(frozen=True)
class PsiEvaluator:
    mode: str = CLOSED_FORM
    samples: int = 1_000_000
    # optional unit-mean gain sampler (rng, shape) -> array; Rayleigh when None
    sampler: Optional[Callable] = None

    def __post_init__(self):
        if self.mode not in (CLOSED_FORM, MONTE_CARLO):
            raise ValueError(f"unknown psi mode {self.mode!r}")
        if self.mode == CLOSED_FORM and self.sampler is not None:
            raise ValueError("closed-form psi only holds for Rayleigh fading")


def psi_closed_form(M: int, x: float) -> float:
    if M == 0:
        return 0.0
    if not x > 0:
        raise ValueError("mean power must be positive")
    return float(math.fsum(scaled_exp_integrals(M, 1.0 / x)) / LN2)


def psi_table(max_M: int, x: float) -> np.ndarray:
    """psi_0..psi_max_M at one mean power, sharing a single E_m sweep."""
    out = np.zeros(max_M + 1)
    if max_M > 0:
        out[1:] = np.cumsum(scaled_exp_integrals(max_M, 1.0 / x)) / LN2
    return out


def psi_monte_carlo(M: int, x: float, samples: int, rng: np.random.Generator, sampler=None):
    """Sample mean of log2(1 + x * sum of M gains) and its standard error."""
    if M == 0:
        return 0.0, 0.0
    if sampler is None:
        total = rng.gamma(M, 1.0, size=samples)
    else:
        total = np.asarray(sampler(rng, (samples, M))).sum(axis=1)
    v = np.log1p(x * total) / LN2
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(samples))


def psi(M: int, x: float, evaluator: PsiEvaluator = PsiEvaluator(), rng=None) -> float:
    if evaluator.mode == CLOSED_FORM:
        return psi_closed_form(M, x)
    if rng is None:
        raise ValueError("monte-carlo psi needs a seeded generator")
    return psi_monte_carlo(M, x, evaluator.samples, rng, evaluator.sampler)[0]


# --- rate ladder ----------------------------------------------------------------

@dataclass(frozen=True)
class RateLadder:
    budget: int
    margin: float
    mean_rx_power: float
    levels: int
    rates: tuple  # eta_1 < ... < eta_L

    def increments(self) -> np.ndarray:
        """Per-slot ergodic increment psi_{L-l+1} - psi_{L-l} for each level."""
        p = psi_table(self.levels, self.mean_rx_power)
        return np.array([p[self.levels - l + 1] - p[self.levels - l] for l in range(1, self.levels + 1)])


def default_margin(levels: int, mean_rx_power: float) -> float:
    """One fifth of the smallest per-slot increment psi_L - psi_{L-1}."""
    p = psi_table(levels, mean_rx_power)
    return (p[levels] - p[levels - 1]) / 5.0


def build_rate_ladder(levels: int, mean_rx_power: float, budget: int, margin: Optional[float] = None) -> RateLadder:
    L = int(levels)
    if L < 1:
        raise InvalidDesign("need at least one rate level")
    if int(budget) < 1:
        raise InvalidDesign("re-transmission budget must be >= 1")
    if not mean_rx_power > 0:
        raise InvalidDesign("mean received power must be positive")
    if margin is None:
        margin = default_margin(L, mean_rx_power)
    if margin < 0:
        raise InvalidDesign("margin must be non-negative")
    p = psi_table(L, mean_rx_power)
    rates = tuple(float(int(budget) * (p[L - l + 1] - p[L - l] - margin)) for l in range(1, L + 1))
    for l, r in enumerate(rates, start=1):
        if not r > 0:
            raise InvalidDesign(f"rdma: rate level {l} is non-positive ({r:.6g}); reduce the margin")
    return RateLadder(int(budget), float(margin), float(mean_rx_power), L, rates)


def mean_ladder_rate(ladder: RateLadder) -> float:
    return math.fsum(ladder.rates) / ladder.levels


def window_information(level: int, ladder: RateLadder, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Samples of the T-slot information of the level-l user, shape (trials,).

    The level-l user shares each slot with L - l interferers; all received
    powers are i.i.d. exponential with mean U.
    """
    L, T, U = ladder.levels, ladder.budget, ladder.mean_rx_power
    n_int = L - level
    own = rng.standard_exponential((trials, T)) * U
    if n_int > 0:
        inter = rng.gamma(n_int, 1.0, size=(trials, T)) * U
    else:
        inter = np.zeros((trials, T))
    z = np.log1p(own / (1.0 + inter)) / LN2
    return z.sum(axis=1)


def estimate_epsilon(level: int, ladder: RateLadder, trials: int, rng: np.random.Generator, rate=None):
    """Fraction of T-slot windows whose information falls short of the level rate.

    Returns ``(eps, stderr)``. ``rate`` overrides the ladder's rate for the level.
    """
    if trials < 1000:
        raise ValueError("need at least 1000 trials")
    if not 1 <= level <= ladder.levels:
        raise ValueError("level out of range")
    target = ladder.rates[level - 1] if rate is None else rate
    info = window_information(level, ladder, trials, rng)
    eps = float(np.mean(info < target))
    return eps, math.sqrt(eps * (1.0 - eps) / trials)


def success_prob_bound(epsilon: float, M: int) -> float:
    return (1.0 - epsilon) ** M


def oma_gain_bound(levels: int, mean_rx_power: float) -> float:
    """psi_L(U) / psi_1(L U): rate gain over an orthogonal split at equal total power."""
    return psi_closed_form(levels, mean_rx_power) / psi_closed_form(1, levels * mean_rx_power)
