"""Staged SIC decoding of HARQ-IR transmissions sharing one channel.

Noise power is normalised to one. A user's *overall gain* is ``gain * power``.
Cancellation is retroactive: once a user is decoded its signal is removed from
every stored slot of the frame, so for a fixed set of undecoded users the
accumulated information after ``t`` slots is a plain sum over slots ``1..t``.
That lets the engine jump from one decode event to the next instead of
stepping slot by slot; the result is the same.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

LN2 = math.log(2.0)
# absolute slack on "accumulated >= rate" comparisons
RATE_TOL = 1e-12
DEFAULT_CAP = 10_000

RUN = "run"
TRUNCATE = "truncate"


@dataclass(frozen=True)
class UserSignal:
    """One active user. ``gains`` is a scalar (static) or a per-slot 1-D array."""

    rate: float
    power: float
    gains: object

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        if not self.power > 0:
            raise ValueError("power must be positive")
        if isinstance(self.gains, (float, int)):
            if not self.gains >= 0:
                raise ValueError("gains must be non-negative")
            return
        g = np.asarray(self.gains, dtype=float)
        if g.ndim > 1:
            raise ValueError("gains must be a scalar or a 1-D per-slot sequence")
        if g.ndim == 0:
            object.__setattr__(self, "gains", float(g))
        if np.any(g < 0):
            raise ValueError("gains must be non-negative")

    @property
    def static(self) -> bool:
        return isinstance(self.gains, (float, int))

    @property
    def beta(self):
        """Overall channel gain (received power)."""
        if self.static:
            return float(self.gains) * self.power
        return np.asarray(self.gains, dtype=float) * self.power


@dataclass(frozen=True)
class TerminationPolicy:
    mode: str = RUN
    limit: int = DEFAULT_CAP

    def __post_init__(self):
        if self.mode not in (RUN, TRUNCATE):
            raise ValueError(f"unknown termination mode {self.mode!r}")
        if int(self.limit) < 1:
            raise ValueError("termination cap/budget must be >= 1")

    @classmethod
    def run_to_completion(cls, cap: int = DEFAULT_CAP) -> "TerminationPolicy":
        return cls(RUN, int(cap))

    @classmethod
    def truncate_at(cls, budget: int) -> "TerminationPolicy":
        return cls(TRUNCATE, int(budget))


@dataclass
class DecodeTrace:
    decode_slot: list  # 1-based slot per user, None if undecoded
    decode_order: list
    frame_length: int  # max decode slot over decoded users
    truncated: bool
    slots_elapsed: int = field(default=0)  # slots the frame occupied (= cap when truncated)

    @property
    def all_decoded(self) -> bool:
        return not self.truncated


def sinr(user: int, survivors, signals: Sequence[UserSignal], slot: int = 1) -> float:
    """SINR of ``user`` with every other member of ``survivors`` interfering."""
    survivors = set(survivors)
    if user not in survivors:
        raise ValueError(f"user {user} is not among the survivors")

    def b(k):
        s = signals[k]
        return s.beta if s.static else float(s.beta[slot - 1])

    interference = math.fsum(b(m) for m in survivors if m != user)
    return b(user) / (interference + 1.0)


def conventional_harq_length(gain: float, power: float, rate: float) -> Optional[int]:
    """Slots a lone user needs; ``None`` if the link never carries information."""
    snr = gain * power
    if snr <= 0:
        return None
    return _ir_slots(rate, math.log1p(snr) / LN2)


# --- static-channel slot counts ---------------------------------------------

def _ir_slots(rate: float, bits_per_slot: float) -> float:
    target = rate - RATE_TOL
    if target <= 0:
        return 1
    if bits_per_slot <= 0:
        return math.inf
    t = max(1, math.ceil(target / bits_per_slot))
    while t > 1 and (t - 1) * bits_per_slot >= target:
        t -= 1
    while t * bits_per_slot < target:
        t += 1
    return t


def _repetition_slots(rate: float, snr_per_slot: float) -> float:
    target = rate - RATE_TOL
    if target <= 0:
        return 1
    if snr_per_slot <= 0:
        return math.inf
    t = max(1, math.ceil(math.expm1(target * LN2) / snr_per_slot))
    while t > 1 and math.log1p((t - 1) * snr_per_slot) / LN2 >= target:
        t -= 1
    while math.log1p(t * snr_per_slot) / LN2 < target:
        t += 1
    return t


def _static_required(betas, rates, survivors, combine):
    # noise keeps every denominator >= 1, so total-minus-own is accurate here
    total = math.fsum(betas[m] for m in survivors)
    out = {}
    for k in survivors:
        s = betas[k] / (total - betas[k] + 1.0)
        if combine == "ir":
            out[k] = _ir_slots(rates[k], math.log1p(s) / LN2)
        else:
            out[k] = _repetition_slots(rates[k], s)
    return out


# --- per-slot (block fading) slot counts ------------------------------------

def _slot_required(betas: np.ndarray, rates, survivors, combine):
    idx = sorted(survivors)
    b = betas[idx]
    s = b / (b.sum(axis=0) - b + 1.0)
    if combine == "ir":
        acc = np.log1p(s)
        acc.cumsum(axis=1, out=acc)
    else:
        acc = np.log1p(s.cumsum(axis=1))
    # compare in nats
    target = (np.asarray(rates)[idx] - RATE_TOL) * LN2
    ok = acc >= target[:, None]
    first = ok.argmax(axis=1)
    hit = ok[np.arange(len(idx)), first]
    return dict(zip(idx, np.where(hit, first + 1, math.inf).tolist()))


# --- engines -----------------------------------------------------------------

def _prepare(signals: Sequence[UserSignal], policy: TerminationPolicy):
    if len(signals) == 0:
        raise ValueError("at least one signal is required")
    kinds = {s.static for s in signals}
    if len(kinds) != 1:
        raise ValueError("cannot mix static and per-slot gains in one frame")
    rates = [float(s.rate) for s in signals]
    if kinds.pop():
        return [s.beta for s in signals], rates
    n = {len(s.gains) for s in signals}
    if len(n) != 1:
        raise ValueError("per-slot gain sequences must share one length")
    if n.pop() < policy.limit:
        raise ValueError("per-slot gains must cover the termination cap")
    return np.vstack([s.beta[: policy.limit] for s in signals]), rates


def decode_frame(betas, rates, policy: TerminationPolicy, combine: str = "ir", cancel: bool = True) -> DecodeTrace:
    """Core decoder on overall gains.

    ``betas`` is a list of floats (static channel) or an array of shape
    ``(users, slots)`` covering at least ``policy.limit`` slots. ``combine`` is
    ``"ir"`` (information accumulates) or ``"repetition"`` (SINR accumulates).
    """
    if isinstance(betas, np.ndarray) and betas.ndim == 2:
        required = _slot_required
        betas = betas[:, : policy.limit]
    else:
        required = _static_required
    cap = policy.limit
    m = len(rates)
    decode_slot = [None] * m
    order = []
    survivors = set(range(m))
    now = 0
    truncated = False

    if not cancel:
        req = required(betas, rates, survivors, combine)
        for k in sorted(survivors, key=lambda k: (req[k], k)):
            if req[k] <= cap:
                decode_slot[k] = int(req[k])
                order.append(k)
        truncated = len(order) < m
    else:
        while survivors:
            req = required(betas, rates, survivors, combine)
            nxt = max(now, min(req.values()))
            if nxt > cap:
                truncated = True
                break
            done = sorted(k for k in survivors if req[k] <= nxt)
            for k in done:
                decode_slot[k] = int(nxt)
            order.extend(done)
            survivors.difference_update(done)
            now = nxt

    frame_length = max((s for s in decode_slot if s is not None), default=0)
    return DecodeTrace(
        decode_slot=decode_slot,
        decode_order=order,
        frame_length=frame_length,
        truncated=truncated,
        slots_elapsed=cap if truncated else frame_length,
    )


def _run_staged(signals, policy, combine, cancel=True) -> DecodeTrace:
    betas, rates = _prepare(signals, policy)
    return decode_frame(betas, rates, policy, combine, cancel)


def run_sic_ir_frame(signals: Sequence[UserSignal], policy: TerminationPolicy = TerminationPolicy()) -> DecodeTrace:
    """HARQ-IR with retroactive SIC and within-slot fixpoint decoding.

    Users decodable in the same slot share that decode slot and enter the
    decode order by ascending index.
    """
    return _run_staged(signals, policy, "ir")


def run_nosic_ir_frame(signals: Sequence[UserSignal], policy: TerminationPolicy = TerminationPolicy()) -> DecodeTrace:
    """HARQ-IR where every user always sees interference from all active users."""
    return _run_staged(signals, policy, "ir", cancel=False)


def run_sic_repetition_frame(signals: Sequence[UserSignal], policy: TerminationPolicy = TerminationPolicy()) -> DecodeTrace:
    """Identical coded blocks: SINR (not information) accumulates across slots."""
    return _run_staged(signals, policy, "repetition")


ENGINES = {
    "sic-ir": run_sic_ir_frame,
    "nosic-ir": run_nosic_ir_frame,
    "sic-repetition": run_sic_repetition_frame,
}


# --- closed-form frame lengths ------------------------------------------------

def _min_common_slots(rates, bits) -> int:
    """Smallest T >= 1 with r <= T * b (+ tol) for every (r, b) pair."""
    if any(b <= 0 for b in bits):
        raise ValueError("zero per-slot information: frame never completes")
    t = max(1, max(math.floor((r - RATE_TOL) / b) for r, b in zip(rates, bits)))
    while any(t * b < r - RATE_TOL for r, b in zip(rates, bits)):
        t += 1
    return t


def frame_length_equal_gain(beta: float, rates: Sequence[float], M: Optional[int] = None) -> int:
    """Frame length when every active user has overall gain ``beta``."""
    if M is None:
        M = len(rates)
    if M != len(rates):
        raise ValueError("M must equal the number of rates")
    if not beta > 0:
        raise ValueError("beta must be positive")
    ordered = sorted(rates)
    bits = [math.log2(1.0 + beta / ((M - n) * beta + 1.0)) for n in range(1, M + 1)]
    return _min_common_slots(ordered, bits)


def stage_sinrs(betas: Sequence[float]) -> list:
    """Per-stage SINR when decoding in descending order of overall gain."""
    b = sorted(betas, reverse=True)
    return [b[n] / (math.fsum(b[n + 1:]) + 1.0) for n in range(len(b))]


def frame_length_equal_rate(betas: Sequence[float], rate: float) -> int:
    """Frame length when every active user has the same rate."""
    if any(not x > 0 for x in betas):
        raise ValueError("betas must be positive")
    zeta = stage_sinrs(betas)
    return _min_common_slots([rate] * len(zeta), [math.log2(1.0 + z) for z in zeta])


def uniform_decode_window(betas: Sequence[float], rate: float) -> Optional[int]:
    """The T at which every stage decodes, if all stage SINRs share one window.

    Exactly T slots are needed at stage SINR z when
    ``2**(R/T) - 1 <= z < 2**(R/(T-1)) - 1`` (no upper limit for T = 1).
    Returns ``None`` when the stages need different slot counts.
    """
    if any(not x > 0 for x in betas):
        raise ValueError("betas must be positive")
    zeta = stage_sinrs(betas)
    t = _min_common_slots([rate], [math.log2(1.0 + zeta[0])])
    lo = 2.0 ** (rate / t) - 1.0
    hi = math.inf if t == 1 else 2.0 ** (rate / (t - 1)) - 1.0
    for z in zeta:
        # same slack as the engine, expressed on the SINR axis
        if not (lo * (1 - 1e-12) <= z < hi * (1 - 1e-12)):
            return None
    return t
