"""Monte Carlo experiment runner.

Trial ``i`` of a scenario draws everything from a child stream keyed by
``(seed, i)``, so a scenario's output does not depend on how trials are split
across worker processes. Aggregates are formed from per-trial values in trial
order with exactly rounded sums.
"""
from __future__ import annotations

import dataclasses
import functools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import pdma, rdma
from .channel import IID_PER_SLOT, STATIC, ActivitySpec, FadingSpec, draw_active_set, draw_gain, trial_rng
from .engine import (
    DEFAULT_CAP,
    RUN,
    TRUNCATE,
    DecodeTrace,
    TerminationPolicy,
    UserSignal,
    _prepare,
    decode_frame,
)

SCHEMES = ("pdma", "rdma", "nosic-baseline", "repetition-baseline", "oma-reference")
POWER = "power"
RATE = "rate"

PARAM_ALIASES = {
    "L": "levels",
    "K": "population",
    "p_a": "access_prob",
    "R": "rate",
    "Lambda": "budget",
    "T": "budget",
    "U": "mean_rx_power",
    "gamma": "mean_gain",
    "delta": "margin",
}


@dataclass(frozen=True)
class Scenario:
    """One experiment point.

    ``budget`` is the frame-length design target: Lambda for the power ladder
    (it fixes the target SINR through ``rate``) or the re-transmission budget T
    for the rate ladder. ``design`` picks the access rule that baselines share
    with the proposed schemes; it defaults from ``scheme``.
    """

    scheme: str = "pdma"
    design: Optional[str] = None
    population: int = 50
    access_prob: float = 0.1
    mean_gain: float = 1.0
    levels: int = 20
    rate: float = 4.0
    budget: float = 10.0
    drop_prob: float = 0.1
    mean_rx_power: float = 2.0
    margin: Optional[float] = None
    termination: str = RUN
    cap: int = DEFAULT_CAP
    trials: int = 100_000
    seed: int = 0
    include_empty: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        design = self.design
        if design is None:
            design = RATE if self.scheme == "rdma" else POWER
            object.__setattr__(self, "design", design)
        if design not in (POWER, RATE):
            raise ValueError(f"unknown design {design!r}")
        if self.scheme == "pdma" and design != POWER:
            raise ValueError("pdma requires the power design")
        if self.scheme == "rdma" and design != RATE:
            raise ValueError("rdma requires the rate design")
        if int(self.population) < 0:
            raise ValueError("population must be non-negative")
        if not 0.0 <= self.access_prob <= 1.0:
            raise ValueError("access_prob out of range")
        if not self.mean_gain > 0:
            raise ValueError("mean_gain must be positive")
        if int(self.levels) < 1:
            raise ValueError("levels must be >= 1")
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        if not self.budget >= 1:
            raise ValueError("budget must be >= 1")
        if design == RATE and float(self.budget) != int(self.budget):
            raise ValueError("budget must be an integer slot count for the rate design")
        if not 0.0 <= self.drop_prob < 1.0:
            raise ValueError("drop_prob out of range")
        if not self.mean_rx_power > 0:
            raise ValueError("mean_rx_power must be positive")
        if self.termination not in (RUN, TRUNCATE):
            raise ValueError(f"unknown termination {self.termination!r}")
        if int(self.cap) < 1:
            raise ValueError("cap must be >= 1")
        if int(self.trials) < 1:
            raise ValueError("trials must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")

    @property
    def fading(self) -> FadingSpec:
        return FadingSpec(STATIC if self.design == POWER else IID_PER_SLOT, self.mean_gain)

    @property
    def activity(self) -> ActivitySpec:
        return ActivitySpec(int(self.population), float(self.access_prob))

    def power_design(self):
        return _power_design(self.mean_gain, int(self.levels), self.rate, float(self.budget), self.drop_prob)

    def rate_design(self) -> rdma.RateLadder:
        return _rate_design(int(self.levels), self.mean_rx_power, int(self.budget), self.margin)

    @property
    def frame_budget(self) -> int:
        """Slots allowed before truncation under the truncate policy."""
        if self.design == RATE:
            return int(self.budget)
        ladder, _ = self.power_design()
        return max(1, math.ceil(pdma.frame_bound(self.rate, ladder.target_sinr) - 1e-9))

    @property
    def policy(self) -> TerminationPolicy:
        if self.termination == TRUNCATE:
            return TerminationPolicy.truncate_at(self.frame_budget)
        return TerminationPolicy.run_to_completion(int(self.cap))

    def with_param(self, name: str, value) -> "Scenario":
        key = PARAM_ALIASES.get(name, name)
        if key not in {f.name for f in dataclasses.fields(self)}:
            raise KeyError(f"unknown scenario parameter {name!r}")
        if key in ("levels", "population", "trials", "cap", "seed"):
            value = int(value)
        elif key == "budget" and self.design == RATE:
            value = int(value)
        return dataclasses.replace(self, **{key: value})


@functools.lru_cache(maxsize=256)
def _power_design(mean_gain, levels, rate, budget, drop_prob):
    gamma = pdma.gamma_for_budget(rate, budget)
    ladder = pdma.build_power_ladder(gamma, levels)
    floor = pdma.threshold_for_drop_prob(mean_gain, drop_prob)
    regions = pdma.build_regions(mean_gain, levels, floor)
    return ladder, regions


@functools.lru_cache(maxsize=256)
def _rate_design(levels, mean_rx_power, budget, margin):
    return rdma.build_rate_ladder(levels, mean_rx_power, budget, margin)


@dataclass
class TrialRecord:
    trial: int
    n_active: int
    levels: np.ndarray  # 1-based level per active user, 0 when silent
    powers: np.ndarray  # transmit power per transmitting user
    rates: np.ndarray  # initial rate per transmitting user
    frame_length: int  # slots the frame occupied; 0 with nobody transmitting
    truncated: bool
    collision: bool
    overflow: bool
    trace: Optional[DecodeTrace] = field(default=None, repr=False)

    @property
    def n_tx(self) -> int:
        return len(self.powers)

    @property
    def n_silent(self) -> int:
        return self.n_active - self.n_tx


def oma_decode(betas, rates, policy: TerminationPolicy, shares: int = 1) -> DecodeTrace:
    """Orthogonal reference: each user owns 1/shares of every slot at shares-fold power."""
    slots = []
    for k, r in enumerate(rates):
        solo = betas[k:k + 1] * shares if isinstance(betas, np.ndarray) else [betas[k] * shares]
        slots.append(decode_frame(solo, [r * shares], policy).decode_slot[0])
    order = sorted((k for k, t in enumerate(slots) if t is not None), key=lambda k: (slots[k], k))
    truncated = len(order) < len(rates)
    length = max((t for t in slots if t is not None), default=0)
    return DecodeTrace(slots, order, length, truncated, policy.limit if truncated else length)


def oma_frame(signals: Sequence[UserSignal], policy: TerminationPolicy, shares: int = 1) -> DecodeTrace:
    betas, rates = _prepare(signals, policy)
    return oma_decode(betas, rates, policy, shares)


def frame_runner(scenario: Scenario):
    """Decoder ``(betas, rates, policy) -> DecodeTrace`` for the scenario's scheme."""
    if scenario.scheme in ("pdma", "rdma"):
        return functools.partial(decode_frame, combine="ir")
    if scenario.scheme == "nosic-baseline":
        return functools.partial(decode_frame, combine="ir", cancel=False)
    if scenario.scheme == "repetition-baseline":
        return functools.partial(decode_frame, combine="repetition")
    return functools.partial(oma_decode, shares=int(scenario.levels))


def _run_block_fading(runner, rates, power, fading, rng, policy):
    """Run one frame over i.i.d. per-slot gains, drawing slots only as needed."""
    limit = policy.limit
    n = min(limit, 64) if policy.mode == RUN else limit
    gains = draw_gain(fading, rng, (len(rates), n))
    while True:
        trace = runner(gains * power, rates, TerminationPolicy.truncate_at(n))
        if not trace.truncated or n >= limit:
            return trace
        extra = min(n, limit - n)
        gains = np.hstack([gains, draw_gain(fading, rng, (len(rates), extra))])
        n += extra


def run_trial(scenario: Scenario, trial_index: int, keep_trace: bool = False) -> TrialRecord:
    rng = trial_rng(scenario.seed, trial_index)
    active = draw_active_set(scenario.activity, rng)
    m = len(active)
    L = int(scenario.levels)
    runner = frame_runner(scenario)
    policy = scenario.policy

    if scenario.design == POWER:
        ladder, regions = scenario.power_design()
        gains = draw_gain(scenario.fading, rng, m).tolist()
        levels = [(regions.region_of(a) or 0) if a > 0 else 0 for a in gains]
        tx = [(l, a) for l, a in zip(levels, gains) if l]
        lv = [l for l, _ in tx]
        powers = [ladder.powers[l - 1] / a for l, a in tx]
        rates = [float(scenario.rate)] * len(tx)
        trace = None
        if tx:
            trace = runner([a * p for p, (_, a) in zip(powers, tx)], rates, policy)
    else:
        ladder = scenario.rate_design()
        idx = rng.integers(L, size=m)
        levels = idx + 1
        lv = levels
        rates = np.asarray(ladder.rates)[idx]
        power = scenario.mean_rx_power / scenario.mean_gain
        powers = np.full(m, power)
        trace = None
        if m:
            trace = _run_block_fading(runner, rates.tolist(), power, scenario.fading, rng, policy)

    return TrialRecord(
        trial=int(trial_index),
        n_active=m,
        levels=np.asarray(levels, dtype=np.int64),
        powers=np.asarray(powers, dtype=float),
        rates=np.asarray(rates, dtype=float),
        frame_length=trace.slots_elapsed if trace else 0,
        truncated=bool(trace.truncated) if trace else False,
        collision=len(set(np.asarray(lv).tolist())) < len(lv),
        overflow=m > L,
        trace=trace if keep_trace else None,
    )


# --- aggregation ----------------------------------------------------------------

@dataclass
class TrialBatch:
    """Per-trial columns plus per-user columns, both in trial order."""

    n_active: np.ndarray
    n_tx: np.ndarray
    frame_length: np.ndarray
    truncated: np.ndarray
    collision: np.ndarray
    overflow: np.ndarray
    powers: np.ndarray
    rates: np.ndarray

    @classmethod
    def from_records(cls, records: Sequence[TrialRecord]) -> "TrialBatch":
        cat = lambda xs: np.concatenate(xs) if xs else np.empty(0)
        return cls(
            n_active=np.array([r.n_active for r in records], dtype=np.int64),
            n_tx=np.array([r.n_tx for r in records], dtype=np.int64),
            frame_length=np.array([r.frame_length for r in records], dtype=np.int64),
            truncated=np.array([r.truncated for r in records], dtype=bool),
            collision=np.array([r.collision for r in records], dtype=bool),
            overflow=np.array([r.overflow for r in records], dtype=bool),
            powers=cat([r.powers for r in records]),
            rates=cat([r.rates for r in records]),
        )

    @classmethod
    def merge(cls, batches: Sequence["TrialBatch"]) -> "TrialBatch":
        return cls(**{f.name: np.concatenate([getattr(b, f.name) for b in batches])
                      for f in dataclasses.fields(cls)})


@dataclass(frozen=True)
class SummaryStats:
    mean_frame_length: float
    stderr_frame_length: float
    mean_tx_power: float
    stderr_tx_power: float
    collision_rate: float
    overflow_rate: float
    silent_rate: float
    normalized_spectral_efficiency: float
    truncation_rate: float
    trials: int
    frames: int  # frames entering the frame-length mean
    users: int  # transmitting users entering the power mean


def _mean_stderr(x: np.ndarray):
    n = len(x)
    if n == 0:
        return math.nan, math.nan
    mean = math.fsum(x) / n
    if n < 2:
        return mean, math.nan
    var = math.fsum((x - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def summarize(batch: TrialBatch, include_empty: bool = False) -> SummaryStats:
    trials = len(batch.n_active)
    counted = np.ones(trials, bool) if include_empty else batch.n_tx > 0
    fl = batch.frame_length[counted].astype(float)
    mean_fl, se_fl = _mean_stderr(fl)
    if len(fl) == 0:
        mean_fl = 0.0
    mean_p, se_p = _mean_stderr(batch.powers)
    active = int(batch.n_active.sum())
    silent = active - int(batch.n_tx.sum())
    mean_rate = math.fsum(batch.rates) / len(batch.rates) if len(batch.rates) else math.nan
    return SummaryStats(
        mean_frame_length=mean_fl,
        stderr_frame_length=se_fl,
        mean_tx_power=mean_p,
        stderr_tx_power=se_p,
        collision_rate=float(batch.collision.mean()) if trials else math.nan,
        overflow_rate=float(batch.overflow.mean()) if trials else math.nan,
        silent_rate=silent / active if active else math.nan,
        normalized_spectral_efficiency=mean_rate / mean_fl if mean_fl > 0 else math.nan,
        truncation_rate=float(batch.truncated[counted].mean()) if counted.any() else 0.0,
        trials=trials,
        frames=int(counted.sum()),
        users=len(batch.powers),
    )


def _run_chunk(args) -> TrialBatch:
    scenario, start, stop = args
    return TrialBatch.from_records([run_trial(scenario, i) for i in range(start, stop)])


def _chunks(n: int, parts: int):
    edges = np.linspace(0, n, parts + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def run_batch(scenario: Scenario, workers: int = 1) -> TrialBatch:
    n = int(scenario.trials)
    if workers <= 1:
        return _run_chunk((scenario, 0, n))
    jobs = [(scenario, a, b) for a, b in _chunks(n, 4 * workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return TrialBatch.merge(list(pool.map(_run_chunk, jobs)))


def run_scenario(scenario: Scenario, workers: int = 1) -> SummaryStats:
    return summarize(run_batch(scenario, workers), scenario.include_empty)


# --- sweeps and presets -----------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    param: str
    value: float
    scheme: str
    stats: SummaryStats


@dataclass(frozen=True)
class Sweep:
    scenario: Scenario
    param: str
    values: tuple


def sweep(scenario: Scenario, param: str, values, workers: int = 1) -> list:
    return [SweepRow(param, v, scenario.scheme, run_scenario(scenario.with_param(param, v), workers))
            for v in values]


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    sweeps: tuple = ()
    analytic: bool = False


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def _pdma_base(**kw) -> Scenario:
    base = dict(population=50, access_prob=0.1, mean_gain=db_to_linear(0.0), levels=20,
                rate=4.0, budget=10.0, drop_prob=0.1)
    base.update(kw)
    return Scenario(**base)


def _rdma_base(**kw) -> Scenario:
    # U = 2 is the 3 dB operating point
    base = dict(design=RATE, population=50, access_prob=0.1, mean_gain=db_to_linear(0.0),
                mean_rx_power=2.0, levels=10, budget=10)
    base.update(kw)
    return Scenario(**base)


EVEN_L = tuple(range(2, 21, 2))
PRESETS = ("fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9")


def figure_preset(name: str, trials: Optional[int] = None, seed: Optional[int] = None,
                  termination: Optional[str] = None) -> Preset:
    """Scenario sweeps behind one figure of the evaluation."""
    over = {}
    if trials is not None:
        over["trials"] = int(trials)
    if seed is not None:
        over["seed"] = int(seed)
    if termination is not None:
        over["termination"] = termination

    if name == "fig2":
        return Preset(name, "psi_L(U) vs psi_1(LU), U = 2", analytic=True)
    if name == "fig3":
        sw = tuple(Sweep(_pdma_base(scheme=s, **over), "L", EVEN_L)
                   for s in ("pdma", "nosic-baseline", "repetition-baseline"))
        return Preset(name, "frame length vs L (R = 4, Lambda = 10)", sw)
    if name == "fig4":
        return Preset(name, "PDMA power and collision vs L", (Sweep(_pdma_base(**over), "L", EVEN_L),))
    if name == "fig5":
        sw = tuple(Sweep(_pdma_base(scheme=s, **over), "Lambda", tuple(range(4, 21, 2)))
                   for s in ("pdma", "nosic-baseline"))
        return Preset(name, "PDMA vs Lambda at L = 20", sw)
    if name == "fig6":
        sw = tuple(Sweep(_pdma_base(scheme=s, **over), "K", tuple(range(10, 101, 10)))
                   for s in ("pdma", "nosic-baseline"))
        return Preset(name, "PDMA vs K at L = 20", sw)
    if name == "fig7":
        sw = tuple(Sweep(_rdma_base(scheme=s, **over), "L", EVEN_L)
                   for s in ("rdma", "nosic-baseline"))
        return Preset(name, "RDMA vs L (U = 3 dB, T = 10)", sw)
    if name == "fig8":
        sw = tuple(Sweep(_rdma_base(scheme=s, **over), "T", tuple(range(5, 41, 5)))
                   for s in ("rdma", "nosic-baseline"))
        return Preset(name, "RDMA vs T (U = 3 dB, L = 10)", sw)
    if name == "fig9":
        rates = FIG9_RATES
        powers = tuple(db_to_linear(d) for d in FIG9_RX_POWER_DB)
        sw = (
            Sweep(_pdma_base(scheme="pdma", **over), "R", rates),
            Sweep(_rdma_base(scheme="rdma", levels=20, **over), "U", powers),
            Sweep(_rdma_base(scheme="nosic-baseline", levels=20, **over), "U", powers),
        )
        return Preset(name, "spectral efficiency vs power (L = 20, Lambda = T = 10)", sw)
    raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


# PDMA power grows with the rate through the target SINR. The rate-design
# schemes (RDMA and its no-SIC baseline) are driven by U directly.
FIG9_RATES = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0)
FIG9_RX_POWER_DB = (-5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)


def fig2_table(mean_rx_power: float = 2.0, max_levels: int = 16) -> list:
    rows = []
    for L in range(1, max_levels + 1):
        a = rdma.psi_closed_form(L, mean_rx_power)
        b = rdma.psi_closed_form(1, L * mean_rx_power)
        rows.append({"L": L, "psi_L_U": a, "psi_1_LU": b, "ratio": a / b})
    return rows


def run_preset(preset: Preset, workers: int = 1) -> list:
    if preset.analytic:
        return fig2_table()
    rows = []
    for sw in preset.sweeps:
        rows.extend(sweep(sw.scenario, sw.param, sw.values, workers))
    return rows
