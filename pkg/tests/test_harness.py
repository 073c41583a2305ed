import dataclasses
import math

import numpy as np
import pytest

from rtxd import pdma, rdma
from rtxd.engine import TerminationPolicy, decode_frame
from rtxd.harness import (
    PRESETS,
    RATE,
    Scenario,
    TrialBatch,
    fig2_table,
    figure_preset,
    oma_decode,
    run_batch,
    run_scenario,
    run_trial,
    summarize,
    sweep,
)


def small(**kw):
    base = dict(trials=3000, seed=5)
    base.update(kw)
    return Scenario(**base)


def test_empty_frame_record():
    rec = run_trial(small(access_prob=0.0), 0)
    assert rec.n_active == 0 and rec.frame_length == 0
    assert not rec.collision and not rec.truncated


def test_trial_is_deterministic():
    for sc in (small(), small(scheme="rdma", levels=10)):
        a, b = run_trial(sc, 17, keep_trace=True), run_trial(sc, 17, keep_trace=True)
        assert a.frame_length == b.frame_length
        assert np.array_equal(a.powers, b.powers) and np.array_equal(a.rates, b.rates)
        assert a.trace.decode_slot == b.trace.decode_slot


def test_two_distinct_levels_meet_budget():
    gamma = pdma.gamma_for_budget(4, 10)
    ladder = pdma.build_power_ladder(gamma, 20)
    rng = np.random.default_rng(41)
    for _ in range(500):
        lv = rng.choice(20, size=2, replace=False)
        tr = decode_frame([ladder.powers[i] for i in lv], [4.0, 4.0], TerminationPolicy())
        assert tr.frame_length <= 10


def test_pdma_trial_fields():
    sc = small()
    ladder, regions = sc.power_design()
    for i in range(200):
        rec = run_trial(sc, i, keep_trace=True)
        assert len(rec.levels) == rec.n_active
        tx = rec.levels[rec.levels > 0]
        assert len(tx) == rec.n_tx
        assert np.all(rec.rates == 4.0)
        assert rec.collision == (len(set(tx.tolist())) < len(tx))
        assert rec.overflow == (rec.n_active > 20)
        if rec.n_tx:
            assert rec.frame_length == rec.trace.frame_length


def test_rdma_trial_fields():
    sc = small(scheme="rdma", levels=10, budget=20, mean_rx_power=2.0)
    lad = sc.rate_design()
    for i in range(100):
        rec = run_trial(sc, i)
        assert np.all(rec.powers == 2.0)
        assert set(rec.rates.tolist()) <= set(lad.rates)
        assert np.all(rec.levels >= 1) and rec.n_silent == 0


def test_trials_one_equals_record():
    sc = small(trials=1, seed=3, access_prob=0.5)
    rec = run_trial(sc, 0)
    st = run_scenario(sc)
    assert st.mean_frame_length == rec.frame_length
    assert st.mean_tx_power == pytest.approx(rec.powers.mean())
    assert math.isnan(st.stderr_frame_length)


def test_prefix_stability():
    a = run_batch(small(trials=400))
    b = run_batch(small(trials=800))
    assert np.array_equal(a.frame_length, b.frame_length[:400])
    assert np.array_equal(a.powers, b.powers[: len(a.powers)])


def test_merge_equals_summary():
    sc = small(trials=600)
    recs = [run_trial(sc, i) for i in range(600)]
    left = TrialBatch.from_records(recs[:250])
    right = TrialBatch.from_records(recs[250:])
    assert summarize(TrialBatch.merge([left, right])) == run_scenario(sc)


@pytest.mark.parametrize("scheme", ["pdma", "rdma"])
def test_worker_count_does_not_matter(scheme):
    sc = small(scheme=scheme, trials=500, levels=10)
    assert run_scenario(sc, workers=1) == run_scenario(sc, workers=3)


def test_pdma_frame_below_budget_at_l20():
    st = run_scenario(small(trials=5000))
    assert st.mean_frame_length < 10
    assert st.truncation_rate == 0.0


def test_overflow_rate_matches_binomial_tail():
    sc = small(population=20, access_prob=0.3, levels=4, trials=20_000)
    st = run_scenario(sc)
    p = pdma.overflow_prob(20, 0.3, 4)
    assert abs(st.overflow_rate - p) <= 3 * math.sqrt(p * (1 - p) / sc.trials)


def test_collision_and_silent_rates_match_theory():
    sc = small(population=30, access_prob=0.2, levels=8, trials=20_000, drop_prob=0.2)
    batch = run_batch(sc)
    st = summarize(batch)
    probs = np.array([pdma.collision_prob_exact(int(m), 8) for m in batch.n_tx])
    mean = probs.mean()
    assert abs(st.collision_rate - mean) <= 3 * math.sqrt(np.sum(probs * (1 - probs))) / sc.trials
    n = int(batch.n_active.sum())
    assert abs(st.silent_rate - 0.2) <= 3 * math.sqrt(0.2 * 0.8 / n)


def test_include_empty_toggle():
    sc = small(access_prob=0.02, trials=2000)
    a = run_scenario(sc)
    b = run_scenario(dataclasses.replace(sc, include_empty=True))
    assert b.frames == 2000 and a.frames < 2000
    assert b.mean_frame_length < a.mean_frame_length


def test_truncate_mode_caps_frames():
    sc = small(termination="truncate", trials=2000, scheme="nosic-baseline", levels=10)
    assert sc.policy == TerminationPolicy.truncate_at(10)
    batch = run_batch(sc)
    assert batch.frame_length.max() <= 10
    assert batch.truncated.any()
    sc = small(termination="truncate", scheme="rdma", levels=10, budget=20, trials=500)
    assert run_batch(sc).frame_length.max() <= 20


def test_oma_reference():
    betas, rates = [2.0, 0.5], [3.0, 3.0]
    tr = oma_decode(betas, rates, TerminationPolicy(), shares=4)
    for k in range(2):
        solo = decode_frame([betas[k] * 4], [rates[k] * 4], TerminationPolicy())
        assert tr.decode_slot[k] == solo.decode_slot[0]
    st = run_scenario(small(scheme="oma-reference", trials=500, levels=5))
    assert st.mean_frame_length > 0


def test_spectral_efficiency_definition():
    batch = run_batch(small(trials=1000))
    st = summarize(batch)
    assert st.normalized_spectral_efficiency == pytest.approx(batch.rates.mean() / st.mean_frame_length)


def test_sweep_lambda_lowers_power():
    rows = sweep(small(trials=2000), "Lambda", [6, 10, 16])
    powers = [r.stats.mean_tx_power for r in rows]
    assert powers[0] > powers[1] > powers[2]
    assert [r.value for r in rows] == [6, 10, 16]


def test_sweep_population_keeps_power():
    rows = sweep(small(trials=4000), "K", [20, 60, 100])
    p = [r.stats.mean_tx_power for r in rows]
    se = [r.stats.stderr_tx_power for r in rows]
    assert max(p) - min(p) <= 3 * math.sqrt(max(se) ** 2 + min(se) ** 2)


def test_scenario_validation():
    with pytest.raises(ValueError, match="access_prob out of range"):
        Scenario(access_prob=1.5)
    with pytest.raises(ValueError):
        Scenario(scheme="rdma", design="power")
    with pytest.raises(ValueError):
        Scenario(scheme="pdma", design=RATE)
    with pytest.raises(ValueError):
        Scenario(scheme="aloha")
    with pytest.raises(ValueError):
        Scenario(scheme="rdma", budget=7.5)
    with pytest.raises(KeyError):
        Scenario().with_param("nope", 1)
    assert Scenario().with_param("L", 8).levels == 8
    assert Scenario(scheme="rdma").design == RATE
    assert Scenario(scheme="nosic-baseline", design=RATE).fading.mode == "iid-per-slot"


def test_invalid_rate_design_surfaces():
    with pytest.raises(pdma.InvalidDesign):
        Scenario(scheme="rdma", margin=10.0).rate_design()


def test_presets():
    fig3 = figure_preset("fig3")
    assert {sw.scenario.scheme for sw in fig3.sweeps} == {"pdma", "nosic-baseline", "repetition-baseline"}
    for sw in fig3.sweeps:
        s = sw.scenario
        assert (s.mean_gain, s.population, s.access_prob, s.rate, s.budget) == (1.0, 50, 0.1, 4.0, 10.0)
        assert sw.param == "L" and sw.values == tuple(range(2, 21, 2))
    fig8 = figure_preset("fig8", trials=10, seed=3)
    for sw in fig8.sweeps:
        s = sw.scenario
        assert (s.mean_rx_power, s.population, s.access_prob, s.levels) == (2.0, 50, 0.1, 10)
        assert sw.param == "T" and s.trials == 10 and s.seed == 3
    assert figure_preset("fig2").analytic
    for name in PRESETS:
        figure_preset(name)
    with pytest.raises(KeyError):
        figure_preset("fig1")


def test_fig2_table():
    rows = fig2_table()
    assert len(rows) == 16 and rows[0]["ratio"] == 1.0
    for r in rows:
        assert r["psi_L_U"] == pytest.approx(rdma.psi_closed_form(r["L"], 2.0))
        assert r["psi_L_U"] >= r["psi_1_LU"]
