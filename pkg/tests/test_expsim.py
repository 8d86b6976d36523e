import math

import numpy as np
import pytest

from dcwitness.expsim import (
    Accounting,
    CountLedger,
    SweepSpec,
    estimate_table,
    grid_expectations,
    run_experiment,
    run_fixed_counts,
    sweep_idw,
)
from dcwitness.pam_core import PhaseConfig, ShapeError, validate_table
from dcwitness.quantum_model import DeviceModel, Policy, ideal_table, lossy_table
from dcwitness.witness import QUANTUM_BOUND_IDW, EmptySetting, det_w2, i_dw, witness_stderr

PI = math.pi


def conserved(ledger):
    return np.array_equal(ledger.d0 + ledger.d1 + ledger.lost, ledger.trigger)


def test_ledger_rejects_broken_conservation():
    with pytest.raises(ValueError):
        CountLedger(trigger=[[3]], d0=[[1]], d1=[[1]], lost=[[0]])
    with pytest.raises(ValueError):
        CountLedger(trigger=[[0]], d0=[[1]], d1=[[-1]], lost=[[0]])


def test_same_seed_same_ledger(idw_config):
    dev = DeviceModel(eta=0.3, t_a=0.8, t_b=0.9, visibility=0.95)
    a = run_experiment(idw_config, dev, 10_000, seed=7)
    b = run_experiment(idw_config, dev, 10_000, seed=7)
    c = run_experiment(idw_config, dev, 10_000, seed=8)
    assert a == b
    assert a != c


def test_no_loss_channel_means_nothing_lost(idw_config):
    ledger = run_experiment(idw_config, DeviceModel(), 30_000, seed=1)
    assert np.all(ledger.lost == 0)
    assert ledger.trigger.sum() == 30_000


def test_round_robin_balances_preparations(w2_config):
    ledger = run_experiment(w2_config, DeviceModel(), 4003, seed=0)
    assert ledger.trigger.sum(axis=1).tolist() == [1001, 1001, 1001, 1000]
    uni = run_experiment(w2_config, DeviceModel(), 4003, seed=0, x_mode="uniform")
    assert uni.trigger.sum() == 4003


def test_trigger_transmittance_sets_run_count(idw_config):
    dev = DeviceModel(t_a=0.5)
    per_trigger = run_experiment(idw_config, dev, 60_000, seed=2)
    per_pair = run_experiment(idw_config, dev, 60_000, seed=2, accounting=Accounting.PER_PAIR)
    assert per_pair.trigger.sum() == 60_000
    assert per_trigger.trigger.sum() == pytest.approx(30_000, rel=0.03)
    # the same triggered photons produce the same coincidences in both modes
    assert np.array_equal(per_trigger.d0, per_pair.d0)
    assert np.all(per_trigger.lost == 0)


def test_lossless_idw_consistent_with_bound(idw_config):
    ledger = run_experiment(idw_config, DeviceModel(), 10**6, seed=3)
    res = witness_stderr(ledger, "idw")
    assert abs(res.value - QUANTUM_BOUND_IDW) < 3 * res.stderr


def test_estimate_policies_label_flip():
    ledger = CountLedger(trigger=[[5]], d0=[[5]], d1=[[0]], lost=[[0]])
    assert estimate_table(ledger, Policy.POST_SELECTED).p0[0, 0] == 1.0
    assert estimate_table(ledger, Policy.INCLUSIVE).p[1, 0, 0] == 1.0


def test_all_lost():
    ledger = CountLedger(trigger=[[5, 2]], d0=[[0, 0]], d1=[[0, 0]], lost=[[5, 2]])
    assert np.all(estimate_table(ledger, Policy.INCLUSIVE).p0 == 1.0)
    with pytest.raises(EmptySetting):
        estimate_table(ledger, Policy.POST_SELECTED)


def test_estimated_tables_validate(idw_config):
    ledger = run_experiment(idw_config, DeviceModel(eta=0.5), 5000, seed=4)
    for policy in Policy:
        validate_table(estimate_table(ledger, policy))


def test_lossy_w2_estimate_matches_scaling_law(w2_config):
    dev = DeviceModel(eta=0.025, policy=Policy.INCLUSIVE)
    expected = abs(det_w2(lossy_table(w2_config, dev)))
    assert expected == pytest.approx(6.25e-4, rel=1e-12)
    ledger = run_experiment(w2_config, dev, 8 * 10**6, seed=5)
    res = witness_stderr(ledger, "w2", Policy.INCLUSIVE)
    assert abs(res.value - expected) < 3 * res.stderr


def test_per_pair_accounting_carries_full_loss_factor(w2_config):
    dev = DeviceModel(eta=0.2, t_a=0.5, t_b=0.8, policy=Policy.INCLUSIVE)
    ledger = run_experiment(w2_config, dev, 8 * 10**6, seed=6, accounting="per_pair")
    res = witness_stderr(ledger, "w2", Policy.INCLUSIVE)
    assert abs(res.value - (0.2 * 0.5 * 0.8) ** 2) < 3 * res.stderr


def test_policies_agree_without_losses(idw_config, w2_config):
    for cfg, name in ((idw_config, "idw"), (w2_config, "w2")):
        ledger = run_experiment(cfg, DeviceModel(), 400_000, seed=9)
        post = witness_stderr(ledger, name, Policy.POST_SELECTED)
        incl = witness_stderr(ledger, name, Policy.INCLUSIVE)
        if name == "w2":
            # b-label flip maps p -> 1-p, which leaves |det| exactly invariant
            assert incl.value == pytest.approx(post.value, abs=1e-12)
        else:
            assert abs(incl.value - post.value) < 3 * math.hypot(post.stderr, incl.stderr)


def test_ledger_conservation_randomized():
    rng = np.random.default_rng(10)
    for i in range(1000):
        n_x = int(rng.integers(1, 5))
        n_y = int(rng.integers(1, 3))
        cfg = PhaseConfig(tuple(rng.uniform(0, 2 * PI, n_x)), tuple(rng.uniform(0, 2 * PI, n_y)))
        dev = DeviceModel(*rng.uniform(0, 1, 4), policy="inclusive")
        ledger = run_experiment(cfg, dev, int(rng.integers(1, 2000)), seed=i,
                                accounting=rng.choice(["per_trigger", "per_pair"]))
        assert conserved(ledger)


def test_seed_determinism_randomized():
    rng = np.random.default_rng(11)
    for i in range(1000):
        cfg = PhaseConfig(tuple(rng.uniform(0, 2 * PI, 3)), tuple(rng.uniform(0, 2 * PI, 2)))
        dev = DeviceModel(*rng.uniform(0, 1, 4))
        assert run_experiment(cfg, dev, 500, seed=i) == run_experiment(cfg, dev, 500, seed=i)


def test_ledger_csv_round_trip(idw_config):
    ledger = run_experiment(idw_config, DeviceModel(eta=0.4), 1000, seed=12)
    text = ledger.to_csv()
    assert text.splitlines()[0] == "x,y,trigger,d0,d1,lost"
    assert CountLedger.from_csv(text) == ledger


def test_coverage_of_two_sigma_interval(idw_config):
    dev = DeviceModel(visibility=0.9)
    truth = i_dw(lossy_table(idw_config, dev))
    hits = 0
    for seed in range(200):
        res = witness_stderr(run_fixed_counts(idw_config, dev, 10_000, seed=seed), "idw")
        hits += abs(res.value - truth) <= 2 * res.stderr
    assert hits >= 180


# -- sweep ---------------------------------------------------------------------

def test_sweep_with_optimal_grid_contains_optimum():
    res = sweep_idw(SweepSpec(grid=(7 * PI / 4, 5 * PI / 4, PI / 2)))
    assert res.n_tuples == 27
    assert res.max_value == pytest.approx(QUANTUM_BOUND_IDW, abs=1e-12)
    assert res.counts.sum() == 27


def test_uniform_grid_violates_classical_bound():
    res = sweep_idw(SweepSpec.uniform(70))
    assert res.n_tuples == 70**3
    assert res.fraction_above_classical > 0
    assert res.max_value <= QUANTUM_BOUND_IDW + 1e-9
    assert len(res.counts) == 100
    assert res.edges[0] == 0.0 and res.edges[-1] == 5.0


def test_single_point_grid_matches_witness():
    phi0 = 0.7
    res = sweep_idw(SweepSpec(grid=(phi0,)))
    assert res.n_tuples == 1
    table = ideal_table(PhaseConfig((phi0,) * 3, (PI / 2, 0.0)))
    assert float(res.values.ravel()[0]) == pytest.approx(i_dw(table), abs=1e-12)


def test_sweep_agrees_with_witness_on_random_tuples():
    spec = SweepSpec.uniform(70)
    res = sweep_idw(spec)
    rng = np.random.default_rng(13)
    for i, j, k in rng.integers(0, 70, size=(100, 3)):
        cfg = PhaseConfig((spec.grid[i], spec.grid[j], spec.grid[k]), spec.sigma)
        assert abs(res.values[i, j, k] - i_dw(ideal_table(cfg))) < 1e-12


def test_simulated_sweep_is_close_to_analytic():
    spec = SweepSpec.uniform(12, source="simulated", trials_per_setting=20_000, seed=3)
    sim = grid_expectations(spec)
    exact = grid_expectations(SweepSpec.uniform(12))
    # binomial spread of <B> at 2e4 counts is below 0.0071
    assert np.max(np.abs(sim - exact)) < 5 * 0.0071
    assert sweep_idw(spec).n_tuples == 12**3


def test_inclusive_analytic_sweep_is_scaled():
    dev = DeviceModel(eta=0.1, policy="inclusive")
    e = grid_expectations(SweepSpec.uniform(10, device=dev))
    cfg = PhaseConfig(SweepSpec.uniform(10).grid, (PI / 2, 0.0))
    np.testing.assert_allclose(e, lossy_table(cfg, dev).expectations(), atol=1e-15)


def test_histogram_csv_counts():
    res = sweep_idw(SweepSpec.uniform(10))
    rows = res.histogram_csv().splitlines()
    assert rows[0] == "bin_low,bin_high,count,frequency"
    assert sum(int(r.split(",")[2]) for r in rows[1:]) == 1000
    assert res.summary()["n_tuples"] == 1000


def test_sweep_spec_validation():
    with pytest.raises(ShapeError):
        SweepSpec(grid=())
    with pytest.raises(ValueError):
        SweepSpec(grid=(0.0,), source="measured")
