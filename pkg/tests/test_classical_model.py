import math

import numpy as np
import pytest

from dcwitness.classical_model import (
    CapExceeded,
    CorrelatedStrategy,
    DeterministicStrategy,
    classical_max,
    correlated_det_certificate,
    correlated_det_search,
    enumerate_deterministic,
    independent_det_is_zero,
    independent_mixture_p0,
    min_retrocausality,
    strategy_count,
    strategy_table,
)
from dcwitness.pam_core import IDW_SCENARIO, W2_SCENARIO, PamScenario, ShapeError, validate_table
from dcwitness.witness import abs_det_w2, det_w2, i_dw


@pytest.mark.parametrize("n_x, n_y, d, expected", [
    (3, 2, 2, 128),
    (4, 2, 2, 256),
    (5, 2, 1, 4),
    (2, 1, 3, 9 * 8),
])
def test_enumeration_count(n_x, n_y, d, expected):
    scen = PamScenario(n_x, n_y, dim=d)
    strategies = enumerate_deterministic(scen)
    # independent count: every encoder function times every decoder function
    assert d**n_x * 2 ** (d * n_y) == expected
    assert len(strategies) == expected == strategy_count(scen)
    assert len(set(strategies)) == expected


def test_enumeration_is_lexicographic():
    strategies = enumerate_deterministic(IDW_SCENARIO)
    assert strategies == sorted(strategies)
    assert strategies[0] == DeterministicStrategy((0, 0, 0), ((0, 0), (0, 0)))


def test_enumeration_cap():
    with pytest.raises(CapExceeded):
        enumerate_deterministic(PamScenario(4, 2, dim=2), cap=100)


def test_strategy_validation():
    with pytest.raises(ShapeError):
        DeterministicStrategy((0, 2), ((0,), (1,)))
    with pytest.raises(ShapeError):
        DeterministicStrategy((0,), ((0, 1), (1,)))
    with pytest.raises(ShapeError):
        CorrelatedStrategy((0.5, 0.6), (DeterministicStrategy((0,), ((0,),)),) * 2)


def test_constant_strategy_table():
    s = DeterministicStrategy((0, 0, 0), ((0, 0), (1, 1)))
    assert np.all(strategy_table(s).p0 == 1.0)


def test_equal_mixture_of_constant_answers():
    always0 = DeterministicStrategy((0, 0, 0), ((0, 0), (0, 0)))
    always1 = DeterministicStrategy((0, 0, 0), ((1, 1), (1, 1)))
    t = strategy_table(CorrelatedStrategy((0.5, 0.5), (always0, always1)))
    assert np.all(t.p0 == 0.5)


def test_parity_encoder():
    s = DeterministicStrategy((0, 1), ((0, 0), (1, 1)))
    np.testing.assert_array_equal(strategy_table(s).p0, [[1, 1], [0, 0]])


def test_strategy_table_scenario_check():
    s = DeterministicStrategy((0, 1), ((0, 0), (1, 1)))
    with pytest.raises(ShapeError):
        strategy_table(s, IDW_SCENARIO)


def test_every_strategy_table_validates():
    for scen in (IDW_SCENARIO, W2_SCENARIO):
        for s in enumerate_deterministic(scen):
            validate_table(strategy_table(s, scen), scen)


def test_classical_idw_bound_is_three():
    value, strat = classical_max(i_dw, IDW_SCENARIO)
    assert value == 3.0
    # ties resolve to the lexicographically smallest strategy
    all_max = [s for s in enumerate_deterministic(IDW_SCENARIO) if i_dw(strategy_table(s)) == 3.0]
    assert strat == min(all_max)


def test_classical_det_bound_is_zero():
    value, _ = classical_max(abs_det_w2, W2_SCENARIO)
    assert value == 0.0
    for s in enumerate_deterministic(W2_SCENARIO):
        assert det_w2(strategy_table(s)) == 0.0


def test_constant_witness():
    value, strat = classical_max(lambda t: 2.5, IDW_SCENARIO)
    assert value == 2.5
    assert strat == enumerate_deterministic(IDW_SCENARIO)[0]


def _random_marginals(rng, k_enc=3, k_dec=3):
    enc = [(w, tuple(rng.integers(0, 2, 4))) for w in rng.dirichlet(np.ones(k_enc))]
    dec = [(w, tuple(tuple(r) for r in rng.integers(0, 2, (2, 2)))) for w in rng.dirichlet(np.ones(k_dec))]
    return enc, dec


def test_independent_mixture_matches_explicit_product():
    rng = np.random.default_rng(8)
    for _ in range(20):
        enc, dec = _random_marginals(rng)
        weights = [we * wd for we, _ in enc for wd, _ in dec]
        weights[-1] = 1.0 - math.fsum(weights[:-1])
        explicit = CorrelatedStrategy(
            tuple(weights),
            tuple(DeterministicStrategy(e, d) for _, e in enc for _, d in dec),
        )
        np.testing.assert_allclose(independent_mixture_p0(enc, dec), explicit.p0(), atol=1e-14)


def test_independent_det_is_zero_single_strategy():
    assert independent_det_is_zero([(1.0, (0, 1, 1, 0))], [(1.0, ((0, 1), (1, 0)))]) == 0.0


def test_independent_det_is_zero_random():
    rng = np.random.default_rng(9)
    for _ in range(100):
        enc, dec = _random_marginals(rng, rng.integers(1, 6), rng.integers(1, 6))
        # oracle: determinant through numpy's LU on the explicit matrix
        p0 = independent_mixture_p0(enc, dec)
        m = np.array([[p0[0, 0] - p0[1, 0], p0[2, 0] - p0[3, 0]],
                      [p0[0, 1] - p0[1, 1], p0[2, 1] - p0[3, 1]]])
        assert abs(np.linalg.det(m)) <= 1e-12
        assert independent_det_is_zero(enc, dec) <= 1e-12


def test_independent_uniform_mixture():
    enc = [(0.5, (0, 0, 0, 0)), (0.5, (1, 1, 1, 1))]
    dec = [(0.5, ((0, 0), (0, 0))), (0.5, ((1, 1), (1, 1)))]
    np.testing.assert_allclose(independent_mixture_p0(enc, dec), 0.5)
    assert independent_det_is_zero(enc, dec) == 0.0


def test_certificate_reaches_one():
    cert = correlated_det_certificate()
    assert abs(det_w2(strategy_table(cert))) == pytest.approx(1.0, abs=1e-15)
    for c in cert.components:
        assert det_w2(strategy_table(c)) == 0.0


def test_single_component_search_is_zero():
    value, strat = correlated_det_search(1, restarts=10, seed=0)
    assert value == 0.0
    assert len(strat.components) == 1


def test_two_component_search_finds_certificate_value():
    value, strat = correlated_det_search(2, restarts=50, seed=0)
    assert value >= 0.99
    assert abs(det_w2(strategy_table(strat))) == pytest.approx(value, abs=1e-12)


def test_search_is_deterministic():
    a = correlated_det_search(3, restarts=10, seed=42)
    b = correlated_det_search(3, restarts=10, seed=42)
    assert a[0] == b[0]
    assert a[1] == b[1]


def test_correlated_strategy_json_round_trip():
    cert = correlated_det_certificate()
    assert CorrelatedStrategy.from_json(cert.to_json()) == cert


@pytest.mark.parametrize("value, expected", [(3.822, 0.2055), (3.0, 0.0), (2.0, 0.0), (5.0, 0.5)])
def test_min_retrocausality(value, expected):
    assert min_retrocausality(value) == pytest.approx(expected, abs=1e-12)


def test_min_retrocausality_monotone():
    xs = np.linspace(0, 5, 1001)
    ys = [min_retrocausality(x) for x in xs]
    assert all(b >= a for a, b in zip(ys, ys[1:]))
    with pytest.raises(ValueError):
        min_retrocausality(float("inf"))
