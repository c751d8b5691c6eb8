import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from wptrelay.channel import Lognormal, Rayleigh, Rician
from wptrelay.mechanism import (
    AuctionInput, NotRegularError, baseline_batch, candidate_utility, candidate_virtual,
    candidate_virtual_inverse, check_regularity, inverse_virtual_valuation, myerson_batch,
    run_all_batch, run_baseline, run_myerson, run_vickrey, source_utility, virtual_slope,
    virtual_valuation, virtual_valuation_numeric, vickrey_batch,
)
from wptrelay.valuation import realize_batch

R = Rayleigh()
LN = Lognormal(8.66)


def inp(v0, vals, feasible=True, c=None, p_si=None, alpha=None, model=R):
    n = len(vals)
    return AuctionInput(v0, feasible, tuple(vals), tuple(c or [1.0] * n), tuple(p_si or [0.0] * n),
                        tuple(alpha or [0.01] * n), model)


# baseline and Vickrey -------------------------------------------------------------


def test_baseline_examples():
    o = run_baseline(inp(5, [2, 3]))
    assert (o.winner, o.payment_mw, o.communicated) == (1, 2, True)
    o = run_baseline(inp(100, [150], feasible=False))
    assert (o.winner, o.payment_mw, o.communicated) == (0, 0.0, False)
    o = run_baseline(inp(4, [5, 6]))
    assert (o.winner, o.payment_mw, o.communicated) == (0, 4, True)


def test_vickrey_examples():
    o = run_vickrey(inp(5, [2, 3]))
    assert (o.winner, o.payment_mw) == (1, 3)
    o = run_vickrey(inp(10, [7]))
    assert (o.winner, o.payment_mw) == (1, 10)
    o = run_vickrey(inp(100, [120], feasible=False))
    assert o.winner == 0 and not o.communicated


def test_ties_go_to_lowest_index():
    assert run_vickrey(inp(3, [3, 3])).winner == 0
    assert run_vickrey(inp(5, [3, 3])).winner == 1
    assert run_vickrey(inp(5, [3, 3])).payment_mw == 3


def test_source_wins_with_actual_direct_power():
    a = AuctionInput(4.0, True, (9.0,), (1.0,), (0.0,), (0.01,), R, p_s_mw=4.0)
    assert run_vickrey(a).source_power_mw == 4.0
    b = AuctionInput(100.0, False, (200.0,), (1.0,), (0.0,), (0.01,), R, p_s_mw=700.0)
    assert run_vickrey(b).source_power_mw == 0.0


# virtual valuations --------------------------------------------------------------


def test_virtual_valuation_examples():
    assert virtual_valuation(1.0, 1.0, R) == pytest.approx(2.0)
    assert virtual_valuation(1e-12, 1.0, R) == pytest.approx(1e-12)
    for s_db in (3.0, 8.66, 9.02):
        m = Lognormal(s_db)
        expect = 2.0 * (1 + m.sigma * math.sqrt(2 * math.pi) / 2)
        assert virtual_valuation(2.0, 2.0, m) == pytest.approx(expect, rel=1e-12)


@pytest.mark.parametrize("model", [R, Rayleigh(1.3), LN, Lognormal(9.02)])
def test_virtual_valuation_matches_numeric_ratio(model):
    # the plain F/f ratio underflows to 0/0 in the far lower tail, so stay where it is representable
    lo = -1.0 if isinstance(model, Rayleigh) else -3.0
    v = np.logspace(lo, 3, 61) * 2.5
    assert np.allclose(virtual_valuation(v, 2.5, model), virtual_valuation_numeric(v, 2.5, model), rtol=1e-9)


@pytest.mark.parametrize("model", [R, LN])
def test_slope_matches_finite_difference(model):
    v = np.logspace(-4, 4, 33)
    h = v * 1e-6
    fd = (virtual_valuation(v + h, 1.0, model) - virtual_valuation(v - h, 1.0, model)) / (2 * h)
    assert np.allclose(virtual_slope(v, 1.0, model), fd, rtol=1e-5)


def test_inverse_examples():
    assert inverse_virtual_valuation(6.0, 1.0, R) == pytest.approx(2.0, rel=1e-14)
    with pytest.raises(ValueError):
        inverse_virtual_valuation(0.0, 1.0, R)
    with pytest.raises(ValueError):
        inverse_virtual_valuation(-1.0, 1.0, LN)
    with pytest.raises(ValueError):
        inverse_virtual_valuation(1.0, 1.0, LN, method="closed")


@pytest.mark.parametrize("model", [R, LN, Lognormal(9.02)])
@pytest.mark.parametrize("c", [1e-4, 1.0, 37.0])
def test_inverse_round_trip(model, c):
    v = np.logspace(-6, 6, 241) * c
    back = inverse_virtual_valuation(virtual_valuation(v, c, model), c, model)
    assert np.max(np.abs(back / v - 1)) < 1e-9


def test_rayleigh_closed_form_matches_bisection():
    t = np.logspace(-6, 6, 121)
    a = inverse_virtual_valuation(t, 3.0, R, method="closed")
    b = inverse_virtual_valuation(t, 3.0, R, method="bisect")
    assert np.max(np.abs(a / b - 1)) < 1e-9


def test_lognormal_inverse_matches_grid_scan():
    # independent oracle: scan c~ on a dense log grid then polish with brentq
    c = 2.0
    grid = np.logspace(-8, 8, 200_001) * c
    vals = virtual_valuation(grid, c, LN)
    for t in (1e-3, 0.7, 5.0, 1e3):
        k = np.searchsorted(vals, t)
        assert abs(grid[k] / inverse_virtual_valuation(t, c, LN) - 1) < 2e-4
        root = optimize.brentq(lambda x: virtual_valuation(x, c, LN) - t, grid[k - 1], grid[k], xtol=1e-300, rtol=1e-15)
        assert inverse_virtual_valuation(t, c, LN) == pytest.approx(root, rel=1e-6)


def test_check_regularity_examples():
    grid = np.logspace(-6, 6, 1001)
    for c in (1e-3, 1.0, 1e3):
        assert check_regularity(R, c, grid) >= 1.0
    assert check_regularity(LN, 1.0, grid) > 0
    assert check_regularity(R, 1.0, grid, transform=lambda v: -(v ** 2)) < 0
    with pytest.raises(ValueError):
        check_regularity(R, 1.0, [1.0])
    with pytest.raises(ValueError):
        check_regularity(R, 1.0, [2.0, 1.0])


def test_rician_rejected_by_myerson():
    with pytest.raises(NotRegularError):
        virtual_valuation(1.0, 1.0, Rician(2.0))
    with pytest.raises(NotRegularError):
        run_myerson(inp(5, [1], model=Rician(2.0)))
    # Vickrey does not care about the fading law
    assert run_vickrey(inp(5, [1], model=Rician(2.0))).winner == 1


def test_candidate_virtual_identity_below_support():
    assert candidate_virtual(0.5, 1.0, 1.0, R) == 0.5
    assert candidate_virtual(3.0, 1.0, 1.0, R) == pytest.approx(1.0 + 2.0 + 4.0)
    assert candidate_virtual_inverse(7.0, 1.0, 1.0, R) == pytest.approx(3.0)
    assert candidate_virtual_inverse(0.5, 1.0, 1.0, R) == 0.5


# Myerson ------------------------------------------------------------------------


def test_myerson_gap_event():
    # v1 = 90 < P_max, but its virtual valuation exceeds the source's 100
    c = 90.0 / 0.8  # c~(90) = 90 + 90^2/c = 162
    o = run_myerson(inp(100.0, [90.0], feasible=False, c=[c]))
    assert virtual_valuation(90.0, c, R) > 100
    assert o.winner == 0 and not o.communicated
    assert run_vickrey(inp(100.0, [90.0], feasible=False, c=[c])).communicated


def test_myerson_single_candidate_payment():
    o = run_myerson(inp(6.0, [1.0]))
    assert o.winner == 1
    assert o.payment_mw == pytest.approx(2.0, rel=1e-12)


def test_myerson_symmetric_candidates_match_vickrey():
    rng = np.random.default_rng(0)
    for _ in range(50):
        c, p_si = rng.uniform(0.5, 3), rng.uniform(0, 1)
        vals = sorted(p_si + rng.uniform(0.01, 2, size=2))
        a = inp(1e6, vals, c=[c, c], p_si=[p_si, p_si])
        m, v = run_myerson(a), run_vickrey(a)
        assert m.winner == v.winner == 1
        assert m.payment_mw == pytest.approx(v.payment_mw, rel=1e-9)


# individual rationality and incentives ----------------------------------------------


def _random_input(rng, n, model):
    p_si = rng.uniform(0, 5, n)
    c = rng.uniform(0.1, 10, n)
    vals = p_si + c / model.sample(rng, n)
    v0 = float(rng.uniform(1, 100))
    return AuctionInput(v0, bool(rng.random() < 0.5), tuple(vals), tuple(c), tuple(p_si),
                        tuple(rng.uniform(1e-4, 0.1, n)), model)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.sampled_from(["r", "ln"]))
def test_individual_rationality(seed, n, fam):
    model = R if fam == "r" else LN
    a = _random_input(np.random.default_rng(seed), n, model)
    for run in (run_vickrey, run_myerson):
        o = run(a)
        if o.winner > 0:
            assert o.payment_mw >= a.valuations[o.winner - 1] * (1 - 1e-12)
            assert o.net_harvest_mw >= -1e-12
        assert o.source_power_mw <= max(a.v0_mw, 0) + 1e-9 or not a.source_feasible or o.winner > 0
    b = run_baseline(a)
    v = run_vickrey(a)
    if b.communicated and v.communicated:
        assert b.source_power_mw <= v.source_power_mw + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.sampled_from(["r", "ln"]))
def test_no_profitable_unilateral_deviation(seed, n, fam):
    model = R if fam == "r" else LN
    rng = np.random.default_rng(seed)
    a = _random_input(rng, n, model)
    for run in (run_vickrey, run_myerson):
        for i in range(1, n + 1):
            truth = a.valuations[i - 1]
            u0 = candidate_utility(run(a), i, truth, a.alpha_tilde[i - 1])
            for bid in truth * np.exp(rng.normal(0, 1.5, 20)):
                u = candidate_utility(run(a.with_bid(i, float(bid))), i, truth, a.alpha_tilde[i - 1])
                assert u <= u0 + 1e-9


def test_utilities():
    a = inp(10, [7], alpha=[0.5])
    o = run_vickrey(a)
    assert candidate_utility(o, 1, 7.0, 0.5, t_s=2.0) == pytest.approx(2 * 0.5 * 3)
    assert candidate_utility(o, 2, 7.0, 0.5) == 0.0
    assert source_utility(o, 1000.0, 2.0) == pytest.approx(1000 - 20)
    assert source_utility(run_baseline(inp(100, [150], feasible=False)), 1000.0) == 0.0


# batch route ---------------------------------------------------------------------


@pytest.mark.parametrize("n", [0, 1, 3])
def test_batch_matches_scalar(any_params, env, n):
    b = realize_batch(env, any_params, n, 300, np.random.default_rng(n + 1))
    model = any_params.fading_los
    outs = run_all_batch(b, model)
    scalar = {"baseline": run_baseline, "vickrey": run_vickrey, "myerson": run_myerson}
    for k in range(b.trials):
        a = AuctionInput.from_realization(b.realization(k), model)
        for name, fn in scalar.items():
            s, v = fn(a), outs[name].outcome(k)
            assert s.winner == v.winner and s.communicated == v.communicated
            assert s.payment_mw == pytest.approx(v.payment_mw, rel=1e-12, abs=0)
            assert s.net_harvest_mw == pytest.approx(v.net_harvest_mw, rel=1e-9, abs=1e-300)


def test_batch_vickrey_outage_equals_baseline(env, params):
    b = realize_batch(env, params, 4, 5000, np.random.default_rng(8))
    assert np.array_equal(vickrey_batch(b).communicated, baseline_batch(b).communicated)
    m = myerson_batch(b, params.fading_los)
    # Myerson can only lose communications relative to the baseline
    assert not np.any(m.communicated & ~baseline_batch(b).communicated)
