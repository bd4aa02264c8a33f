from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from wanderlab.wander import (
    ChainError,
    ChainMap,
    ChainModel,
    Generations,
    Schedule,
    TwoSheetLift,
    build_chain,
    chain_constants,
    default_setup,
    eta1_residual,
    eta_condition,
    growth_condition,
    half_power_bound,
    half_power_threshold,
    round_length,
    series_truncation,
    slope_rows,
    strip_rows,
    verify_rectangle_lemma,
    verify_wandering,
    z0_feasible,
)


@pytest.fixture(scope="module")
def setup():
    return default_setup(span=6)


def test_z0_example_scan():
    zc = z0_feasible(2, 0.2, 3, 0.1)
    # direct scan oracle for 16 (0.2 * 3^1.1)^z < 1
    scan = next(z for z in range(1, 1000) if 16 * (0.2 * 3 ** 1.1) ** z < 1)
    assert zc.z0_eta == scan
    assert not eta_condition(scan - 1, 2, 0.2, 3, 0.1)
    assert eta_condition(zc.z0, 2, 0.2, 3, 0.1)
    assert growth_condition(zc.z0, zc.eta1) and not growth_condition(zc.z0 - 1, zc.eta1)
    assert zc.z0 == max(zc.z0_eta, zc.z0_growth)
    assert abs(eta1_residual(zc.eta1, 0.1)) <= 1e-10


def test_z0_eta_binding_model():
    m = ChainModel()
    zc = z0_feasible(m.omega, m.lam, m.sigma, m.eta)
    assert zc.binding == "eta"
    assert eta_condition(zc.z0, m.omega, m.lam, m.sigma, m.eta)
    assert not eta_condition(zc.z0 - 1, m.omega, m.lam, m.sigma, m.eta)


def test_z0_rejects_expanding():
    with pytest.raises(ValueError):
        z0_feasible(2, 0.5, 3, 0.1)


def test_schedule_unfolding():
    s = Schedule(3, (2, 5))
    assert s.entries(8) == (3, 3, 4, 4, 4, 3, 3, 3)
    assert Schedule(3).entries(5) == (3,) * 5
    with pytest.raises(ValueError):
        Schedule(3, (5, 2))


@given(st.integers(1, 6), st.lists(st.integers(1, 200), max_size=10, unique=True))
def test_schedule_entries_bounded(z0, sw):
    s = Schedule(z0, tuple(sorted(sw)))
    assert set(s.entries(250)) <= {z0, z0 + 1}


def test_round_length_example():
    assert round_length(2, 3, 4, 3, 2, 4, 5) == 36


@pytest.mark.parametrize("switches", [(), (4,), (3, 7, 15)])
def test_recurrence_and_series(switches):
    model = ChainModel()
    sched = Schedule(z0_feasible(model.omega, model.lam, model.sigma, model.eta).z0, switches)
    gens = Generations.linear()
    c = chain_constants(sched, model, 31, generations=gens)
    for k in range(1, 31):
        assert c.recurrence_residual(k) <= 1e-10
    # exact identities on truncations with matched horizons
    terms = (gens.i_hat, lambda j: gens.n_hat_next(j) + j * j + j, lambda j: sched.z(j) * j * j)
    for t in terms:
        for k in range(1, 20):
            lhs = 2 * series_truncation(t, k, 12) - series_truncation(t, k + 1, 11)
            assert lhs == Fraction(2 * t(k))


def test_half_power_synthetic_linear():
    model = ChainModel()
    sched = Schedule(z0_feasible(model.omega, model.lam, model.sigma, model.eta).z0)
    c = chain_constants(sched, model, 80, generations=Generations.linear(3, 0, 2, 0))
    ks = half_power_threshold(c, 70)
    assert ks is not None
    for k in range(ks, ks + 31):
        r = half_power_bound(c, k)
        assert r.first_ok and r.second_ok and r.bracket_ok


def test_half_power_superlinear_stress():
    model = ChainModel()
    sq = Generations(lambda k: 3 * k, lambda k: 5 * k * k, (0.0, 3.0, 0.0), (5.0, 0.0, 0.0))
    c = chain_constants(Schedule(7), model, 12, generations=sq)
    assert not half_power_bound(c, 2).second_ok


def test_generations_outgrowing_envelope():
    bad = Generations(lambda k: k * k, lambda k: k, (0.0, 3.0, 0.0), (0.0, 1.0, 0.0))
    with pytest.raises(ChainError, match="tail bound not achievable"):
        chain_constants(Schedule(3), ChainModel(), 10, generations=bad)


def test_centers_map_to_centers(setup):
    ch = setup.chain
    for k in range(ch.k_first, ch.k_last):
        x, y = ch.transition(k, ch.ctx.mpf(0), ch.rounds[k].eta)
        cx, cy = ch.center(k + 1)
        assert abs(x - cx) <= ch.half_w[k + 1] * ch.ctx.mpf(10) ** -20
        assert abs(y - cy) <= ch.half_h[k + 1] * ch.ctx.mpf(10) ** -20


def test_centers_off_stable_axis(setup):
    ch = setup.chain
    for k in range(ch.k_first, ch.k_last + 1):
        assert ch.rounds[k].entry_v["P"] > 0


def test_rectangle_lemma_short(setup):
    rep = verify_rectangle_lemma(setup.chain, grid=200, j_points=41)
    assert rep.all_passed and rep.j_inside_half


def test_eps_sensitivity(setup):
    bad = default_setup(span=3, eps=setup.eps * 10, k0=setup.k0)
    assert not verify_rectangle_lemma(bad.chain, grid=80, j_points=11).all_passed


def test_exit_gradient_matches_difference_quotient(setup):
    # at the first rung the working precision still resolves a difference quotient
    ch = setup.chain
    k = ch.k_first
    eta, d, zero = ch.rounds[k].eta, ch.half_h[k], ch.ctx.mpf(0)
    s0 = ch.exit_offset(k, zero, eta)
    fd_eta = (ch.exit_offset(k, zero, eta + d) - s0) / d
    _, g_eta = ch.exit_gradient(k)
    assert abs(fd_eta / g_eta - 1) <= 1e-20


def test_slopes(setup):
    rows = slope_rows(setup.chain)
    assert all(r.log10_slope < r.log10_bound for r in rows)
    dom = [r.log10_domination for r in rows]
    assert all(b < a for a, b in zip(dom, dom[1:]))


def test_strips_slack_model():
    model = ChainModel(phat_rate=5, transit_rate=2.5)
    sched = Schedule(z0_feasible(model.omega, model.lam, model.sigma, model.eta).z0)
    c = chain_constants(sched, model, 30)
    rows = strip_rows(model, c, (5, 25))
    assert all(r.contained for r in rows)


def test_strips_sharp_model_fail():
    model = ChainModel()
    sched = Schedule(z0_feasible(model.omega, model.lam, model.sigma, model.eta).z0)
    c = chain_constants(sched, model, 30)
    assert not any(r.contained for r in strip_rows(model, c, (5, 25)))


def test_wandering_short(setup):
    fmap = ChainMap(setup.chain)
    rep = verify_wandering(fmap, setup.k0, rounds=3)
    assert rep.passed
    assert rep.horizon == sum(setup.chain.rounds[k].length for k in range(setup.k0, setup.k0 + 4))
    # (k, m_hat, log10 diam, log10 diam R): the image shrinks and stays inside R_k
    diams = [c[2] for c in rep.checkpoints]
    assert all(b < a for a, b in zip(diams, diams[1:]))
    assert all(d <= dr for _, _, d, dr in rep.checkpoints)
    assert all(p > 0 and q > 0 for _, p, q in rep.visits)


def test_lift_wandering(setup):
    lift = TwoSheetLift(ChainMap(setup.chain))
    rep = verify_wandering(lift, setup.k0, rounds=2)
    assert rep.passed and rep.period == 2


def test_wandering_range_check(setup):
    with pytest.raises(ChainError):
        verify_wandering(ChainMap(setup.chain), setup.k0, rounds=50)


def test_chart_escape():
    model = ChainModel()
    sched = Schedule(z0_feasible(model.omega, model.lam, model.sigma, model.eta).z0)
    c = chain_constants(sched, model, 12)
    with pytest.raises(ChainError, match="tangency chart"):
        build_chain(ChainModel(chart_radius=1e-300), sched, c, (8, 10))


def test_ladder_sign():
    model = ChainModel()
    c = chain_constants(Schedule(7), model, 10)
    assert all(c.log_b(k + 1) < c.log_b(k) for k in range(1, 9))
    assert math.isclose(c.log10_b(3), c.log_b(3) / math.log(10))
