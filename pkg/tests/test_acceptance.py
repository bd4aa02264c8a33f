"""One test per acceptance criterion, at the stated tolerances and runtime limits.

Each test prints a single PASS/FAIL line; the lines are also gathered into the
terminal summary by conftest.py.
"""
from __future__ import annotations

import math
import time
from contextlib import contextmanager

import numpy as np

from conftest import ACCEPTANCE_LINES
from wanderlab.cantor import distortion_report, gap_lemma_check, s_bridges, u_bridges_quadratic
from wanderlab.cantor.core import kappa_threshold
from wanderlab.cantor.tent import tent_thickness, tent_thickness_lower_bound
from wanderlab.cli import random_affine_pair
from wanderlab.linking import (
    chain_generations,
    classify_pair,
    critical_chain,
    linear_growth,
    linking_search,
    mpf,
    standard_pair,
    xi0,
)
from wanderlab.maps import henon_like
from wanderlab.measures import historic_detect, nu_targets, schedule_from_switches
from wanderlab.perturb import (
    budget_threshold,
    c_t_budget,
    cauchy_tail_check,
    displacement_cr_norm,
    perturbation_sequence,
    PerturbationError,
)
from wanderlab.saddle import exact_renorm_model, find_saddles, perturbed_renorm_model, renorm_defect
from wanderlab.wander import (
    ChainMap,
    ChainModel,
    Schedule,
    TwoSheetLift,
    chain_constants,
    default_setup,
    eta_condition,
    half_power_bound,
    half_power_threshold,
    verify_rectangle_lemma,
    verify_wandering,
    z0_feasible,
)

# largest unstable-set period searched when looking for thickness above 3^8
THICKNESS_M_BOUND = 16


@contextmanager
def criterion(number: int, name: str, limit: float):
    """Time the body, print the verdict line, then fail on whichever check broke."""
    state = {"checks": []}
    start = time.perf_counter()
    try:
        yield state["checks"]
    finally:
        elapsed = time.perf_counter() - start
        failed = [label for label, ok in state["checks"] if not ok]
        in_time = elapsed < limit
        verdict = "PASS" if not failed and in_time else "FAIL"
        detail = "" if not failed else f"  failed: {', '.join(failed)}"
        line = f"criterion {number}: {verdict}  {name}  ({elapsed:.2f} s, limit {limit:g} s){detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
    assert not failed, line
    assert in_time, line


def test_01_fixed_points():
    with criterion(1, "saddle fixed points and continuation", 1.0) as checks:
        box = (-3.0, 3.0, -3.0, 3.0)
        pts = [s.point for s in find_saddles(henon_like(-2, 0), box)]
        for target in ((2.0, 2.0), (-1.0, -1.0)):
            checks.append((f"fixed point {target}", any(math.dist(p, target) <= 1e-10 for p in pts)))
        near = [s for s in find_saddles(henon_like(-2, 0.1), box) if math.dist(s.point, (2, 2)) < 0.2]
        checks.append(("continuation within 0.2", len(near) == 1))


def test_02_distortion():
    with criterion(2, "u-bridge distortion bounds, m = 3, 4, 5", 10.0) as checks:
        for m in (3, 4, 5):
            kappa = kappa_threshold(u_bridges_quadratic(-2, m, 10))
            checks.append((f"m={m} threshold found", kappa is not None))
            if kappa is None:
                continue
            gens = range(kappa, kappa + 7)
            rep = distortion_report(u_bridges_quadratic(-2, m, kappa + 7), gens)
            ratios_ok = all(s.lower <= s.min_ratio and s.max_ratio <= s.upper for s in rep.letters)
            checks.append((f"m={m} ratios", ratios_ok))
            checks.append((f"m={m} gaps", rep.min_gap_over_child >= 2.0 ** -(m + 1)))
            checks.append((f"m={m} bottom intervals", rep.min_child_over_bottom_interval >= 1 / 3))


def test_03_thickness_growth():
    with criterion(3, "thickness increasing in m and above 3^8", 30.0) as checks:
        taus = [tent_thickness(m, 10).tau for m in range(3, 9)]
        checks.append(("strictly increasing m=3..8", all(b > a for a, b in zip(taus, taus[1:]))))
        reached = None
        for m in range(3, THICKNESS_M_BOUND + 1):
            lb = tent_thickness_lower_bound(m, 10)
            if lb.valid and lb.bound > 3 ** 8:
                reached = m
                break
        checks.append((f"tau > 3^8 for some m <= {THICKNESS_M_BOUND}", reached is not None))
        print(f"  depth-10 thickness m=3..8: {[round(t, 4) for t in taus]}; 3^8 exceeded at m = {reached}")


def test_04_gap_lemma():
    with criterion(4, "gap lemma on 50 thick and 50 thin random pairs", 30.0) as checks:
        rng = np.random.default_rng(0)
        depth = 14
        for thick in (True, False):
            good = 0
            for _ in range(50):
                S1, S2 = random_affine_pair(rng, thick)
                res = gap_lemma_check(s_bridges(S1, depth), s_bridges(S2, depth), depth)
                if thick:
                    good += res.applicable and res.tau_product > 1 and res.witness is not None
                else:
                    good += res.tau_product <= 1 and not res.applicable
            checks.append((f"{'thick' if thick else 'thin'} pairs {good}/50", good == 50))


def test_05_linking_search():
    with criterion(5, "linking search on the affine model", 10.0) as checks:
        pair, B0, A0 = standard_pair(16, 0.4)
        checks.append(("thickness above 3^8", pair.tau > 3 ** 8))
        eps = mpf("0.05")
        res = linking_search(pair, B0, A0, eps)
        checks.append(("|delta| < eps", abs(res.delta) < eps))
        glen = res.Gu[1] - res.Gu[0]
        mid_s, mid_u = (res.Gs[0] + res.Gs[1]) / 2, (res.Gu[0] + res.Gu[1]) / 2
        checks.append(("gap midpoints aligned", abs(mid_s - mid_u) / glen <= 1e-9))
        x0 = xi0(pair.r_plus, pair.r_minus, pair.tau)
        for name, (b, a) in {"left": (res.B1, res.A1), "right": (res.B1t, res.A1t)}.items():
            r = classify_pair(pair, b, a, xi=x0, gamma=1 / pair.tau, nu=res.delta)
            checks.append((f"{name} xi0-linked", r.xi_linked))
            checks.append((f"{name} 1/tau-proportional", r.proportional))
        checks.append(("internal checks", res.valid))


def test_06_linear_growth():
    with criterion(6, "eight-level linear growth sequence", 60.0) as checks:
        pair, B0, A0 = standard_pair(16, 0.4)
        eps = mpf("0.5")
        seq = linear_growth(pair, B0, A0, eps, K=8)
        checks.append(("eight levels", seq.failure is None and len(seq.levels) == 8))
        tau, rm = mpf(pair.tau), mpf(pair.r_minus)
        bound = mpf(seq.xi0) * tau ** -0.75 * eps / 2
        checks.append(("per-level shift bound", all(abs(lv.delta) <= bound * rm ** -lv.k for lv in seq.levels)))
        checks.append(("shift sum", sum(abs(lv.delta) for lv in seq.levels) < eps * tau ** -0.75 / 2))
        checks.append(("final pairs xi0/2-linked", seq.checks.get("half_xi0_linked", False)))
        checks.append(("alpha0 neighbourhoods disjoint", seq.checks.get("alpha0_disjoint", False)))


def test_07_critical_chain():
    with criterion(7, "critical chains for k = 1..50", 1.0) as checks:
        T = 14.0
        g = chain_generations(K=50, T=T)
        rng = np.random.default_rng(1)
        words_ok = rev_ok = len_ok = env_ok = True
        for j, k in enumerate(range(1, 51)):
            z = 3 + (k % 2)
            n_hat = g.n_hat[j]
            v = "".join(rng.choice(["1", "2"], size=k))
            w_hat = "".join(rng.choice(["1", "2"], size=n_hat))
            cc = critical_chain(k, z, n_hat, v, w_hat)
            u, a = cc.u_itinerary, z * k * k
            words_ok &= (u[:a] == "1" * a and u[a:a + k * k] == "2" * (k * k)
                         and u[a + k * k:a + k * k + k] == v and u[a + k * k + k:] == w_hat[::-1])
            rev_ok &= cc.s_itinerary == u[::-1]
            len_ok &= cc.length == a + n_hat + k * k + k == len(u)
            env_ok &= g.i_hat[j] + g.n_hat[j + 1] < g.C1_fit * T * k + g.C2_fit
        checks += [("word structure", words_ok), ("reversal", rev_ok), ("length", len_ok),
                   ("fitted envelope", env_ok)]


def test_08_perturbation_budget():
    with criterion(8, "perturbation budget and norm decay", 60.0) as checks:
        thr = budget_threshold(3, 3, 2, 2.1)
        checks.append(("threshold about 13.0", abs(thr - 13.0) < 0.05))
        try:
            c_t_budget(13, 3, 3, 2, 1.0, 1.0, 0)
            rejected = False
        except PerturbationError:
            rejected = True
        checks.append(("T = 13 rejected", rejected))
        checks.append(("T = 14 accepted", c_t_budget(14, 3, 3, 2, 1.0, 1.0, 0) > 0))
        norms, tails = [], True
        for T in (14, 16, 20, 30):
            seq = perturbation_sequence(T, levels=6)
            norms.append(displacement_cr_norm(seq.composite, 3))
            for a, b in ((0, 6), (2, 6), (4, 6)):
                measured, bound = cauchy_tail_check(seq, a, b)
                tails &= measured <= bound
        checks.append(("norms decreasing", all(b < a for a, b in zip(norms, norms[1:]))))
        checks.append(("Cauchy tails", tails))
        print(f"  threshold {thr:.4f}; C^3 norms {[f'{x:.3g}' for x in norms]}")


def test_09_constant_ladder():
    with criterion(9, "ladder recurrence, half-power bound, z0", 1.0) as checks:
        model = ChainModel()
        zc = z0_feasible(model.omega, model.lam, model.sigma, model.eta)
        args = (model.omega, model.lam, model.sigma, model.eta)
        checks.append(("z0 satisfies eta condition", eta_condition(zc.z0, *args)))
        checks.append(("z0 - 1 violates eta condition", not eta_condition(zc.z0 - 1, *args)))
        for name, sw in (("constant", ()), ("one switch", (10,)), ("geometric", (8, 16))):
            c = chain_constants(Schedule(zc.z0, sw), model, 31)
            worst = max(c.recurrence_residual(k) for k in range(1, 31))
            checks.append((f"{name} recurrence", worst <= 1e-10))
            ks = half_power_threshold(c, 30)
            checks.append((f"{name} k_* found", ks is not None))
            if ks is not None:
                checks.append((f"{name} half-power from k_*={ks}",
                               all(half_power_bound(c, k).ok for k in range(ks, 31))))


def test_10_rectangle_lemma():
    with criterion(10, "rectangle lemma over 20 rounds and eps sensitivity", 60.0) as checks:
        st = default_setup(span=20)
        rep = verify_rectangle_lemma(st.chain)
        checks.append(("20 consecutive rounds", len(rep.rows) >= 20))
        checks.append(("positive margin", rep.all_passed and rep.min_margin > 0))
        bad = default_setup(span=20, eps_factor=10.0, k0=st.k0)
        checks.append(("eps x 10 fails", not verify_rectangle_lemma(bad.chain).all_passed))
        print(f"  k0 = {st.k0}, eps = {st.eps:.4g}, min margin {rep.min_margin:.3f}")


def test_11_wandering():
    with criterion(11, "wandering rectangle and two-sheet transfer", 120.0) as checks:
        st = default_setup(span=8)
        rep = verify_wandering(ChainMap(st.chain), st.k0, rounds=5)
        checks.append(("pairwise disjoint", rep.pairwise_disjoint))
        checks.append(("diameters decreasing", rep.diameters_decreasing))
        checks.append(("inside rectangles", rep.within_rectangles))
        checks.append(("visits p and p_hat", rep.visits_both))
        lift = verify_wandering(TwoSheetLift(ChainMap(st.chain)), st.k0, rounds=5)
        checks.append(("transfer to the period-2 lift", lift.passed and lift.period == 2))
        print(f"  horizon {rep.horizon} iterates from k0 = {st.k0}")


def test_12_historic():
    with criterion(12, "historic averages under geometric switches", 120.0) as checks:
        z0 = 3
        nu0, nu1 = nu_targets(z0, (0.0, 0.0), (2.0, 0.0))
        checks.append(("target weights", (nu0.weight((0.0, 0.0)), nu1.weight((0.0, 0.0))) == (0.75, 0.8)))
        sw = tuple(math.ceil(8 * 2.0 ** a - 1e-9) for a in range(12))
        rep = historic_detect(schedule_from_switches(z0, sw), sw[-1], checkpoints_at=sw, tolerance=0.05)
        checks.append(("even/odd within 0.05", max(rep.final_to_targets) <= 0.05))
        checks.append(("separated by half d(nu0, nu1)", rep.min_inter_cluster >= 0.5 * rep.target_distance))
        checks.append(("historic verdict", rep.historic))
        ctrl = historic_detect(schedule_from_switches(z0, ()), sw[-1], checkpoints_at=sw, tolerance=0.05)
        checks.append(("constant schedule single limit", not ctrl.historic and ctrl.dist_nu0[-1] <= 0.05))


def test_13_renormalization():
    with criterion(13, "renormalization defect", 60.0) as checks:
        exact = exact_renorm_model()
        checks.append(("exact model <= 1e-8",
                       all(renorm_defect(exact, n, -1.0) <= 1e-8 for n in range(3, 9))))
        pert = perturbed_renorm_model()
        d = [renorm_defect(pert, n, -1.0) for n in range(3, 9)]
        checks.append(("perturbed nonincreasing within 10%", all(b <= 1.1 * a for a, b in zip(d, d[1:]))))
        print(f"  perturbed defects n=3..8: {[f'{x:.3g}' for x in d]}")

