"""Constant ladders, rectangle chains and direct wandering checks.

The chain lives on an idealized surface model assembled from charts: a tangency chart
`U`, four linear saddle boxes (`H` for the bridge return, `P` near the saddle p, `Phat`
near the second saddle, `T` for the transit word) and short corridors.  Each piece of the
map is affine or, on the way back into `U`, a quadratic fold.  A round of the chain is

    U -> (N0) -> H^(i_hat) -> (N1) -> P^(z k^2) -> Phat^(k^2) -> T^(n_hat + k) -> (N2) -> U

and its centers are solved backwards so that every stay has the prescribed length.
Heights shrink like b_k, which underflows doubles by k ~ 10, so ladders are kept as
logarithms and geometry runs in private mpmath contexts with enough digits.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import mpmath
import numpy as np
from mpmath.ctx_iv import MPIntervalContext
from scipy.optimize import bisect


class ChainError(ValueError):
    """A precondition of the chain construction does not hold."""


class EnclosureError(ArithmeticError):
    """An enclosure straddles two pieces of the map or leaves every chart."""

    def __init__(self, message: str, index: int) -> None:
        super().__init__(f"step {index}: {message}")
        self.index = index


# ---------------------------------------------------------------- choice of z0


def eta1_residual(eta1: float, eta: float) -> float:
    return 4.0 / (2.0 - (1.0 + eta1) ** 2) - 1.0 / (1.0 + eta1) - 2.0 - (1.0 + eta)


def solve_eta1(eta: float) -> float:
    """Unique root in (0, sqrt 2 - 1); the left side increases from 1 to infinity."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    hi = math.sqrt(2.0) - 1.0
    lo_val = eta1_residual(0.0, eta)
    # walk the upper end inwards until the residual is finite and positive
    top = hi * (1 - 1e-12)
    if not lo_val < 0 < eta1_residual(top, eta):
        raise ValueError("no root bracketed")
    return bisect(eta1_residual, 0.0, top, args=(eta,), xtol=1e-17, rtol=1e-15, maxiter=400)


def eta_condition(z: int, omega: float, lam: float, sigma: float, eta: float) -> bool:
    """omega^4 (lam sigma^(1+eta))^z < 1, compared in logs."""
    return 4 * math.log(omega) + z * (math.log(lam) + (1 + eta) * math.log(sigma)) < 0


def growth_condition(z: int, eta1: float) -> bool:
    return z + 1 <= (1 + eta1) * z


@dataclass(frozen=True)
class Z0Choice:
    z0: int
    eta1: float
    z0_eta: int      # smallest z with the omega^4 condition
    z0_growth: int   # smallest z with z + 1 <= (1 + eta1) z
    binding: str     # "eta", "growth" or "both"


def z0_feasible(omega: float, lam: float, sigma: float, eta: float) -> Z0Choice:
    """Smallest z0 satisfying both the growth and the omega^4 conditions."""
    contraction = math.log(lam) + (1 + eta) * math.log(sigma)
    if contraction >= 0:
        raise ValueError(f"lam*sigma^(1+eta) = {math.exp(contraction):.6g} is not < 1")
    eta1 = solve_eta1(eta)
    z_eta = max(1, math.floor(4 * math.log(omega) / -contraction))
    while z_eta > 1 and eta_condition(z_eta - 1, omega, lam, sigma, eta):
        z_eta -= 1
    while not eta_condition(z_eta, omega, lam, sigma, eta):
        z_eta += 1
    z_gr = max(1, math.floor(1 / eta1))
    while z_gr > 1 and growth_condition(z_gr - 1, eta1):
        z_gr -= 1
    while not growth_condition(z_gr, eta1):
        z_gr += 1
    z0 = max(z_eta, z_gr)
    binding = "both" if z_eta == z_gr else ("eta" if z_eta > z_gr else "growth")
    return Z0Choice(z0, eta1, z_eta, z_gr, binding)


# ---------------------------------------------------------------- schedules


@dataclass(frozen=True)
class Schedule:
    """z_k = z0 up to the first switch, then alternating blocks of z0 + 1 and z0."""

    z0: int
    switches: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.z0 < 1:
            raise ValueError("z0 must be positive")
        s = tuple(int(k) for k in self.switches)
        if any(k < 1 for k in s) or any(b <= a for a, b in zip(s, s[1:])):
            raise ValueError(f"switch indices must be positive and strictly increasing: {s}")
        object.__setattr__(self, "switches", s)

    def z(self, k: int) -> int:
        if k < 1:
            raise ValueError("schedules are indexed from k = 1")
        crossed = sum(1 for a in self.switches if a < k)
        return self.z0 + crossed % 2

    def entries(self, K: int) -> tuple[int, ...]:
        return tuple(self.z(k) for k in range(1, K + 1))

    @property
    def is_constant(self) -> bool:
        return not self.switches


# ---------------------------------------------------------------- generation sequences


Poly = tuple[float, float, float]  # c2 j^2 + c1 j + c0


def _poly(c: Poly, j: float) -> float:
    return c[0] * j * j + c[1] * j + c[2]


@dataclass(frozen=True)
class Generations:
    """Return-time generations i_hat_k and n_hat_{k+1}, with polynomial envelopes.

    The envelopes bound the sequences for every k >= 1 and certify the geometric
    tails of the ladder series; a sequence outgrowing its envelope is rejected.
    """

    i_hat: Callable[[int], int]
    n_hat_next: Callable[[int], int]
    i_envelope: Poly
    n_envelope: Poly
    horizon: int | None = None  # last k available, None for unbounded
    label: str = "custom"

    @classmethod
    def linear(cls, i_slope: int = 3, i_offset: int = 0, n_slope: int = 2,
               n_offset: int = 0) -> "Generations":
        if min(i_slope, n_slope) < 0:
            raise ValueError("slopes must be non-negative")
        return cls(lambda k: i_slope * k + i_offset, lambda k: n_slope * k + n_offset,
                   (0.0, float(i_slope), float(max(i_offset, 0))),
                   (0.0, float(n_slope), float(max(n_offset, 0))),
                   None, f"linear({i_slope}k+{i_offset}, {n_slope}k+{n_offset})")

    @classmethod
    def tabulated(cls, i_hat: Sequence[int], n_hat_next: Sequence[int]) -> "Generations":
        """Finite tables indexed from k = 1, e.g. from the critical-chain selection."""
        n = min(len(i_hat), len(n_hat_next))
        if n < 2:
            raise ValueError("tables too short")
        iv, nv = tuple(int(x) for x in i_hat[:n]), tuple(int(x) for x in n_hat_next[:n])

        def env(vals: tuple[int, ...]) -> Poly:
            return (0.0, max(v / k for k, v in enumerate(vals, 1)), 0.0)

        return cls(lambda k: iv[k - 1], lambda k: nv[k - 1], env(iv), env(nv), n, "tabulated")

    def check(self, k: int) -> None:
        if self.horizon is not None and k > self.horizon:
            raise ChainError(f"generation table ends at k = {self.horizon}; needed k = {k}")
        i, n = self.i_hat(k), self.n_hat_next(k)
        if i < 1 or n < 0:
            raise ChainError(f"generations at k = {k} out of range: i_hat = {i}, n_hat = {n}")
        if i > _poly(self.i_envelope, k) + 1e-9 or n > _poly(self.n_envelope, k) + 1e-9:
            raise ChainError(f"tail bound not achievable: generations outgrow their envelope at k = {k}")


def bracket(gens: Generations, k: int) -> int:
    """<k> = n_hat_{k+1} + k^2 + k."""
    return gens.n_hat_next(k) + k * k + k


def _weighted_tail(env: Poly, n: int) -> float:
    """sum_{i >= 0} env(n + i) 2^-i in closed form."""
    c2, c1, c0 = env
    return c2 * (2 * n * n + 4 * n + 6) + c1 * (2 * n + 2) + 2 * c0


def series_truncation(term: Callable[[int], int], k: int, horizon: int) -> Fraction:
    """sum_{i=0}^{horizon} term(k + i) / 2^i, exactly."""
    return sum((Fraction(term(k + i), 2 ** i) for i in range(horizon + 1)), Fraction(0))


# ---------------------------------------------------------------- constant ladder


@dataclass(frozen=True)
class LadderRow:
    k: int
    z: int
    i_hat: int
    n_hat_next: int
    bracket: int
    p: float
    q: float
    r: float
    log_b: float
    m: int
    m_hat: int | None  # None below k0
    horizon: int


@dataclass(frozen=True)
class ChainConstants:
    eps: float
    m: int
    omega: float
    lam: float
    sigma: float
    eta: float
    N0: int
    N1: int
    N2: int
    k0: int
    tail_tol: float
    rows: tuple[LadderRow, ...]
    schedule: Schedule = field(repr=False)
    generations: Generations = field(repr=False)

    @property
    def q_base(self) -> float:
        return 5.0 * 2.0 ** (self.m - 3)

    def row(self, k: int) -> LadderRow:
        if not 1 <= k <= len(self.rows):
            raise ChainError(f"ladder computed for k = 1..{len(self.rows)}; asked k = {k}")
        return self.rows[k - 1]

    def log_b(self, k: int) -> float:
        return self.row(k).log_b

    def log10_b(self, k: int) -> float:
        return self.row(k).log_b / math.log(10)

    def recurrence_residual(self, k: int) -> float:
        """Relative error of b_{k+1} against eps^-1 q^(2 i_hat) omega^(2<k>) sigma^(2 z k^2) b_k^2."""
        a, b = self.row(k), self.row(k + 1)
        rhs = math.fsum([-math.log(self.eps), 2 * a.i_hat * math.log(self.q_base),
                         2 * a.bracket * math.log(self.omega),
                         2 * a.z * a.k * a.k * math.log(self.sigma), 2 * a.log_b])
        return abs(math.expm1(b.log_b - rhs))


def _ladder_terms(schedule: Schedule, gens: Generations):
    return (gens.i_hat, lambda j: bracket(gens, j), lambda j: schedule.z(j) * j * j)


def chain_constants(schedule: Schedule, model: "ChainModel", K: int, tail_tol: float = 1e-13,
                    generations: Generations | None = None, eps: float = 1.0,
                    k0: int = 1, max_horizon: int = 4000) -> ChainConstants:
    """Ladders p_k, q_k, r_k, b_k, m_k and m_hat_k for k = 1..K."""
    gens = generations or Generations.linear()
    if eps <= 0 or tail_tol <= 0:
        raise ValueError("eps and tail_tol must be positive")
    zenv: Poly = (float(schedule.z0 + 1), 0.0, 0.0)
    benv: Poly = (gens.n_envelope[0] + 1, gens.n_envelope[1] + 1, gens.n_envelope[2])
    envs = (gens.i_envelope, benv, zenv)
    terms = _ladder_terms(schedule, gens)
    lq, lw, ls = math.log(model.q), math.log(model.omega), math.log(model.sigma)
    rows: list[LadderRow] = []
    m_hat = 0
    for k in range(1, K + 1):
        # horizon: first I whose certified remainder is below tail_tol for all three series
        I = 0
        while max(_weighted_tail(e, k + I + 1) / 2 ** (I + 1) for e in envs) >= tail_tol:
            I += 1
            if I > max_horizon:
                raise ChainError(f"tail bound not achievable at k = {k}")
        for j in range(k, k + I + 1):
            gens.check(j)
        p, qq, r = (float(series_truncation(t, k, I)) for t in terms)
        log_b = math.fsum([math.log(eps), -p * lq, -qq * lw, -r * ls])
        z = schedule.z(k)
        br = bracket(gens, k)
        m_k = model.N2 + z * k * k + br + model.N1 + gens.i_hat(k) + model.N0
        mh = None
        if k >= k0:
            m_hat += m_k
            mh = m_hat
        rows.append(LadderRow(k, z, gens.i_hat(k), gens.n_hat_next(k), br, p, qq, r, log_b,
                              m_k, mh, I))
    return ChainConstants(eps, model.m, model.omega, model.lam, model.sigma, model.eta,
                          model.N0, model.N1, model.N2, k0, tail_tol, tuple(rows), schedule, gens)


def round_length(N0: int, N1: int, N2: int, z: int, k: int, i_hat: int, n_hat_next: int) -> int:
    return N2 + z * k * k + (n_hat_next + k * k + k) + N1 + i_hat + N0


@dataclass(frozen=True)
class HalfPowerResult:
    k: int
    first_lhs: float   # log b_k^(1/2)
    first_rhs: float
    second_lhs: float  # <k>/2 + 3/4 q_{k+1}
    second_rhs: float  # 4 k^2
    bracket_ok: bool   # <k> <= 2 k^2

    @property
    def first_ok(self) -> bool:
        return self.first_lhs <= self.first_rhs + 1e-9 * max(1.0, abs(self.first_rhs))

    @property
    def second_ok(self) -> bool:
        return self.second_lhs < self.second_rhs

    @property
    def ok(self) -> bool:
        return self.first_ok and self.second_ok and self.bracket_ok


def half_power_bound(c: ChainConstants, k: int) -> HalfPowerResult:
    a, b = c.row(k), c.row(k + 1)
    lq, lw, ls = math.log(c.q_base), math.log(c.omega), math.log(c.sigma)
    rhs = math.fsum([-0.5 * math.log(c.eps), (-a.i_hat / 2 + 0.75 * b.p) * lq,
                     (-a.bracket / 2 + 0.75 * b.q) * lw, (1 + c.eta) * a.z * k * k * ls, b.log_b])
    return HalfPowerResult(k, 0.5 * a.log_b, rhs, a.bracket / 2 + 0.75 * b.q, 4.0 * k * k,
                           a.bracket <= 2 * k * k)


def half_power_threshold(c: ChainConstants, k_max: int | None = None) -> int | None:
    """Smallest k_* with half_power_bound passing on every k in [k_*, k_max]."""
    k_max = k_max or len(c.rows) - 1
    k_star = None
    for k in range(k_max, 0, -1):
        if not half_power_bound(c, k).ok:
            break
        k_star = k
    return k_star


# ---------------------------------------------------------------- idealized model


@dataclass(frozen=True)
class ChainModel:
    """Charts and affine pieces of the idealized horseshoe-plus-fold surface map.

    Box charts have coordinates (u, v) with the saddle at the origin: u is contracted,
    v expanded.  A point with v >= v_out sits in the exit zone and the next step
    carries it to the following chart through a connector
        (u, v) -> (u_in + gamma u, gain (v - v_ref) + shear u).
    The fold from the transit exit into U is
        (u, v) -> (kappa1 s, kappa2 s^2 + kappa3 u),  s = v - v_ref,
    so the image of a vertical segment is a parabola with vertex on the line xi = 0.
    """

    lam: float = 0.1
    sigma: float = 1.2
    phat_rate: float = 10.0
    transit_rate: float = 10.0
    omega: float = 10.0
    nu: float | None = None
    eta: float = 4.0
    m: int = 3
    N0: int = 1
    N1: int = 1
    N2: int = 1
    u_in: float = 0.5
    v_out: float = 0.5
    entry_gain: tuple[float, float] = (0.5, 9.0)  # U -> H: (xi, eta) scale factors
    gains: tuple[float, float, float] = (9.0, 9.0, 9.0)  # unstable gains of E1, E2, E3
    gamma: float = 0.5
    shears: tuple[float, float] = (0.3, 0.3)  # u -> v coupling of E2, E3
    kappa: tuple[float, float, float] = (1.0, 1.0, 1.0)
    zeta: float = 0.5
    chart_radius: float = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.lam < 1 < self.sigma:
            raise ValueError("need 0 < lam < 1 < sigma")
        if min(self.phat_rate, self.transit_rate) <= 1:
            raise ValueError("box rates must exceed 1")
        if min(self.N0, self.N1, self.N2) < 1:
            raise ValueError("corridor lengths must be at least 1")
        if self.nu is None:
            object.__setattr__(self, "nu", 1.0 / self.omega)
        if min(self.gains) <= 0 or self.gamma <= 0 or self.kappa[0] <= 0 or self.kappa[2] <= 0:
            raise ValueError("gains must be positive")

    @property
    def q(self) -> float:
        return 5.0 * 2.0 ** (self.m - 3)

    def rates(self, box: str) -> tuple[float, float]:
        """(stable contraction, unstable expansion) of a box chart."""
        return {"H": (1 / self.q, self.q), "P": (self.lam, self.sigma),
                "Phat": (1 / self.phat_rate, self.phat_rate),
                "T": (1 / self.transit_rate, self.transit_rate)}[box]

    def v_ref(self, box: str) -> float:
        """Reference exit height, mid-way (geometrically) through the exit zone."""
        return self.v_out * math.sqrt(self.rates(box)[1])

    def jacobians(self) -> dict[str, np.ndarray]:
        """Jacobian of every piece; the fold is sampled at both ends of its exit zone."""
        a, c = self.entry_gain
        k1, k2, k3 = self.kappa
        out = {"A0": np.diag([a, c]), "corridor": np.eye(2)}
        for box in ("H", "P", "Phat", "T"):
            out[box] = np.diag(self.rates(box))
        g1, g2, g3 = self.gains
        s2, s3 = self.shears
        out["E1"] = np.array([[self.gamma, 0.0], [0.0, g1]])
        out["E2"] = np.array([[self.gamma, 0.0], [s2, g2]])
        out["E3"] = np.array([[self.gamma, 0.0], [s3, g3]])
        rate = self.transit_rate
        for tag, s in (("fold_lo", self.v_out - self.v_ref("T")),
                       ("fold_hi", rate * self.v_out - self.v_ref("T"))):
            out[tag] = np.array([[0.0, k1], [k3, 2 * k2 * s]])
        return out

    def derivative_bounds(self) -> tuple[float, float]:
        """(sup |Df|, sup |Df^-1|) over the pieces, from singular values."""
        sup_f = sup_inv = 0.0
        for J in self.jacobians().values():
            sv = np.linalg.svd(J, compute_uv=False)
            sup_f, sup_inv = max(sup_f, sv[0]), max(sup_inv, 1 / sv[-1])
        return float(sup_f), float(sup_inv)

    def omega_admissible(self) -> bool:
        """omega >= max(1/nu, sup|Df|, sup|Df^-1|)."""
        f, inv = self.derivative_bounds()
        return self.omega >= max(1 / self.nu, f, inv) * (1 - 1e-12)


def _box_order() -> tuple[str, ...]:
    return ("H", "P", "Phat", "T")


# ---------------------------------------------------------------- rounds and chains


@dataclass(frozen=True)
class Round:
    """Stay lengths and the solved center data of one round k -> k + 1."""

    k: int
    z: int
    stays: dict            # box -> number of positions in it
    eta: object            # height of the center x_k in U (mp)
    exit_u: dict           # box -> u at its exit position along the center orbit
    entry_v: dict          # box -> entry height along the center orbit
    landing: tuple         # fold image of the center orbit, before the shift
    length: int


def _solve_round(model: ChainModel, ctx, k: int, z: int, i_hat: int, n_hat_next: int) -> Round:
    stays = {"H": i_hat, "P": z * k * k, "Phat": k * k, "T": n_hat_next + k}
    if min(stays.values()) < 2:
        raise ChainError(f"round {k}: every box stay needs at least two positions, got {stays}")
    mpf = ctx.mpf
    gam = mpf(model.gamma)
    # stable coordinates run forwards and do not feel the heights
    exit_u = {}
    u = mpf(model.u_in)
    for box in _box_order():
        s, _ = model.rates(box)
        exit_u[box] = u * mpf(s) ** (stays[box] - 1)
        u = mpf(model.u_in) + gam * exit_u[box]
    # heights run backwards from the fold vertex
    g1, g2, g3 = (mpf(g) for g in model.gains)
    sh2, sh3 = (mpf(x) for x in model.shears)
    entry_v = {}
    v_exit = mpf(model.v_ref("T"))
    entry_v["T"] = v_exit / mpf(model.rates("T")[1]) ** (stays["T"] - 1)
    nxt = {"Phat": ("T", g3, sh3), "P": ("Phat", g2, sh2), "H": ("P", g1, mpf(0))}
    for box in ("Phat", "P", "H"):
        after, gain, shear = nxt[box]
        v_exit = mpf(model.v_ref(box)) + (entry_v[after] - shear * exit_u[box]) / gain
        entry_v[box] = v_exit / mpf(model.rates(box)[1]) ** (stays[box] - 1)
    for box in _box_order():
        rate = model.rates(box)[1]
        h = entry_v[box]
        top = h * mpf(rate) ** (stays[box] - 1)
        if not (h > 0 and top >= model.v_out and top / rate < model.v_out and top < rate * model.v_out):
            raise ChainError(f"round {k}: center orbit misses the exit zone of {box}")
    eta = entry_v["H"] / mpf(model.entry_gain[1])
    landing = (mpf(0), mpf(model.kappa[2]) * exit_u["T"])
    length = model.N0 + model.N1 + model.N2 + sum(stays.values())
    return Round(k, z, stays, eta, exit_u, entry_v, landing, length)


@dataclass(frozen=True)
class RectangleChain:
    model: ChainModel
    constants: ChainConstants
    k_first: int
    k_last: int      # last k with a rectangle; transitions run k_first..k_last-1
    dps: int
    rounds: dict     # k -> Round
    half_w: dict     # k -> b_k^(1/2)
    half_h: dict     # k -> b_k
    shifts: dict     # k -> translation t_k applied after the fold of round k
    ctx: object = field(repr=False, compare=False)

    def center(self, k: int) -> tuple:
        return (self.ctx.mpf(0), self.rounds[k].eta)

    def rectangle(self, k: int) -> tuple:
        """(xi_lo, xi_hi, eta_lo, eta_hi) of R_k."""
        e = self.rounds[k].eta
        return (-self.half_w[k], self.half_w[k], e - self.half_h[k], e + self.half_h[k])

    def window(self, k: int) -> tuple:
        """Pre-shift window whose translate by t_k is R_{k+1}."""
        x0, x1, y0, y1 = self.rectangle(k + 1)
        t = self.shifts[k]
        return (x0 - t[0], x1 - t[0], y0 - t[1], y1 - t[1])

    # -- closed-form transition g_k = f^(m_k) on points

    def transition(self, k: int, xi, eta, shifted: bool = True) -> tuple:
        mdl, ctx = self.model, self.ctx
        rd = self.rounds[k]
        mpf = ctx.mpf
        a, c = mdl.entry_gain
        u = mpf(mdl.u_in) + mpf(a) * xi
        v = mpf(c) * eta
        conn = {"H": (mpf(mdl.gains[0]), mpf(0)), "P": (mpf(mdl.gains[1]), mpf(mdl.shears[0])),
                "Phat": (mpf(mdl.gains[2]), mpf(mdl.shears[1]))}
        for box in _box_order():
            s, e = mdl.rates(box)
            n = rd.stays[box] - 1
            u, v = u * mpf(s) ** n, v * mpf(e) ** n
            if box != "T":
                gain, shear = conn[box]
                u, v = (mpf(mdl.u_in) + mpf(mdl.gamma) * u,
                        gain * (v - mpf(mdl.v_ref(box))) + shear * u)
        k1, k2, k3 = (mpf(x) for x in mdl.kappa)
        s = v - mpf(mdl.v_ref("T"))
        x, y = k1 * s, k2 * s * s + k3 * u
        if shifted:
            t = self.shifts[k]
            x, y = x + t[0], y + t[1]
        return x, y

    def exit_gradient(self, k: int) -> tuple:
        """(ds/dxi, ds/deta) of the transit-exit offset, propagated through the legs.

        The round is affine in (xi, eta), so the tangent is exact and avoids the
        cancellation a difference quotient suffers once b_k is far below 10^-dps.
        """
        mdl, mpf = self.model, self.ctx.mpf
        rd = self.rounds[k]
        a, c = mdl.entry_gain
        du, dv = (mpf(a), mpf(0)), (mpf(0), mpf(c))
        conn = {"H": (mdl.gains[0], 0.0), "P": (mdl.gains[1], mdl.shears[0]),
                "Phat": (mdl.gains[2], mdl.shears[1])}
        for box in _box_order():
            s, e = mdl.rates(box)
            n = rd.stays[box] - 1
            fs, fe = mpf(s) ** n, mpf(e) ** n
            du, dv = (du[0] * fs, du[1] * fs), (dv[0] * fe, dv[1] * fe)
            if box != "T":
                gain, shear = (mpf(x) for x in conn[box])
                g = mpf(mdl.gamma)
                du, dv = ((g * du[0], g * du[1]),
                          (gain * dv[0] + shear * du[0], gain * dv[1] + shear * du[1]))
        return dv

    def exit_offset(self, k: int, xi, eta):
        """s = v - v_ref at the transit exit: zero exactly on the pulled-back curve L_k."""
        mdl, mpf = self.model, self.ctx.mpf
        x, _ = self.transition(k, xi, eta, shifted=False)
        return x / mpf(mdl.kappa[0])


def _chain_dps(constants: ChainConstants, k_last: int) -> int:
    worst = max(-constants.log10_b(k) for k in range(1, k_last + 1))
    return int(40 + math.ceil(max(worst, 0.0)) * 1.05)


def build_chain(model: ChainModel, schedule: Schedule, constants: ChainConstants,
                k_range: tuple[int, int]) -> RectangleChain:
    """Rectangles R_k for k in [k_range[0], k_range[1] + 1] and the shifts closing g_k."""
    k_first, k_last = k_range[0], k_range[1] + 1
    if k_first < 1 or k_last <= k_first:
        raise ValueError("need 1 <= k_first <= k_last")
    constants.row(k_last)
    ctx = mpmath.MPContext()
    ctx.dps = _chain_dps(constants, k_last)
    rounds, hw, hh, shifts = {}, {}, {}, {}
    for k in range(k_first, k_last + 1):
        row = constants.row(k)
        rounds[k] = _solve_round(model, ctx, k, schedule.z(k), row.i_hat, row.n_hat_next)
        b = ctx.exp(ctx.mpf(row.log_b))
        hw[k], hh[k] = ctx.sqrt(b), b
        if hw[k] >= model.chart_radius or abs(rounds[k].eta) + hh[k] >= model.chart_radius:
            raise ChainError(f"rectangle R_{k} exits the tangency chart")
        if rounds[k].length != row.m:
            raise ChainError(f"round {k} has length {rounds[k].length}, ladder says {row.m}")
    for k in range(k_first, k_last):
        lx, ly = rounds[k].landing
        shifts[k] = (ctx.mpf(0) - lx, rounds[k + 1].eta - ly)
    chain = RectangleChain(model, constants, k_first, k_last, ctx.dps, rounds, hw, hh, shifts, ctx)
    # rectangles and windows must be pairwise disjoint for the global map to make sense
    pieces = sorted([chain.rectangle(k) for k in range(k_first, k_last + 1)] +
                    [chain.window(k) for k in range(k_first, k_last)], key=lambda r: r[2])
    for lo, hi in zip(pieces, pieces[1:]):
        if hi[2] <= lo[3]:
            raise ChainError("rectangles or landing windows overlap in the tangency chart")
    return chain


# ---------------------------------------------------------------- epsilon and k0


def transit_gain_log(model: ChainModel, k: int, z: int, i_hat: int, n_hat_next: int) -> float:
    """log of d s / d eta: total unstable stretch from U to the transit exit."""
    stays = {"H": i_hat, "P": z * k * k, "Phat": k * k, "T": n_hat_next + k}
    out = math.log(model.entry_gain[1]) + sum(math.log(g) for g in model.gains)
    for box in _box_order():
        out += (stays[box] - 1) * math.log(model.rates(box)[1])
    return out


def tune_epsilon(model: ChainModel, schedule: Schedule, k_range: tuple[int, int],
                 generations: Generations | None = None, safety: float = 0.8) -> float:
    """eps making g_k(J_k) fill a fraction `safety` of 1/2 R_{k+1} at the tightest k.

    Since every b_k is proportional to eps, the fold image of J_k has horizontal extent
    proportional to eps^(1/2) b_{k+1}^(1/2) and vertical extent proportional to
    eps b_{k+1}; both ratios are computed at eps = 1 and inverted.
    """
    if not 0 < safety < 1:
        raise ValueError("safety must be in (0, 1)")
    gens = generations or Generations.linear()
    c = chain_constants(schedule, model, k_range[1] + 2, generations=gens, eps=1.0)
    k1, k2, _ = model.kappa
    best = math.inf
    for k in range(k_range[0], k_range[1] + 1):
        a, b = c.row(k), c.row(k + 1)
        lg = transit_gain_log(model, k, a.z, a.i_hat, a.n_hat_next)
        rho = math.log(k1) + lg + a.log_b - 0.5 * b.log_b      # xi-extent / b_{k+1}^(1/2)
        par = math.log(k2) + 2 * (lg + a.log_b) - b.log_b        # parabola height / b_{k+1}
        best = min(best, -2 * (rho + math.log(2)), -(par + math.log(2)))
    return safety ** 2 * math.exp(best)


# ---------------------------------------------------------------- Rectangle Lemma


@dataclass(frozen=True)
class RectangleRow:
    k: int
    margin: float        # min over the boundary grid of the relative distance to the edge
    j_ratio: float       # max of |g_k(J_k) - x_{k+1}| measured in units of 1/2 R_{k+1}
    itinerary_ok: bool
    log10_b: float

    @property
    def passed(self) -> bool:
        return self.margin > 0 and self.itinerary_ok


@dataclass(frozen=True)
class RectangleReport:
    rows: tuple[RectangleRow, ...]
    eps: float

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def j_inside_half(self) -> bool:
        return all(r.j_ratio <= 1 for r in self.rows)

    @property
    def min_margin(self) -> float:
        return min(r.margin for r in self.rows)


def _boundary_grid(ctx, rect: tuple, n: int) -> list[tuple]:
    x0, x1, y0, y1 = rect
    side = n // 4
    ts = [ctx.mpf(i) / side for i in range(side)]
    pts = []
    for t in ts:
        pts.append((x0 + (x1 - x0) * t, y0))
        pts.append((x1, y0 + (y1 - y0) * t))
        pts.append((x1 - (x1 - x0) * t, y1))
        pts.append((x0, y1 - (y1 - y0) * t))
    return pts


def _exit_zone_ok(chain: RectangleChain, k: int, xi, eta) -> bool:
    """Along the leg maps, the point is below v_out before each exit and in the zone at it."""
    mdl, ctx = chain.model, chain.ctx
    mpf = ctx.mpf
    rd = chain.rounds[k]
    a, c = mdl.entry_gain
    u, v = mpf(mdl.u_in) + mpf(a) * xi, mpf(c) * eta
    conn = {"H": (mdl.gains[0], 0.0), "P": (mdl.gains[1], mdl.shears[0]),
            "Phat": (mdl.gains[2], mdl.shears[1])}
    for box in _box_order():
        s, e = mdl.rates(box)
        n = rd.stays[box] - 1
        u, v = u * mpf(s) ** n, v * mpf(e) ** n
        if not (v >= mdl.v_out and v / e < mdl.v_out and v < e * mdl.v_out):
            return False
        if box != "T":
            g, sh = conn[box]
            u, v = mpf(mdl.u_in) + mpf(mdl.gamma) * u, mpf(g) * (v - mpf(mdl.v_ref(box))) + mpf(sh) * u
            if v <= 0:
                return False
    return True


def verify_rectangle_lemma(chain: RectangleChain, k_range: tuple[int, int] | None = None,
                           grid: int = 400, j_points: int = 101) -> RectangleReport:
    """Boundary-grid images of R_k under g_k against Int R_{k+1}, plus the J_k segment."""
    ctx = chain.ctx
    lo, hi = k_range or (chain.k_first, chain.k_last - 1)
    rows = []
    for k in range(lo, hi + 1):
        _, _, y0, y1 = target = chain.rectangle(k + 1)
        w, h = chain.half_w[k + 1], chain.half_h[k + 1]
        ctr = chain.rounds[k + 1].eta
        margin = math.inf
        path_ok = True
        for xi, eta in _boundary_grid(ctx, chain.rectangle(k), grid):
            x, y = chain.transition(k, xi, eta)
            m = min(1 - abs(x) / w, 1 - abs(y - ctr) / h)
            margin = min(margin, float(m))
            path_ok = path_ok and _exit_zone_ok(chain, k, xi, eta)
        eta_k, hk = chain.rounds[k].eta, chain.half_h[k]
        jr = 0.0
        for i in range(j_points):
            y = eta_k - hk + 2 * hk * ctx.mpf(i) / (j_points - 1)
            x, yy = chain.transition(k, ctx.mpf(0), y)
            jr = max(jr, float(abs(x) / (w / 2)), float(abs(yy - ctr) / (h / 2)))
        rows.append(RectangleRow(k, margin, jr, path_ok, chain.constants.log10_b(k)))
    return RectangleReport(tuple(rows), chain.constants.eps)


# ---------------------------------------------------------------- slopes and strips


@dataclass(frozen=True)
class SlopeRow:
    k: int
    slope: float          # measured |d eta / d xi| along L_k
    log10_slope: float
    log10_bound: float    # alpha^k (lam / sigma)^(z k^2)
    log10_domination: float  # slope / b_k^(1/2)


def slope_constant(model: ChainModel) -> float:
    """alpha >= 1 with slope(L_k) < alpha^k (lam/sigma)^(z k^2), from the leg factors."""
    a, c = model.entry_gain
    g1, g2, g3 = model.gains
    s2, s3 = model.shears
    coupling = abs(s2) + abs(s3) * model.gamma / g3
    return max(1.0 + 1e-9, 2 * (model.sigma / model.lam) * a * model.gamma * coupling / (c * g1 * g2))


def slope_rows(chain: RectangleChain, k_range: tuple[int, int] | None = None) -> tuple[SlopeRow, ...]:
    """Slopes of L_k, the level set s = 0 of the affine transit-exit offset."""
    ctx = chain.ctx
    lo, hi = k_range or (chain.k_first, chain.k_last - 1)
    alpha = slope_constant(chain.model)
    out = []
    for k in range(lo, hi + 1):
        ds_dxi, ds_deta = chain.exit_gradient(k)
        slope = abs(ds_dxi / ds_deta)
        z = chain.rounds[k].z
        l10 = float(ctx.log10(slope)) if slope > 0 else -math.inf
        bound = k * math.log10(alpha) + z * k * k * math.log10(chain.model.lam / chain.model.sigma)
        out.append(SlopeRow(k, float(slope), l10, bound, l10 - 0.5 * chain.constants.log10_b(k)))
    return tuple(out)


def diagonal_gamma(constants: ChainConstants, k_range: tuple[int, int]) -> float:
    """Largest gamma with b_k^(1/2) > gamma^k omega^(-k^2) sigma^(-z k^2) on the range."""
    best = math.inf
    for k in range(k_range[0], k_range[1] + 1):
        row = constants.row(k)
        val = 0.5 * row.log_b + k * k * math.log(constants.omega) + row.z * k * k * math.log(constants.sigma)
        best = min(best, val / k)
    return math.exp(best)


@dataclass(frozen=True)
class StripRow:
    k: int
    log_strip: float     # log of nu^(k^2) sigma^(-z k^2)
    log_band: float      # log half-height of N_k at the P entry
    contained: bool


def strip_rows(model: ChainModel, constants: ChainConstants,
               k_range: tuple[int, int]) -> tuple[StripRow, ...]:
    """Strip half-width against the P-entry band whose transit exit stays within zeta.

    The band is the set of entry heights whose exit offset s obeys |s| < zeta, shrunk by
    the largest shear drift over the unit width of the P chart.
    """
    out = []
    for k in range(k_range[0], k_range[1] + 1):
        row = constants.row(k)
        z = row.z
        lg = transit_gain_log(model, k, z, row.i_hat, row.n_hat_next)
        # stretch from the P entry on: drop the H leg and the U -> H and E1 gains
        lg -= math.log(model.entry_gain[1]) + math.log(model.gains[0]) + (row.i_hat - 1) * math.log(model.q)
        log_drift = (math.log(abs(model.shears[0]) or 1.0) + (z * k * k - 1) * math.log(model.lam / model.sigma)
                     + lg - math.log(model.gains[1]))
        drift = math.exp(min(log_drift, 700.0)) if model.shears[0] else 0.0
        if drift >= model.zeta:
            band = -math.inf
        else:
            band = math.log(model.zeta - drift) - lg
        strip = k * k * math.log(model.nu) - z * k * k * math.log(model.sigma)
        out.append(StripRow(k, strip, band, strip < band))
    return tuple(out)


# ---------------------------------------------------------------- the map on enclosures


def _short(v) -> str:
    return f"[{mpmath.nstr(v.a, 8)}, {mpmath.nstr(v.b, 8)}]"


_EXIT_NEXT = {"H": "C1", "P": "Phat", "Phat": "T", "T": "C2"}


class ChainMap:
    """The single map f of the model, with the chain's shifts on the landing windows.

    States are (chart, x, y); x, y are mpmath intervals in `self.iv`.  Corridor charts
    are named "C0.j", "C1.j", "C2.j" for j = 1..N.
    """

    period = 1

    def __init__(self, chain: RectangleChain) -> None:
        self.chain = chain
        self.model = chain.model
        self.iv = MPIntervalContext()
        self.iv.dps = chain.dps
        iv = self.iv
        self._windows = [(k, tuple(iv.mpf(e) for e in chain.window(k)),
                          tuple(iv.mpf(e) for e in chain.shifts[k]))
                         for k in range(chain.k_first, chain.k_last)]

    def box(self, rect: tuple, chart: str = "U") -> tuple:
        x0, x1, y0, y1 = rect
        return (chart, self.iv.mpf([x0, x1]), self.iv.mpf([y0, y1]))

    def _below(self, v, thr: float, index: int) -> bool:
        if v.b < thr:
            return True
        if v.a >= thr:
            return False
        raise EnclosureError(f"enclosure straddles an exit threshold ({_short(v)})", index)

    def step(self, state: tuple, index: int = 0) -> tuple:
        chart, x, y = state
        mdl, iv = self.model, self.iv
        if chart == "U":
            return self._leave_u(x, y) if mdl.N0 == 1 else ("C0.1", x, y)
        if chart in ("H", "P", "Phat", "T"):
            s, e = mdl.rates(chart)
            if self._below(y, mdl.v_out, index):
                return (chart, x * s, y * e)
            if y.b >= e * mdl.v_out:
                raise EnclosureError(f"enclosure overshoots the exit zone of {chart}", index)
            nxt = _EXIT_NEXT[chart]
            if nxt in ("C1", "C2"):
                return (nxt + ".1", x, y)
            gain, shear = {"Phat": (mdl.gains[1], mdl.shears[0]), "T": (mdl.gains[2], mdl.shears[1])}[nxt]
            return (nxt, mdl.u_in + mdl.gamma * x, gain * (y - mdl.v_ref(chart)) + shear * x)
        tag, j = chart.split(".")
        j = int(j)
        n = {"C0": mdl.N0 - 1, "C1": mdl.N1, "C2": mdl.N2}[tag]
        if j < n:
            return (f"{tag}.{j + 1}", x, y)
        if tag == "C0":
            return self._leave_u(x, y)
        if tag == "C1":
            return ("P", mdl.u_in + mdl.gamma * x, mdl.gains[0] * (y - mdl.v_ref("H")))
        return self._fold(x, y, index)

    def _leave_u(self, x, y) -> tuple:
        a, c = self.model.entry_gain
        v = c * y
        return ("H", self.model.u_in + a * x, v)

    def _fold(self, x, y, index: int) -> tuple:
        k1, k2, k3 = self.model.kappa
        s = y - self.model.v_ref("T")
        lx, ly = k1 * s, k2 * s ** 2 + k3 * x
        for k, (w0, w1, w2, w3), t in self._windows:
            if lx.a >= w0.a and lx.b <= w1.b and ly.a >= w2.a and ly.b <= w3.b:
                return ("U", lx + t[0], ly + t[1])
        raise EnclosureError(f"fold image ({_short(lx)}, {_short(ly)}) lies in no landing window", index)

    def chart_key(self, state: tuple) -> str:
        return state[0]

    def in_u(self, state: tuple) -> bool:
        return state[0] == "U"


class TwoSheetLift:
    """A map f on two copies of the model with f^2 = F on the first copy.

    Sheet 0 goes to sheet 1 by the affine map h, and sheet 1 returns through F o h^-1.
    The saddle of F becomes a point of period two for f.
    """

    def __init__(self, base: ChainMap, scale: tuple[float, float] = (2.0, 3.0),
                 offset: tuple[float, float] = (1.0, -1.0)) -> None:
        self.base = base
        self.iv = base.iv
        self.scale, self.offset = scale, offset
        self.period = 2 * base.period

    def box(self, rect: tuple, chart: str = "U") -> tuple:
        return (0,) + self.base.box(rect, chart)

    def step(self, state: tuple, index: int = 0) -> tuple:
        sheet, chart, x, y = state
        (ax, ay), (bx, by) = self.scale, self.offset
        if sheet == 0:
            return (1, chart, ax * x + bx, ay * y + by)
        back = (chart, (x - bx) / ax, (y - by) / ay)
        return (0,) + self.base.step(back, index)

    def chart_key(self, state: tuple) -> str:
        return f"{state[0]}:{state[1]}"

    def in_u(self, state: tuple) -> bool:
        return state[0] == 0 and state[1] == "U"


# ---------------------------------------------------------------- wandering


@dataclass(frozen=True)
class WanderingReport:
    k0: int
    horizon: int
    steps: int
    pairwise_disjoint: bool
    first_overlap: tuple[int, int] | None
    checkpoints: tuple[tuple[int, int, float, float], ...]  # (k, m_hat, log10 diam, log10 diam R)
    diameters_decreasing: bool
    within_rectangles: bool
    visits: tuple[tuple[int, int, int], ...]  # (round, steps in P, steps in Phat)
    visits_both: bool
    centers_off_stable: bool
    period: int

    @property
    def passed(self) -> bool:
        return (self.pairwise_disjoint and self.diameters_decreasing and self.within_rectangles
                and self.visits_both and self.centers_off_stable)


def _iv_diam(x, y) -> mpmath.mpf:
    return max(x.b - x.a, y.b - y.a)


def _disjoint_sweep(records: list) -> tuple[int, int] | None:
    """First overlapping pair among (key, xa, xb, ya, yb, index) records, or None."""
    groups: dict = {}
    for r in records:
        groups.setdefault(r[0], []).append(r)
    for recs in groups.values():
        recs.sort(key=lambda r: r[3])
        for i, a in enumerate(recs):
            for b in recs[i + 1:]:
                if b[3] > a[4]:
                    break
                if b[1] <= a[2] and a[1] <= b[2]:
                    return (min(a[5], b[5]), max(a[5], b[5]))
    return None


def verify_wandering(fmap: ChainMap | TwoSheetLift, k0: int, rounds: int = 5) -> WanderingReport:
    """Enclosures of f^i(Int R_k0) for 0 <= i <= H, H = period * m_hat_(k0+rounds)."""
    chain = fmap.base.chain if isinstance(fmap, TwoSheetLift) else fmap.chain
    if not (chain.k_first <= k0 and k0 + rounds < chain.k_last):
        raise ChainError(f"chain covers k = {chain.k_first}..{chain.k_last}; need {k0}..{k0 + rounds + 1}")
    per = fmap.period
    lengths = [chain.rounds[k].length for k in range(k0, k0 + rounds + 1)]
    horizon = per * sum(lengths)
    state = fmap.box(chain.rectangle(k0))
    records = []
    checkpoints = []
    visits = []
    boundary = per * lengths[0]
    rnd, inP, inPh = k0, 0, 0
    for i in range(horizon + 1):
        key = fmap.chart_key(state)
        x, y = state[-2], state[-1]
        records.append((key, x.a, x.b, y.a, y.b, i))
        chart = key.split(":")[-1]
        if chart == "P":
            inP += 1
        elif chart == "Phat":
            inPh += 1
        if i == boundary:
            visits.append((rnd, inP, inPh))
            inP = inPh = 0
            if not fmap.in_u(state):
                raise EnclosureError("orbit is not back in the tangency chart at a round end", i)
            rnd += 1
            d = _iv_diam(x, y)
            x0, x1, y0, y1 = chain.rectangle(rnd)
            inside = x.a > x0 and x.b < x1 and y.a > y0 and y.b < y1
            dR = max(x1 - x0, y1 - y0)
            checkpoints.append((rnd - 1, boundary, float(mpmath.log10(d)),
                                float(mpmath.log10(dR)), inside))
            if rnd - k0 < len(lengths):
                boundary += per * lengths[rnd - k0]
        if i < horizon:
            state = fmap.step(state, i + 1)
    overlap = _disjoint_sweep(records)
    decreasing = all(b[2] < a[2] for a, b in zip(checkpoints, checkpoints[1:]))
    inside = all(c[4] for c in checkpoints) and all(c[2] <= c[3] for c in checkpoints)
    # the stable manifold of p is v = 0 in P; center entry heights stay off it
    off_stable = all(chain.rounds[k].entry_v["P"] > 0 for k in range(k0, k0 + rounds + 1))
    return WanderingReport(k0, horizon, len(records), overlap is None, overlap,
                           tuple(c[:4] for c in checkpoints), decreasing, inside,
                           tuple(visits), all(p > 0 and q > 0 for _, p, q in visits),
                           off_stable, per)


# ---------------------------------------------------------------- assembly and reports


@dataclass(frozen=True)
class ChainSetup:
    model: ChainModel
    z0: Z0Choice
    schedule: Schedule
    generations: Generations
    eps: float
    constants: ChainConstants
    chain: RectangleChain
    k0: int


def select_k0(model: ChainModel, schedule: Schedule, generations: Generations, eps: float,
              k_min: int = 2, k_max: int = 40) -> int:
    """First k where the Rectangle Lemma margin is positive, slope domination is
    below 0.1 and half_power_bound passes."""
    c = chain_constants(schedule, model, k_max + 3, generations=generations, eps=eps)
    for k in range(k_min, k_max + 1):
        if not half_power_bound(c, k).ok:
            continue
        try:
            ch = build_chain(model, schedule, c, (k, k))
        except ChainError:
            continue
        if slope_rows(ch, (k, k))[0].log10_domination >= -1:
            continue
        if verify_rectangle_lemma(ch, (k, k), grid=40, j_points=11).all_passed:
            return k
    raise ChainError(f"no admissible k0 in [{k_min}, {k_max}]")


def default_setup(model: ChainModel | None = None, switches: Sequence[int] = (),
                  generations: Generations | None = None, span: int = 20,
                  eps: float | None = None, eps_factor: float = 1.0,
                  k0: int | None = None) -> ChainSetup:
    """Model, z0, schedule, tuned eps and a chain over [k0, k0 + span]."""
    model = model or ChainModel()
    gens = generations or Generations.linear()
    zc = z0_feasible(model.omega, model.lam, model.sigma, model.eta)
    sched = Schedule(zc.z0, tuple(switches))
    if eps is None:
        probe = k0 or 2
        # tune on a wide window so the choice does not depend on k0
        eps = tune_epsilon(model, sched, (probe, probe + span + 30), gens)
    if k0 is None:
        k0 = select_k0(model, sched, gens, eps)
    eps *= eps_factor
    c = chain_constants(sched, model, k0 + span + 3, generations=gens, eps=eps, k0=k0)
    chain = build_chain(model, sched, c, (k0, k0 + span))
    return ChainSetup(model, zc, sched, gens, eps, c, chain, k0)


def rectangle_report_json(rep: RectangleReport, extra: dict | None = None) -> str:
    body = {"eps": rep.eps, "all_passed": rep.all_passed, "j_inside_half": rep.j_inside_half,
            "rows": [{"k": r.k, "margin": r.margin, "j_ratio": r.j_ratio,
                      "itinerary_ok": r.itinerary_ok, "log10_b": r.log10_b, "passed": r.passed}
                     for r in rep.rows]}
    if extra:
        body.update(extra)
    return json.dumps(body, sort_keys=True, indent=2)


def chain_report_csv(rep: RectangleReport, wand: WanderingReport | None = None) -> str:
    """Columns k, log10_b, margin, log10_diam (diam of the orbit enclosure when known)."""
    diam = {c[0] + 1: c[2] for c in wand.checkpoints} if wand else {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["k", "log10_b", "margin", "log10_diam"])
    for r in rep.rows:
        d = diam.get(r.k)
        w.writerow([r.k, repr(r.log10_b), repr(r.margin), "" if d is None else repr(d)])
    return buf.getvalue()


def ladder_csv(c: ChainConstants, ks: Iterable[int]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["k", "z", "i_hat", "n_hat_next", "bracket", "p", "q", "r", "log10_b", "m", "m_hat"])
    for k in ks:
        r = c.row(k)
        w.writerow([r.k, r.z, r.i_hat, r.n_hat_next, r.bracket, repr(r.p), repr(r.q), repr(r.r),
                    repr(r.log_b / math.log(10)), r.m, "" if r.m_hat is None else r.m_hat])
    return buf.getvalue()
