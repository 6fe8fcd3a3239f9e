"""Brute-force oracles grounding the closed forms.

Nothing in this module trusts the engine's formulas.  Profits are rebuilt
from raw swap mechanics (sell the collateral, subtract the spot-priced
repayment), the liquidation run is simulated transaction by transaction,
the marginal-profit integral is evaluated by quadrature, and the two
split-inequalities (profit subadditivity, health-factor dominance of
sequential execution) are checked pointwise.

The discretized dynamic program :func:`dp_oracle` replays the optimal
structure -- many small transactions while the health gate stays open,
then a single numerically optimized closing trade -- and converges to the
engine's closed-form profit as the step count grows.

`verification_report` packages all suites into machine-readable records.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass

import numpy as np

from ._numerics import golden_max
from .amm import PoolState
from .engine import run_liquidation
from .lending import (
    DEFAULT_CONVENTION,
    LoanPosition,
    RepayConvention,
    RiskParams,
    bound_closing,
    bound_collateral,
    bound_debt,
    debt_exhaustion_bound,
    health_factor,
    hf_after_marginal,
    repay_amount,
    trade_multiplier,
)

_EXHAUST_EPS = 1e-11


@dataclass(frozen=True)
class OracleConfig:
    """Knobs for the random-instance suites."""

    grid_n: int = 10_000
    tol_rel: float = 1e-3
    seed: int = 20240811

    def __post_init__(self) -> None:
        if self.grid_n < 2:
            raise ValueError(f"grid_n must be >= 2, got {self.grid_n}")
        if not self.tol_rel > 0.0:
            raise ValueError(f"tol_rel must be > 0, got {self.tol_rel}")


def _shot_profit(pool: PoolState, x: float, bonus: float) -> tuple[float, PoolState]:
    """One liquidation transaction priced purely through the AMM.

    Proceeds come from actually selling x*(1+bonus) into the pool; the
    protocol is repaid the pre-trade spot value of the x units claimed.
    """
    proceeds, pool_next = pool.sell_collateral(x * (1.0 + bonus))
    return proceeds - pool.spot_price() * x, pool_next


@dataclass(frozen=True)
class SequenceOutcome:
    """Trace summary of a simulated transaction-by-transaction liquidation."""

    profit: float
    terminator: str          # "closing_factor" | "debt" | "collateral" | "gate" | "steps"
    steps: int
    cumulative_x: float
    post_position: LoanPosition
    post_pool: PoolState


def simulate_liquidation_sequence(
    position: LoanPosition,
    pool: PoolState,
    params: RiskParams,
    cf_target: float,
    kappa: float,
    convention: RepayConvention = DEFAULT_CONVENTION,
    step_limit: float = math.inf,
    stop_before_crossing: bool = False,
    max_steps: int = 200_000,
) -> SequenceOutcome:
    """Run liquidation transactions until a constraint closes the process.

    Each transaction takes ``min(step_limit, collateral remainder,
    single-transaction kappa cap)`` and is admissible while the current
    health factor sits at or below ``cf_target``.  With ``step_limit=inf``
    every transaction is maximal (the greedy transactional policy); small
    ``step_limit`` values approximate the marginal run.  With
    ``stop_before_crossing`` a transaction whose post-state health factor
    would exceed the gate is not taken (the caller optimizes that closing
    trade separately, as the dynamic program does).

    The terminator records which constraint ended the run: the health gate
    ("closing_factor"), debt exhausted, collateral exhausted, a gate that
    was already shut at entry ("gate"), or the step budget.
    """
    c, b = position.collateral, position.debt
    pool_cur = pool
    profit = 0.0
    cum_x = 0.0
    steps = 0
    theta, ell = params.haircut, params.bonus
    c_scale = max(position.collateral, 1.0)
    b_scale = max(position.debt, 1.0)

    while True:
        if b <= _EXHAUST_EPS * b_scale:
            term = "debt"
            break
        if c <= _EXHAUST_EPS * c_scale:
            term = "collateral"
            break
        hf = health_factor(LoanPosition(c, b), pool_cur, theta)
        if hf > cf_target:
            term = "closing_factor" if steps > 0 else "gate"
            break
        if steps >= max_steps:
            term = "steps"
            break
        pos_cur = LoanPosition(c, b)
        x = min(
            step_limit,
            bound_collateral(pos_cur, ell),
            bound_debt(pos_cur, pool_cur, kappa, ell, convention),
        )
        if not x > 0.0:
            term = "stalled"  # defensive; caps are positive whenever c, b are
            break
        if stop_before_crossing:

            def _post_hf(size: float) -> float:
                b_n = b - repay_amount(pool_cur, size, ell, convention)
                c_n = c - size * (1.0 + ell)
                if b_n <= _EXHAUST_EPS * b_scale or c_n <= _EXHAUST_EPS * c_scale:
                    return -math.inf  # exhaustion dominates; not a gate crossing
                _, peek = pool_cur.sell_collateral(size * (1.0 + ell))
                return health_factor(LoanPosition(c_n, b_n), peek, theta)

            if _post_hf(x) > cf_target:
                # Land exactly on the crossing with one bisected partial step,
                # so the walk's end state does not depend on the step phase.
                lo_s, hi_s = 0.0, x
                for _ in range(200):
                    mid = 0.5 * (lo_s + hi_s)
                    if _post_hf(mid) > cf_target:
                        hi_s = mid
                    else:
                        lo_s = mid
                    if hi_s - lo_s <= 1e-15 * max(1.0, hi_s):
                        break
                x = lo_s
                if x > 0.0:
                    dpi, pool_next = _shot_profit(pool_cur, x, ell)
                    profit += dpi
                    b = max(b - repay_amount(pool_cur, x, ell, convention), 0.0)
                    c = max(c - x * (1.0 + ell), 0.0)
                    pool_cur = pool_next
                    cum_x += x
                    steps += 1
                term = "closing_factor"
                break
        dpi, pool_next = _shot_profit(pool_cur, x, ell)
        profit += dpi
        b = max(b - repay_amount(pool_cur, x, ell, convention), 0.0)
        c = max(c - x * (1.0 + ell), 0.0)
        pool_cur = pool_next
        cum_x += x
        steps += 1

    return SequenceOutcome(profit, term, steps, cum_x, LoanPosition(max(c, 0.0), max(b, 0.0)), pool_cur)


def _best_closing_trade(
    position: LoanPosition,
    pool: PoolState,
    params: RiskParams,
    kappa: float,
    convention: RepayConvention,
    grid_n: int,
) -> float:
    """Numerically maximize the profit of one final transaction.

    Dense scan plus golden-section refinement of the raw single-shot profit
    over [0, min(collateral remainder, kappa cap)]; no closed form is used.
    """
    cap = min(
        bound_collateral(position, params.bonus),
        bound_debt(position, pool, kappa, params.bonus, convention),
    )
    if not cap > 0.0 or not math.isfinite(cap):
        cap = bound_collateral(position, params.bonus)
    if not cap > 0.0:
        return 0.0

    def profit(x: float) -> float:
        return _shot_profit(pool, x, params.bonus)[0]

    n = max(64, min(1024, grid_n))
    xs = np.linspace(0.0, cap, n + 1)
    vals = [profit(float(x)) for x in xs]
    k = int(np.argmax(vals))
    lo = float(xs[max(k - 1, 0)])
    hi = float(xs[min(k + 1, n)])
    _, best = golden_max(profit, lo, hi, tol=1e-12)
    return max(0.0, best, vals[k])


def dp_oracle(
    position: LoanPosition,
    pool: PoolState,
    params: RiskParams,
    cf_target: float,
    kappa: float,
    grid_n: int,
    convention: RepayConvention = DEFAULT_CONVENTION,
) -> float:
    """Discretized dynamic program for the liquidation value.

    Phase one walks the feasible interval in ``grid_n`` steps, re-applying
    every bound and the health gate before each transaction; a first coarse
    pass locates the span so the second pass spends its budget where the
    process actually runs.  Phase two, entered only if the gate is still
    open, takes one numerically optimized closing trade.  The value of not
    participating (zero) is always available.
    """
    if grid_n < 2:
        raise ValueError(f"grid_n must be >= 2, got {grid_n}")
    if health_factor(position, pool, params.haircut) > cf_target:
        return 0.0
    if position.collateral <= 0.0 or position.debt <= 0.0:
        return 0.0

    span_cap = bound_collateral(position, params.bonus)
    probe = simulate_liquidation_sequence(
        position, pool, params, cf_target, kappa, convention,
        step_limit=span_cap / grid_n, stop_before_crossing=True,
        max_steps=grid_n + 8,
    )
    span = max(probe.cumulative_x, span_cap / grid_n)

    run = simulate_liquidation_sequence(
        position, pool, params, cf_target, kappa, convention,
        step_limit=span / grid_n, stop_before_crossing=True,
        max_steps=4 * grid_n + 64,
    )
    total = run.profit
    end_pos, end_pool = run.post_position, run.post_pool
    if (
        end_pos.debt > 0.0
        and end_pos.collateral > 0.0
        and health_factor(end_pos, end_pool, params.haircut) <= cf_target
    ):
        total += _best_closing_trade(end_pos, end_pool, params, kappa, convention, grid_n)
    return max(0.0, total)


def integral_oracle(pool: PoolState, x_liq: float, bonus: float, quad_n: int = 2**14) -> float:
    """Marginal-run profit by quadrature of the per-slice integrand.

    The slice at cumulative size x nets (B - y(x)) * (u - 1) / (A + x*u) dx
    with y(x) the proceeds already extracted.  Composite midpoint at quad_n
    and 2*quad_n panels with one Richardson extrapolation step.
    """
    if quad_n < 16:
        raise ValueError(f"quad_n must be >= 16, got {quad_n}")
    if x_liq < 0.0:
        raise ValueError(f"x_liq must be >= 0, got {x_liq}")
    if x_liq == 0.0:
        return 0.0
    a, b_res = pool.reserve_collateral, pool.reserve_debt
    u = trade_multiplier(pool.fee, bonus)

    def midpoint(n: int) -> float:
        h = x_liq / n
        x = (np.arange(n) + 0.5) * h
        y = b_res * x * u / (a + x * u)
        f = (b_res - y) * (u - 1.0) / (a + x * u)
        return float(np.sum(f) * h)

    coarse = midpoint(quad_n)
    fine = midpoint(2 * quad_n)
    return (4.0 * fine - coarse) / 3.0


def subadditivity_check(
    pool: PoolState, bonus: float, x1: float, x2: float
) -> tuple[float, float, bool]:
    """Single shot of x1+x2 vs the same total split into two sequential shots.

    Returns (lhs, rhs, holds) where lhs is the lump profit, rhs the summed
    sequential profits (second shot priced from the post-first pool), and
    holds checks lhs <= rhs within 1e-12 of the profit scale.
    """
    if x1 < 0.0 or x2 < 0.0:
        raise ValueError("split sizes must be >= 0")
    lhs, _ = _shot_profit(pool, x1 + x2, bonus)
    p1, pool_mid = _shot_profit(pool, x1, bonus)
    p2, _ = _shot_profit(pool_mid, x2, bonus)
    rhs = p1 + p2
    slack = 1e-12 * max(1.0, abs(lhs), abs(rhs))
    return lhs, rhs, lhs <= rhs + slack


@dataclass(frozen=True)
class HFMonotonicityOutcome:
    hf_lump: float
    hf_sequential: float
    holds: bool
    price_chain_ok: bool


def hf_monotonicity_check(
    position: LoanPosition,
    pool: PoolState,
    haircut: float,
    bonus: float,
    x1: float,
    x2: float,
) -> HFMonotonicityOutcome:
    """Sequential execution restores health no faster than a lump.

    Both health factors price the repayment legs at the pre-trade spot of
    each leg; the lump marks collateral at the post-first-leg price, the
    sequential variant at the post-second-leg price.  Selling only lowers
    the pool price, so the sequential denominator is larger and its
    numerator smaller, keeping HF(lump) >= HF(sequential).  The price chain
    B0/A0 >= B1/A1 >= B2/A2 is verified alongside.
    """
    a0, b0 = pool.reserve_collateral, pool.reserve_debt
    u = trade_multiplier(pool.fee, bonus)
    c, b = position.collateral, position.debt
    a1 = a0 + x1 * u
    b1 = a0 * b0 / a1
    a2 = a1 + x2 * u
    b2 = a0 * b0 / a2

    p0, p1, p2 = b0 / a0, b1 / a1, b2 / a2
    chain_ok = p0 >= p1 * (1.0 - 1e-15) and p1 >= p2 * (1.0 - 1e-15)

    coll_left = c - (x1 + x2) * (1.0 + bonus)
    debt_lump = b - (x1 + x2) * p0
    debt_seq = b - x1 * p0 - x2 * p1
    if debt_lump <= 0.0 or debt_seq <= 0.0:
        raise ValueError("split repays more than the outstanding debt")
    hf_lump = haircut * coll_left * p1 / debt_lump
    hf_seq = haircut * coll_left * p2 / debt_seq
    slack = 1e-12 * max(1.0, abs(hf_lump), abs(hf_seq))
    return HFMonotonicityOutcome(hf_lump, hf_seq, hf_lump >= hf_seq - slack, chain_ok)


# ---------------------------------------------------------------------------
# Random-instance machinery
# ---------------------------------------------------------------------------

FEE_GRID_BPS = (0.0, 5.0, 17.0, 30.0, 100.0)
BONUS_GRID = (0.0, 0.05, 0.10)


@dataclass(frozen=True)
class Instance:
    position: LoanPosition
    pool: PoolState
    params: RiskParams
    cf_target: float
    kappa: float

    def digest(self) -> str:
        """Stable short hash identifying the instance in reports."""
        payload = "|".join(
            format(v, ".17g")
            for v in (
                self.position.collateral, self.position.debt,
                self.pool.reserve_collateral, self.pool.reserve_debt, self.pool.fee,
                self.params.haircut, self.params.bonus,
                self.params.closing_factor, self.params.max_liq_fraction,
                self.cf_target, self.kappa,
            )
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:12]


def random_instances(
    n: int,
    seed: int,
    fees_bps: tuple[float, ...] = FEE_GRID_BPS,
    bonuses: tuple[float, ...] = BONUS_GRID,
    hf_range: tuple[float, float] = (0.3, 1.2),
    feasible_only: bool = False,
    convention: RepayConvention = DEFAULT_CONVENTION,
) -> list[Instance]:
    """Seeded random system states.

    Pool depth is log-uniform over [1e3, 1e7] collateral units; price, debt
    and the target initial health factor fix the rest of the state.  Draws
    whose liquidation bounds nearly coincide (relative 1e-9) are rejected
    and resampled -- tie cases are exercised by dedicated tests, not by the
    random suites.  With ``feasible_only`` the draw is constrained to
    states where liquidation is live: HF at or below the gate with margin,
    and fee strictly below bonus parity.
    """
    rng = random.Random(seed)
    out: list[Instance] = []
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 200 * max(n, 1):
            raise RuntimeError("instance generator rejected too many draws")
        fee = rng.choice(fees_bps) / 1e4
        bonus = rng.choice(bonuses)
        if feasible_only:
            bonus = rng.choice(tuple(b for b in bonuses if b > 0.0))
            if fee >= bonus / (1.0 + bonus) * 0.9:
                continue
        a0 = 10.0 ** rng.uniform(3.0, 7.0)
        price = 10.0 ** rng.uniform(0.0, 4.0)
        b0 = a0 * price
        haircut = rng.uniform(0.7, 0.95)
        closing = rng.uniform(0.6, 0.95)
        kappa = rng.uniform(0.2, 1.0)
        cf_target = closing if rng.random() < 0.5 else 1.0
        hf0 = rng.uniform(*hf_range)
        if feasible_only:
            hf0 = rng.uniform(hf_range[0], min(hf_range[1], cf_target * 0.995))
        debt = b0 * 10.0 ** rng.uniform(-4.0, math.log10(0.2))
        coll = hf0 * debt * a0 / (haircut * b0)
        position = LoanPosition(coll, debt)
        pool = PoolState(a0, b0, fee)
        params = RiskParams(haircut, bonus, closing, kappa)

        x_c = bound_collateral(position, bonus)
        x_b = debt_exhaustion_bound(position, pool, bonus, convention)
        x_cf = bound_closing(position, pool, haircut, bonus, cf_target, convention=convention).x
        finite = [v for v in (x_c, x_b, x_cf) if math.isfinite(v)]
        tied = any(
            abs(p - q) <= 1e-9 * max(abs(p), abs(q), 1e-300)
            for i, p in enumerate(finite)
            for q in finite[i + 1 :]
        )
        if tied:
            continue
        out.append(Instance(position, pool, params, cf_target, kappa))
    return out


# ---------------------------------------------------------------------------
# Verification report
# ---------------------------------------------------------------------------


def verification_report(
    n_instances: int = 100,
    seed: int = OracleConfig.seed,
    grid_n: int = OracleConfig.grid_n,
    tol_rel: float = OracleConfig.tol_rel,
    convention: RepayConvention = DEFAULT_CONVENTION,
) -> list[dict]:
    """Run every oracle suite and return one record per check.

    Records are plain dicts (JSON-serializable) with the instance digest,
    the values compared and a pass flag, so callers can persist or pretty-
    print them as they like.
    """
    records: list[dict] = []

    def add(check: str, inst: Instance | None, passed: bool, **values) -> None:
        rec = {"check": check, "passed": bool(passed)}
        if inst is not None:
            rec["instance"] = inst.digest()
        rec.update(values)
        records.append(rec)

    feasible = random_instances(n_instances, seed, feasible_only=True, convention=convention)
    for inst in feasible:
        res = run_liquidation(
            inst.position, inst.pool, inst.params, inst.cf_target, inst.kappa, convention
        )
        approx = dp_oracle(
            inst.position, inst.pool, inst.params, inst.cf_target, inst.kappa, grid_n, convention
        )
        err = abs(res.pi_tot - approx) / max(1.0, abs(res.pi_tot))
        add("engine_vs_dp", inst, err <= tol_rel, engine=res.pi_tot, dp=approx, rel_err=err)

        closed = res.pi_liq
        quad = integral_oracle(inst.pool, res.x_liq, inst.params.bonus)
        qerr = abs(closed - quad) / max(1e-300, abs(closed), abs(quad), 1.0e-12)
        add("integral_vs_closed_form", inst, qerr <= 1e-9, closed=closed, quadrature=quad, rel_err=qerr)

    rng = random.Random(seed + 1)
    general = random_instances(n_instances, seed + 2, convention=convention)
    for inst in general:
        x_c = bound_collateral(inst.position, inst.params.bonus)
        x1 = rng.uniform(0.0, 0.6) * x_c
        x2 = rng.uniform(0.0, 0.6) * (x_c - x1)
        lhs, rhs, holds = subadditivity_check(inst.pool, inst.params.bonus, x1, x2)
        add("profit_subadditivity", inst, holds, lhs=lhs, rhs=rhs)

        y1 = rng.uniform(0.0, 0.35) * x_c
        y2 = rng.uniform(0.0, 0.35) * x_c
        hf0 = health_factor(inst.position, inst.pool, inst.params.haircut)
        if (
            hf0 <= inst.cf_target
            and inst.position.debt - (y1 + y2) * inst.pool.spot_price() > 0.0
        ):
            out = hf_monotonicity_check(
                inst.position, inst.pool, inst.params.haircut, inst.params.bonus, y1, y2
            )
            add("hf_sequential_dominance", inst, out.holds and out.price_chain_ok,
                hf_lump=out.hf_lump, hf_sequential=out.hf_sequential)

    # Recovery bound vs an independent bisection: near-threshold states make
    # the recovery bound the binding one, so the crossing is observable.
    from ._numerics import bisect_root

    checked = 0
    while checked < n_instances:
        fee = rng.choice(FEE_GRID_BPS) / 1e4
        bonus = rng.choice(tuple(b for b in BONUS_GRID if b > 0.0))
        haircut = rng.uniform(0.7, 0.95)
        cf_target = rng.choice((rng.uniform(0.6, 0.95), 1.0))
        a0 = 10.0 ** rng.uniform(3.0, 7.0)
        b0 = a0 * 10.0 ** rng.uniform(0.0, 4.0)
        pool = PoolState(a0, b0, fee)
        debt = b0 * 10.0 ** rng.uniform(-4.0, -1.0)
        position = LoanPosition(
            cf_target * rng.uniform(0.90, 0.999) * debt * a0 / (haircut * b0), debt
        )
        inst = Instance(position, pool,
                        RiskParams(haircut, bonus, 0.8, 0.5), cf_target, 0.5)
        cb = bound_closing(position, pool, haircut, bonus, cf_target, convention=convention)
        hi = min(
            bound_collateral(position, bonus),
            debt_exhaustion_bound(position, pool, bonus, convention),
        ) * (1.0 - 1e-9)
        if not (math.isfinite(cb.x) and 0.0 < cb.x < hi):
            continue

        def gap(x):
            return (
                hf_after_marginal(position, pool, haircut, bonus, x, convention=convention)
                - cf_target
            )

        if gap(hi) <= 0.0:
            continue
        root = bisect_root(gap, 0.0, hi, tol_x=1e-14)
        rerr = abs(root - cb.x) / max(abs(root), 1e-300)
        add("recovery_bound_vs_bisection", inst, rerr <= 1e-8,
            closed=cb.x, bisection=root, rel_err=rerr)
        checked += 1

    return records
