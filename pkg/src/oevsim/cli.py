"""Batch CLI: single runs, parameter sweeps, figure-data reproduction, verification.

Subcommands
    liquidate <config>            one optimal-liquidation run, human-readable report
    attack <config>               optimize the sandwich attack for a scenario
    sweep <config> [--out f]      CSV with one row per sweep point
    fee-threshold <config>        critical fee via bisection, with probe trace
    reproduce <ex1..ex5> [--out]  canned sweeps behind the five study scenarios
    verify [--instances N]        run the brute-force oracle suites

CSV output is deterministic: fixed column order, 12 significant digits,
'.' decimal separator.  Sweep points are independent; set OEVSIM_WORKERS
to cap the process pool used for large sweeps (default: all cores,
sequential for small jobs).

Exit codes: 0 success, 2 config error, 3 infeasible / no threshold,
4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import functools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import attack as atk
from . import oracles
from .config import ConfigError, ScenarioConfig, load_config
from .engine import best_strategy
from .lending import LoanPosition, RepayConvention, RiskParams, health_factor
from .amm import PoolState

_PARALLEL_MIN_POINTS = 256


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return f"{value:.12g}"
    return str(value)


def _write_csv(header: list[str], rows: list[list], out_path: str | None) -> None:
    stream = open(out_path, "w", newline="") if out_path else sys.stdout
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    finally:
        if out_path:
            stream.close()


def _workers() -> int:
    env = os.environ.get("OEVSIM_WORKERS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            return 1
    return os.cpu_count() or 1


def _pmap(fn, items: list) -> list:
    """Order-preserving map, fanned out to processes for large batches."""
    n = _workers()
    if n <= 1 or len(items) < _PARALLEL_MIN_POINTS:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * n))))


# ---------------------------------------------------------------------------
# Sweep evaluation
# ---------------------------------------------------------------------------

LIQ_HEADER = [
    "axis", "value", "hf_initial", "pi_liq", "pi_last", "pi_tot",
    "binding", "last_binding", "strategy", "bad_debt",
]
ATK_HEADER = [
    "axis", "value", "delta", "front_proceeds", "liq_profit", "buyback_cost",
    "total_profit", "feasible", "triggered",
    "delta_trigger", "delta_baddebt_cap", "delta_no_revert",
]


def _overrides(axis: str, value: float) -> dict:
    if axis == "price":
        return {"price": value}
    if axis == "pool_scale":
        return {"scale": value}
    if axis == "fee":
        return {"fee": value}
    return {}


def _eval_liquidation_point(cfg: ScenarioConfig, point: tuple[str, float]) -> list:
    axis, value = point
    position, pool = cfg.state_at(**_overrides(axis, value))
    res, strat = best_strategy(position, pool, cfg.risk, cfg.convention)
    return [
        axis, value, res.hf_initial, res.pi_liq, res.pi_last, res.pi_tot,
        res.binding.value if res.binding else "fee_gate",
        res.last_binding.value, strat.value, res.bad_debt,
    ]


def _eval_attack_point(cfg: ScenarioConfig, point: tuple[str, float]) -> list:
    axis, value = point
    if axis == "delta":
        position, pool = cfg.state_at()
        delta = value
    else:
        position, pool = cfg.state_at(**_overrides(axis, value))
        delta = cfg.attack.delta_min or 0.0
    bounds = atk.delta_bounds(position, pool, cfg.risk)
    res = atk.attack_profit(delta, position, pool, cfg.risk, cfg.convention)
    return [
        axis, value, res.delta, res.front_proceeds, res.liq_profit,
        res.buyback_cost, res.total_profit, res.feasible, res.triggered,
        bounds.trigger, bounds.baddebt_cap, bounds.no_revert,
    ]


def run_sweep(cfg: ScenarioConfig) -> tuple[list[str], list[list]]:
    """Evaluate every sweep point; deterministic row order."""
    if cfg.sweep is None:
        raise ConfigError(["sweep: section required for the sweep command"])
    points = [(cfg.sweep.axis, v) for v in cfg.sweep.values()]
    if cfg.mode == "attack":
        rows = _pmap(functools.partial(_eval_attack_point, cfg), points)
        return ATK_HEADER, rows
    rows = _pmap(functools.partial(_eval_liquidation_point, cfg), points)
    return LIQ_HEADER, rows


# ---------------------------------------------------------------------------
# Canned study scenarios (figure-data reproduction)
# ---------------------------------------------------------------------------

def _study_risk(closing_factor: float = 0.8) -> RiskParams:
    return RiskParams(haircut=0.85, bonus=0.05, closing_factor=closing_factor,
                      max_liq_fraction=0.5)


def reproduce_ex1() -> tuple[list[str], list[list]]:
    """Strategy comparison across pool depth.

    Base pool (1000, 2e6) at 30 bps fee, scaled by s; fixed borrower with
    debt 10,000 and collateral chosen just below the liquidation boundary.
    """
    risk = _study_risk(closing_factor=0.95)
    debt = 1e4
    coll = debt * 1000.0 / (risk.haircut * 2e6) - 0.35
    position = LoanPosition(coll, debt)
    rows = []
    for s in np.geomspace(0.05, 100.0, 121):
        pool = PoolState(1000.0 * s, 2e6 * s, 0.003)
        from .engine import run_liquidation

        full = run_liquidation(position, pool, risk, risk.closing_factor, 1.0)
        capped = run_liquidation(position, pool, risk, 1.0, risk.max_liq_fraction)
        rows.append([float(s), full.pi_tot, capped.pi_tot])
    return ["s", "profit_cf_full", "profit_one_kappa"], rows


def reproduce_ex2() -> tuple[list[str], list[list]]:
    """Liquidation profit vs price for pinned initial health factors.

    Fee-free pool of constant liquidity 2e9; collateral re-derived at every
    price so each curve holds its initial health factor constant.
    """
    risk = _study_risk()
    debt = 1e4
    rows = []
    for hf0 in (0.50, 0.90, 0.92, 0.94, 0.99):
        for p in np.linspace(250.0, 5000.0, 191):
            a0 = math.sqrt(2e9 / p)
            b0 = math.sqrt(2e9 * p)
            pool = PoolState(a0, b0, 0.0)
            coll = hf0 * debt * a0 / (risk.haircut * b0)
            res, _ = best_strategy(LoanPosition(coll, debt), pool, risk)
            rows.append([hf0, float(p), res.pi_tot,
                         res.binding.value if res.binding else "fee_gate"])
    return ["hf0", "p", "pi_tot", "binding"], rows


def reproduce_ex3() -> tuple[list[str], list[list]]:
    """Profit and binding constraint vs price for a fixed borrower.

    Fee-free pool of liquidity 2e9, debt 10,000 against 6 collateral.  Two
    binding tags are reported: ``binding`` comes from the closed-form bound
    triple of the engine, ``binding_txn`` from the transaction-by-
    transaction replay (maximal kappa-capped trades, spot-priced
    write-downs) whose regime change is the one visible in profit plots.
    """
    risk = _study_risk()
    position = LoanPosition(6.0, 1e4)
    rows = []
    for p in np.linspace(1400.0, 2100.0, 281):
        pool = PoolState(math.sqrt(2e9 / p), math.sqrt(2e9 * p), 0.0)
        res, _ = best_strategy(position, pool, risk)
        seq = oracles.simulate_liquidation_sequence(
            position, pool, risk, cf_target=1.0, kappa=risk.max_liq_fraction,
            convention=RepayConvention.SPOT_PRICE,
        )
        rows.append([
            float(p), res.hf_initial, res.pi_liq, res.pi_last, res.pi_tot,
            res.binding.value if res.binding else "fee_gate", seq.terminator,
        ])
    return ["p", "hf0", "pi_liq", "pi_last", "pi_tot", "binding", "binding_txn"], rows


def reproduce_ex4() -> tuple[list[str], list[list]]:
    """Sandwich profits vs attack size in the fee-free pool.

    Same system as ex3 but the price is fixed where the initial health
    factor is 1.05, so only a manipulation can unlock the liquidation.
    """
    risk = _study_risk()
    position = LoanPosition(6.0, 1e4)
    p0 = 1.05 * position.debt / (risk.haircut * position.collateral)
    pool = PoolState(math.sqrt(2e9 / p0), math.sqrt(2e9 * p0), 0.0)
    trigger = atk.delta_trigger_bound(position, pool, risk.haircut)
    deltas = sorted(
        set(np.linspace(0.0, 30000.0, 361))
        | {trigger * (1.0 - 1e-9), trigger * (1.0 + 1e-9)}
    )
    rows = []
    for d in deltas:
        res = atk.attack_profit(float(d), position, pool, risk)
        rows.append([float(d), res.total_profit, res.liq_profit, res.triggered])
    return ["delta", "total_profit", "liq_profit", "triggered"], rows


def reproduce_ex5() -> tuple[list[str], list[list]]:
    """Sandwich profits vs attack size across fee levels.

    Pool (10,000, 28e6) against a borrower owing 32,000 backed by 20.12
    collateral; fee levels include the critical one (17 bps) where no
    attack size stays profitable.
    """
    risk = _study_risk()
    position = LoanPosition(20.12, 32000.0)
    rows = []
    for fee_bps in (0.0, 10.0, 17.0, 30.0):
        pool = PoolState(1e4, 2.8e7, fee_bps / 1e4)
        cap = atk.delta_baddebt_cap(position, pool, risk.bonus)
        ceiling = atk.delta_max_no_revert(pool, position.collateral)
        hi = 0.999 * min(cap, ceiling)
        for d in np.geomspace(1.0, hi, 301):
            res = atk.attack_profit(float(d), position, pool, risk)
            rows.append([fee_bps, float(d), res.total_profit, res.liq_profit, res.feasible])
    return ["fee_bps", "delta", "total_profit", "liq_profit", "feasible"], rows


REPRODUCERS = {
    "ex1": reproduce_ex1,
    "ex2": reproduce_ex2,
    "ex3": reproduce_ex3,
    "ex4": reproduce_ex4,
    "ex5": reproduce_ex5,
}


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_liquidate(args) -> int:
    cfg = load_config(args.config)
    position, pool = cfg.state_at()
    res, strat = best_strategy(position, pool, cfg.risk, cfg.convention)
    b = res.bounds
    print(f"health factor        {res.hf_initial:.6g}")
    print(f"strategy             {strat.value} (cf_target={res.cf_target:g}, kappa={res.kappa:g})")
    print(f"bounds               collateral={b.x_collateral:.6g} debt_full={b.x_debt_full:.6g} "
          f"kappa_cap={b.x_debt_kappa:.6g} recovery={b.x_closing:.6g}")
    print(f"marginal phase       x={res.x_liq:.6g} profit={res.pi_liq:.6g} "
          f"binding={res.binding.value if res.binding else 'fee_gate'}")
    print(f"closing trade        x={res.x_last:.6g} profit={res.pi_last:.6g} cap={res.last_binding.value}")
    print(f"total profit         {res.pi_tot:.6g}")
    print(f"post position        collateral={res.post_position.collateral:.6g} "
          f"debt={res.post_position.debt:.6g} bad_debt={res.bad_debt:.6g}")
    print(f"post pool            A={res.post_pool.reserve_collateral:.6g} "
          f"B={res.post_pool.reserve_debt:.6g}")
    return 0


def _cmd_attack(args) -> int:
    cfg = load_config(args.config)
    position, pool = cfg.state_at()
    d_range = None
    if cfg.attack.delta_min is not None or cfg.attack.delta_max is not None:
        d_range = (cfg.attack.delta_min or 0.0, cfg.attack.delta_max or math.inf)
    out = atk.optimize_attack(position, pool, cfg.risk, delta_range=d_range,
                              convention=cfg.convention)
    bounds = atk.delta_bounds(position, pool, cfg.risk)
    res = out.result
    print(f"delta bounds         trigger={bounds.trigger:.6g} "
          f"baddebt_cap={bounds.baddebt_cap:.6g} no_revert={bounds.no_revert:.6g}")
    print(f"search               [0, {out.search_hi:.6g}] coarse points={out.coarse_points}")
    print(f"best attack          delta={out.delta:.6g}")
    print(f"  front proceeds     {res.front_proceeds:.6g}")
    print(f"  liquidation profit {res.liq_profit:.6g}")
    print(f"  buy-back cost      {_fmt(res.buyback_cost)}")
    print(f"  total profit       {_fmt(res.total_profit)}")
    print(f"  triggered={res.triggered} feasible={res.feasible} strategy={res.strategy.value}")
    if out.delta == 0.0 and (res.total_profit or 0.0) <= 0.0:
        print("no profitable attack size found")
        return 3
    return 0


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    header, rows = run_sweep(cfg)
    _write_csv(header, rows, args.out)
    return 0


def _cmd_fee_threshold(args) -> int:
    cfg = load_config(args.config)
    position, pool = cfg.state_at()
    try:
        res = atk.critical_fee(
            position, pool, cfg.risk, cfg.attack.fee_low, cfg.attack.fee_high,
            convention=cfg.convention,
        )
    except (atk.NoThresholdError, atk.NonMonotoneFeeProfileError) as exc:
        print(f"no threshold: {exc}", file=sys.stderr)
        return 3
    print("fee_bps,best_positive_profit")
    for fee, profit in res.trace:
        print(f"{fee * 1e4:.6g},{profit:.6g}")
    print(f"critical fee: {res.fee_star * 1e4:.4g} bps "
          f"(bracket [{res.bracket[0] * 1e4:.4g}, {res.bracket[1] * 1e4:.4g}] bps)")
    return 0


def _cmd_reproduce(args) -> int:
    header, rows = REPRODUCERS[args.example]()
    _write_csv(header, rows, args.out)
    return 0


def _cmd_verify(args) -> int:
    records = oracles.verification_report(
        n_instances=args.instances, seed=args.seed, grid_n=args.grid_n
    )
    if args.report:
        with open(args.report, "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    by_check: dict[str, list[bool]] = {}
    for rec in records:
        by_check.setdefault(rec["check"], []).append(rec["passed"])
    failed = 0
    for check, flags in sorted(by_check.items()):
        bad = flags.count(False)
        failed += bad
        print(f"{check:32s} {len(flags) - bad}/{len(flags)} passed")
    if failed:
        print(f"verification FAILED: {failed} checks", file=sys.stderr)
        return 4
    print("verification passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oevsim",
        description="Optimal liquidation and oracle-manipulation simulator "
                    "on a fee-charging constant-product AMM.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("liquidate", help="single optimal-liquidation run")
    p.add_argument("config")
    p.set_defaults(func=_cmd_liquidate)

    p = sub.add_parser("attack", help="optimize sandwich attack size")
    p.add_argument("config")
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("sweep", help="CSV sweep over the configured axis")
    p.add_argument("config")
    p.add_argument("--out", help="output CSV path (default stdout)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("fee-threshold", help="critical fee by bisection")
    p.add_argument("config")
    p.set_defaults(func=_cmd_fee_threshold)

    p = sub.add_parser("reproduce", help="emit data behind the study figures")
    p.add_argument("example", choices=sorted(REPRODUCERS))
    p.add_argument("--out", help="output CSV path (default stdout)")
    p.set_defaults(func=_cmd_reproduce)

    p = sub.add_parser("verify", help="run the brute-force oracle suites")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=oracles.OracleConfig.seed)
    p.add_argument("--grid-n", type=int, default=oracles.OracleConfig.grid_n)
    p.add_argument("--report", help="write JSON-lines records here")
    p.set_defaults(func=_cmd_verify)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config not found: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
