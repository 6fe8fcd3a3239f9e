"""Fee-aware constant-product market maker.

The pool holds two reserves, a risky/collateral token and a debt asset
(stablecoin), and quotes the spot price ``reserve_debt / reserve_collateral``.
Swaps follow the Uniswap-v2 rule: the fee ``gamma`` is charged on the
incoming asset, so only ``(1 - gamma)`` of it enters the reserves, and the
product of the reserves is preserved exactly by every swap.

Selling ``a`` collateral returns

    out = B * a * (1 - gamma) / (A + a * (1 - gamma))

and buying exactly ``d`` collateral costs

    cost = B * d / ((1 - gamma) * (A - d))

which requires ``d < A``; asking for the entire reserve (or more) models a
reverting transaction.

All operations are pure: they return a new ``PoolState`` and never mutate,
so they are safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass


class InsufficientReservesError(ValueError):
    """Requested buy amount meets or exceeds the pool's collateral reserve."""


@dataclass(frozen=True)
class PoolState:
    """Immutable CPMM state: reserves of both assets plus the swap fee."""

    reserve_collateral: float
    reserve_debt: float
    fee: float = 0.0

    def __post_init__(self) -> None:
        if not self.reserve_collateral > 0.0:
            raise ValueError(f"reserve_collateral must be > 0, got {self.reserve_collateral}")
        if not self.reserve_debt > 0.0:
            raise ValueError(f"reserve_debt must be > 0, got {self.reserve_debt}")
        if not 0.0 <= self.fee < 1.0:
            raise ValueError(f"fee must lie in [0, 1), got {self.fee}")

    def spot_price(self) -> float:
        """Debt asset per unit collateral: reserve_debt / reserve_collateral."""
        return self.reserve_debt / self.reserve_collateral

    def invariant(self) -> float:
        """Product of the reserves (the pool's liquidity constant k)."""
        return self.reserve_collateral * self.reserve_debt

    def scaled(self, s: float) -> "PoolState":
        """Pool with both reserves multiplied by ``s`` (same price, deeper book)."""
        if not s > 0.0:
            raise ValueError(f"scale factor must be > 0, got {s}")
        return PoolState(self.reserve_collateral * s, self.reserve_debt * s, self.fee)

    def sell_collateral(self, amount_in: float) -> tuple[float, "PoolState"]:
        """Swap ``amount_in`` collateral for debt asset.

        Returns ``(amount_out, new_pool)``.  The fee is levied on the incoming
        collateral, so the reserves move to ``A + a*(1-fee)`` and ``A*B / (A +
        a*(1-fee))``; the product is preserved by construction.  A zero-size
        swap is a no-op returning the pool unchanged.
        """
        if amount_in < 0.0:
            raise ValueError(f"swap input must be >= 0, got {amount_in}")
        if amount_in == 0.0:
            return 0.0, self
        a_eff = amount_in * (1.0 - self.fee)
        new_a = self.reserve_collateral + a_eff
        new_b = self.reserve_collateral * self.reserve_debt / new_a
        # B*a_eff/new_a instead of B - new_b: same algebra, no cancellation
        # when the swap is small relative to the reserves.
        return self.reserve_debt * a_eff / new_a, PoolState(new_a, new_b, self.fee)

    def buy_collateral_exact(self, amount_out: float) -> tuple[float, "PoolState"]:
        """Buy exactly ``amount_out`` collateral, paying in the debt asset.

        Returns ``(cost, new_pool)`` with ``cost = B*d / ((1-fee)*(A-d))``.
        The fee is charged on the incoming debt asset, so the new reserves are
        ``A - d`` and ``A*B / (A - d)`` and the product is again preserved.

        Raises :class:`InsufficientReservesError` when ``amount_out`` is not
        strictly below the collateral reserve; that request could never
        execute on chain and is treated as a reverting transaction.
        """
        if amount_out < 0.0:
            raise ValueError(f"buy amount must be >= 0, got {amount_out}")
        if amount_out == 0.0:
            return 0.0, self
        if amount_out >= self.reserve_collateral:
            raise InsufficientReservesError(
                f"cannot buy {amount_out} with only {self.reserve_collateral} in reserve"
            )
        new_a = self.reserve_collateral - amount_out
        cost = self.reserve_debt * amount_out / ((1.0 - self.fee) * new_a)
        new_b = self.reserve_collateral * self.reserve_debt / new_a
        return cost, PoolState(new_a, new_b, self.fee)
