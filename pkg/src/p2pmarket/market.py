"""Forward market clearing.

With quadratic costs ``a_i p^2 + b_i p`` and a connected trade graph, the
balanced market has a unique clearing price

    lambda* = (sum_j b_j/a_j) / (sum_j 1/a_j)

and each prosumer's unconstrained optimal total trade is
``(lambda* - b_i) / (2 a_i)`` (positive = selling, negative = buying).
The analytic path never clips to the box bounds; when the interior solution
violates a bound the result is reported infeasible, not repaired. An
independent projected-gradient QP oracle solves the bound-constrained
problem for cross-validation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, EmptyMarketError, UnbalancedError
from .graph import Role, TradeGraph

#: Violation tags used in ClearingResult.violations.
SIGN = "sign"
UPPER_BOUND = "upper_bound"
LOWER_BOUND = "lower_bound"

#: Balance tolerance for sum of trades.
BALANCE_TOL = 1e-9


@dataclass(frozen=True)
class CostParams:
    """Quadratic cost coefficients of one prosumer.

    ``a`` is the curvature (currency*h/kW^2), ``b`` the intercept
    (currency/kWh). The grid implementation rate is already folded into
    ``b``, so both must be strictly positive.
    """

    a: float
    b: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"curvature a must be positive, got {self.a}")
        if not self.b > 0:
            raise ValueError(f"intercept b must be positive, got {self.b}")


@dataclass(frozen=True)
class PowerBounds:
    """Trade limits of one prosumer: a buying floor and a selling cap (kW).

    Exactly one of the two is nonzero, matching the prosumer's role:
    sellers have ``p_sell_max > 0`` and ``p_buy_min == 0``, buyers the
    mirror image.
    """

    p_buy_min: float = 0.0
    p_sell_max: float = 0.0

    def __post_init__(self):
        if self.p_buy_min > 0 or self.p_sell_max < 0:
            raise ValueError("need p_buy_min <= 0 <= p_sell_max")

    @classmethod
    def for_seller(cls, cap: float) -> "PowerBounds":
        if not cap > 0:
            raise ValueError("seller cap must be positive")
        return cls(p_buy_min=0.0, p_sell_max=cap)

    @classmethod
    def for_buyer(cls, floor: float) -> "PowerBounds":
        if not floor < 0:
            raise ValueError("buyer floor must be negative")
        return cls(p_buy_min=floor, p_sell_max=0.0)

    def matches_role(self, role: Role) -> bool:
        if role is Role.SELLER:
            return self.p_sell_max > 0 and self.p_buy_min == 0
        return self.p_buy_min < 0 and self.p_sell_max == 0


@dataclass
class ClearingResult:
    """Clearing price, per-prosumer total trades, and feasibility verdict."""

    lambda_star: float
    trades: dict[int, float]
    feasible: bool
    violations: list[tuple[int, str]] = field(default_factory=list)


def clearing_price(params: list[CostParams]) -> float:
    """Unique market price of the unconstrained balanced problem."""
    if not params:
        raise EmptyMarketError("no prosumers")
    num = sum(p.b / p.a for p in params)
    den = sum(1.0 / p.a for p in params)
    return num / den


def optimal_trade(p: CostParams, lam: float) -> float:
    """Unconstrained optimal total trade at price ``lam``."""
    return (lam - p.b) / (2.0 * p.a)


def check_feasibility(
    trades: dict[int, float], bounds: list[PowerBounds], roles: list[Role]
) -> tuple[bool, list[tuple[int, str]]]:
    """Strict-sign feasibility: sellers in (0, cap], buyers in [floor, 0).

    A zero trade counts as unsuccessful trading, mirroring the strict
    feasibility the sufficiency results guarantee.
    """
    violations: list[tuple[int, str]] = []
    for i, (role, bd) in enumerate(zip(roles, bounds)):
        t = trades[i]
        if role is Role.SELLER:
            if t <= 0:
                violations.append((i, SIGN))
            elif t > bd.p_sell_max:
                violations.append((i, UPPER_BOUND))
        else:
            if t >= 0:
                violations.append((i, SIGN))
            elif t < bd.p_buy_min:
                violations.append((i, LOWER_BOUND))
    return not violations, violations


def clear_market(
    params: list[CostParams], bounds: list[PowerBounds], roles: list[Role]
) -> ClearingResult:
    """Analytic clearing with a strict-sign feasibility report.

    Infeasibility (a trade with the wrong sign or beyond its bound) is
    reported per prosumer in ``violations``; trades are never clipped.
    """
    if not params:
        raise EmptyMarketError("no prosumers")
    if not (len(params) == len(bounds) == len(roles)):
        raise ValueError("params, bounds and roles must have equal length")
    lam = clearing_price(params)
    trades = {i: optimal_trade(p, lam) for i, p in enumerate(params)}
    feasible, violations = check_feasibility(trades, bounds, roles)
    return ClearingResult(lam, trades, feasible, violations)


def _project_balanced_box(y: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, float]:
    """Project y onto {p : sum(p) = 0, lo <= p <= hi}.

    Bisection on the shift nu in p(nu) = clip(y - nu, lo, hi); the sum is
    nonincreasing in nu. Also returns nu, whose scaled value recovers the
    balance multiplier at a fixed point.
    """
    nu_lo = float(np.min(y - hi))  # sum at nu_lo is >= 0
    nu_hi = float(np.max(y - lo))  # sum at nu_hi is <= 0
    for _ in range(200):
        nu = 0.5 * (nu_lo + nu_hi)
        s = float(np.clip(y - nu, lo, hi).sum())
        if s > 0:
            nu_lo = nu
        else:
            nu_hi = nu
        if nu_hi - nu_lo < 1e-16 * max(1.0, abs(nu_lo) + abs(nu_hi)):
            break
    nu = 0.5 * (nu_lo + nu_hi)
    return np.clip(y - nu, lo, hi), nu


def qp_oracle(
    params: list[CostParams],
    bounds: list[PowerBounds],
    roles: list[Role],
    tol: float = 1e-8,
    max_iter: int = 200_000,
) -> ClearingResult:
    """Bound-constrained clearing by projected gradient descent.

    Minimizes sum(a_i p_i^2 + b_i p_i) subject to sum(p_i) = 0 and the
    per-role boxes (sellers [0, cap], buyers [floor, 0]). Fixed step
    1/(2 max a); the projection onto box-intersect-hyperplane is exact.
    Convergence is declared when the projected-gradient fixed-point
    residual drops below ``tol``. Independent of the analytic formulas on
    purpose: it serves as their cross-check.
    """
    if not params:
        raise EmptyMarketError("no prosumers")
    if not (len(params) == len(bounds) == len(roles)):
        raise ValueError("params, bounds and roles must have equal length")
    n = len(params)
    a = np.array([p.a for p in params])
    b = np.array([p.b for p in params])
    lo = np.array([0.0 if r is Role.SELLER else bd.p_buy_min for r, bd in zip(roles, bounds)])
    hi = np.array([bd.p_sell_max if r is Role.SELLER else 0.0 for r, bd in zip(roles, bounds)])

    step = 1.0 / (2.0 * float(a.max()))
    p, nu = _project_balanced_box(np.zeros(n), lo, hi)
    residual = np.inf
    for _ in range(max_iter):
        grad = 2.0 * a * p + b
        p_next, nu = _project_balanced_box(p - step * grad, lo, hi)
        residual = float(np.max(np.abs(p_next - p)))
        p = p_next
        if residual <= tol:
            break
    trades = {i: float(p[i]) for i in range(n)}
    # balance multiplier: gradient is constant across coordinates strictly
    # inside the box; fall back to the projection shift when none are
    margin = 1e-9 * np.maximum(1.0, hi - lo)
    interior = (p > lo + margin) & (p < hi - margin)
    if interior.any():
        lam = float(np.mean(2.0 * a[interior] * p[interior] + b[interior]))
    else:
        lam = float(-nu / step)
    result = ClearingResult(lam, trades, *check_feasibility(trades, bounds, roles))
    if residual > tol:
        raise ConvergenceError(max_iter, f"QP oracle residual {residual:.3e} > {tol:.1e}", result=result)
    return result


def realize_bilateral(
    trades: dict[int, float], g: TradeGraph
) -> dict[tuple[int, int], float]:
    """Split total trades into an antisymmetric pairwise allocation.

    The totals do not pin down the pairwise flows; the proportional rule is
    used as a canonical representative: seller i sends buyer j the share
    ``trades[i] * |trades[j]| / total_demand``. Row sums reproduce the
    input totals exactly.
    """
    total = sum(trades.values())
    if abs(total) > BALANCE_TOL:
        raise UnbalancedError(f"trades sum to {total:.3e}, expected 0")
    demand = sum(abs(trades[j]) for j in g.buyers)
    flows: dict[tuple[int, int], float] = {}
    if demand == 0:
        return flows
    for i in g.sellers:
        for j in g.buyers:
            amount = trades[i] * abs(trades[j]) / demand
            if amount != 0.0:
                flows[(i, j)] = amount
                flows[(j, i)] = -amount
    return flows
