"""Inverse learning of cost parameters from desired price/power intervals.

Given a common price interval and per-prosumer trade limits, the functions
here compute half-open intervals for the cost coefficients (a, b) such that
*any* choice inside them makes the forward clearing strictly feasible for
everyone, provided a global condition linking the demand-supply ratio to
the shape parameters (k, k_s, k_b) holds. Special-case interval rules for
single-buyer and single-seller markets are included, along with a checker
for the underlying per-instance sufficient conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegeneratePriceError,
    EmptyIntervalError,
    MissingSideError,
)
from .graph import Role
from .market import CostParams, PowerBounds

#: Relative margin used to exclude open endpoints when sampling.
OPEN_ENDPOINT_MARGIN = 1e-9


@dataclass(frozen=True)
class PriceInterval:
    """A prosumer's preferred price band [lower, upper], currency/kWh."""

    lower: float
    upper: float

    def __post_init__(self):
        if not 0 < self.lower <= self.upper:
            raise ValueError(f"need 0 < lower <= upper, got [{self.lower}, {self.upper}]")

    @property
    def span(self) -> float:
        return self.upper - self.lower

    def overlaps(self, other: "PriceInterval") -> bool:
        return self.lower <= other.upper and other.lower <= self.upper


@dataclass(frozen=True)
class GlobalK:
    """Shape parameters of the decentralized interval rule.

    ``k`` splits the price band between seller and buyer intercepts;
    ``k_s`` and ``k_b`` set how far each side's curvature may fall below
    the conservative cap. Defaults take the unit shape factors.
    """

    k: float
    k_s: float = 1.0
    k_b: float = 1.0

    def __post_init__(self):
        if not self.k > 3:
            raise ValueError(f"need k > 3, got {self.k}")
        if not 0 < self.k_s < 2:
            raise ValueError(f"need 0 < k_s < 2, got {self.k_s}")
        if not 0 < self.k_b < 2:
            raise ValueError(f"need 0 < k_b < 2, got {self.k_b}")


@dataclass(frozen=True)
class Interval:
    """Real interval with per-endpoint open/closed orientation."""

    lower: float
    upper: float
    lower_closed: bool = True
    upper_closed: bool = True

    def __post_init__(self):
        if not self.lower < self.upper:
            raise EmptyIntervalError(
                f"empty interval: lower {self.lower} must be < upper {self.upper}"
            )

    def contains(self, x: float) -> bool:
        above = x >= self.lower if self.lower_closed else x > self.lower
        below = x <= self.upper if self.upper_closed else x < self.upper
        return above and below

    def sample(self, rng: np.random.Generator) -> float:
        """Uniform draw; open endpoints are excluded by a relative nudge."""
        margin = OPEN_ENDPOINT_MARGIN * (self.upper - self.lower)
        lo = self.lower if self.lower_closed else self.lower + margin
        hi = self.upper if self.upper_closed else self.upper - margin
        return float(rng.uniform(lo, hi))


@dataclass(frozen=True)
class ParamIntervals:
    """Admissible intervals for one prosumer's (b, a) cost coefficients."""

    b: Interval
    a: Interval

    def __post_init__(self):
        if self.b.lower <= 0 or self.a.lower <= 0:
            raise ValueError("parameter intervals must be positive")

    def contains(self, p: CostParams) -> bool:
        return self.b.contains(p.b) and self.a.contains(p.a)


@dataclass
class ConditionCheck:
    """Outcome of one sufficient condition: verdict plus computed quantities."""

    passed: bool
    skipped: bool = False
    values: dict = field(default_factory=dict)


@dataclass
class ConditionReport:
    """Per-condition verdicts of the direct sufficiency test.

    ``ordering`` is the intercept layout (seller intercepts strictly below
    buyer intercepts inside the price band), ``buyer_curvature`` and
    ``seller_curvature`` are the per-prosumer curvature floors, and
    ``curvature_ratio`` is the global window on the ratio of summed inverse
    curvatures. A skipped check is vacuous for the instance (single-sided
    degenerate case) and counts as passed.
    """

    ordering: ConditionCheck
    buyer_curvature: ConditionCheck
    seller_curvature: ConditionCheck
    curvature_ratio: ConditionCheck

    @property
    def all_passed(self) -> bool:
        return all(
            c.passed
            for c in (self.ordering, self.buyer_curvature, self.seller_curvature, self.curvature_ratio)
        )


def demand_supply_ratio(bounds: list[PowerBounds], roles: list[Role]) -> float:
    """Ratio of total maximum buying magnitude to total selling capacity."""
    caps = [bd.p_sell_max for bd, r in zip(bounds, roles) if r is Role.SELLER]
    floors = [bd.p_buy_min for bd, r in zip(bounds, roles) if r is Role.BUYER]
    if not caps or not floors:
        raise MissingSideError("need at least one seller and one buyer")
    return -sum(floors) / sum(caps)


def min_k(xi: float) -> float:
    """Threshold for k (with unit shape factors): any k above it works."""
    if not xi > 0:
        raise ValueError(f"demand-supply ratio must be positive, got {xi}")
    return 2.0 + max(2.0 / xi, 2.0 * xi)


def default_k(xi: float) -> float:
    """Deterministic default: 2% above the threshold, rounded up to 2 decimals."""
    return math.ceil(min_k(xi) * 1.02 * 100.0) / 100.0


def check_global_condition(gk: GlobalK, xi: float) -> bool:
    """Strict window on the demand-supply ratio implied by (k, k_s, k_b)."""
    lower = 2.0 / (gk.k_b * (gk.k - 2.0))
    upper = gk.k_s * (gk.k - 2.0) / 2.0
    return lower < xi < upper


def param_intervals_theorem2(
    gk: GlobalK, price: PriceInterval, bound: PowerBounds, role: Role
) -> ParamIntervals:
    """Decentralized interval rule for one prosumer.

    Sellers take intercepts from the bottom 1/k slice of the price band and
    buyers from the top 1/k slice, which keeps the two sides separated by a
    (k-2)/k gap. Curvatures are bracketed between the conservative floor
    (span over twice the trade limit) and the shape-factor cap. Only the
    prosumer's own limit and the common band enter, so the choice is fully
    local once the global condition is verified.
    """
    if price.span == 0:
        raise DegeneratePriceError("price interval has zero width; intervals collapse")
    lo, hi, w = price.lower, price.upper, price.span
    if role is Role.SELLER:
        if not bound.p_sell_max > 0:
            raise ValueError("seller needs a positive selling cap")
        b_iv = Interval(lo, lo + w / gk.k, lower_closed=True, upper_closed=False)
        a_iv = Interval(
            w / (2.0 * bound.p_sell_max),
            w / (gk.k_s * bound.p_sell_max),
            lower_closed=False,
            upper_closed=True,
        )
    else:
        if not bound.p_buy_min < 0:
            raise ValueError("buyer needs a negative buying floor")
        b_iv = Interval(lo + (gk.k - 1.0) * w / gk.k, hi, lower_closed=False, upper_closed=True)
        a_iv = Interval(
            w / (-2.0 * bound.p_buy_min),
            w / (-gk.k_b * bound.p_buy_min),
            lower_closed=False,
            upper_closed=True,
        )
    return ParamIntervals(b=b_iv, a=a_iv)


def sample_params(iv: ParamIntervals, seed: int | np.random.Generator) -> CostParams:
    """Uniform draw of (a, b) from the intervals; deterministic under a seed."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return CostParams(a=iv.a.sample(rng), b=iv.b.sample(rng))


def check_theorem1(
    params: list[CostParams],
    roles: list[Role],
    price: PriceInterval,
    bounds: list[PowerBounds],
) -> ConditionReport:
    """Evaluate the per-instance sufficient conditions for strict feasibility.

    Uses the drawn parameters directly (minima/maxima of each side's
    intercepts), so it also validates parameter sets that were not produced
    by the interval rule. For single-sided degenerate markets the vacuous
    half of the ratio window is skipped.
    """
    sellers = [i for i, r in enumerate(roles) if r is Role.SELLER]
    buyers = [i for i, r in enumerate(roles) if r is Role.BUYER]
    if not sellers or not buyers:
        raise MissingSideError("need at least one seller and one buyer")

    b_s = [params[i].b for i in sellers]
    b_b = [params[i].b for i in buyers]
    bs_lo, bs_hi = min(b_s), max(b_s)
    bb_lo, bb_hi = min(b_b), max(b_b)

    ordering = ConditionCheck(
        passed=price.lower <= bs_lo <= bs_hi < bb_lo <= bb_hi <= price.upper,
        values={
            "price_lower": price.lower,
            "seller_b_min": bs_lo,
            "seller_b_max": bs_hi,
            "buyer_b_min": bb_lo,
            "buyer_b_max": bb_hi,
            "price_upper": price.upper,
        },
    )

    buyer_failures = []
    for i in buyers:
        floor = (bb_hi - bs_hi) / (-2.0 * bounds[i].p_buy_min)
        if not params[i].a > floor:
            buyer_failures.append((i, params[i].a, floor))
    buyer_curv = ConditionCheck(
        passed=not buyer_failures,
        values={"required_floor_numerator": bb_hi - bs_hi, "failures": buyer_failures},
    )

    seller_failures = []
    for i in sellers:
        floor = (bb_lo - bs_lo) / (2.0 * bounds[i].p_sell_max)
        if not params[i].a > floor:
            seller_failures.append((i, params[i].a, floor))
    seller_curv = ConditionCheck(
        passed=not seller_failures,
        values={"required_floor_numerator": bb_lo - bs_lo, "failures": seller_failures},
    )

    # global window on (sum of buyer 1/a) / (sum of seller 1/a); each half is
    # vacuous when the corresponding side has a single prosumer
    ratio = sum(1.0 / params[i].a for i in buyers) / sum(1.0 / params[i].a for i in sellers)
    gap = bb_lo - bs_hi
    values = {
        "ratio": ratio,
        "intercept_gap": gap,
        "lower_skipped": len(sellers) == 1,
        "upper_skipped": len(buyers) == 1,
    }
    if gap <= 0:
        ratio_check = ConditionCheck(passed=False, values=values)
    else:
        lower_ok = True
        if len(sellers) > 1:
            values["lower"] = (bs_hi - bs_lo) / gap
            lower_ok = values["lower"] < ratio
        upper_ok = True
        if len(buyers) > 1:
            values["upper"] = gap / (bb_hi - bb_lo) if bb_hi > bb_lo else math.inf
            upper_ok = ratio < values["upper"]
        ratio_check = ConditionCheck(
            passed=lower_ok and upper_ok,
            skipped=len(sellers) == 1 and len(buyers) == 1,
            values=values,
        )
    return ConditionReport(ordering, buyer_curv, seller_curv, ratio_check)


def _seller_b_interval(k: float, price: PriceInterval) -> Interval:
    return Interval(price.lower, price.lower + price.span / k, lower_closed=True, upper_closed=False)


def param_intervals_single_buyer(
    k: float,
    price: PriceInterval,
    seller_caps: list[float],
    buyer_floor: float,
    buyer_b: float,
) -> tuple[list[ParamIntervals], Interval]:
    """Interval rule for a market with exactly one buyer.

    The buyer's intercept ``buyer_b`` is chosen first, anywhere above the
    bottom 1/k slice of the band; its curvature interval then depends on the
    total selling capacity. Sellers' curvature has no cap in this regime;
    the returned seller intervals close it at twice the floor, matching the
    spread the two-sided rule yields with a unit shape factor.

    Returns (per-seller intervals, buyer curvature interval).
    """
    if not k > 1:
        raise ValueError(f"need k > 1, got {k}")
    if price.span == 0:
        raise DegeneratePriceError("price interval has zero width; intervals collapse")
    if not buyer_floor < 0:
        raise ValueError("buyer floor must be negative")
    split = price.lower + price.span / k
    if not (split < buyer_b <= price.upper):
        raise ValueError(
            f"buyer intercept {buyer_b} must lie in ({split}, {price.upper}]"
        )
    w = price.span
    sellers = []
    for cap in seller_caps:
        if not cap > 0:
            raise ValueError("seller caps must be positive")
        a_lo = w / (2.0 * cap)
        sellers.append(
            ParamIntervals(
                b=_seller_b_interval(k, price),
                a=Interval(a_lo, 2.0 * a_lo, lower_closed=False, upper_closed=True),
            )
        )
    a_lo = w / (-2.0 * buyer_floor)
    a_hi = (k * buyer_b - (k - 1.0) * price.lower - price.upper) / (2.0 * sum(seller_caps))
    if not a_hi > a_lo:
        raise EmptyIntervalError(
            f"buyer curvature interval empty: ({a_lo}, {a_hi}]; "
            "the buyer intercept is too low for these trade limits"
        )
    return sellers, Interval(a_lo, a_hi, lower_closed=False, upper_closed=True)


def param_intervals_single_seller(
    k: float,
    price: PriceInterval,
    buyer_floors: list[float],
    seller_cap: float,
    seller_b: float,
) -> tuple[list[ParamIntervals], Interval]:
    """Mirror image of :func:`param_intervals_single_buyer` for one seller.

    Returns (per-buyer intervals, seller curvature interval).
    """
    if not k > 1:
        raise ValueError(f"need k > 1, got {k}")
    if price.span == 0:
        raise DegeneratePriceError("price interval has zero width; intervals collapse")
    if not seller_cap > 0:
        raise ValueError("seller cap must be positive")
    split = price.lower + price.span / k
    if not (price.lower <= seller_b < split):
        raise ValueError(f"seller intercept {seller_b} must lie in [{price.lower}, {split})")
    w = price.span
    buyers = []
    for floor in buyer_floors:
        if not floor < 0:
            raise ValueError("buyer floors must be negative")
        a_lo = w / (-2.0 * floor)
        buyers.append(
            ParamIntervals(
                b=Interval(split, price.upper, lower_closed=False, upper_closed=True),
                a=Interval(a_lo, 2.0 * a_lo, lower_closed=False, upper_closed=True),
            )
        )
    a_lo = w / (2.0 * seller_cap)
    a_hi = ((k - 1.0) * price.lower + price.upper - k * seller_b) / (
        -2.0 * (k - 1.0) * sum(buyer_floors)
    )
    if not a_hi > a_lo:
        raise EmptyIntervalError(
            f"seller curvature interval empty: ({a_lo}, {a_hi}]; "
            "the seller intercept is too high for these trade limits"
        )
    return buyers, Interval(a_lo, a_hi, lower_closed=False, upper_closed=True)


def amplify_params(params: CostParams, iv: ParamIntervals, factor: float) -> CostParams:
    """Shrink the curvature's distance to its interval floor by ``factor``.

    Keeps ``a`` strictly above the floor for any finite factor, so the
    sufficiency intervals still contain the result and feasibility is
    preserved while trade magnitudes grow toward their supremum.
    """
    if not factor >= 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if not iv.contains(params):
        raise ValueError("params must lie inside their intervals")
    a_lo = iv.a.lower
    return CostParams(a=a_lo + (params.a - a_lo) / factor, b=params.b)
