"""End-to-end cooperative learning pipeline for one market step.

Step 1 negotiates a common price band by plain consensus, the trade limits
are aggregated to fix the demand-supply ratio and the shape parameter k,
Step 2 lets every prosumer draw cost parameters from its locally computed
intervals, and Step 3 clears the market through the privacy-masked
consensus run. Each step is timed and errors carry step attribution.
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .consensus import (
    ConsensusConfig,
    ConsensusTrace,
    NoiseSchedule,
    negotiate_k,
    negotiate_price_interval,
    price_from_average,
    run_consensus,
)
from .errors import InvalidLocalKError, MissingSideError, P2PMarketError, PipelineStepError
from .graph import Role, TradeGraph
from .learning import (
    GlobalK,
    Interval,
    ParamIntervals,
    PriceInterval,
    amplify_params,
    check_global_condition,
    min_k,
    param_intervals_theorem2,
    sample_params,
)
from .market import (
    CostParams,
    PowerBounds,
    check_feasibility,
    clear_market,
    clearing_price,
    optimal_trade,
)
from .scenario import FORMAT_VERSION, MarketScenario

#: Sub-stream tags for per-prosumer rngs derived from the run seed.
_PARAM_STREAM = 0
_NOISE_STREAM = 1
_PROPOSAL_STREAM = 2


def _rng_for(seed: int, stream: int, agent: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, stream, agent)))


@contextmanager
def _step(name: str):
    try:
        yield
    except P2PMarketError as err:
        raise PipelineStepError(name, err) from err


@dataclass
class ProsumerOutcome:
    """Per-prosumer slice of a pipeline run."""

    id: int
    role: Role
    bound_kw: float
    params: CostParams
    intervals: ParamIntervals
    trade: float


@dataclass
class PipelineReport:
    """Everything one market step produced.

    ``lambda_star`` is the price the masked consensus actually reached;
    ``analytic_lambda`` is the closed-form cross-check. ``timings`` is
    wall-clock metadata and is deliberately not serialized so reports are
    byte-reproducible under a fixed seed.
    """

    label: str
    seed: int
    k: float
    k_s: float
    k_b: float
    xi: float
    alpha: float
    tol: float
    strategy: str
    negotiated: PriceInterval
    prosumers: list[ProsumerOutcome]
    lambda_star: float
    analytic_lambda: float
    feasible: bool
    violations: list[tuple[int, str]]
    price_vector: tuple[float, float]
    step1_trace: ConsensusTrace | None = None
    step3_trace: ConsensusTrace | None = None
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def trades(self) -> dict[int, float]:
        return {p.id: p.trade for p in self.prosumers}

    def roles(self) -> list[Role]:
        return [p.role for p in sorted(self.prosumers, key=lambda p: p.id)]

    def bounds(self) -> list[PowerBounds]:
        out = []
        for p in sorted(self.prosumers, key=lambda p: p.id):
            if p.role is Role.SELLER:
                out.append(PowerBounds.for_seller(p.bound_kw))
            else:
                out.append(PowerBounds.for_buyer(p.bound_kw))
        return out

    def params(self) -> list[CostParams]:
        return [p.params for p in sorted(self.prosumers, key=lambda p: p.id)]

    def intervals(self) -> list[ParamIntervals]:
        return [p.intervals for p in sorted(self.prosumers, key=lambda p: p.id)]

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "meta": {
                "label": self.label,
                "seed": self.seed,
                "n": len(self.prosumers),
                "strategy": self.strategy,
                "alpha": self.alpha,
                "tol": self.tol,
            },
            "negotiated_interval": {"lower": self.negotiated.lower, "upper": self.negotiated.upper},
            "global_condition": {"xi": self.xi, "k": self.k, "k_s": self.k_s, "k_b": self.k_b},
            "clearing": {
                "lambda_star": self.lambda_star,
                "analytic_lambda": self.analytic_lambda,
                "price_vector": list(self.price_vector),
                "feasible": self.feasible,
                "violations": [[i, tag] for i, tag in self.violations],
                "trades": {str(p.id): p.trade for p in self.prosumers},
            },
            "prosumers": [
                {
                    "id": p.id,
                    "role": p.role.value,
                    "bound_kw": p.bound_kw,
                    "a": p.params.a,
                    "b": p.params.b,
                    "intervals": {
                        "b_lo": p.intervals.b.lower,
                        "b_hi": p.intervals.b.upper,
                        "b_lo_closed": p.intervals.b.lower_closed,
                        "b_hi_closed": p.intervals.b.upper_closed,
                        "a_lo": p.intervals.a.lower,
                        "a_hi": p.intervals.a.upper,
                        "a_lo_closed": p.intervals.a.lower_closed,
                        "a_hi_closed": p.intervals.a.upper_closed,
                    },
                    "trade": p.trade,
                }
                for p in sorted(self.prosumers, key=lambda p: p.id)
            ],
        }


def report_from_dict(data: dict) -> PipelineReport:
    """Rebuild a report from its JSON document (traces and timings are not
    round-tripped)."""
    meta = data["meta"]
    gc = data["global_condition"]
    clearing = data["clearing"]
    prosumers = []
    for entry in data["prosumers"]:
        iv = entry["intervals"]
        prosumers.append(
            ProsumerOutcome(
                id=entry["id"],
                role=Role(entry["role"]),
                bound_kw=entry["bound_kw"],
                params=CostParams(a=entry["a"], b=entry["b"]),
                intervals=ParamIntervals(
                    b=Interval(iv["b_lo"], iv["b_hi"], iv["b_lo_closed"], iv["b_hi_closed"]),
                    a=Interval(iv["a_lo"], iv["a_hi"], iv["a_lo_closed"], iv["a_hi_closed"]),
                ),
                trade=entry["trade"],
            )
        )
    neg = data["negotiated_interval"]
    return PipelineReport(
        label=meta["label"],
        seed=meta["seed"],
        k=gc["k"],
        k_s=gc["k_s"],
        k_b=gc["k_b"],
        xi=gc["xi"],
        alpha=meta["alpha"],
        tol=meta["tol"],
        strategy=meta["strategy"],
        negotiated=PriceInterval(neg["lower"], neg["upper"]),
        prosumers=prosumers,
        lambda_star=clearing["lambda_star"],
        analytic_lambda=clearing["analytic_lambda"],
        feasible=clearing["feasible"],
        violations=[(int(i), tag) for i, tag in clearing["violations"]],
        price_vector=tuple(clearing["price_vector"]),
    )


def aggregate_bounds(
    scenario: MarketScenario, g: TradeGraph, cfg: ConsensusConfig
) -> tuple[float, float, float]:
    """Total selling cap, total buying floor, and their ratio, via consensus.

    Each agent contributes a (cap, floor) pair with zeros on the side it
    does not occupy; the sums are the network averages scaled back by n
    (the agent count is public scenario metadata).
    """
    roles = scenario.roles()
    bounds = scenario.bounds()
    if Role.SELLER not in roles or Role.BUYER not in roles:
        raise MissingSideError("need at least one seller and one buyer")
    init = np.array([[bd.p_sell_max, bd.p_buy_min] for bd in bounds])
    final, _ = run_consensus(init, g, cfg)
    mean = final.mean(axis=0)
    sum_sell = float(mean[0] * scenario.n)
    sum_buy = float(mean[1] * scenario.n)
    return sum_sell, sum_buy, -sum_buy / sum_sell


def run_algorithm1(
    scenario: MarketScenario,
    cfg: ConsensusConfig | None = None,
    seed: int = 0,
    k: float | None = None,
    strategy: str = "average",
) -> PipelineReport:
    """One full market step: negotiate, learn parameters, clear.

    ``k`` overrides the decentralized proposal procedure; it is validated
    against the global condition for the scenario's demand-supply ratio.
    Deterministic: the same (scenario, cfg, seed) reproduce the report
    bit-for-bit.
    """
    cfg = cfg or ConsensusConfig()
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    with _step("setup"):
        scenario.validate()
        g = scenario.build_graph()
    timings["setup"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with _step("step1-price-range"):
        negotiated, trace1 = negotiate_price_interval(scenario.intervals(), g, cfg, strategy)
    timings["step1-price-range"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with _step("bound-aggregation"):
        _, _, xi = aggregate_bounds(scenario, g, cfg)
        threshold = min_k(xi)
        if k is None:
            proposals = [
                threshold * float(_rng_for(seed, _PROPOSAL_STREAM, p.id).uniform(1.01, 1.10))
                for p in sorted(scenario.prosumers, key=lambda p: p.id)
            ]
            k_used = negotiate_k(proposals, xi, g, cfg)
        else:
            if not k > 3:
                raise InvalidLocalKError(None, f"k must exceed 3, got {k}")
            k_used = float(k)
        gk = GlobalK(k=k_used, k_s=1.0, k_b=1.0)
        if not check_global_condition(gk, xi):
            raise InvalidLocalKError(
                None,
                f"k={k_used} violates the global demand-supply condition for "
                f"ratio {xi}: need k > {threshold}",
            )
    timings["bound-aggregation"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with _step("step2-parameter-selection"):
        prosumers: list[ProsumerOutcome] = []
        for p in sorted(scenario.prosumers, key=lambda p: p.id):
            iv = param_intervals_theorem2(gk, negotiated, p.bounds(), p.role)
            params = sample_params(iv, _rng_for(seed, _PARAM_STREAM, p.id))
            prosumers.append(ProsumerOutcome(p.id, p.role, p.bound_kw, params, iv, trade=0.0))
    timings["step2-parameter-selection"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with _step("step3-masked-clearing"):
        init = np.array([[o.params.b / o.params.a, 1.0 / o.params.a] for o in prosumers])
        schedules = [
            NoiseSchedule.create(cfg.alpha, np.random.SeedSequence((seed, _NOISE_STREAM, o.id)), 2)
            for o in prosumers
        ]
        final, trace3 = run_consensus(init, g, cfg, masked=True, schedules=schedules)
        price_vector = final.mean(axis=0)
        lam = price_from_average(price_vector)
        for o in prosumers:
            o.trade = optimal_trade(o.params, lam)
        feasible, violations = check_feasibility(
            {o.id: o.trade for o in prosumers},
            [o.bounds() for o in sorted(scenario.prosumers, key=lambda p: p.id)],
            [o.role for o in prosumers],
        )
        analytic = clearing_price([o.params for o in prosumers])
    timings["step3-masked-clearing"] = time.perf_counter() - t0

    return PipelineReport(
        label=scenario.label,
        seed=seed,
        k=k_used,
        k_s=gk.k_s,
        k_b=gk.k_b,
        xi=xi,
        alpha=cfg.alpha,
        tol=cfg.tol,
        strategy=strategy,
        negotiated=negotiated,
        prosumers=prosumers,
        lambda_star=lam,
        analytic_lambda=analytic,
        feasible=feasible,
        violations=violations,
        price_vector=(float(price_vector[0]), float(price_vector[1])),
        step1_trace=trace1,
        step3_trace=trace3,
        timings=timings,
    )


@dataclass
class HourResult:
    """Outcome of one hour in a day run: a report, a skip, or an error."""

    hour: int
    label: str
    report: PipelineReport | None = None
    skipped: bool = False
    reason: str | None = None
    error: str | None = None


def run_day(
    scenarios: list[MarketScenario],
    cfg: ConsensusConfig | None = None,
    seed: int = 0,
    k: float | None = None,
) -> list[HourResult]:
    """Independent per-hour runs; empty-sided hours are skipped, errors recorded.

    Every hour uses the same seed, so identical hourly scenarios yield
    identical reports.
    """
    results = []
    for hour, scenario in enumerate(scenarios):
        roles = [p.role for p in scenario.prosumers]
        if Role.SELLER not in roles or Role.BUYER not in roles:
            side = "sellers" if Role.SELLER not in roles else "buyers"
            results.append(
                HourResult(hour, scenario.label, skipped=True, reason=f"no {side} this hour")
            )
            continue
        try:
            report = run_algorithm1(scenario, cfg, seed=seed, k=k)
            results.append(HourResult(hour, scenario.label, report=report))
        except P2PMarketError as err:
            results.append(HourResult(hour, scenario.label, error=str(err)))
    return results


def daily_traded_energy(results: list[HourResult]) -> float:
    """Total sold energy over the day: sum of positive trades per hour."""
    total = 0.0
    for r in results:
        if r.report is not None:
            total += sum(t for t in r.report.trades.values() if t > 0)
    return total


@dataclass
class AmplificationResult:
    """Before/after comparison of a curvature-amplification run."""

    factor: float
    lambda_before: float
    lambda_after: float
    trades_before: dict[int, float]
    trades_after: dict[int, float]
    feasible_after: bool
    violations_after: list[tuple[int, str]]

    @property
    def all_magnitudes_increased(self) -> bool:
        return all(
            abs(self.trades_after[i]) > abs(self.trades_before[i]) for i in self.trades_before
        )

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "factor": self.factor,
            "lambda_before": self.lambda_before,
            "lambda_after": self.lambda_after,
            "trades_before": {str(i): t for i, t in self.trades_before.items()},
            "trades_after": {str(i): t for i, t in self.trades_after.items()},
            "feasible_after": self.feasible_after,
            "violations_after": [[i, tag] for i, tag in self.violations_after],
            "all_magnitudes_increased": self.all_magnitudes_increased,
        }


def amplification_experiment(report: PipelineReport, factor: float) -> AmplificationResult:
    """Shrink every curvature toward its interval floor and re-clear.

    Both sides of the comparison use the analytic clearing path. Feasibility
    survives any factor >= 1 because each curvature stays strictly above its
    sufficiency floor; trade magnitudes grow toward their supremum.
    """
    params = report.params()
    bounds = report.bounds()
    roles = report.roles()
    before = clear_market(params, bounds, roles)
    amplified = [
        amplify_params(p, iv, factor) for p, iv in zip(params, report.intervals())
    ]
    after = clear_market(amplified, bounds, roles)
    return AmplificationResult(
        factor=factor,
        lambda_before=before.lambda_star,
        lambda_after=after.lambda_star,
        trades_before=before.trades,
        trades_after=after.trades,
        feasible_after=after.feasible,
        violations_after=after.violations,
    )
