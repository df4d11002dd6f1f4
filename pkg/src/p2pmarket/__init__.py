"""Cooperative parameter learning and privacy-masked clearing for P2P energy markets.

Pipeline in one line: prosumers negotiate a common price band by consensus,
derive admissible cost-parameter intervals from it and their trade limits,
draw parameters locally, and clear the market through a noise-masked
consensus run whose limit is the exact closed-form price.
"""

from .consensus import (
    ConsensusConfig,
    ConsensusTrace,
    NoiseSchedule,
    consensus_round,
    negotiate_k,
    negotiate_price_interval,
    noise_increment,
    price_from_average,
    run_consensus,
)
from .errors import (
    ConvergenceError,
    DegenerateDenominatorError,
    DegeneratePriceError,
    DisconnectedError,
    EmptyIntervalError,
    EmptyMarketError,
    EmptySideError,
    InvalidLocalKError,
    MissingSideError,
    NonOverlappingError,
    NotConnectedError,
    P2PMarketError,
    PipelineStepError,
    ScenarioParseError,
    ScenarioSchemaError,
    UnbalancedError,
)
from .graph import Role, TradeGraph, build_bipartite, is_connected, metropolis_weights
from .learning import (
    GlobalK,
    Interval,
    ParamIntervals,
    PriceInterval,
    amplify_params,
    check_global_condition,
    check_theorem1,
    default_k,
    demand_supply_ratio,
    min_k,
    param_intervals_single_buyer,
    param_intervals_single_seller,
    param_intervals_theorem2,
    sample_params,
)
from .market import (
    ClearingResult,
    CostParams,
    PowerBounds,
    clear_market,
    clearing_price,
    optimal_trade,
    qp_oracle,
    realize_bilateral,
)
from .pipeline import (
    AmplificationResult,
    HourResult,
    PipelineReport,
    ProsumerOutcome,
    aggregate_bounds,
    amplification_experiment,
    daily_traded_energy,
    report_from_dict,
    run_algorithm1,
    run_day,
)
from .scenario import (
    MarketScenario,
    ProsumerSpec,
    Topology,
    generate_case_study,
    load_scenario,
    save_results,
    save_scenario,
    save_trace,
)

__version__ = "0.1.0"
