"""Round-synchronous average consensus, plain and privacy-masked.

All agents update simultaneously from the previous round's broadcasts:

    x_i(k+1) = w_ii x~_i(k) + sum_j w_ij x~_j(k)

where x~ is the plain state for negotiations, or the state plus a
geometrically decaying correlated noise for the masked clearing run. The
noise increments telescope, so their cumulative sum per agent is
alpha^K zeta(K) -> 0 and the consensus limit is the exact average of the
initial states even though no initial state is ever transmitted in the
clear.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConvergenceError,
    DegenerateDenominatorError,
    InvalidLocalKError,
    NonOverlappingError,
    NotConnectedError,
)
from .graph import TradeGraph, is_connected
from .learning import PriceInterval, min_k


@dataclass
class ConsensusConfig:
    """Tolerances and budgets shared by all consensus runs."""

    tol: float = 1e-9
    max_iter: int = 10_000
    alpha: float = 0.8
    #: masked runs must execute at least this many rounds so an unluckily
    #: small early noise draw cannot trigger a premature stop
    min_masked_rounds: int = 20
    #: masked runs additionally wait until each agent's own mask amplitude
    #: alpha^k has decayed this far below tol; the residual bias the masks
    #: leave in the limit is of order alpha^k, and identities computed from
    #: the limit (e.g. the balance of the implied trades) need it to sit
    #: well under the stop tolerance, not merely at it
    mask_decay_floor: float = 1e-3

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if not 0 < self.mask_decay_floor <= 1:
            raise ValueError("mask_decay_floor must be in (0, 1]")


@dataclass
class NoiseSchedule:
    """Per-agent masking noise generator.

    Round k emits ``zeta(0)`` at k = 0 and
    ``alpha^k zeta(k) - alpha^(k-1) zeta(k-1)`` afterwards, with zeta drawn
    i.i.d. standard normal per channel. Rounds must be consumed in order.
    """

    alpha: float
    rng: np.random.Generator
    dim: int
    last_zeta: np.ndarray | None = None
    next_round: int = 0
    _alpha_pow: float = field(default=1.0, repr=False)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")

    @classmethod
    def create(cls, alpha: float, seed, dim: int) -> "NoiseSchedule":
        return cls(alpha=alpha, rng=np.random.default_rng(seed), dim=dim)

    @property
    def amplitude(self) -> float:
        """alpha^k after the last consumed round: the current mask scale."""
        return self._alpha_pow


def noise_increment(schedule: NoiseSchedule, k: int) -> np.ndarray:
    """Masking increment for round k; draws zeta(k) and updates the history."""
    if k != schedule.next_round:
        raise ValueError(f"rounds must be consumed in order; expected {schedule.next_round}, got {k}")
    zeta = schedule.rng.standard_normal(schedule.dim)
    if k == 0:
        w = zeta.copy()
        schedule._alpha_pow = 1.0
    else:
        prev_pow = schedule._alpha_pow
        schedule._alpha_pow = prev_pow * schedule.alpha
        w = schedule._alpha_pow * zeta - prev_pow * schedule.last_zeta
    schedule.last_zeta = zeta
    schedule.next_round = k + 1
    return w


@dataclass
class ConsensusTrace:
    """Per-round agent states of one run, for emission and convergence plots.

    ``states[k]`` is the (n, d) snapshot after k rounds (``states[0]`` is
    the initial condition). ``transmitted[k]`` is what agents actually
    broadcast in round k (masked when noise schedules were active).
    """

    states: np.ndarray
    transmitted: np.ndarray | None
    converged_at: int | None
    tol: float

    @property
    def rounds(self) -> int:
        return self.states.shape[0] - 1

    def iter_rows(self):
        """Yield (round, agent_id, component, value) rows for CSV export."""
        for k in range(self.states.shape[0]):
            for i in range(self.states.shape[1]):
                for c in range(self.states.shape[2]):
                    yield k, i, c, float(self.states[k, i, c])


def consensus_round(
    states: np.ndarray,
    g: TradeGraph,
    masked: bool = False,
    schedules: list[NoiseSchedule] | None = None,
    round_index: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """One synchronous mixing round.

    Returns (next_states, transmitted). When masked, each agent adds its
    noise increment before broadcasting; mixing always combines the agent's
    own broadcast with its neighbors' broadcasts.
    """
    states = np.asarray(states, dtype=float)
    if masked:
        if schedules is None or len(schedules) != states.shape[0]:
            raise ValueError("masked round needs one noise schedule per agent")
        noise = np.stack([noise_increment(s, round_index) for s in schedules])
        transmitted = states + noise
    else:
        transmitted = states.copy()
    return g.weights @ transmitted, transmitted


def run_consensus(
    init: np.ndarray,
    g: TradeGraph,
    cfg: ConsensusConfig,
    masked: bool = False,
    schedules: list[NoiseSchedule] | None = None,
    seed=None,
) -> tuple[np.ndarray, ConsensusTrace]:
    """Iterate rounds until every agent's broadcast stops moving.

    Stops when the 2-norm change of each agent's transmitted state between
    consecutive rounds is at most ``cfg.tol`` (masked runs additionally wait
    out ``cfg.min_masked_rounds``). Returns the final plain states and the
    full trace. Raises :class:`ConvergenceError` with the trace attached if
    the budget runs out.
    """
    if not is_connected(g):
        raise NotConnectedError("consensus requires a connected graph")
    states = np.asarray(init, dtype=float)
    if states.ndim == 1:
        states = states.reshape(-1, 1)
    n, d = states.shape
    if n != g.n:
        raise ValueError(f"need one state per agent: got {n}, graph has {g.n}")
    if masked and schedules is None:
        ss = np.random.SeedSequence(seed).spawn(n)
        schedules = [NoiseSchedule.create(cfg.alpha, s, d) for s in ss]

    snapshots = [states.copy()]
    transmissions = []
    prev_tx = None
    converged_at = None
    for k in range(cfg.max_iter):
        states, tx = consensus_round(states, g, masked=masked, schedules=schedules, round_index=k)
        snapshots.append(states.copy())
        transmissions.append(tx)
        if prev_tx is not None:
            change = np.linalg.norm(tx - prev_tx, axis=1).max()
            masked_ok = not masked or (
                k >= cfg.min_masked_rounds
                and all(s.amplitude <= cfg.tol * cfg.mask_decay_floor for s in schedules)
            )
            if change <= cfg.tol and masked_ok:
                converged_at = k + 1
                break
        prev_tx = tx
    trace = ConsensusTrace(
        states=np.stack(snapshots),
        transmitted=np.stack(transmissions) if transmissions else None,
        converged_at=converged_at,
        tol=cfg.tol,
    )
    if converged_at is None:
        raise ConvergenceError(cfg.max_iter, "consensus did not converge", trace=trace)
    return states, trace


def negotiate_price_interval(
    intervals: list[PriceInterval],
    g: TradeGraph,
    cfg: ConsensusConfig,
    strategy: str = "average",
) -> tuple[PriceInterval, ConsensusTrace]:
    """Negotiate one common price band from per-prosumer bands.

    All bands must pairwise overlap. The default strategy runs plain
    consensus on the (lower, upper) pairs and returns the network average;
    "minmax" instead runs max-consensus on lowers and min-consensus on
    uppers (the most conservative common band).
    """
    lowers = np.array([iv.lower for iv in intervals])
    uppers = np.array([iv.upper for iv in intervals])
    i_max = int(np.argmax(lowers))
    j_min = int(np.argmin(uppers))
    if lowers[i_max] > uppers[j_min]:
        raise NonOverlappingError(i_max, j_min)

    init = np.column_stack([lowers, uppers])
    if strategy == "average":
        final, trace = run_consensus(init, g, cfg)
        mean = final.mean(axis=0)
        return PriceInterval(float(mean[0]), float(mean[1])), trace
    if strategy == "minmax":
        final, trace = _extremal_consensus(init, g)
        return PriceInterval(float(final[0, 0]), float(final[0, 1])), trace
    raise ValueError(f"unknown strategy {strategy!r}")


def _extremal_consensus(init: np.ndarray, g: TradeGraph) -> tuple[np.ndarray, ConsensusTrace]:
    """Max-consensus on column 0 and min-consensus on column 1; exact in
    at most diameter rounds."""
    if not is_connected(g):
        raise NotConnectedError("consensus requires a connected graph")
    states = init.copy()
    snapshots = [states.copy()]
    for _ in range(g.n):
        nxt = states.copy()
        for a, b in g.edges:
            for i, j in ((a, b), (b, a)):
                nxt[i, 0] = max(nxt[i, 0], states[j, 0])
                nxt[i, 1] = min(nxt[i, 1], states[j, 1])
        if np.array_equal(nxt, states):
            break
        states = nxt
        snapshots.append(states.copy())
    trace = ConsensusTrace(
        states=np.stack(snapshots), transmitted=None, converged_at=len(snapshots) - 1, tol=0.0
    )
    return states, trace


def negotiate_k(
    local_ks: list[float], xi: float, g: TradeGraph, cfg: ConsensusConfig
) -> float:
    """Average the agents' k proposals by plain consensus.

    Each proposal must individually clear the threshold for the shared
    demand-supply ratio; the average of values above a threshold stays
    above it.
    """
    threshold = min_k(xi)
    for i, k_i in enumerate(local_ks):
        if not k_i > threshold:
            raise InvalidLocalKError(
                i, f"agent {i} proposed k={k_i}, which violates the global "
                f"demand-supply condition: need k > {threshold} for ratio {xi}"
            )
    init = np.asarray(local_ks, dtype=float).reshape(-1, 1)
    final, _ = run_consensus(init, g, cfg)
    return float(final.mean())


def price_from_average(avg: np.ndarray) -> float:
    """Clearing price from the consensus limit of [b/a, 1/a] vectors.

    Both components carry the same 1/n scaling, so their ratio is the
    closed-form price.
    """
    avg = np.asarray(avg, dtype=float).reshape(-1)
    if avg.shape[0] != 2:
        raise ValueError("expected a length-2 average state")
    if not avg[1] > 0:
        raise DegenerateDenominatorError(f"inverse-curvature average must be positive, got {avg[1]}")
    return float(avg[0] / avg[1])
