"""Scenario definition format, synthetic case-study generator, and file I/O.

A scenario is one hour of the market: who sells, who buys, each side's
trade limits and preferred price bands, and the communication topology.
Files are JSON with a ``format_version`` field; consensus traces are CSV.
All writes are atomic (write to a temp file, then rename).
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ScenarioParseError, ScenarioSchemaError
from .graph import Role, TradeGraph, build_bipartite, metropolis_weights
from .learning import PriceInterval
from .market import PowerBounds

FORMAT_VERSION = 1

#: Case-study shape: 25 rooftop-solar sellers (2 kW each at noon) and 30
#: battery buyers (3 kW each), with seller bands inside [20, 23.8] and buyer
#: bands inside [19, 23] JPY/kWh.
CASE_STUDY_SELLERS = 25
CASE_STUDY_BUYERS = 30
CASE_STUDY_SELL_CAP = 2.0
CASE_STUDY_BUY_FLOOR = -3.0
CASE_STUDY_SELLER_BAND = (20.0, 23.8)
CASE_STUDY_BUYER_BAND = (19.0, 23.0)


@dataclass(frozen=True)
class Topology:
    """Graph topology spec: complete bipartite, or random with a target degree."""

    type: str = "complete"
    degree: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.type not in ("complete", "random"):
            raise ScenarioSchemaError(f"unknown topology type {self.type!r}")
        if self.type == "random" and self.degree is None:
            raise ScenarioSchemaError("random topology requires a degree")


@dataclass(frozen=True)
class ProsumerSpec:
    """One prosumer row: role, signed trade limit (kW), and price band."""

    id: int
    role: Role
    bound_kw: float
    price_lo: float
    price_hi: float

    def bounds(self) -> PowerBounds:
        if self.role is Role.SELLER:
            return PowerBounds.for_seller(self.bound_kw)
        return PowerBounds.for_buyer(self.bound_kw)

    def interval(self) -> PriceInterval:
        return PriceInterval(self.price_lo, self.price_hi)


@dataclass
class MarketScenario:
    """Full market description for one time step."""

    prosumers: list[ProsumerSpec]
    topology: Topology = field(default_factory=Topology)
    label: str = "scenario"
    currency: str = "JPY/kWh"

    @property
    def n(self) -> int:
        return len(self.prosumers)

    def sellers(self) -> list[int]:
        return [p.id for p in self.prosumers if p.role is Role.SELLER]

    def buyers(self) -> list[int]:
        return [p.id for p in self.prosumers if p.role is Role.BUYER]

    def roles(self) -> list[Role]:
        return [p.role for p in sorted(self.prosumers, key=lambda p: p.id)]

    def bounds(self) -> list[PowerBounds]:
        return [p.bounds() for p in sorted(self.prosumers, key=lambda p: p.id)]

    def intervals(self) -> list[PriceInterval]:
        return [p.interval() for p in sorted(self.prosumers, key=lambda p: p.id)]

    def validate(self) -> None:
        if not self.prosumers:
            raise ScenarioSchemaError("scenario has no prosumers")
        ids = sorted(p.id for p in self.prosumers)
        if ids != list(range(len(ids))):
            raise ScenarioSchemaError(f"prosumer ids must be dense 0..n-1, got {ids}")
        for p in self.prosumers:
            if p.role is Role.SELLER and not p.bound_kw > 0:
                raise ScenarioSchemaError(
                    f"prosumer {p.id}: seller bound_kw must be positive, got {p.bound_kw}"
                )
            if p.role is Role.BUYER and not p.bound_kw < 0:
                raise ScenarioSchemaError(
                    f"prosumer {p.id}: buyer bound_kw must be negative, got {p.bound_kw}"
                )
            if not 0 < p.price_lo <= p.price_hi:
                raise ScenarioSchemaError(
                    f"prosumer {p.id}: invalid price band [{p.price_lo}, {p.price_hi}]"
                )

    def build_graph(self) -> TradeGraph:
        """Connected weighted trade graph per the topology spec."""
        self.validate()
        g = build_bipartite(
            self.sellers(),
            self.buyers(),
            topology=self.topology.type,
            target_degree=self.topology.degree,
            seed=self.topology.seed,
        )
        return metropolis_weights(g)


def generate_case_study(seed: int | None = 0) -> MarketScenario:
    """Synthetic 55-node scenario at the published case-study scale.

    Each prosumer draws a private price band inside its side's range: the
    lower end uniform over the bottom 60% of the range, the upper end
    uniform between the highest drawn lower end and the range top. Flooring
    the uppers at the highest lower makes all bands pairwise overlap by
    construction, which the negotiation step assumes; a regeneration loop
    (up to 100 tries) guards the degenerate corner where a band would
    collapse.
    """
    sides = [(Role.SELLER, CASE_STUDY_SELL_CAP, CASE_STUDY_SELLER_BAND)] * CASE_STUDY_SELLERS
    sides += [(Role.BUYER, CASE_STUDY_BUY_FLOOR, CASE_STUDY_BUYER_BAND)] * CASE_STUDY_BUYERS
    for attempt in range(100):
        rng = np.random.default_rng(None if seed is None else seed + attempt)
        lowers = [
            float(rng.uniform(band[0], band[0] + 0.6 * (band[1] - band[0])))
            for _, _, band in sides
        ]
        overlap_floor = max(lowers)
        prosumers = []
        for i, ((role, bound, band), lo) in enumerate(zip(sides, lowers)):
            hi = float(rng.uniform(max(lo, overlap_floor), band[1]))
            prosumers.append(ProsumerSpec(i, role, bound, lo, hi))
        if max(p.price_lo for p in prosumers) <= min(p.price_hi for p in prosumers) and all(
            p.price_hi > p.price_lo for p in prosumers
        ):
            return MarketScenario(
                prosumers=prosumers, topology=Topology("complete"), label="case-study-55"
            )
    raise ScenarioSchemaError("could not draw pairwise-overlapping bands in 100 tries")


# ---------------------------------------------------------------------------
# file I/O


def _atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def scenario_to_dict(s: MarketScenario) -> dict:
    topo: dict = {"type": s.topology.type}
    if s.topology.degree is not None:
        topo["degree"] = s.topology.degree
    if s.topology.seed is not None:
        topo["seed"] = s.topology.seed
    return {
        "format_version": FORMAT_VERSION,
        "meta": {"label": s.label, "currency": s.currency, "n": s.n},
        "prosumers": [
            {
                "id": p.id,
                "role": p.role.value,
                "bound_kw": p.bound_kw,
                "price_lo": p.price_lo,
                "price_hi": p.price_hi,
            }
            for p in sorted(s.prosumers, key=lambda p: p.id)
        ],
        "topology": topo,
    }


def scenario_from_dict(data: dict) -> MarketScenario:
    if not isinstance(data, dict):
        raise ScenarioSchemaError("scenario document must be a JSON object")
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise ScenarioSchemaError(f"unsupported format_version {version!r}")
    raw = data.get("prosumers")
    if not isinstance(raw, list) or not raw:
        raise ScenarioSchemaError("scenario needs a non-empty 'prosumers' list")
    prosumers = []
    for entry in raw:
        pid = entry.get("id")
        if pid is None or not isinstance(pid, int):
            raise ScenarioSchemaError(f"prosumer entry missing integer 'id': {entry}")
        role_str = entry.get("role")
        if role_str not in (Role.SELLER.value, Role.BUYER.value):
            raise ScenarioSchemaError(f"prosumer {pid}: role must be 'seller' or 'buyer', got {role_str!r}")
        for key in ("bound_kw", "price_lo", "price_hi"):
            if key not in entry or not isinstance(entry[key], (int, float)):
                raise ScenarioSchemaError(f"prosumer {pid}: missing numeric field '{key}'")
        prosumers.append(
            ProsumerSpec(
                id=pid,
                role=Role(role_str),
                bound_kw=float(entry["bound_kw"]),
                price_lo=float(entry["price_lo"]),
                price_hi=float(entry["price_hi"]),
            )
        )
    topo_raw = data.get("topology", {"type": "complete"})
    if not isinstance(topo_raw, dict) or "type" not in topo_raw:
        raise ScenarioSchemaError("topology must be an object with a 'type'")
    topology = Topology(
        type=topo_raw["type"],
        degree=topo_raw.get("degree"),
        seed=topo_raw.get("seed"),
    )
    meta = data.get("meta", {})
    scenario = MarketScenario(
        prosumers=prosumers,
        topology=topology,
        label=meta.get("label", "scenario"),
        currency=meta.get("currency", "JPY/kWh"),
    )
    scenario.validate()
    return scenario


def save_scenario(s: MarketScenario, path: str | Path) -> None:
    s.validate()
    _atomic_write_text(Path(path), json.dumps(scenario_to_dict(s), indent=2, sort_keys=True) + "\n")


def load_scenario(path: str | Path) -> MarketScenario:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ScenarioParseError(f"cannot read {path}: {err}") from err
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ScenarioParseError(f"{path}: line {err.lineno}, column {err.colno}: {err.msg}") from err
    return scenario_from_dict(data)


def save_results(document: dict, path: str | Path) -> None:
    """Write a results document (already dict-shaped) as deterministic JSON."""
    _atomic_write_text(Path(path), json.dumps(document, indent=2, sort_keys=True) + "\n")


def load_results(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ScenarioParseError(f"cannot read {path}: {err}") from err
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise ScenarioParseError(f"{path}: line {err.lineno}, column {err.colno}: {err.msg}") from err


def save_trace(trace, path: str | Path) -> None:
    """Consensus trace as CSV with columns round, agent_id, component, value."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["round", "agent_id", "component", "value"])
            for row in trace.iter_rows():
                writer.writerow([row[0], row[1], row[2], repr(row[3])])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_trace(path: str | Path) -> np.ndarray:
    """Read a trace CSV back into a (rounds+1, n, components) array."""
    rows = []
    try:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            for rec in reader:
                rows.append(
                    (int(rec["round"]), int(rec["agent_id"]), int(rec["component"]), float(rec["value"]))
                )
    except (OSError, KeyError, ValueError, TypeError) as err:
        raise ScenarioParseError(f"bad trace file {path}: {err}") from err
    if not rows:
        raise ScenarioParseError(f"trace file {path} has no rows")
    n_rounds = max(r[0] for r in rows) + 1
    n_agents = max(r[1] for r in rows) + 1
    n_comp = max(r[2] for r in rows) + 1
    out = np.full((n_rounds, n_agents, n_comp), np.nan)
    for k, i, c, v in rows:
        out[k, i, c] = v
    return out
