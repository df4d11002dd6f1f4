"""Bipartite trade graph and its doubly stochastic mixing matrix.

Sellers and buyers form the two sides of an undirected bipartite
communication graph. Consensus rounds mix agent states with a symmetric
doubly stochastic weight matrix built from the graph by the
Metropolis-Hastings rule; self-loops carry the residual weight and are not
listed in ``edges``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import DisconnectedError, EmptySideError, NotConnectedError

ProsumerId = int

#: Tolerance for the doubly stochastic invariant (row/column sums).
STOCHASTIC_TOL = 1e-12


class Role(str, enum.Enum):
    """Market role of a prosumer at one time step: it sells or buys, never both."""

    SELLER = "seller"
    BUYER = "buyer"


@dataclass(frozen=True, eq=False)
class TradeGraph:
    """Undirected bipartite graph over prosumer ids with mixing weights.

    Attributes
    ----------
    n : int
        Node count; ids are 0..n-1.
    sellers, buyers : tuple of int
        The two disjoint sides of the bipartition.
    edges : frozenset of (int, int)
        Unordered seller-buyer pairs, stored as (min, max). Self-loops are
        implicit in the weight matrix and never appear here.
    weights : ndarray, shape (n, n)
        Symmetric doubly stochastic mixing matrix. Identity until
        :func:`metropolis_weights` is applied.
    """

    n: int
    sellers: tuple[ProsumerId, ...]
    buyers: tuple[ProsumerId, ...]
    edges: frozenset[tuple[ProsumerId, ProsumerId]]
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    def role_of(self, i: ProsumerId) -> Role:
        return Role.SELLER if i in self.sellers else Role.BUYER

    def neighbors(self, i: ProsumerId) -> list[ProsumerId]:
        return sorted(b if a == i else a for a, b in self.edges if i in (a, b))

    def degree(self, i: ProsumerId) -> int:
        return sum(1 for a, b in self.edges if i in (a, b))


def _as_edge(i: ProsumerId, j: ProsumerId) -> tuple[ProsumerId, ProsumerId]:
    return (i, j) if i < j else (j, i)


def build_bipartite(
    sellers: list[ProsumerId],
    buyers: list[ProsumerId],
    topology: str = "complete",
    target_degree: float | None = None,
    seed: int | None = None,
) -> TradeGraph:
    """Build a connected bipartite graph between sellers and buyers.

    Parameters
    ----------
    sellers, buyers : list of int
        Disjoint, non-empty id lists. Ids must cover 0..n-1.
    topology : {"complete", "random"}
        "complete" connects every seller to every buyer. "random" grows a
        spanning tree across the bipartition (connected by construction) and
        then adds random cross edges until the average degree reaches
        ``target_degree``.
    target_degree : float, optional
        Required for the random topology.
    seed : int, optional
        Seed for the random topology. Retried with incremented seed (at most
        100 attempts) if connectivity were ever violated.

    Returns
    -------
    TradeGraph
        With identity weights; apply :func:`metropolis_weights` before
        running consensus.
    """
    if not sellers or not buyers:
        raise EmptySideError("need at least one seller and one buyer")
    if set(sellers) & set(buyers):
        raise ValueError("sellers and buyers must be disjoint")
    nodes = sorted(set(sellers) | set(buyers))
    n = len(nodes)
    if nodes != list(range(n)):
        raise ValueError("prosumer ids must be dense 0..n-1")

    if topology == "complete":
        edges = frozenset(_as_edge(s, b) for s in sellers for b in buyers)
        g = TradeGraph(n, tuple(sellers), tuple(buyers), edges, np.eye(n))
        return g
    if topology != "random":
        raise ValueError(f"unknown topology {topology!r}")
    if target_degree is None:
        raise ValueError("random topology requires target_degree")

    for attempt in range(100):
        rng = np.random.default_rng(None if seed is None else seed + attempt)
        edges = _random_bipartite_edges(sellers, buyers, target_degree, rng)
        g = TradeGraph(n, tuple(sellers), tuple(buyers), frozenset(edges), np.eye(n))
        if is_connected(g):
            return g
    raise DisconnectedError("random topology failed connectivity after 100 attempts")


def _random_bipartite_edges(sellers, buyers, target_degree, rng):
    """Spanning tree across the bipartition plus random fill edges."""
    edges: set[tuple[int, int]] = set()
    order_s = list(rng.permutation(sellers))
    order_b = list(rng.permutation(buyers))
    in_s = [order_s.pop()]
    in_b = [order_b.pop()]
    edges.add(_as_edge(in_s[0], in_b[0]))
    # attach each remaining node to a random node already in the tree, on the
    # opposite side
    pending = [(s, Role.SELLER) for s in order_s] + [(b, Role.BUYER) for b in order_b]
    rng.shuffle(pending)
    for node, role in pending:
        if role is Role.SELLER:
            other = in_b[rng.integers(len(in_b))]
            in_s.append(node)
        else:
            other = in_s[rng.integers(len(in_s))]
            in_b.append(node)
        edges.add(_as_edge(node, other))

    n = len(sellers) + len(buyers)
    want = min(int(np.ceil(target_degree * n / 2)), len(sellers) * len(buyers))
    candidates = [
        _as_edge(s, b) for s in sellers for b in buyers if _as_edge(s, b) not in edges
    ]
    rng.shuffle(candidates)
    for e in candidates:
        if len(edges) >= want:
            break
        edges.add(e)
    return edges


def is_connected(g: TradeGraph) -> bool:
    """True iff a single component spans all nodes (singleton counts)."""
    if g.n <= 1:
        return True
    adj: list[list[int]] = [[] for _ in range(g.n)]
    for a, b in g.edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == g.n


def metropolis_weights(g: TradeGraph) -> TradeGraph:
    """Assign Metropolis-Hastings weights; returns a new graph.

    Edge (i, j) gets weight 1/(1 + max(deg_i, deg_j)); the diagonal absorbs
    the residual so each row and column sums to one. The construction only
    needs local degree information, which keeps it decentralized, and is
    symmetric doubly stochastic by construction.
    """
    if not is_connected(g):
        raise NotConnectedError("metropolis weights require a connected graph")
    deg = np.zeros(g.n, dtype=int)
    for a, b in g.edges:
        deg[a] += 1
        deg[b] += 1
    w = np.zeros((g.n, g.n))
    for a, b in g.edges:
        w[a, b] = w[b, a] = 1.0 / (1.0 + max(deg[a], deg[b]))
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return replace(g, weights=w)


def assert_valid(g: TradeGraph, tol: float = STOCHASTIC_TOL) -> None:
    """Raise ValueError if the graph violates a structural invariant."""
    w = g.weights
    if w.shape != (g.n, g.n):
        raise ValueError("weight matrix shape mismatch")
    if not np.array_equal(w, w.T):
        raise ValueError("weight matrix not symmetric")
    if np.any(w < 0) or np.any(w > 1):
        raise ValueError("weights outside [0, 1]")
    if np.max(np.abs(w.sum(axis=0) - 1.0)) > tol or np.max(np.abs(w.sum(axis=1) - 1.0)) > tol:
        raise ValueError("weight matrix not doubly stochastic")
    seller_set, buyer_set = set(g.sellers), set(g.buyers)
    for a, b in g.edges:
        same_side = (a in seller_set) == (b in seller_set)
        if same_side:
            raise ValueError(f"edge ({a}, {b}) does not cross the bipartition")
    off = w - np.diag(np.diag(w))
    support = set(zip(*np.nonzero(off)))
    for a, b in support:
        if _as_edge(int(a), int(b)) not in g.edges:
            raise ValueError(f"positive weight on non-edge ({a}, {b})")
    if seller_set | buyer_set != set(range(g.n)) or (seller_set & buyer_set):
        raise ValueError("bipartition must partition 0..n-1")
