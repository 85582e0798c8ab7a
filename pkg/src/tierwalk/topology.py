"""Cache-router domain topologies and the walk's transition matrices.

A domain is one tier of the hierarchy: a directed graph of cache-routers
over which a single request walks at random. The walk's continuous-time
generator has diagonal -psi and rate psi/deg(i) on each out-edge; the
uniformized chain P = I + Q/rate turns it into a discrete jump chain with
Poisson-distributed jump counts, which is what the transient analysis
consumes. Removing the per-node detection mass from P yields the
sub-stochastic miss matrix whose row deficit encodes content discovery.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "InvalidGraphError",
    "DomainGraph",
    "PlacementVector",
    "InitialDistribution",
    "Tier",
    "TierHierarchy",
    "GeneratorMatrix",
    "UniformizedChain",
    "build_generator",
    "uniformize",
    "miss_matrix",
]

PROB_TOL = 1e-9


class InvalidGraphError(ValueError):
    """A domain graph violates the walkability invariants."""


def _as_prob_tuple(values, name: str) -> tuple[float, ...]:
    probs = tuple(float(v) for v in values)
    for v in probs:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} entries must lie in [0, 1], got {v}")
    return probs


@dataclass(frozen=True)
class DomainGraph:
    """One tier's cache-router adjacency plus the walker's movement rate.

    ``walker_rate`` is moves per time unit for continuous walks; for
    discrete walks it is reinterpreted as steps per time unit (1 means
    unit-duration steps). Edges are directed; parse-level helpers expand
    undirected inputs into symmetric pairs before construction.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]
    walker_rate: float = 1.0

    def __post_init__(self):
        if self.node_count < 1:
            raise InvalidGraphError("graph needs at least one node")
        if self.walker_rate <= 0:
            raise InvalidGraphError("walker_rate must be positive")
        edges = tuple((int(a), int(b)) for a, b in self.edges)
        object.__setattr__(self, "edges", edges)
        seen = set()
        degree = [0] * self.node_count
        for a, b in edges:
            if not (0 <= a < self.node_count and 0 <= b < self.node_count):
                raise InvalidGraphError(f"edge ({a}, {b}) references a missing node")
            if a == b:
                raise InvalidGraphError(f"self-loop at node {a}: a move must change node")
            if (a, b) in seen:
                raise InvalidGraphError(f"duplicate edge ({a}, {b})")
            seen.add((a, b))
            degree[a] += 1
        for node, deg in enumerate(degree):
            if deg == 0:
                raise InvalidGraphError(f"node {node} has out-degree 0: the walk would strand")

    def out_degrees(self) -> np.ndarray:
        deg = np.zeros(self.node_count, dtype=np.int64)
        for a, _ in self.edges:
            deg[a] += 1
        return deg

    def out_neighbors(self) -> list[list[int]]:
        """Adjacency lists, each sorted by target node."""
        nbrs: list[list[int]] = [[] for _ in range(self.node_count)]
        for a, b in self.edges:
            nbrs[a].append(b)
        for lst in nbrs:
            lst.sort()
        return nbrs

    @staticmethod
    def undirected(node_count: int, edges, walker_rate: float = 1.0) -> "DomainGraph":
        """Build a graph from undirected edges, expanded to symmetric pairs."""
        expanded = []
        seen = set()
        for a, b in edges:
            for e in ((int(a), int(b)), (int(b), int(a))):
                if e not in seen:
                    seen.add(e)
                    expanded.append(e)
        return DomainGraph(node_count, tuple(expanded), walker_rate)


@dataclass(frozen=True)
class PlacementVector:
    """Per-router content-presence probabilities.

    ``quenched`` means a single fixed copy whose location is drawn once
    per request from ``probs`` (entries must sum to 1); ``annealed`` means
    presence is re-sampled independently at every detection check, so any
    entries in [0, 1] are legal.
    """

    probs: tuple[float, ...]
    mode: str = "quenched"

    def __post_init__(self):
        object.__setattr__(self, "probs", _as_prob_tuple(self.probs, "placement"))
        if self.mode not in ("annealed", "quenched"):
            raise ValueError(f"placement mode must be annealed or quenched, got {self.mode!r}")
        if self.mode == "quenched":
            total = sum(self.probs)
            if abs(total - 1.0) > PROB_TOL:
                raise ValueError(
                    f"quenched placement probabilities must sum to 1, got {total!r}"
                )

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    def support(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.probs) if v > 0.0)


@dataclass(frozen=True)
class InitialDistribution:
    """Where the walk enters a domain (probability per router)."""

    probs: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(v) for v in self.probs)
        object.__setattr__(self, "probs", probs)
        if any(v < 0 for v in probs):
            raise ValueError("initial distribution entries must be nonnegative")
        total = sum(probs)
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"initial distribution must sum to 1, got {total!r}")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)


@dataclass(frozen=True)
class Tier:
    """One level of the hierarchy with its walk, placement and escalation data.

    ``uplinks`` maps every node to its parent routers in the tier above;
    it is None only for the top tier. ``forward_delay`` is the hand-off
    time charged when a request escalates out of this tier.
    """

    graph: DomainGraph
    placement: PlacementVector
    start: InitialDistribution
    availability: float = 1.0
    forward_delay: float = 0.0
    uplinks: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        n = self.graph.node_count
        if len(self.placement.probs) != n:
            raise ValueError("placement length does not match node count")
        if len(self.start.probs) != n:
            raise ValueError("initial distribution length does not match node count")
        if not 0.0 <= self.availability <= 1.0:
            raise ValueError("availability must lie in [0, 1]")
        if self.forward_delay < 0:
            raise ValueError("forward_delay must be nonnegative")
        if self.uplinks is not None:
            uplinks = tuple(tuple(int(u) for u in ups) for ups in self.uplinks)
            object.__setattr__(self, "uplinks", uplinks)
            if len(uplinks) != n:
                raise ValueError("uplinks must list parents for every node")


@dataclass(frozen=True)
class TierHierarchy:
    """Ordered tiers, index 0 on top (publisher-adjacent), last at the bottom."""

    tiers: tuple[Tier, ...]

    def __post_init__(self):
        if not self.tiers:
            raise ValueError("hierarchy needs at least one tier")
        top = self.tiers[0]
        if top.uplinks is not None:
            raise ValueError("top tier must not declare uplinks")
        for level, tier in enumerate(self.tiers[1:], start=1):
            if tier.uplinks is None:
                raise ValueError(f"tier {level + 1} is below the top and needs uplinks")
            parent_n = self.tiers[level - 1].graph.node_count
            for node, ups in enumerate(tier.uplinks):
                if not ups:
                    raise ValueError(f"tier {level + 1} node {node} has no uplink")
                for u in ups:
                    if not 0 <= u < parent_n:
                        raise ValueError(
                            f"tier {level + 1} node {node} uplinks to missing parent {u}"
                        )

    @property
    def depth(self) -> int:
        return len(self.tiers)

    @property
    def bottom(self) -> Tier:
        return self.tiers[-1]


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """Infinitesimal generator of the continuous-time walk (rows sum to 0)."""

    rates: np.ndarray
    walker_rate: float

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=float)
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)

    @property
    def node_count(self) -> int:
        return self.rates.shape[0]

    def max_exit_rate(self) -> float:
        return float(np.max(-np.diag(self.rates)))


@dataclass(frozen=True, eq=False)
class UniformizedChain:
    """Row-stochastic jump chain P = I + Q/unif_rate."""

    transition: np.ndarray
    unif_rate: float

    def __post_init__(self):
        transition = np.asarray(self.transition, dtype=float)
        transition.setflags(write=False)
        object.__setattr__(self, "transition", transition)

    @property
    def node_count(self) -> int:
        return self.transition.shape[0]


def build_generator(graph: DomainGraph) -> GeneratorMatrix:
    """Assemble the walk's generator: diagonal -psi, psi/deg(i) per out-edge."""
    n = graph.node_count
    psi = graph.walker_rate
    deg = graph.out_degrees()
    rates = np.zeros((n, n), dtype=float)
    for a, b in graph.edges:
        rates[a, b] = psi / deg[a]
    np.fill_diagonal(rates, -psi)
    return GeneratorMatrix(rates=rates, walker_rate=psi)


def uniformize(generator: GeneratorMatrix, unif_rate: float | None = None) -> UniformizedChain:
    """Turn the generator into the jump chain P = I + Q/unif_rate.

    The default rate equals total exit rate psi, which makes P the embedded
    chain with an empty diagonal. Any rate at least as large is legal and
    only adds fictitious self-jumps.
    """
    if unif_rate is None:
        unif_rate = generator.walker_rate
    max_rate = generator.max_exit_rate()
    if unif_rate < max_rate - 1e-12:
        raise ValueError(
            f"uniformization rate {unif_rate} is below the largest exit rate {max_rate}"
        )
    n = generator.node_count
    transition = np.eye(n) + generator.rates / unif_rate
    # Clip parasitic negatives from float round-off on the diagonal.
    np.clip(transition, 0.0, None, out=transition)
    return UniformizedChain(transition=transition, unif_rate=float(unif_rate))


def miss_matrix(chain: UniformizedChain, placement: PlacementVector | np.ndarray) -> np.ndarray:
    """Sub-stochastic matrix P (I - diag(omega)).

    Entry (i, j) is the probability of jumping from i to j and then missing
    at j, so each row's deficit from 1 is the one-step discovery probability.
    """
    if isinstance(placement, PlacementVector):
        omega = placement.as_array()
    else:
        omega = np.asarray(placement, dtype=float)
        if np.any((omega < 0) | (omega > 1)):
            raise ValueError("placement entries must lie in [0, 1]")
    if omega.shape != (chain.node_count,):
        raise ValueError(
            f"placement length {omega.shape} does not match chain size {chain.node_count}"
        )
    sub = chain.transition * (1.0 - omega)[np.newaxis, :]
    sub.setflags(write=False)
    return sub
