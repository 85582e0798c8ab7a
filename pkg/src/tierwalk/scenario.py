"""Scenario files: the full experiment description in one text format.

Sections (INI-like, ``key = value`` lines, ``#`` comments):

    [walk]        mode (continuous|discrete), psi, entry_check
    [tier N]      nodes, undirected, edge = a b (repeatable), psi,
                  placement = w0 w1 ... , placement_mode, start = ...,
                  availability, forward_delay, uplink <node> = parents...
    [publisher]   mode (fixed|mm1), t0 | mu, scale
    [demand]      lambda, rates <tier> = r0 r1 ... (optional)
    [rc]          rc_low, rc_up, gamma, clamp, decrement, increment_on_walk
    [ttl]         t, t_min, t_max, t_step (all optional)

Tier 1 is the top (publisher-adjacent) tier; requests enter at the
highest-numbered tier. Vector entries accept plain floats or fractions
like 1/3. Every diagnostic carries the offending line number.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .fluid import FluidTree
from .topology import (
    DomainGraph,
    InitialDistribution,
    PlacementVector,
    Tier,
    TierHierarchy,
)
from .transient import PublisherModel

__all__ = [
    "ScenarioError",
    "RCConfig",
    "TTLConfig",
    "Scenario",
    "parse_scenario",
    "load_scenario",
    "default_demand_rates",
    "to_fluid_tree",
    "fluid_node_labels",
]


class ScenarioError(ValueError):
    """A scenario file failed to parse or violates an invariant."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class RCConfig:
    """Reinforced-counter parameters driving dynamic caching."""

    rc_low: float
    rc_up: float
    gamma: float
    clamp: bool = True
    decrement: str = "periodic"
    increment_on_walk: bool = True

    def __post_init__(self):
        if self.rc_low >= self.rc_up:
            raise ValueError("rc_low must be strictly below rc_up")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.decrement not in ("periodic", "exponential"):
            raise ValueError("decrement must be periodic or exponential")


@dataclass(frozen=True)
class TTLConfig:
    """Default TTL and grid used by the CLI when flags are absent."""

    t: float = 50.0
    t_min: float = 1.0
    t_max: float = 200.0
    t_step: float = 1.0

    def grid(self) -> list[float]:
        values = []
        t = self.t_min
        while t <= self.t_max + 1e-9:
            values.append(round(t, 12))
            t += self.t_step
        return values


@dataclass(frozen=True)
class Scenario:
    """Everything one experiment needs: walk, tiers, publisher, demand, RCs."""

    mode: str
    hierarchy: TierHierarchy
    publisher: PublisherModel
    demand: float
    demand_rates: tuple[tuple[float, ...], ...] | None = None
    rc: RCConfig | None = None
    entry_check: bool = False
    ttl: TTLConfig = TTLConfig()

    def __post_init__(self):
        if self.mode not in ("continuous", "discrete"):
            raise ValueError("walk mode must be continuous or discrete")
        if self.demand < 0:
            raise ValueError("demand rate must be nonnegative")
        if self.demand_rates is not None:
            if len(self.demand_rates) != self.hierarchy.depth:
                raise ValueError("demand rates must cover every tier")
            for level, (rates, tier) in enumerate(zip(self.demand_rates, self.hierarchy.tiers)):
                if len(rates) != tier.graph.node_count:
                    raise ValueError(f"demand rates for tier {level + 1} have wrong length")
                if any(r < 0 for r in rates):
                    raise ValueError("demand rates must be nonnegative")

    def with_mode(self, mode: str) -> "Scenario":
        return replace(self, mode=mode)


def default_demand_rates(scenario: Scenario) -> tuple[tuple[float, ...], ...]:
    """Exogenous per-router rates; by default demand enters the bottom tier
    split by its start distribution."""
    if scenario.demand_rates is not None:
        return scenario.demand_rates
    rates = []
    for level, tier in enumerate(scenario.hierarchy.tiers):
        if level == scenario.hierarchy.depth - 1:
            rates.append(tuple(scenario.demand * p for p in tier.start.probs))
        else:
            rates.append(tuple(0.0 for _ in range(tier.graph.node_count)))
    return tuple(rates)


def fluid_node_labels(scenario: Scenario) -> list[tuple[int, int]]:
    """(tier number, node) labels in the flattened order used by to_fluid_tree."""
    labels = []
    for level, tier in enumerate(scenario.hierarchy.tiers):
        labels.extend((level + 1, node) for node in range(tier.graph.node_count))
    return labels


def to_fluid_tree(scenario: Scenario) -> FluidTree:
    """Flatten the hierarchy into a fluid tree (requires unique uplinks).

    Node order is tier-major: all tier-1 routers first, then tier 2, and
    so on, matching fluid_node_labels.
    """
    if scenario.rc is None:
        raise ScenarioError("fluid analysis needs an [rc] section for gamma")
    offsets = []
    total = 0
    for tier in scenario.hierarchy.tiers:
        offsets.append(total)
        total += tier.graph.node_count
    parents: list[int | None] = [None] * total
    for level, tier in enumerate(scenario.hierarchy.tiers):
        if level == 0:
            continue
        assert tier.uplinks is not None
        for node, ups in enumerate(tier.uplinks):
            if len(ups) != 1:
                raise ScenarioError(
                    f"tier {level + 1} node {node} has {len(ups)} uplinks;"
                    " the fluid model is defined on trees (exactly one parent)"
                )
            parents[offsets[level] + node] = offsets[level - 1] + ups[0]
    demands: list[float] = []
    for rates in default_demand_rates(scenario):
        demands.extend(rates)
    return FluidTree(parents=tuple(parents), demands=tuple(demands), gamma=scenario.rc.gamma)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _parse_number(token: str, line: int) -> float:
    token = token.strip()
    try:
        if "/" in token:
            num, den = token.split("/", 1)
            return float(num) / float(den)
        return float(token)
    except (ValueError, ZeroDivisionError):
        raise ScenarioError(f"expected a number, got {token!r}", line) from None


def _parse_bool(token: str, line: int) -> bool:
    low = token.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ScenarioError(f"expected true/false, got {token!r}", line)


def _parse_vector(token: str, line: int) -> tuple[float, ...]:
    parts = token.split()
    if not parts:
        raise ScenarioError("expected a space-separated vector", line)
    return tuple(_parse_number(p, line) for p in parts)


def _parse_int(token: str, line: int) -> int:
    value = _parse_number(token, line)
    if value != int(value):
        raise ScenarioError(f"expected an integer, got {token!r}", line)
    return int(value)


class _Section:
    def __init__(self, name: str, line: int):
        self.name = name
        self.line = line
        self.entries: list[tuple[str, str, int]] = []  # (key, value, line)

    def pop(self, key: str) -> tuple[str, int] | None:
        for idx, (k, v, line) in enumerate(self.entries):
            if k == key:
                del self.entries[idx]
                return v, line
        return None

    def pop_all(self, key: str) -> list[tuple[str, int]]:
        kept, out = [], []
        for k, v, line in self.entries:
            if k == key:
                out.append((v, line))
            else:
                kept.append((k, v, line))
        self.entries = kept
        return out

    def reject_leftovers(self):
        if self.entries:
            key, _, line = self.entries[0]
            raise ScenarioError(f"unknown key {key!r} in section [{self.name}]", line)


def _split_sections(text: str) -> dict[str, _Section]:
    sections: dict[str, _Section] = {}
    current: _Section | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            if name in sections:
                raise ScenarioError(f"duplicate section [{name}]", lineno)
            current = _Section(name, lineno)
            sections[name] = current
            continue
        if current is None:
            raise ScenarioError("content before the first section header", lineno)
        if "=" not in line:
            raise ScenarioError("expected 'key = value'", lineno)
        key, value = line.split("=", 1)
        current.entries.append((key.strip().lower(), value.strip(), lineno))
    return sections


def _require(sections: dict[str, _Section], name: str) -> _Section:
    if name not in sections:
        raise ScenarioError(f"missing required section [{name}]")
    return sections.pop(name)


def _build_tier(
    section: _Section,
    tier_number: int,
    default_psi: float,
    parent_nodes: int | None,
) -> Tier:
    got = section.pop("nodes")
    if got is None:
        raise ScenarioError(f"[{section.name}] needs a 'nodes' key", section.line)
    node_count = _parse_int(*got)
    if node_count < 1:
        raise ScenarioError("nodes must be positive", got[1])

    undirected = True
    got = section.pop("undirected")
    if got is not None:
        undirected = _parse_bool(*got)

    psi = default_psi
    got = section.pop("psi")
    if got is not None:
        psi = _parse_number(*got)

    edges = []
    for value, line in section.pop_all("edge"):
        pair = value.split()
        if len(pair) != 2:
            raise ScenarioError("edge wants two node indices", line)
        edges.append((_parse_int(pair[0], line), _parse_int(pair[1], line)))
    if not edges:
        raise ScenarioError(f"[{section.name}] declares no edges", section.line)

    try:
        if undirected:
            graph = DomainGraph.undirected(node_count, edges, psi)
        else:
            graph = DomainGraph(node_count, tuple(edges), psi)
    except ValueError as exc:
        raise ScenarioError(str(exc), section.line) from None

    mode = "quenched"
    got = section.pop("placement_mode")
    if got is not None:
        mode = got[0].strip().lower()
    got = section.pop("placement")
    if got is None:
        raise ScenarioError(f"[{section.name}] needs a 'placement' vector", section.line)
    try:
        placement = PlacementVector(_parse_vector(*got), mode=mode)
    except ValueError as exc:
        raise ScenarioError(str(exc), got[1]) from None

    got = section.pop("start")
    if got is None:
        raise ScenarioError(f"[{section.name}] needs a 'start' vector", section.line)
    try:
        start = InitialDistribution(_parse_vector(*got))
    except ValueError as exc:
        raise ScenarioError(str(exc), got[1]) from None

    availability = 1.0
    got = section.pop("availability")
    if got is not None:
        availability = _parse_number(*got)

    forward_delay = 0.0
    got = section.pop("forward_delay")
    if got is not None:
        forward_delay = _parse_number(*got)

    uplinks: tuple[tuple[int, ...], ...] | None = None
    uplink_entries: dict[int, tuple[int, ...]] = {}
    for key in [k for k, _, _ in list(section.entries) if k.startswith("uplink ")]:
        for value, line in section.pop_all(key):
            node = _parse_int(key.split(None, 1)[1], line)
            parents = tuple(_parse_int(p, line) for p in value.split())
            if not parents:
                raise ScenarioError(f"uplink {node} lists no parents", line)
            if node in uplink_entries:
                raise ScenarioError(f"duplicate uplink line for node {node}", line)
            uplink_entries[node] = parents
    if tier_number > 1:
        if parent_nodes is None:
            raise ScenarioError(f"tier {tier_number} appears before tier {tier_number - 1}")
        missing = [n for n in range(node_count) if n not in uplink_entries]
        if missing:
            raise ScenarioError(
                f"[{section.name}] node {missing[0]} has no uplink", section.line
            )
        uplinks = tuple(uplink_entries[n] for n in range(node_count))
    elif uplink_entries:
        raise ScenarioError("tier 1 is the top tier and cannot have uplinks", section.line)

    section.reject_leftovers()
    try:
        return Tier(
            graph=graph,
            placement=placement,
            start=start,
            availability=availability,
            forward_delay=forward_delay,
            uplinks=uplinks,
        )
    except ValueError as exc:
        raise ScenarioError(str(exc), section.line) from None


def parse_scenario(text: str) -> Scenario:
    """Parse scenario text, raising ScenarioError with a line number on failure."""
    sections = _split_sections(text)

    walk = _require(sections, "walk")
    got = walk.pop("mode")
    mode = got[0].strip().lower() if got else "continuous"
    if mode not in ("continuous", "discrete"):
        raise ScenarioError(
            f"walk mode must be continuous or discrete, got {mode!r}",
            got[1] if got else walk.line,
        )
    default_psi = 1.0
    got = walk.pop("psi")
    if got is not None:
        default_psi = _parse_number(*got)
        if default_psi <= 0:
            raise ScenarioError("psi must be positive", got[1])
    entry_check = False
    got = walk.pop("entry_check")
    if got is not None:
        entry_check = _parse_bool(*got)
    walk.reject_leftovers()

    tiers = []
    number = 1
    while f"tier {number}" in sections:
        section = sections.pop(f"tier {number}")
        parent_nodes = tiers[number - 2].graph.node_count if number > 1 else None
        tiers.append(_build_tier(section, number, default_psi, parent_nodes))
        number += 1
    if not tiers:
        raise ScenarioError("missing required section [tier 1]")
    stray = [name for name in sections if name.startswith("tier ")]
    if stray:
        raise ScenarioError(
            f"tier sections must be numbered consecutively from 1; found [{stray[0]}]",
            sections[stray[0]].line,
        )
    try:
        hierarchy = TierHierarchy(tuple(tiers))
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None

    pub_section = _require(sections, "publisher")
    got = pub_section.pop("mode")
    pub_mode = got[0].strip().lower() if got else "fixed"
    try:
        if pub_mode in ("fixed", "fixed_t0"):
            got = pub_section.pop("t0")
            if got is None:
                raise ScenarioError("fixed publisher needs 't0'", pub_section.line)
            publisher = PublisherModel.fixed(_parse_number(*got))
        elif pub_mode == "mm1":
            got = pub_section.pop("mu")
            if got is None:
                raise ScenarioError("mm1 publisher needs 'mu'", pub_section.line)
            mu = _parse_number(*got)
            scale = 1000.0
            got = pub_section.pop("scale")
            if got is not None:
                scale = _parse_number(*got)
            publisher = PublisherModel.mm1(mu, scale)
        else:
            raise ScenarioError(f"publisher mode must be fixed or mm1, got {pub_mode!r}",
                                pub_section.line)
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc), pub_section.line) from None
    pub_section.reject_leftovers()

    demand_section = _require(sections, "demand")
    got = demand_section.pop("lambda")
    if got is None:
        raise ScenarioError("[demand] needs 'lambda'", demand_section.line)
    demand = _parse_number(*got)
    rates_entries: dict[int, tuple[float, ...]] = {}
    for key in [k for k, _, _ in list(demand_section.entries) if k.startswith("rates ")]:
        for value, line in demand_section.pop_all(key):
            tier_no = _parse_int(key.split(None, 1)[1], line)
            if not 1 <= tier_no <= len(tiers):
                raise ScenarioError(f"rates for unknown tier {tier_no}", line)
            rates_entries[tier_no] = _parse_vector(value, line)
    demand_section.reject_leftovers()
    demand_rates = None
    if rates_entries:
        demand_rates = tuple(
            rates_entries.get(level + 1, tuple(0.0 for _ in range(t.graph.node_count)))
            for level, t in enumerate(tiers)
        )

    rc = None
    if "rc" in sections:
        rc_section = sections.pop("rc")

        def rc_value(key, default, parser):
            got = rc_section.pop(key)
            return parser(*got) if got is not None else default

        try:
            rc = RCConfig(
                rc_low=rc_value("rc_low", 0.0, _parse_number),
                rc_up=rc_value("rc_up", 50.0, _parse_number),
                gamma=rc_value("gamma", 1.0, _parse_number),
                clamp=rc_value("clamp", True, _parse_bool),
                decrement=rc_value("decrement", "periodic", lambda v, _line: v.strip().lower()),
                increment_on_walk=rc_value("increment_on_walk", True, _parse_bool),
            )
        except ValueError as exc:
            raise ScenarioError(str(exc), rc_section.line) from None
        rc_section.reject_leftovers()

    ttl = TTLConfig()
    if "ttl" in sections:
        ttl_section = sections.pop("ttl")

        def ttl_value(key, default):
            got = ttl_section.pop(key)
            return _parse_number(*got) if got is not None else default

        ttl = TTLConfig(
            t=ttl_value("t", 50.0),
            t_min=ttl_value("t_min", 1.0),
            t_max=ttl_value("t_max", 200.0),
            t_step=ttl_value("t_step", 1.0),
        )
        ttl_section.reject_leftovers()

    if sections:
        leftover = next(iter(sections.values()))
        raise ScenarioError(f"unknown section [{leftover.name}]", leftover.line)

    try:
        return Scenario(
            mode=mode,
            hierarchy=hierarchy,
            publisher=publisher,
            demand=demand,
            demand_rates=demand_rates,
            rc=rc,
            entry_check=entry_check,
            ttl=ttl,
        )
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_scenario(handle.read())
