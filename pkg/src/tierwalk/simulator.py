"""Protocol-faithful discrete-event simulation of the tiered search.

Rules, mirroring the analytic model's semantics exactly:

* a walker at a router moves after Exp(psi) (continuous) or one fixed
  step (discrete) to a uniformly random out-neighbor;
* content is checked on arrival after a move, never at the router where
  the walk enters a tier (an ``entry_check`` knob exists for
  protocol-realism runs but analytic comparisons need it off);
* when the next move would land past the tier deadline, the router
  holding the request at the deadline forwards it over a uniformly
  chosen uplink, a bread crumb is recorded, and a fresh walk with budget
  T starts in the parent tier after the forward delay;
* a miss at the top tier costs the publisher: a constant, or the scaled
  sojourn of an actual simulated single-server FIFO queue with Exp(mu)
  service in mm1 mode;
* on a hit the content returns instantly along the crumb trail; crumbs
  are consumed, reinforced counters are not, and every crumb router
  whose counter sits at the upper threshold stores a copy;
* request arrivals increment the local reinforced counter (every
  arrival, or escalation hops only, per config); a periodic timer
  decrements all counters at rate gamma, and a cached copy is evicted
  the moment its counter falls to the lower threshold.

Two engines produce statistically identical estimates. Scenarios without
reinforced counters make requests independent, so they run on a
vectorized sampler (fast enough for 1e5-request validation); scenarios
with counters, or runs over a time horizon, use the event-driven engine.
Both are bit-deterministic given (scenario, seed).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from . import rng as rng_streams
from .scenario import Scenario, default_demand_rates
from .topology import Tier
from .transient import PublisherModel

__all__ = [
    "SimReport",
    "OccupancyTable",
    "simulate",
    "estimate_reliability",
    "run_placement_convergence",
]


@dataclass(frozen=True, eq=False)
class SimReport:
    """Monte Carlo estimates plus enough counters to audit conservation."""

    seed: int
    ttl: float
    engine: str
    created: int
    samples: int                 # completed requests
    in_flight: int
    hits_in_tier: int
    publisher_services: int
    hit_time_mean: float
    hit_time_var: float
    bottom_in_domain: int
    bottom_in_domain_misses: int
    empirical_reliability: float
    publisher_rate: float
    publisher_cost_mean: float
    publisher_cost_se: float
    occupancy: tuple[tuple[float, ...], ...]
    walk_steps: int
    escalations: int
    cache_stores: int
    evictions: int
    horizon: float | None = None

    def hit_time_se(self) -> float:
        if self.samples < 2:
            return math.nan
        return math.sqrt(self.hit_time_var / self.samples)


@dataclass(frozen=True)
class OccupancyTable:
    """Long-run fraction of time each router held a copy."""

    labels: tuple[tuple[int, int], ...]  # (tier number, node)
    occupancy: tuple[float, ...]
    report: SimReport

    def by_label(self) -> dict[tuple[int, int], float]:
        return dict(zip(self.labels, self.occupancy))


def estimate_reliability(report: SimReport) -> tuple[float, float]:
    """Binomial estimate of the bottom tier's miss probability R(T)."""
    if report.samples == 0:
        raise ValueError("report has no completed samples")
    if report.samples < 2:
        raise ValueError("need at least 2 samples for a standard error")
    n = report.bottom_in_domain
    if n == 0:
        raise ValueError("no in-domain samples: reliability is undefined")
    p_hat = report.bottom_in_domain_misses / n
    return p_hat, math.sqrt(p_hat * (1.0 - p_hat) / n)


def simulate(
    scenario: Scenario,
    seed: int,
    samples: int | None = None,
    horizon: float | None = None,
    ttl: float | None = None,
    stream: int = 0,
) -> SimReport:
    """Run the simulation for a fixed request count or a time horizon.

    Exactly one of ``samples``/``horizon`` must be given. ``ttl``
    overrides the scenario's default T. ``stream`` selects an
    independent substream of the seed, so parallel parameter points can
    share one master seed without coupling.
    """
    if (samples is None) == (horizon is None):
        raise ValueError("give exactly one of samples or horizon")
    if samples is not None and samples <= 0:
        raise ValueError("samples must be positive")
    if horizon is not None and horizon <= 0:
        raise ValueError("horizon must be positive")
    t = scenario.ttl.t if ttl is None else float(ttl)
    if t < 0:
        raise ValueError("ttl must be nonnegative")
    if scenario.rc is None and horizon is None:
        return _simulate_independent(scenario, seed, samples, t, stream)
    return _simulate_event(scenario, seed, samples, horizon, t, stream)


def run_placement_convergence(scenario: Scenario, seed: int, duration: float) -> OccupancyTable:
    """Long-run occupancy per router under the reinforced-counter dynamics."""
    if scenario.rc is None:
        raise ValueError("placement convergence needs an [rc] section")
    report = _simulate_event(scenario, seed, None, duration, scenario.ttl.t)
    labels = []
    occupancy = []
    for level, per_tier in enumerate(report.occupancy):
        for node, value in enumerate(per_tier):
            labels.append((level + 1, node))
            occupancy.append(value)
    return OccupancyTable(labels=tuple(labels), occupancy=tuple(occupancy), report=report)


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _neighbor_table(tier: Tier) -> tuple[np.ndarray, np.ndarray]:
    """Padded out-neighbor table plus out-degrees for vectorized moves."""
    nbrs = tier.graph.out_neighbors()
    deg = np.array([len(x) for x in nbrs], dtype=np.int64)
    table = np.zeros((tier.graph.node_count, int(deg.max())), dtype=np.int64)
    for node, lst in enumerate(nbrs):
        table[node, : len(lst)] = lst
    return table, deg


def _uplink_table(tier: Tier) -> tuple[np.ndarray, np.ndarray]:
    assert tier.uplinks is not None
    deg = np.array([len(u) for u in tier.uplinks], dtype=np.int64)
    table = np.zeros((len(tier.uplinks), int(deg.max())), dtype=np.int64)
    for node, ups in enumerate(tier.uplinks):
        table[node, : len(ups)] = ups
    return table, deg


def _draw_categorical(rng: np.random.Generator, probs: np.ndarray, size: int) -> np.ndarray:
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    return np.searchsorted(cum, rng.random(size), side="right")


def _static_certain(tier: Tier) -> np.ndarray:
    """Routers that hold a copy deterministically under static placement."""
    probs = tier.placement.as_array()
    if tier.placement.mode == "annealed":
        return probs >= 1.0
    return (probs >= 1.0) if len(tier.placement.support()) == 1 else np.zeros_like(probs, bool)


def _batch_se(values: np.ndarray, target_batches: int = 100) -> float:
    """Batch-means standard error, robust to serial correlation."""
    n = len(values)
    if n < 2:
        return math.nan
    if n < 8:
        return float(np.std(values, ddof=1) / math.sqrt(n))
    nb = min(target_batches, n // 4)
    m = n // nb
    batches = values[: nb * m].reshape(nb, m).mean(axis=1)
    return float(np.std(batches, ddof=1) / math.sqrt(nb))


def _lindley_sojourns(arrivals: np.ndarray, services: np.ndarray) -> np.ndarray:
    """FIFO single-server sojourn times for sorted arrival times."""
    cum = np.cumsum(services)
    shifted = np.concatenate(([0.0], cum[:-1]))
    departures = cum + np.maximum.accumulate(arrivals - shifted)
    return departures - arrivals


# ---------------------------------------------------------------------------
# vectorized engine: independent requests, static placement
# ---------------------------------------------------------------------------


def _simulate_independent(
    scenario: Scenario, seed: int, samples: int, t: float, stream: int = 0
) -> SimReport:
    rng = rng_streams.stream(seed, stream)
    tiers = scenario.hierarchy.tiers
    depth = len(tiers)
    n = samples

    demand = scenario.demand
    if demand > 0:
        creation = np.cumsum(rng.exponential(1.0 / demand, n))
    else:
        creation = np.zeros(n)

    clock = np.zeros(n)            # time consumed since creation
    completed = np.full(n, np.nan)
    active = np.arange(n)
    entry: np.ndarray | None = None  # set per tier; bottom draws from pi0

    walk_steps = 0
    escalations = 0
    hits_in_tier = 0
    bottom_in_domain = 0
    bottom_misses = 0

    for level in range(depth - 1, -1, -1):
        tier = tiers[level]
        m = len(active)
        if m == 0:
            break
        table, deg = _neighbor_table(tier)
        psi = tier.graph.walker_rate
        probs = tier.placement.as_array()
        quenched = tier.placement.mode == "quenched"

        in_domain = (
            rng.random(m) < tier.availability
            if tier.availability < 1.0
            else np.ones(m, dtype=bool)
        )
        content = np.full(m, -1, dtype=np.int64)
        if quenched and in_domain.any():
            support = np.array(tier.placement.support(), dtype=np.int64)
            weights = probs[support]
            picks = _draw_categorical(rng, weights / weights.sum(), int(in_domain.sum()))
            content[in_domain] = support[picks]

        if level == depth - 1:
            entry = _draw_categorical(rng, tier.start.as_array(), m)
            bottom_in_domain = int(in_domain.sum())

        cur = entry.copy()
        local_t = np.zeros(m)
        alive = np.ones(m, dtype=bool)
        hit_at = np.full(m, np.nan)

        if scenario.entry_check:
            if quenched:
                found = cur == content
            else:
                found = in_domain & (rng.random(m) < probs[cur])
            hit_at[found] = 0.0
            alive &= ~found

        while alive.any():
            idx = np.flatnonzero(alive)
            if scenario.mode == "discrete":
                dt = np.full(len(idx), 1.0 / psi)
            else:
                dt = rng.exponential(1.0 / psi, len(idx))
            t_next = local_t[idx] + dt
            overdue = t_next > t
            stay = idx[~overdue]
            alive[idx[overdue]] = False
            if len(stay) == 0:
                continue
            u = rng.random(len(stay))
            slot = (u * deg[cur[stay]]).astype(np.int64)
            nxt = table[cur[stay], slot]
            walk_steps += len(stay)
            cur[stay] = nxt
            local_t[stay] = t_next[~overdue]
            if quenched:
                found = nxt == content[stay]
            else:
                found = in_domain[stay] & (rng.random(len(stay)) < probs[nxt])
            hit_idx = stay[found]
            hit_at[hit_idx] = local_t[hit_idx]
            alive[hit_idx] = False

        hit_mask = ~np.isnan(hit_at)
        hits_in_tier += int(hit_mask.sum())
        completed[active[hit_mask]] = clock[active[hit_mask]] + hit_at[hit_mask]
        if level == depth - 1:
            bottom_misses = int((in_domain & ~hit_mask).sum())

        miss_mask = ~hit_mask
        misses = active[miss_mask]
        escalations += len(misses)
        if len(misses) == 0:
            active = misses
            break
        clock[misses] += t
        if level > 0:
            clock[misses] += tier.forward_delay
            up_table, up_deg = _uplink_table(tier)
            holders = cur[miss_mask]
            slot = (rng.random(len(misses)) * up_deg[holders]).astype(np.int64)
            entry = up_table[holders, slot]
        active = misses

    publisher_services = len(active)
    costs = np.empty(0)
    if publisher_services:
        pub = scenario.publisher
        if pub.kind == "fixed_t0":
            costs = np.full(publisher_services, pub.t0)
            completed[active] = clock[active] + pub.t0
        else:
            arrivals = creation[active] + clock[active]
            order = np.argsort(arrivals, kind="stable")
            services = rng.exponential(1.0 / pub.mu, publisher_services)
            sojourns = _lindley_sojourns(arrivals[order], services)
            costs = np.empty(publisher_services)
            costs[order] = pub.scale * sojourns
            completed[active] = clock[active] + costs

    occupancy = tuple(tuple(float(v) for v in tier.placement.probs) for tier in tiers)
    rel = bottom_misses / bottom_in_domain if bottom_in_domain else math.nan
    return SimReport(
        seed=seed,
        ttl=t,
        engine="independent",
        created=n,
        samples=n,
        in_flight=0,
        hits_in_tier=hits_in_tier,
        publisher_services=publisher_services,
        hit_time_mean=float(np.mean(completed)),
        hit_time_var=float(np.var(completed, ddof=1)) if n > 1 else math.nan,
        bottom_in_domain=bottom_in_domain,
        bottom_in_domain_misses=bottom_misses,
        empirical_reliability=rel,
        publisher_rate=demand * publisher_services / n,
        publisher_cost_mean=float(np.mean(costs)) if len(costs) else math.nan,
        publisher_cost_se=_batch_se(costs) if len(costs) else math.nan,
        occupancy=occupancy,
        walk_steps=walk_steps,
        escalations=escalations,
        cache_stores=0,
        evictions=0,
    )


# ---------------------------------------------------------------------------
# event-driven engine: reinforced counters, caching, shared publisher queue
# ---------------------------------------------------------------------------


class _Request:
    __slots__ = ("rid", "creation", "level", "node", "deadline", "content", "in_domain", "crumbs")

    def __init__(self, rid: int, creation: float, level: int):
        self.rid = rid
        self.creation = creation
        self.level = level
        self.node = -1
        self.deadline = 0.0
        self.content: dict[int, int] = {}
        self.in_domain: dict[int, bool] = {}
        self.crumbs: list[tuple[int, int]] = []


class _EventSim:
    """Single-threaded event loop over one RNG stream."""

    def __init__(self, scenario: Scenario, seed: int, t: float, stream: int = 0):
        self.scenario = scenario
        self.seed = seed
        self.t = t
        self.rng = rng_streams.stream(seed, stream)
        self.tiers = scenario.hierarchy.tiers
        self.depth = len(self.tiers)
        self.nbrs = [tier.graph.out_neighbors() for tier in self.tiers]
        self.rates = default_demand_rates(scenario)
        self.rc = scenario.rc

        self.heap: list[tuple[float, int, str, object]] = []
        self.counter = 0
        self.now = 0.0

        nodes = [tier.graph.node_count for tier in self.tiers]
        low = self.rc.rc_low if self.rc else 0.0
        self.rc_value = [np.full(c, low) for c in nodes]
        self.cached = [np.zeros(c, dtype=bool) for c in nodes]
        self.cached_since = [np.zeros(c) for c in nodes]
        self.cached_time = [np.zeros(c) for c in nodes]
        self.static_certain = [_static_certain(tier) for tier in self.tiers]

        self.server_free = 0.0
        self.sojourn_costs: list[float] = []

        self.created = 0
        self.completed = 0
        self.hits_in_tier = 0
        self.publisher_services = 0
        self.walk_steps = 0
        self.escalations = 0
        self.stores = 0
        self.evictions = 0
        self.bottom_in_domain = 0
        self.bottom_misses = 0
        self.hit_sum = 0.0
        self.hit_sumsq = 0.0

    # -- event plumbing ----------------------------------------------------

    def push(self, time: float, kind: str, payload: object):
        self.counter += 1
        heapq.heappush(self.heap, (time, self.counter, kind, payload))

    # -- request lifecycle --------------------------------------------------

    def enter_tier(self, req: _Request, level: int, node: int):
        req.level = level
        req.node = node
        req.deadline = self.now + self.t
        tier = self.tiers[level]
        if level not in req.in_domain:
            req.in_domain[level] = (
                self.rng.random() < tier.availability if tier.availability < 1.0 else True
            )
            if tier.placement.mode == "quenched" and req.in_domain[level]:
                support = tier.placement.support()
                weights = np.array([tier.placement.probs[u] for u in support])
                pick = _draw_categorical(self.rng, weights / weights.sum(), 1)[0]
                req.content[level] = support[pick]
        if level == self.depth - 1 and req.in_domain[level]:
            self.bottom_in_domain += 1
        self.bump_rc(level, node)
        if self.scenario.entry_check and self.check_content(req, level, node):
            self.deliver(req, found_level=level)
            return
        self.schedule_step(req)

    def schedule_step(self, req: _Request):
        psi = self.tiers[req.level].graph.walker_rate
        if self.scenario.mode == "discrete":
            dt = 1.0 / psi
        else:
            dt = self.rng.exponential(1.0 / psi)
        when = self.now + dt
        if when > req.deadline:
            self.push(req.deadline, "escalate", req)
        else:
            self.push(when, "move", req)

    def check_content(self, req: _Request, level: int, node: int) -> bool:
        if self.cached[level][node]:
            return True
        tier = self.tiers[level]
        if not req.in_domain.get(level, False):
            return False
        if tier.placement.mode == "quenched":
            return req.content.get(level) == node
        prob = tier.placement.probs[node]
        if prob <= 0.0:
            return False
        if prob >= 1.0:
            return True
        return self.rng.random() < prob

    def on_move(self, req: _Request):
        nbrs = self.nbrs[req.level][req.node]
        req.node = nbrs[int(self.rng.random() * len(nbrs))]
        self.walk_steps += 1
        if self.rc is not None and self.rc.increment_on_walk:
            self.bump_rc(req.level, req.node)
        if self.check_content(req, req.level, req.node):
            self.deliver(req, found_level=req.level)
        else:
            self.schedule_step(req)

    def on_escalate(self, req: _Request):
        level, node = req.level, req.node
        self.escalations += 1
        if level == self.depth - 1 and req.in_domain.get(level, False):
            self.bottom_misses += 1
        req.crumbs.append((level, node))
        if level == 0:
            self.to_publisher(req)
            return
        tier = self.tiers[level]
        ups = tier.uplinks[node]
        parent = ups[int(self.rng.random() * len(ups))]
        delay = tier.forward_delay
        if delay > 0:
            self.push(self.now + delay, "enter", (req, level - 1, parent))
        else:
            self.enter_tier(req, level - 1, parent)

    def to_publisher(self, req: _Request):
        pub = self.scenario.publisher
        if pub.kind == "fixed_t0":
            cost = pub.t0
        else:
            start = max(self.now, self.server_free)
            service = self.rng.exponential(1.0 / pub.mu)
            self.server_free = start + service
            sojourn = self.server_free - self.now
            cost = pub.scale * sojourn
        self.sojourn_costs.append(cost)
        self.push(self.now + cost, "pubdone", req)

    def deliver(self, req: _Request, found_level: int | None):
        """Content found: walk the crumb trail, store where counters allow."""
        if found_level is not None:
            self.hits_in_tier += 1
        else:
            self.publisher_services += 1
        if self.rc is not None:
            for level, node in reversed(req.crumbs):
                if self.rc_value[level][node] >= self.rc.rc_up and not self.cached[level][node]:
                    self.cached[level][node] = True
                    self.cached_since[level][node] = self.now
                    self.stores += 1
        req.crumbs.clear()
        elapsed = self.now - req.creation
        self.hit_sum += elapsed
        self.hit_sumsq += elapsed * elapsed
        self.completed += 1

    # -- reinforced counters -------------------------------------------------

    def bump_rc(self, level: int, node: int):
        if self.rc is None:
            return
        value = self.rc_value[level][node] + 1.0
        if self.rc.clamp:
            value = min(value, self.rc.rc_up)
        self.rc_value[level][node] = value

    def on_tick(self):
        rc = self.rc
        assert rc is not None
        for level in range(self.depth):
            values = self.rc_value[level]
            np.maximum(values - 1.0, rc.rc_low, out=values)
            hit_floor = (values <= rc.rc_low) & self.cached[level]
            if hit_floor.any():
                for node in np.flatnonzero(hit_floor):
                    self.cached[level][node] = False
                    self.cached_time[level][node] += self.now - self.cached_since[level][node]
                    self.evictions += 1

    def schedule_tick(self):
        rc = self.rc
        if rc is None:
            return
        if rc.decrement == "periodic":
            self.push(self.now + 1.0 / rc.gamma, "tick", None)
        else:
            self.push(self.now + self.rng.exponential(1.0 / rc.gamma), "tick", None)

    # -- arrivals -------------------------------------------------------------

    def flat_rates(self) -> list[tuple[int, int, float]]:
        out = []
        for level, rates in enumerate(self.rates):
            for node, r in enumerate(rates):
                if r > 0:
                    out.append((level, node, r))
        return out

    # -- main loop -------------------------------------------------------------

    def run(self, samples: int | None, horizon: float | None) -> SimReport:
        entries = self.flat_rates()
        total_rate = sum(r for _, _, r in entries)
        if total_rate <= 0:
            raise ValueError("scenario has no demand: nothing to simulate")
        weights = np.array([r for _, _, r in entries]) / total_rate

        if self.rc is not None:
            self.schedule_tick()
        self.push(self.rng.exponential(1.0 / total_rate), "spawn", None)

        end = math.inf if horizon is None else horizon
        while self.heap:
            time, _, kind, payload = heapq.heappop(self.heap)
            if time > end:
                break
            self.now = time
            if kind == "spawn":
                if samples is None or self.created < samples:
                    pick = int(_draw_categorical(self.rng, weights, 1)[0])
                    level, node, _ = entries[pick]
                    req = _Request(self.created, self.now, level)
                    self.created += 1
                    if samples is None or self.created < samples:
                        self.push(self.now + self.rng.exponential(1.0 / total_rate), "spawn", None)
                    self.enter_tier(req, level, node)
            elif kind == "move":
                self.on_move(payload)
            elif kind == "escalate":
                self.on_escalate(payload)
            elif kind == "enter":
                req, level, node = payload
                self.enter_tier(req, level, node)
            elif kind == "pubdone":
                self.deliver(payload, found_level=None)
            elif kind == "tick":
                self.on_tick()
                self.schedule_tick()

        duration = end if horizon is not None else self.now
        occupancy = []
        for level in range(self.depth):
            frac = self.cached_time[level].copy()
            live = self.cached[level]
            frac[live] += duration - self.cached_since[level][live]
            frac = np.where(self.static_certain[level], duration, frac)
            occupancy.append(tuple(float(v) for v in frac / duration) if duration > 0
                             else tuple(0.0 for _ in frac))

        n = self.completed
        mean = self.hit_sum / n if n else math.nan
        var = (self.hit_sumsq - n * mean * mean) / (n - 1) if n > 1 else math.nan
        costs = np.array(self.sojourn_costs)
        rel = self.bottom_misses / self.bottom_in_domain if self.bottom_in_domain else math.nan
        return SimReport(
            seed=self.seed,
            ttl=self.t,
            engine="event",
            created=self.created,
            samples=n,
            in_flight=self.created - n,
            hits_in_tier=self.hits_in_tier,
            publisher_services=self.publisher_services,
            hit_time_mean=mean,
            hit_time_var=max(var, 0.0) if not math.isnan(var) else var,
            bottom_in_domain=self.bottom_in_domain,
            bottom_in_domain_misses=self.bottom_misses,
            empirical_reliability=rel,
            publisher_rate=(self.publisher_services / duration) if duration > 0 else math.nan,
            publisher_cost_mean=float(np.mean(costs)) if len(costs) else math.nan,
            publisher_cost_se=_batch_se(costs) if len(costs) else math.nan,
            occupancy=tuple(occupancy),
            walk_steps=self.walk_steps,
            escalations=self.escalations,
            cache_stores=self.stores,
            evictions=self.evictions,
            horizon=horizon,
        )


def _simulate_event(
    scenario: Scenario,
    seed: int,
    samples: int | None,
    horizon: float | None,
    t: float,
    stream: int = 0,
) -> SimReport:
    return _EventSim(scenario, seed, t, stream).run(samples, horizon)
