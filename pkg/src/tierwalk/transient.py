"""Exact transient analysis of the random-walk search.

Everything flows from the per-jump miss curve Omega(k): the probability
that the walk has not discovered the content after k jumps of the
uniformized chain, obtained by iterating the sub-stochastic miss matrix
against the start distribution. Detection happens on arrival after a
jump, so Omega(0) = 1 and the entry router is never checked before the
first move.

Continuous-time metrics mix the curve with Poisson jump-count weights:

    R(T)    = sum_n  pois(n; rate*T) * Omega(n)
    E[L(T)] = integral_0^T R(t) dt
            = (1/rate) * sum_n  P(N > n) * Omega(n)

and the expected time to obtain the content combines the in-domain
search with the escalation cost:

    E[H(T)] = (E[L(T)] + T0 * R(T)) * p + (T0 + T) * (1 - p)

where p is the availability probability and T0 is either a fixed cost or
the M/M/1 feedback scale/(mu - R(T)*lambda). Discrete-time walks floor T
to a step count and read the curve directly.

Note on placement modes: quenched metrics (one fixed copy, averaged over
one-hot placements) are invariant to the uniformization rate, while
annealed metrics re-sample presence at every jump and therefore depend
on it; the default rate is the walker rate, matching a real check on
every arrival.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse
from scipy import special, stats

from .topology import (
    InitialDistribution,
    PlacementVector,
    Tier,
    TierHierarchy,
    UniformizedChain,
    build_generator,
    miss_matrix,
    uniformize,
)

__all__ = [
    "UnstablePublisherError",
    "MissCurve",
    "PublisherModel",
    "TransientSeries",
    "miss_curve",
    "placement_miss_curve",
    "tier_miss_curve",
    "poisson_cutoff",
    "reliability",
    "mean_lifetime",
    "mean_hitting_time",
    "mean_hitting_time_direct",
    "publisher_load",
    "resolve_publisher_cost",
    "compose_tiers",
    "transient_series",
    "required_curve_length",
]

DEFAULT_EPS = 1e-12

# Dense vector-matrix products win below this size; above it the
# recursion switches to a sparse edge-list product.
SPARSE_THRESHOLD = 256


class UnstablePublisherError(ValueError):
    """The M/M/1 publisher is overloaded (service rate <= offered load)."""


@dataclass(frozen=True, eq=False)
class MissCurve:
    """Omega(k) for k = 0..K, plus a bound on everything beyond K.

    The curve is non-increasing, so ``truncation_error_bound`` (the last
    stored value) dominates every omitted Omega and turns a Poisson tail
    mass into a rigorous truncation error bound.
    """

    omegas: np.ndarray

    def __post_init__(self):
        omegas = np.asarray(self.omegas, dtype=float)
        omegas.setflags(write=False)
        object.__setattr__(self, "omegas", omegas)

    @property
    def k_max(self) -> int:
        return len(self.omegas) - 1

    @property
    def truncation_error_bound(self) -> float:
        return float(self.omegas[-1])


@dataclass(frozen=True)
class PublisherModel:
    """Cost of escalating past the top tier.

    ``fixed_t0`` charges a constant; ``mm1`` charges scale/(mu - load),
    the scaled sojourn time of an M/M/1 queue, and is undefined once the
    offered load reaches the service rate.
    """

    kind: str
    t0: float = 0.0
    mu: float = 0.0
    scale: float = 1000.0

    def __post_init__(self):
        if self.kind not in ("fixed_t0", "mm1"):
            raise ValueError(f"publisher kind must be fixed_t0 or mm1, got {self.kind!r}")
        if self.kind == "fixed_t0" and self.t0 < 0:
            raise ValueError("fixed access cost must be nonnegative")
        if self.kind == "mm1":
            if self.mu <= 0:
                raise ValueError("mm1 service rate must be positive")
            if self.scale <= 0:
                raise ValueError("mm1 scale must be positive")

    @staticmethod
    def fixed(t0: float) -> "PublisherModel":
        return PublisherModel(kind="fixed_t0", t0=float(t0))

    @staticmethod
    def mm1(mu: float, scale: float = 1000.0) -> "PublisherModel":
        return PublisherModel(kind="mm1", mu=float(mu), scale=float(scale))


@dataclass(frozen=True, eq=False)
class TransientSeries:
    """Per-T table of the headline metrics over a TTL grid.

    For multi-tier scenarios ``reliability`` is the product of the
    per-tier curves (probability no tier served the request) so that
    ``publisher_load == reliability * demand`` stays exact, and
    ``mean_lifetime`` is the expected total time spent walking, weighting
    each tier by the probability the request reaches it.
    """

    t_grid: np.ndarray
    reliability: np.ndarray
    mean_lifetime: np.ndarray
    mean_hit: np.ndarray
    publisher_load: np.ndarray

    def __post_init__(self):
        for name in ("t_grid", "reliability", "mean_lifetime", "mean_hit", "publisher_load"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def miss_curve(
    sub_matrix: np.ndarray,
    start: InitialDistribution | np.ndarray,
    k_max: int,
) -> MissCurve:
    """Iterate v(k) = v(k-1) @ P_tilde and record Omega(k) = sum(v(k))."""
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    pi0 = start.as_array() if isinstance(start, InitialDistribution) else np.asarray(start, float)
    n = sub_matrix.shape[0]
    if pi0.shape != (n,):
        raise ValueError("start distribution does not match matrix size")
    operator = scipy.sparse.csr_matrix(sub_matrix) if n > SPARSE_THRESHOLD else sub_matrix
    omegas = np.empty(k_max + 1)
    v = pi0.copy()
    omegas[0] = v.sum()
    for k in range(1, k_max + 1):
        v = v @ operator
        omegas[k] = v.sum()
    return MissCurve(omegas=omegas)


def placement_miss_curve(
    chain: UniformizedChain,
    placement: PlacementVector,
    start: InitialDistribution,
    k_max: int,
) -> MissCurve:
    """Miss curve under the configured placement semantics.

    Annealed placement plugs omega straight into the miss matrix (presence
    re-sampled per jump). Quenched placement averages the one-hot curves
    over the support of omega: a single copy sits at u with probability
    omega_u and the walk either finds that copy or nothing.
    """
    if placement.mode == "annealed":
        return miss_curve(miss_matrix(chain, placement), start, k_max)
    n = chain.node_count
    total = np.zeros(k_max + 1)
    for u in placement.support():
        one_hot = np.zeros(n)
        one_hot[u] = 1.0
        curve = miss_curve(miss_matrix(chain, one_hot), start, k_max)
        total += placement.probs[u] * curve.omegas
    return MissCurve(omegas=total)


def tier_miss_curve(tier: Tier, k_max: int, unif_rate: float | None = None) -> MissCurve:
    """Convenience: generator -> uniformized chain -> placement curve."""
    chain = uniformize(build_generator(tier.graph), unif_rate)
    return placement_miss_curve(chain, tier.placement, tier.start, k_max)


def poisson_cutoff(mean_jumps: float, eps: float = DEFAULT_EPS) -> int:
    """Smallest K whose Poisson tail mass is below eps, with a safety cap."""
    if mean_jumps <= 0:
        return 0
    k = int(stats.poisson.isf(eps, mean_jumps))
    cap = int(math.ceil(mean_jumps + 12.0 * math.sqrt(mean_jumps) + 50.0))
    return max(0, min(k, cap))


def required_curve_length(unif_rate: float, t_max: float, mode: str, eps: float = DEFAULT_EPS) -> int:
    """Jump horizon k_max needed to evaluate metrics up to t_max."""
    if mode == "discrete":
        return int(math.floor(unif_rate * t_max))
    return poisson_cutoff(unif_rate * t_max, eps)


def _check_time(t: float):
    if t < 0:
        raise ValueError("time horizon T must be nonnegative")


def _poisson_weights(curve: MissCurve, unif_rate: float, t: float, eps: float,
                     lifetime: bool = False):
    """Truncation point for the jump sum at time t.

    A curve shorter than the nominal cutoff is still acceptable when its
    tail bound proves the omitted mass is below eps (Omega beyond the
    stored range is dominated by the last value; the mean jump count
    bounds the extra weight the lifetime sum puts on the tail).
    """
    mean_jumps = unif_rate * t
    cutoff = poisson_cutoff(mean_jumps, eps)
    if cutoff > curve.k_max:
        tail = float(stats.poisson.sf(curve.k_max, mean_jumps))
        scale = max(1.0, mean_jumps) if lifetime else 1.0
        if tail * curve.truncation_error_bound * scale > eps:
            raise ValueError(
                f"miss curve ends at k={curve.k_max} but T={t} needs k={cutoff};"
                " rebuild the curve with a larger k_max"
            )
        cutoff = curve.k_max
    return mean_jumps, cutoff


def _discrete_steps(curve: MissCurve, unif_rate: float, t: float) -> int:
    steps = int(math.floor(unif_rate * t))
    if steps > curve.k_max:
        if curve.truncation_error_bound == 0.0:
            return curve.k_max  # fully absorbed: the curve is zero from here on
        raise ValueError(
            f"miss curve ends at k={curve.k_max} but T={t} needs {steps} steps;"
            " rebuild the curve with a larger k_max"
        )
    return steps


def reliability(
    curve: MissCurve,
    unif_rate: float,
    t: float,
    mode: str = "continuous",
    eps: float = DEFAULT_EPS,
) -> float:
    """Probability the content is still undiscovered at time t.

    Continuous mode mixes the curve with Poisson(rate*t) jump-count
    weights, truncated once the tail mass drops below eps (the curve is
    bounded by 1, so the truncation error is bounded by that tail mass).
    Discrete mode reads Omega at the elapsed whole steps.
    """
    _check_time(t)
    if mode == "discrete":
        steps = _discrete_steps(curve, unif_rate, t)
        return float(curve.omegas[steps])
    mean_jumps, cutoff = _poisson_weights(curve, unif_rate, t, eps)
    weights = stats.poisson.pmf(np.arange(cutoff + 1), mean_jumps)
    return float(weights @ curve.omegas[: cutoff + 1])


def mean_lifetime(
    curve: MissCurve,
    unif_rate: float,
    t: float,
    mode: str = "continuous",
    eps: float = DEFAULT_EPS,
) -> float:
    """Expected walk lifetime E[L(t)] = integral of R over [0, t].

    Evaluated in closed form by swapping integral and jump sum: each
    Omega(n) picks up the Poisson tail P(N > n) / rate. Discrete mode
    sums the curve over whole steps.
    """
    _check_time(t)
    if mode == "discrete":
        steps = _discrete_steps(curve, unif_rate, t)
        return float(np.sum(curve.omegas[:steps])) / unif_rate
    mean_jumps, cutoff = _poisson_weights(curve, unif_rate, t, eps, lifetime=True)
    tails = stats.poisson.sf(np.arange(cutoff + 1), mean_jumps)
    return float(tails @ curve.omegas[: cutoff + 1]) / unif_rate


def publisher_load(reliability_value: float, demand: float) -> float:
    """Requests per time unit escaping the domain: R(T) * lambda."""
    if demand < 0:
        raise ValueError("demand rate must be nonnegative")
    return reliability_value * demand


def resolve_publisher_cost(
    publisher: PublisherModel,
    offered_load: float,
    tier_label: str = "tier 1",
) -> float:
    """Escalation cost past the top tier, folding in the M/M/1 feedback."""
    if publisher.kind == "fixed_t0":
        return publisher.t0
    if publisher.mu <= offered_load:
        raise UnstablePublisherError(
            f"publisher overloaded at {tier_label}: service rate {publisher.mu}"
            f" <= offered load {offered_load:.6g}; waiting time grows unbounded"
        )
    return publisher.scale / (publisher.mu - offered_load)


def mean_hitting_time(
    lifetime: float,
    reliability_value: float,
    availability: float,
    escalation_cost: float,
    t: float,
) -> float:
    """E[H(T)] = (E[L(T)] + T0 R(T)) p + (T0 + T)(1 - p)."""
    if not 0.0 <= availability <= 1.0:
        raise ValueError("availability must lie in [0, 1]")
    _check_time(t)
    p = availability
    return (lifetime + escalation_cost * reliability_value) * p + (escalation_cost + t) * (1 - p)


def mean_hitting_time_direct(
    curve: MissCurve,
    unif_rate: float,
    t: float,
    availability: float,
    publisher: PublisherModel,
    demand: float,
    mode: str = "continuous",
    eps: float = DEFAULT_EPS,
) -> float:
    """One-pass evaluation of E[H(T)] straight from the miss curve.

    Independent coding of the same quantity as mean_hitting_time composed
    with reliability and mean_lifetime: the Poisson factors here come from
    log-space pmf accumulation and regularized incomplete-gamma tails
    rather than the scipy.stats frozen distribution, and the full
    expression is assembled inline. Used to cross-check the primary path.
    """
    _check_time(t)
    if not 0.0 <= availability <= 1.0:
        raise ValueError("availability must lie in [0, 1]")
    if mode == "discrete":
        steps = _discrete_steps(curve, unif_rate, t)
        r = float(curve.omegas[steps])
        lifetime = float(np.sum(curve.omegas[:steps])) / unif_rate
    else:
        mean_jumps, cutoff = _poisson_weights(curve, unif_rate, t, eps, lifetime=True)
        ks = np.arange(cutoff + 1)
        if mean_jumps == 0:
            pmf = np.zeros(cutoff + 1)
            pmf[0] = 1.0
        else:
            pmf = np.exp(-mean_jumps + ks * math.log(mean_jumps) - special.gammaln(ks + 1))
        # P(N > n) for Poisson(m) equals the regularized lower incomplete
        # gamma function P(n + 1, m).
        tails = special.gammainc(ks + 1, mean_jumps)
        head = curve.omegas[: cutoff + 1]
        r = float(pmf @ head)
        lifetime = float(tails @ head) / unif_rate
    cost = resolve_publisher_cost(publisher, publisher_load(r, demand))
    p = availability
    return (lifetime + cost * r) * p + (cost + t) * (1 - p)


def _hierarchy_curves(
    hierarchy: TierHierarchy,
    t_max: float,
    mode: str,
    eps: float,
) -> list[tuple[MissCurve, float]]:
    curves = []
    for tier in hierarchy.tiers:
        rate = tier.graph.walker_rate
        k_max = required_curve_length(rate, t_max, mode, eps)
        curves.append((tier_miss_curve(tier, k_max), rate))
    return curves


def _compose_from_curves(
    hierarchy: TierHierarchy,
    curves: list[tuple[MissCurve, float]],
    publisher: PublisherModel,
    demand: float,
    t: float,
    mode: str,
    eps: float,
    unstable_nan: bool = False,
) -> tuple[float, float, float, float]:
    """Returns (mean_hit_bottom, product_reliability, total_walk_time, publisher_load)."""
    depth = hierarchy.depth
    rel = np.empty(depth)
    life = np.empty(depth)
    for i, (curve, rate) in enumerate(curves):
        rel[i] = reliability(curve, rate, t, mode, eps)
        life[i] = mean_lifetime(curve, rate, t, mode, eps)

    # Load thins bottom-up: whatever a tier fails to serve escalates.
    # Reach probability of tier i is likewise the product of the
    # reliabilities of the tiers the request crossed first.
    reach = 1.0
    total_walk = 0.0
    for i in range(depth - 1, -1, -1):
        total_walk += reach * life[i]
        reach *= rel[i]
    product_rel = reach
    pub_load = product_rel * demand

    try:
        cost = resolve_publisher_cost(publisher, pub_load)
    except UnstablePublisherError:
        if not unstable_nan:
            raise
        return math.nan, product_rel, total_walk, pub_load
    mean_hit = math.nan
    for i in range(depth):
        tier = hierarchy.tiers[i]
        mean_hit = mean_hitting_time(life[i], rel[i], tier.availability, cost, t)
        if i + 1 < depth:
            cost = hierarchy.tiers[i + 1].forward_delay + mean_hit
    return mean_hit, product_rel, total_walk, pub_load


def compose_tiers(
    hierarchy: TierHierarchy,
    publisher: PublisherModel,
    demand: float,
    t: float,
    mode: str = "continuous",
    eps: float = DEFAULT_EPS,
) -> float:
    """Expected hitting time seen at the bottom tier of the hierarchy.

    Loads propagate bottom-up (each tier forwards the share it misses),
    fixing the publisher cost, then costs propagate top-down: escalating
    out of tier i costs its forward delay plus the expected hitting time
    from the tier above, with the recursion bottoming out at the publisher.
    """
    _check_time(t)
    curves = _hierarchy_curves(hierarchy, t, mode, eps)
    mean_hit, _, _, _ = _compose_from_curves(hierarchy, curves, publisher, demand, t, mode, eps)
    return mean_hit


def transient_series(
    hierarchy: TierHierarchy,
    publisher: PublisherModel,
    demand: float,
    t_grid,
    mode: str = "continuous",
    eps: float = DEFAULT_EPS,
    unstable: str = "raise",
) -> TransientSeries:
    """Evaluate the transient metrics on a TTL grid (curves built once).

    ``unstable="nan"`` records NaN mean hitting times at TTLs where the
    M/M/1 publisher overloads instead of raising, which lets sweeps span
    the pole.
    """
    if unstable not in ("raise", "nan"):
        raise ValueError("unstable must be 'raise' or 'nan'")
    grid = np.asarray(list(t_grid), dtype=float)
    if grid.size == 0:
        raise ValueError("t_grid must be nonempty")
    if np.any(grid < 0):
        raise ValueError("t_grid entries must be nonnegative")
    curves = _hierarchy_curves(hierarchy, float(grid.max()), mode, eps)
    rel = np.empty(grid.size)
    life = np.empty(grid.size)
    hit = np.empty(grid.size)
    load = np.empty(grid.size)
    for idx, t in enumerate(grid):
        hit[idx], rel[idx], life[idx], load[idx] = _compose_from_curves(
            hierarchy, curves, publisher, demand, float(t), mode, eps,
            unstable_nan=(unstable == "nan"),
        )
    return TransientSeries(
        t_grid=grid, reliability=rel, mean_lifetime=life, mean_hit=hit, publisher_load=load
    )
