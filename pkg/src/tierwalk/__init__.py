"""tierwalk: random-walk content search in tiered cache networks.

Computes search performance two independent ways, an exact Markov
transient model and a protocol-faithful discrete-event simulation, and
trades off the walk's TTL against publisher load.
"""

from .fluid import FluidTree, PlacementMarking, mark_placement
from .optimizer import SweepResult, constrained_ttl, find_optimal_ttl
from .scenario import (
    RCConfig,
    Scenario,
    ScenarioError,
    TTLConfig,
    load_scenario,
    parse_scenario,
    to_fluid_tree,
)
from .simulator import (
    OccupancyTable,
    SimReport,
    estimate_reliability,
    run_placement_convergence,
    simulate,
)
from .topology import (
    DomainGraph,
    GeneratorMatrix,
    InitialDistribution,
    InvalidGraphError,
    PlacementVector,
    Tier,
    TierHierarchy,
    UniformizedChain,
    build_generator,
    miss_matrix,
    uniformize,
)
from .transient import (
    MissCurve,
    PublisherModel,
    TransientSeries,
    UnstablePublisherError,
    compose_tiers,
    mean_hitting_time,
    mean_hitting_time_direct,
    mean_lifetime,
    miss_curve,
    placement_miss_curve,
    poisson_cutoff,
    publisher_load,
    reliability,
    tier_miss_curve,
    transient_series,
)

__version__ = "0.1.0"
