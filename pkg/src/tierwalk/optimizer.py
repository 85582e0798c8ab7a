"""TTL selection: minimize the expected hitting time, optionally under a
publisher-load budget.

The objective is evaluated on an explicit grid. Grid search is the right
tool here: discrete walks make E[H(T)] piecewise constant, and the M/M/1
publisher can blow up past a pole, so derivative-based methods are
fragile while a grid is robust and reproducible. An optional refinement
pass re-grids once at 10x density around the incumbent.

Because the reliability curve is non-increasing in T, the feasible set
of a load budget is an upper tail of the grid, and a constrained optimum
can never beat the unconstrained one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import Scenario
from .transient import UnstablePublisherError, transient_series

__all__ = ["SweepResult", "find_optimal_ttl", "constrained_ttl"]


@dataclass(frozen=True, eq=False)
class SweepResult:
    """Objective values over the evaluated grid plus the selected TTLs.

    ``objective`` holds NaN where the publisher is unstable. For
    constrained runs, ``constrained_ttl`` is None when no grid point
    meets the budget (the infeasible marker) and ``load_budget`` records
    the budget applied; unconstrained runs leave it None.
    """

    t_grid: np.ndarray
    objective: np.ndarray
    reliability: np.ndarray
    mean_lifetime: np.ndarray
    publisher_load: np.ndarray
    feasible: np.ndarray
    optimal_ttl: float
    optimal_objective: float
    constrained_ttl: float | None = None
    constrained_objective: float = math.nan
    load_budget: float | None = None

    def __post_init__(self):
        for name in ("t_grid", "objective", "reliability", "mean_lifetime",
                     "publisher_load", "feasible"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def _evaluate_grid(scenario: Scenario, t_grid: np.ndarray):
    """Metrics per grid point; unstable publishers yield NaN objectives."""
    series = transient_series(
        scenario.hierarchy,
        scenario.publisher,
        scenario.demand,
        t_grid,
        scenario.mode,
        unstable="nan",
    )
    stable = ~np.isnan(series.mean_hit)
    return (
        series.mean_hit.copy(),
        series.reliability,
        series.mean_lifetime,
        series.publisher_load,
        stable,
    )


def _check_grid(t_grid) -> np.ndarray:
    grid = np.asarray(list(t_grid), dtype=float)
    if grid.size == 0:
        raise ValueError("t_grid must be nonempty")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    if grid[0] < 0:
        raise ValueError("t_grid entries must be nonnegative")
    return grid


def _argmin_first(values: np.ndarray, mask: np.ndarray) -> int | None:
    """Index of the smallest masked value; first occurrence wins ties."""
    candidates = np.flatnonzero(mask & ~np.isnan(values))
    if candidates.size == 0:
        return None
    return int(candidates[np.argmin(values[candidates])])


def find_optimal_ttl(
    scenario: Scenario,
    t_grid,
    refine: bool = False,
) -> SweepResult:
    """Grid argmin of E[H(T)], ties broken toward smaller T."""
    grid = _check_grid(t_grid)
    objective, rel, life, load, stable = _evaluate_grid(scenario, grid)
    if refine and grid.size > 1:
        best = _argmin_first(objective, stable)
        if best is not None:
            lo = grid[max(best - 1, 0)]
            hi = grid[min(best + 1, grid.size - 1)]
            step = (hi - lo) / 20.0
            if step > 0:
                extra = np.arange(lo, hi + step / 2, step)
                merged = np.unique(np.concatenate([grid, extra]))
                return find_optimal_ttl(scenario, merged, refine=False)
    best = _argmin_first(objective, stable)
    if best is None:
        raise UnstablePublisherError(
            "publisher is unstable at every grid point; no feasible TTL"
        )
    return SweepResult(
        t_grid=grid,
        objective=objective,
        reliability=rel,
        mean_lifetime=life,
        publisher_load=load,
        feasible=stable,
        optimal_ttl=float(grid[best]),
        optimal_objective=float(objective[best]),
    )


def constrained_ttl(
    scenario: Scenario,
    t_grid,
    load_budget: float,
    refine: bool = False,
) -> SweepResult:
    """Minimize E[H(T)] subject to publisher load at most ``load_budget``.

    Returns the unconstrained solution fields too; ``constrained_ttl`` is
    None when every grid point exceeds the budget.
    """
    if load_budget < 0:
        raise ValueError("load budget must be nonnegative")
    base = find_optimal_ttl(scenario, t_grid, refine=refine)
    within = base.feasible & (base.publisher_load <= load_budget)
    best = _argmin_first(base.objective, within)
    return SweepResult(
        t_grid=base.t_grid,
        objective=base.objective,
        reliability=base.reliability,
        mean_lifetime=base.mean_lifetime,
        publisher_load=base.publisher_load,
        feasible=within,
        optimal_ttl=base.optimal_ttl,
        optimal_objective=base.optimal_objective,
        constrained_ttl=float(base.t_grid[best]) if best is not None else None,
        constrained_objective=float(base.objective[best]) if best is not None else math.nan,
        load_budget=float(load_budget),
    )
