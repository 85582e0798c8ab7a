"""Fluid-limit content placement on tree hierarchies.

In the fluid approximation, request arrivals and the reinforced counters
become continuous flows: a router's counter drifts up at its offered
request rate and down at the decrement rate gamma, so it pins at the
upper threshold (and the router keeps a copy) exactly when offered load
strictly exceeds gamma. A router holding a copy serves its whole subtree
and forwards nothing, which makes placement decidable leaves-first.

Ties resolve to not-stored: counters start at the lower threshold, and a
drift of exactly zero never climbs away from it.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["FluidTree", "PlacementMarking", "mark_placement"]


@dataclass(frozen=True)
class FluidTree:
    """Routers with single-parent links, per-router exogenous demand, and gamma.

    ``parents[i]`` is None for roots (top-tier routers). Demands are the
    exogenous request rates entering at each router from below the tree.
    """

    parents: tuple[int | None, ...]
    demands: tuple[float, ...]
    gamma: float

    def __post_init__(self):
        parents = tuple(None if p is None else int(p) for p in self.parents)
        demands = tuple(float(d) for d in self.demands)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "demands", demands)
        n = len(parents)
        if len(demands) != n:
            raise ValueError("demands must match the number of routers")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if any(d < 0 for d in demands):
            raise ValueError("demand rates must be nonnegative")
        if not any(p is None for p in parents):
            raise ValueError("tree needs at least one root")
        for i, p in enumerate(parents):
            if p is not None and not 0 <= p < n:
                raise ValueError(f"router {i} has missing parent {p}")
        # Walking every parent chain must terminate at a root.
        for i in range(n):
            seen = set()
            node: int | None = i
            while node is not None:
                if node in seen:
                    raise ValueError(f"cycle detected through router {node}")
                seen.add(node)
                node = parents[node]

    @property
    def node_count(self) -> int:
        return len(self.parents)

    def roots(self) -> tuple[int, ...]:
        return tuple(i for i, p in enumerate(self.parents) if p is None)


@dataclass(frozen=True)
class PlacementMarking:
    """Which routers hold a copy and the load each one absorbs or forwards.

    ``offered[i]`` is the total request rate arriving at router i from its
    own users plus its unmarked children. ``publisher_load`` is the total
    rate surfacing at the roots.
    """

    stores_copy: tuple[bool, ...]
    offered: tuple[float, ...]
    publisher_load: float


def mark_placement(tree: FluidTree) -> PlacementMarking:
    """Decide copy placement leaves-first.

    A marked router absorbs its subtree's flow; an unmarked one adds its
    offered load to its parent. Non-root routers are marked iff offered
    load strictly exceeds gamma; roots are always marked.
    """
    n = tree.node_count
    children: list[list[int]] = [[] for _ in range(n)]
    for i, p in enumerate(tree.parents):
        if p is not None:
            children[p].append(i)

    # Children-before-parent order: repeatedly peel current leaves.
    order: list[int] = []
    remaining_children = [len(c) for c in children]
    stack = [i for i in range(n) if remaining_children[i] == 0]
    while stack:
        node = stack.pop()
        order.append(node)
        p = tree.parents[node]
        if p is not None:
            remaining_children[p] -= 1
            if remaining_children[p] == 0:
                stack.append(p)

    offered = [0.0] * n
    stores = [False] * n
    for node in order:
        load = tree.demands[node]
        for child in children[node]:
            if not stores[child]:
                load += offered[child]
        offered[node] = load
        if tree.parents[node] is None:
            stores[node] = True
        else:
            stores[node] = load > tree.gamma

    pub = sum(offered[r] for r in tree.roots())
    return PlacementMarking(
        stores_copy=tuple(stores), offered=tuple(offered), publisher_load=pub
    )
