"""Independent brute-force oracles used to freeze expected values.

These deliberately avoid the library's matrix machinery: walks are
enumerated path by path, and integrals are done by quadrature on a fine
grid, so agreement with the analytic code is evidence rather than
tautology.
"""

from __future__ import annotations

import numpy as np


def enumerate_miss_probability(
    neighbors: list[list[int]],
    start_probs: list[float],
    omega: list[float],
    steps: int,
    quenched: bool,
) -> float:
    """P(no discovery within ``steps`` walk moves), by path enumeration.

    Detection happens on arrival after each move, never at the start
    node. Quenched placement averages over one-hot copy locations drawn
    from omega; annealed placement survives each arrival at j with
    probability 1 - omega[j].
    """

    def survive_annealed(node: int, remaining: int, weights: list[float]) -> float:
        if remaining == 0:
            return 1.0
        total = 0.0
        deg = len(neighbors[node])
        for nxt in neighbors[node]:
            total += (1.0 / deg) * weights[nxt] * survive_annealed(nxt, remaining - 1, weights)
        return total

    if quenched:
        total = 0.0
        for u, p_u in enumerate(omega):
            if p_u == 0.0:
                continue
            weights = [1.0] * len(omega)
            weights[u] = 0.0
            for start, p0 in enumerate(start_probs):
                if p0 > 0:
                    total += p_u * p0 * survive_annealed(start, steps, weights)
        return total
    weights = [1.0 - w for w in omega]
    return sum(
        p0 * survive_annealed(start, steps, weights)
        for start, p0 in enumerate(start_probs)
        if p0 > 0
    )


def trapezoid_lifetime(reliability_fn, t: float, points: int = 4001) -> float:
    """Quadrature cross-check for the expected walk lifetime."""
    ts = np.linspace(0.0, t, points)
    values = np.array([reliability_fn(x) for x in ts])
    return float(np.trapezoid(values, ts))


def random_walkable_graph(rng: np.random.Generator, n: int) -> list[tuple[int, int]]:
    """Random directed edge list where every node keeps out-degree >= 1."""
    edges = set()
    for a in range(n):
        targets = rng.permutation([b for b in range(n) if b != a])
        for b in targets[: int(rng.integers(1, min(3, n - 1) + 1))]:
            edges.add((a, int(b)))
    return sorted(edges)
