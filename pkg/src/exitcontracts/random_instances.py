"""Seeded random instances for cross-solver checks and self tests."""

from __future__ import annotations

import random

from .model import (AdaptedProcess, AtomicMeasure, MarkovLattice, Node,
                    ProblemSpec, ScenarioTree, TimeGrid)

RATE_RANGE = (-2.0, 2.0)
XI_RANGE = (-1.0, 1.0)
ORDER_MARGIN = 1e-3


def _ordered_rates(rng: random.Random, n: int) -> tuple[float, ...]:
    lo, hi = RATE_RANGE
    while True:
        draws = sorted(rng.uniform(lo, hi) for _ in range(n))
        if all(b - a >= ORDER_MARGIN for a, b in zip(draws, draws[1:])):
            return tuple(draws)


def _probabilities(rng: random.Random, k: int) -> list[float]:
    raw = [rng.uniform(0.2, 1.0) for _ in range(k)]
    total = sum(raw)
    probs = [x / total for x in raw]
    probs[-1] = 1.0 - sum(probs[:-1])  # make the row sum exactly 1.0
    return probs


def random_measures(rng: random.Random, m: int,
                    *, zero_time_zero_mass: bool = False
                    ) -> tuple[AtomicMeasure, AtomicMeasure]:
    c0a = 0.0 if zero_time_zero_mass or rng.random() < 0.5 else rng.uniform(0.1, 1.0)
    c0p = 0.0 if zero_time_zero_mass or rng.random() < 0.5 else rng.uniform(0.1, 1.0)
    mu_a = AtomicMeasure((c0a, *(rng.uniform(0.1, 1.0) for _ in range(m))))
    mu_p = AtomicMeasure((c0p, *(rng.uniform(0.1, 1.0) for _ in range(m))))
    return mu_a, mu_p


def random_tree_problem(rng: random.Random, *, max_nodes: int = 20,
                        max_depth: int = 4, max_branching: int = 3,
                        max_agents: int = 3) -> ProblemSpec:
    """Random leveled scenario tree: every leaf sits at the final stage,
    rates are ordered draws, terminal payoffs small."""
    n = rng.randint(1, max_agents)
    m = rng.randint(1, max_depth)
    nodes = [Node(index=0, stage=0, parent=None, path="",
                  f=_ordered_rates(rng, n), g=tuple(rng.uniform(*RATE_RANGE) for _ in range(n)))]
    frontier = [0]
    used = 1
    for stage in range(1, m + 1):
        remaining = m - stage  # stages still to fill below the new children
        nxt: list[int] = []
        for pos, vi in enumerate(frontier):
            # budget: each new child drags a mandatory chain to the final
            # stage, and every unprocessed frontier node still needs one
            rest = len(frontier) - pos - 1
            cap = (max_nodes - used - rest * (1 + remaining)
                   - len(nxt) * remaining) // (1 + remaining)
            width = max(1, min(max_branching, rng.randint(1, max_branching), cap))
            probs = _probabilities(rng, width)
            parent = nodes[vi]
            for k in range(width):
                idx = len(nodes)
                path = f"{parent.path}/{k}" if parent.path else str(k)
                child = Node(index=idx, stage=stage, parent=vi, path=path,
                             f=_ordered_rates(rng, n),
                             g=tuple(rng.uniform(*RATE_RANGE) for _ in range(n)),
                             xi=rng.uniform(*XI_RANGE) if stage == m else None,
                             prob=parent.prob * probs[k])
                nodes.append(child)
                parent.children.append(idx)
                parent.probs.append(probs[k])
                nxt.append(idx)
                used += 1
        frontier = nxt
    tree = ScenarioTree(nodes=nodes, m=m, n=n)
    times = [0.0]
    for _ in range(m):
        times.append(times[-1] + rng.uniform(0.2, 1.0))
    mu_a, mu_p = random_measures(rng, m)
    return ProblemSpec(grid=TimeGrid(tuple(times)), mu_a=mu_a, mu_p=mu_p,
                       model=tree, n=n)


def random_monotone_policy(rng: random.Random, tree: ScenarioTree, n: int) -> list[int]:
    """Integer levels in 0..n, nondecreasing along every path."""
    policy = [0] * len(tree.nodes)
    for v in tree.nodes:
        lo = 0 if v.parent is None else policy[v.parent]
        policy[v.index] = rng.randint(lo, n) if rng.random() < 0.6 else lo
    return policy


def random_fractional_levels(rng: random.Random, tree: ScenarioTree,
                             n: int) -> AdaptedProcess:
    """Real levels in [0, n], nondecreasing along every path."""
    lv = [0.0] * len(tree.nodes)
    for v in tree.nodes:
        lo = 0.0 if v.parent is None else lv[v.parent]
        lv[v.index] = lo if rng.random() < 0.3 else rng.uniform(lo, float(n))
    return AdaptedProcess(lv)


def random_admissible_contract(rng: random.Random, spec: ProblemSpec) -> AdaptedProcess:
    """Arbitrary interior payments; terminal payments at the floor."""
    tree = spec.tree
    vals = [0.0] * len(tree.nodes)
    for v in tree.nodes:
        if v.stage == tree.m:
            vals[v.index] = v.xi + (0.0 if rng.random() < 0.7 else rng.uniform(0.0, 0.5))
        else:
            vals[v.index] = rng.uniform(-2.0, 2.0)
    return AdaptedProcess(vals)


def random_lattice_problem(rng: random.Random, *, max_stages: int = 3,
                           max_states: int = 3, max_agents: int = 2,
                           deterministic_init: bool = True) -> ProblemSpec:
    """Small random lattice; stage-0 is a single state when a deterministic
    start is requested, so the instance also compiles to a tree."""
    n = rng.randint(1, max_agents)
    m = rng.randint(2, max_stages)
    sizes = [1 if deterministic_init else rng.randint(1, max_states)]
    sizes += [rng.randint(min(2, max_states), max_states) for _ in range(m)]
    states = [[f"s{j}_{x}" for x in range(sz)] for j, sz in enumerate(sizes)]
    if deterministic_init:
        init = [1.0]
    else:
        init = _probabilities(rng, sizes[0])
    transitions = []
    for j in range(m):
        mat = []
        for _ in range(sizes[j]):
            row = [0.0] * sizes[j + 1]
            # keep some zero transitions to exercise sparse support
            alive = sorted(rng.sample(range(sizes[j + 1]),
                                      rng.randint(1, sizes[j + 1])))
            probs = _probabilities(rng, len(alive))
            for y, p in zip(alive, probs):
                row[y] = p
            mat.append(row)
        transitions.append(mat)
    f = [[_ordered_rates(rng, n) for _ in range(sz)] for sz in sizes]
    g = [[tuple(rng.uniform(*RATE_RANGE) for _ in range(n)) for _ in range(sz)]
         for sz in sizes]
    xi = [rng.uniform(*XI_RANGE) for _ in range(sizes[-1])]
    lattice = MarkovLattice(states=states, init=init, transitions=transitions,
                            f=f, g=g, xi=xi, n=n)
    times = [0.0]
    for _ in range(m):
        times.append(times[-1] + rng.uniform(0.2, 1.0))
    mu_a, mu_p = random_measures(rng, m)
    return ProblemSpec(grid=TimeGrid(tuple(times)), mu_a=mu_a, mu_p=mu_p,
                       model=lattice, n=n)
