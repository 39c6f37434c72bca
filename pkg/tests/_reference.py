"""Deterministic fixture problems shared by tests and the shipped examples."""

from __future__ import annotations

import math

from exitcontracts.model import (AtomicMeasure, MarkovLattice, ProblemSpec,
                                 TimeGrid)


def chain_reference_problem(stages: int = 64, horizon: float = 1.0) -> ProblemSpec:
    """Two-agent problem on a 2-state time-homogeneous chain with
    Lipschitz-in-time rates and uniform atoms starting at t_1."""
    times = [horizon * j / stages for j in range(stages + 1)]

    def f1(t, x):
        return -0.8 + 0.25 * math.sin(2 * math.pi * t) + (0.1 if x else 0.0)

    def f2(t, x):
        return 0.5 + 0.2 * math.cos(math.pi * t) + (0.15 if x else 0.0)

    def g1(t, x):
        return 0.6 * (1.0 - t) + (0.3 if x else -0.1)

    def g2(t, x):
        return 0.4 + 0.3 * math.sin(math.pi * t) - (0.2 if x else 0.0)

    transition = [[0.75, 0.25], [0.35, 0.65]]
    lattice = MarkovLattice(
        states=[["lo", "hi"] for _ in range(stages + 1)],
        init=[1.0, 0.0],
        transitions=[[list(row) for row in transition] for _ in range(stages)],
        f=[[(f1(t, x), f2(t, x)) for x in (0, 1)] for t in times],
        g=[[(g1(t, x), g2(t, x)) for x in (0, 1)] for t in times],
        xi=[0.25, -0.15],
        n=2,
    )
    mu = AtomicMeasure((0.0, *([horizon / stages] * stages)))
    return ProblemSpec(grid=TimeGrid(tuple(times)), mu_a=mu, mu_p=mu,
                       model=lattice, n=2)


def dyadic_grids(spec: ProblemSpec, meshes=(2, 4, 8, 16, 32, 64)) -> tuple[tuple[float, ...], ...]:
    m = spec.grid.m
    out = []
    for k in meshes:
        step = m // k
        out.append(tuple(spec.grid.times[j] for j in range(0, m + 1, step)))
    return tuple(out)
