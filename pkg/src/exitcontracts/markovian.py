"""Optimal Markovian level policies on finite-state lattices.

The restricted problem assigns one integer level per (stage, state), edge
monotone along positive transitions.  Unlike the unrestricted problem it has
no dynamic-programming or stopping-time reformulation: the same state reached
with different carried levels must receive one common level, so the search is
a global one.  The indicator variables "level of (stage, state) >= i" form a
precedence-closed selection problem, solved exactly as a maximum-weight
closure by a min cut.

The lattice file format carries principal rates per (stage, state), which is
what lets the closure weights factor per state.  A problem whose principal
rates depend on the whole history must be written as a scenario tree and
solved with the tree solvers instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .model import CapExceededError, MarkovLattice, ProblemSpec
from .representation import interpolate_f

DEFAULT_ENUM_CAP = 1_000_000
#: Objective weights are scaled by this factor and rounded to integers for
#: the min cut; Python integers are exact, so a large scale keeps rounding
#: far below the cross-solver agreement tolerance.
DEFAULT_WEIGHT_SCALE = 1e12


@dataclass
class MarkovLevelPolicy:
    """Integer level per (stage, state), edge monotone along positive
    transitions of the lattice."""

    levels: list[list[int]]

    def level(self, stage: int, state: int) -> int:
        return self.levels[stage][state]


def edge_monotonicity_violations(lattice: MarkovLattice,
                                 levels: Sequence[Sequence[float]]) -> list[str]:
    marg = lattice.marginals()
    out = []
    for j in range(lattice.m):
        for x, px in enumerate(marg[j]):
            if px <= 0.0:
                continue
            for y, q in enumerate(lattice.transitions[j][x]):
                if q > 0.0 and levels[j + 1][y] < levels[j][x]:
                    out.append(
                        f"level drops from {levels[j][x]!r} at stage {j} state "
                        f"{lattice.states[j][x]} to {levels[j + 1][y]!r} at stage "
                        f"{j + 1} state {lattice.states[j + 1][y]}")
    return out


def markovian_objective(spec: ProblemSpec,
                        levels: Sequence[Sequence[float]]) -> float:
    """Expected principal reward of a per-(stage, state) level assignment,
    evaluated directly from the definition: the atom at stage j is priced
    with the level of the state occupied at stage j-1 (zero before the
    root), and each path pays the terminal payoff once per agent."""
    lat = spec.lattice
    issues = edge_monotonicity_violations(lat, levels)
    if issues:
        raise ValueError("levels must be edge monotone: " + "; ".join(issues))
    return _objective_unchecked(spec, levels)


def _objective_unchecked(spec: ProblemSpec,
                         levels: Sequence[Sequence[float]]) -> float:
    lat = spec.lattice
    n = spec.n
    wa, wp = spec.mu_a.weights, spec.mu_p.weights
    marg = lat.marginals()
    total = 0.0
    for x, px in enumerate(marg[0]):
        if px > 0.0:
            total += px * wp[0] * sum(lat.g[0][x])
    for j in range(1, lat.m + 1):
        for x, px in enumerate(marg[j - 1]):
            if px <= 0.0:
                continue
            lv = levels[j - 1][x]
            released = min(n, int(math.floor(lv))) if lv > 0.0 else 0
            for y, q in enumerate(lat.transitions[j - 1][x]):
                if q <= 0.0:
                    continue
                r = wp[j] * sum(lat.g[j][y][released:])
                if released > 0:
                    r -= released * wa[j] * interpolate_f(lat.f[j][y], lv)
                total += px * q * r
    for x, px in enumerate(marg[lat.m]):
        if px > 0.0:
            total -= px * n * lat.xi[x]
    return total


def _complete_terminal_levels(lattice: MarkovLattice,
                              levels: list[list[int]]) -> None:
    """Fill stage-m levels (they never enter the objective) with the smallest
    edge-monotone choice: the max over positive-probability predecessors."""
    marg = lattice.marginals()
    m = lattice.m
    levels[m] = [0] * len(lattice.states[m])
    for x, px in enumerate(marg[m - 1]):
        if px <= 0.0:
            continue
        for y, q in enumerate(lattice.transitions[m - 1][x]):
            if q > 0.0:
                levels[m][y] = max(levels[m][y], levels[m - 1][x])


def _stop_weights(spec: ProblemSpec) -> list[dict[int, list[float]]]:
    """Expected cost of holding (stage, state) at level >= i.

    weight[j][x][i-1] is the probability-weighted next-atom term
    g_i + (i f_i - (i-1) f_{i-1}) collected when state x at stage j carries
    level at least i; selecting that indicator removes the term from the
    objective.
    """
    lat = spec.lattice
    n = spec.n
    wa, wp = spec.mu_a.weights, spec.mu_p.weights
    marg = lat.marginals()
    out: list[dict[int, list[float]]] = []
    for j in range(lat.m):
        stage: dict[int, list[float]] = {}
        for x, px in enumerate(marg[j]):
            if px <= 0.0:
                continue
            per_i = [0.0] * n
            for y, q in enumerate(lat.transitions[j][x]):
                if q <= 0.0:
                    continue
                f, g = lat.f[j + 1][y], lat.g[j + 1][y]
                for i in range(1, n + 1):
                    margin = i * f[i - 1] - (i - 1) * (f[i - 2] if i >= 2 else 0.0)
                    per_i[i - 1] += px * q * (wp[j + 1] * g[i - 1] + wa[j + 1] * margin)
            stage[x] = per_i
        out.append(stage)
    return out


class _Dinic:
    """Max flow with exact integer capacities."""

    def __init__(self, size: int):
        self.size = size
        self.head: list[list[int]] = [[] for _ in range(size)]
        self.to: list[int] = []
        self.cap: list[int] = []

    def add_edge(self, u: int, v: int, c: int) -> None:
        self.head[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(c)
        self.head[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(0)

    def _bfs(self, s: int, t: int) -> bool:
        self.level = [-1] * self.size
        self.level[s] = 0
        q = [s]
        while q:
            nq = []
            for u in q:
                for e in self.head[u]:
                    v = self.to[e]
                    if self.cap[e] > 0 and self.level[v] < 0:
                        self.level[v] = self.level[u] + 1
                        nq.append(v)
            q = nq
        return self.level[t] >= 0

    def _dfs(self, u: int, t: int, pushed: int) -> int:
        if u == t:
            return pushed
        while self.it[u] < len(self.head[u]):
            e = self.head[u][self.it[u]]
            v = self.to[e]
            if self.cap[e] > 0 and self.level[v] == self.level[u] + 1:
                got = self._dfs(v, t, min(pushed, self.cap[e]))
                if got > 0:
                    self.cap[e] -= got
                    self.cap[e ^ 1] += got
                    return got
            self.it[u] += 1
        return 0

    def max_flow(self, s: int, t: int) -> int:
        flow = 0
        while self._bfs(s, t):
            self.it = [0] * self.size
            while True:
                got = self._dfs(s, t, 1 << 200)
                if got == 0:
                    break
                flow += got
        return flow

    def min_cut_source_side(self, s: int) -> set[int]:
        seen = {s}
        q = [s]
        while q:
            u = q.pop()
            for e in self.head[u]:
                v = self.to[e]
                if self.cap[e] > 0 and v not in seen:
                    seen.add(v)
                    q.append(v)
        return seen


def solve_markovian_mincut(spec: ProblemSpec, *,
                           weight_scale: float = DEFAULT_WEIGHT_SCALE
                           ) -> tuple[float, MarkovLevelPolicy]:
    """Optimal Markovian level policy via maximum-weight closure.

    One binary node per (stage, state, threshold i) indicator, precedence
    edges enforcing the threshold order and edge monotonicity; the min cut
    selects the indicator set of an optimal policy.  The returned value is
    the policy's objective re-evaluated in floats from the definition.
    """
    lat = spec.lattice
    n = spec.n
    weights = _stop_weights(spec)

    ids: dict[tuple[int, int, int], int] = {}
    for j in range(lat.m):
        for x in weights[j]:
            for i in range(1, n + 1):
                ids[(j, x, i)] = 2 + len(ids)
    source, sink = 0, 1
    net = _Dinic(2 + len(ids))
    int_w: dict[int, int] = {}
    for (j, x, i), node in ids.items():
        int_w[node] = round(-weights[j][x][i - 1] * weight_scale)
    inf_cap = sum(abs(w) for w in int_w.values()) + 1
    positive_total = 0
    for node, w in int_w.items():
        if w > 0:
            positive_total += w
            net.add_edge(source, node, w)
        elif w < 0:
            net.add_edge(node, sink, -w)
    for (j, x, i), node in ids.items():
        if i > 1:
            net.add_edge(node, ids[(j, x, i - 1)], inf_cap)
        if j + 1 < lat.m:
            for y, q in enumerate(lat.transitions[j][x]):
                if q > 0.0 and (j + 1, y, i) in ids:
                    net.add_edge(node, ids[(j + 1, y, i)], inf_cap)
    net.max_flow(source, sink)
    chosen = net.min_cut_source_side(source)

    levels = [[0] * len(stage) for stage in lat.states]
    for (j, x, i), node in ids.items():
        if node in chosen:
            levels[j][x] = max(levels[j][x], i)
    # unreached states keep level 0, which cannot break edge monotonicity
    _complete_terminal_levels(lat, levels)
    policy = MarkovLevelPolicy(levels)
    value = markovian_objective(spec, levels)
    return value, policy


def brute_force_markovian(spec: ProblemSpec, *, cap: int = DEFAULT_ENUM_CAP
                          ) -> tuple[float, MarkovLevelPolicy]:
    """Exhaustive search over edge-monotone labelings, maximizing the
    definitional objective; deterministic lexicographic tie-break in
    (stage, state) order."""
    lat = spec.lattice
    n = spec.n
    marg = lat.marginals()
    slots = [(j, x) for j in range(lat.m)
             for x in range(len(lat.states[j])) if marg[j][x] > 0.0]
    space = (n + 1) ** len(slots)
    if space > cap:
        raise CapExceededError(f"{space} labelings exceed the cap {cap}")

    levels = [[0] * len(stage) for stage in lat.states]
    best_value = -math.inf
    best_levels: list[list[int]] | None = None

    def lower_bound(k: int) -> int:
        j, x = slots[k]
        if j == 0:
            return 0
        lo = 0
        for xp, q_row in enumerate(lat.transitions[j - 1]):
            if marg[j - 1][xp] > 0.0 and q_row[x] > 0.0:
                lo = max(lo, levels[j - 1][xp])
        return lo

    def recurse(k: int) -> None:
        nonlocal best_value, best_levels
        if k == len(slots):
            value = _objective_unchecked(spec, levels)
            if value > best_value:
                best_value = value
                best_levels = [list(row) for row in levels]
            return
        j, x = slots[k]
        for l in range(lower_bound(k), n + 1):
            levels[j][x] = l
            recurse(k + 1)
        levels[j][x] = 0

    recurse(0)
    assert best_levels is not None
    _complete_terminal_levels(lat, best_levels)
    return best_value, MarkovLevelPolicy(best_levels)


def build_markovian_contract(spec: ProblemSpec,
                             policy: MarkovLevelPolicy) -> list[list[float]]:
    """Contract induced by a Markovian policy, computed per (stage, state).

    Backward induction through the transition matrices alone; unrolling the
    lattice and valuing the induced tree policy gives the same numbers, so
    the contract payment depends on the current state only.
    """
    lat = spec.lattice
    issues = edge_monotonicity_violations(lat, policy.levels)
    if issues:
        raise ValueError("policy must be edge monotone: " + "; ".join(issues))
    wa = spec.mu_a.weights
    values = [[0.0] * len(stage) for stage in lat.states]
    values[lat.m] = list(lat.xi)
    for j in range(lat.m - 1, -1, -1):
        for x in range(len(lat.states[j])):
            lv = float(policy.levels[j][x])
            total = 0.0
            for y, q in enumerate(lat.transitions[j][x]):
                if q > 0.0:
                    total += q * (wa[j + 1] * interpolate_f(lat.f[j + 1][y], lv)
                                  + values[j + 1][y])
            values[j][x] = total
    return values
