"""Optimal stopping on scenario trees: envelopes, smallest optimal stops,
agent best responses, and ordered multiple stopping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .model import AdaptedProcess, ProblemSpec, ScenarioTree, values_of

# Equality tolerance for the envelope-touches-gains test; ties resolve
# toward stopping, which selects the smallest optimal stopping time.
STOP_TOL = 1e-9


@dataclass(frozen=True)
class StoppingRule:
    """Per-node stop flags; the induced stopping time on a path is the
    first flagged node.  Every root-to-leaf path must contain one."""

    flags: tuple[bool, ...]

    def realized(self, tree: ScenarioTree) -> frozenset[int]:
        """Nodes where the induced stopping time actually stops."""
        hits: set[int] = set()

        def walk(idx: int) -> None:
            if self.flags[idx]:
                hits.add(idx)
                return
            node = tree.nodes[idx]
            if not node.children:
                raise ValueError(f"path through '{node.path}' never stops")
            for c in node.children:
                walk(c)

        walk(0)
        return frozenset(hits)

    def stop_stage_by_leaf(self, tree: ScenarioTree) -> dict[int, int]:
        """Stage of the induced stop on each leaf's path."""
        out: dict[int, int] = {}
        hits = self.realized(tree)

        def walk(idx: int, stop_stage: int | None) -> None:
            node = tree.nodes[idx]
            if stop_stage is None and idx in hits:
                stop_stage = node.stage
            if not node.children:
                out[idx] = stop_stage if stop_stage is not None else node.stage
            for c in node.children:
                walk(c, stop_stage)

        walk(0, None)
        return out


def same_stopping_time(tree: ScenarioTree, a: StoppingRule, b: StoppingRule) -> bool:
    return a.realized(tree) == b.realized(tree)


@dataclass
class SnellResult:
    envelope: AdaptedProcess
    gains: AdaptedProcess
    smallest_stop: StoppingRule
    value: float


def snell_envelope(tree: ScenarioTree, gains: AdaptedProcess | Sequence[float],
                   *, stop_tol: float = STOP_TOL) -> SnellResult:
    """Smallest supermartingale dominating the gains, by backward recursion.

    S equals the gains at terminal nodes and max(gains, E[S | children])
    inside; the stop flags mark every node where S meets the gains, so the
    induced first-hit time is the smallest optimal one.
    """
    g = values_of(gains)
    if len(g) != len(tree.nodes):
        raise ValueError("gains must be defined on every node")
    s = [0.0] * len(tree.nodes)
    flags = [False] * len(tree.nodes)
    for v in reversed(tree.nodes):
        if not v.children:
            s[v.index] = g[v.index]
            flags[v.index] = True
            continue
        cont = sum(p * s[c] for c, p in zip(v.children, v.probs))
        if cont - g[v.index] <= stop_tol:
            flags[v.index] = True
        s[v.index] = max(g[v.index], cont)
    return SnellResult(
        envelope=AdaptedProcess(s),
        gains=AdaptedProcess(list(g)),
        smallest_stop=StoppingRule(tuple(flags)),
        value=s[0],
    )


def certificate_violations(tree: ScenarioTree, result: SnellResult,
                           *, tol: float = 1e-12) -> list[str]:
    """Check the optimality certificate of a computed envelope.

    Verifies, node by node: S >= gains; S >= E[S | children] (supermartingale);
    S = E[S | children] strictly before the induced stop (martingale up to the
    stop); and S = gains at the stop itself.
    """
    s, g = result.envelope.values, result.gains.values
    out: list[str] = []
    for v in tree.nodes:
        if s[v.index] < g[v.index] - tol:
            out.append(f"envelope below gains at '{v.path}'")
        if v.children:
            cont = sum(p * s[c] for c, p in zip(v.children, v.probs))
            if s[v.index] < cont - tol:
                out.append(f"supermartingale inequality fails at '{v.path}'")
    hits = result.smallest_stop.realized(tree)

    def walk(idx: int, stopped: bool) -> None:
        v = tree.nodes[idx]
        if not stopped and idx not in hits and v.children:
            cont = sum(p * s[c] for c, p in zip(v.children, v.probs))
            if abs(s[idx] - cont) > tol:
                out.append(f"martingale property fails before the stop at '{v.path}'")
        if idx in hits:
            if abs(s[idx] - g[idx]) > tol:
                out.append(f"envelope does not meet gains at the stop '{v.path}'")
            stopped = True
        for c in v.children:
            walk(c, stopped)

    walk(0, False)
    return out


def cumulative_agent_gains(spec: ProblemSpec, agent: int) -> list[float]:
    """Path-cumulative reward of one agent: sum of c^A_s f_i(t_s) over the
    atoms at or before each node, the atom at t_0 included."""
    tree = spec.tree
    w = spec.mu_a.weights
    out = [0.0] * len(tree.nodes)
    for v in tree.nodes:
        base = out[v.parent] if v.parent is not None else 0.0
        out[v.index] = base + w[v.stage] * v.f[agent - 1]
    return out


def agent_best_response(spec: ProblemSpec, agent: int,
                        contract: AdaptedProcess | Sequence[float],
                        *, stop_tol: float = STOP_TOL) -> tuple[SnellResult, float]:
    """Optimal exit of one agent under a given contract.

    The stopped value at a node is the accrued rate reward plus the contract
    payment there; returns the Snell solution and the agent's value.
    """
    if not 1 <= agent <= spec.n:
        raise IndexError(f"agent index {agent} out of range 1..{spec.n}")
    tree = spec.tree
    y = values_of(contract)
    if len(y) != len(tree.nodes):
        raise ValueError("contract must be defined on every node")
    accrued = cumulative_agent_gains(spec, agent)
    gains = [a + yy for a, yy in zip(accrued, y)]
    result = snell_envelope(tree, gains, stop_tol=stop_tol)
    return result, result.value


@dataclass
class MultiStopResult:
    value: float
    rules: list[StoppingRule]
    envelopes: list[SnellResult]


def ordered_multistop(tree: ScenarioTree,
                      increments: Sequence[AdaptedProcess | Sequence[float]],
                      *, stop_tol: float = STOP_TOL) -> MultiStopResult:
    """Maximize E[sum_i A_i(tau_i)] over ordered stops tau_1 <= ... <= tau_n,
    where A_i is the path-cumulative sum of the i-th increment.

    Backward pass: with U_{n+1} = 0, U_i is the Snell envelope of
    A_i + U_{i+1}; the optimum is U_1 at the root.  Forward pass: tau_1 is
    the first touch of U_1, and each later tau_i is the first touch of U_i
    at or after tau_{i-1}, which yields the componentwise-smallest optimal
    ordered tuple.
    """
    n = len(increments)
    if n < 1:
        raise ValueError("need at least one stop")
    cums: list[list[float]] = []
    for d in increments:
        dv = values_of(d)
        if len(dv) != len(tree.nodes):
            raise ValueError("increments must be defined on every node")
        a = [0.0] * len(tree.nodes)
        for v in tree.nodes:
            a[v.index] = (a[v.parent] if v.parent is not None else 0.0) + dv[v.index]
        cums.append(a)

    envelopes: list[SnellResult] = [None] * n  # type: ignore[list-item]
    upper = [0.0] * len(tree.nodes)  # value of the stops still to place
    for i in range(n - 1, -1, -1):
        gains = [cums[i][k] + upper[k] for k in range(len(tree.nodes))]
        res = snell_envelope(tree, gains, stop_tol=stop_tol)
        envelopes[i] = res
        upper = res.envelope.values

    rules: list[StoppingRule] = []
    starts = [0]
    for i in range(n):
        flags = [False] * len(tree.nodes)
        nxt: list[int] = []
        res = envelopes[i]

        def walk(idx: int) -> None:
            if res.smallest_stop.flags[idx]:
                flags[idx] = True
                nxt.append(idx)
                return
            for c in tree.nodes[idx].children:
                walk(c)

        for s0 in starts:
            walk(s0)
        rules.append(StoppingRule(tuple(flags)))
        starts = nxt
    return MultiStopResult(value=envelopes[0].value, rules=rules, envelopes=envelopes)


def rules_are_ordered(tree: ScenarioTree, rules: Sequence[StoppingRule]) -> bool:
    """True when the induced stopping times are pathwise nondecreasing."""
    stages = [r.stop_stage_by_leaf(tree) for r in rules]
    for leaf in tree.leaves():
        for i in range(len(rules) - 1):
            if stages[i][leaf.index] > stages[i + 1][leaf.index]:
                return False
    return True
