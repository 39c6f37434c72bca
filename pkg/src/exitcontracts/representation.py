"""Level-process representation of exit contracts.

A contract (one payment per node) is represented by a level process: the
contract value at a node equals the conditional expectation of the terminal
payment plus the interpolated agent rate evaluated at the running supremum
of the level over the strict future atoms.  The level at a node is extracted
as the largest root of an exactly-maintained piecewise-linear envelope, and
the level-i hitting time of the extracted process is agent i's smallest
optimal exit.
"""

from __future__ import annotations

import math
from typing import Sequence

from .model import AdaptedProcess, ProblemSpec, ScenarioTree, values_of
from .pwl import PwlMonotone, combine

#: Level reported at terminal nodes, where no future atom remains and the
#: extraction is vacuous; never consulted by any objective.
TERMINAL_LEVEL = math.inf


def interpolate_f(rates: Sequence[float], level: float) -> float:
    """Continuous strictly increasing interpolation of the ordered agent
    rates: equals ``rates[i-1]`` at integer level i, is linear between
    consecutive integers, and extends with unit slope in both tails."""
    n = len(rates)
    if n == 0:
        raise ValueError("need at least one rate")
    for i in range(n - 1):
        if not rates[i] < rates[i + 1]:
            raise ValueError("agent rates must be strictly increasing")
    if level <= 1.0:
        return rates[0] + (level - 1.0)
    if level >= float(n):
        return rates[-1] + (level - n)
    i = int(math.floor(level))
    if level == i:
        return rates[i - 1]
    return (i + 1 - level) * rates[i - 1] + (level - i) * rates[i]


def admissibility_violations(spec: ProblemSpec,
                             contract: AdaptedProcess | Sequence[float]) -> list[str]:
    """A contract is admissible when its terminal payment covers the
    participation floor xi at every leaf."""
    tree = spec.tree
    y = values_of(contract)
    out = []
    for leaf in tree.leaves():
        if y[leaf.index] < leaf.xi - 1e-12:
            out.append(f"terminal payment {y[leaf.index]!r} below floor {leaf.xi!r} "
                       f"at leaf '{leaf.path}'")
    return out


def represent_contract(spec: ProblemSpec,
                       contract: AdaptedProcess | Sequence[float]) -> AdaptedProcess:
    """Extract the level process of an admissible contract.

    One backward pass keeps, per node, the piecewise-linear map from a level
    to the best continuation value; the node's level is the largest root of
    that map against the contract value (the sup of the equality set).
    Terminal nodes get the ``TERMINAL_LEVEL`` sentinel.
    """
    tree = spec.tree
    y = values_of(contract)
    bad = admissibility_violations(spec, contract)
    if bad:
        raise ValueError("inadmissible contract: " + "; ".join(bad))
    w = spec.mu_a.weights
    envelopes: list[PwlMonotone | None] = [None] * len(tree.nodes)
    levels = [TERMINAL_LEVEL] * len(tree.nodes)
    for v in reversed(tree.nodes):
        if not v.children:
            envelopes[v.index] = PwlMonotone.constant(y[v.index])
            continue
        terms: list[tuple[float, PwlMonotone]] = []
        atom = w[v.stage + 1]
        for c, p in zip(v.children, v.probs):
            terms.append((p, envelopes[c]))
            terms.append((p * atom, PwlMonotone.from_rates(tree.nodes[c].f)))
        continuation = combine(terms)
        levels[v.index] = continuation.sup_level_at_or_below(y[v.index])
        envelopes[v.index] = continuation.max_with_constant(y[v.index])
    return AdaptedProcess(levels)


def build_contract_from_level(spec: ProblemSpec,
                              levels: AdaptedProcess | Sequence[float]) -> AdaptedProcess:
    """Contract induced by a pathwise-nondecreasing level process.

    The payment at a node is the conditional expectation of the terminal
    payoff plus, per strict-future atom, the interpolated rate at the level
    one stage earlier on the path; terminal payments equal xi.
    """
    tree = spec.tree
    lv = values_of(levels)
    issues = monotonicity_violations(tree, lv)
    if issues:
        raise ValueError("level process must be nondecreasing along paths: "
                         + "; ".join(issues))
    w = spec.mu_a.weights
    y = [0.0] * len(tree.nodes)
    for v in reversed(tree.nodes):
        if not v.children:
            y[v.index] = v.xi
            continue
        atom = w[v.stage + 1]
        y[v.index] = sum(
            p * (atom * interpolate_f(tree.nodes[c].f, lv[v.index]) + y[c])
            for c, p in zip(v.children, v.probs))
    return AdaptedProcess(y)


def monotonicity_violations(tree: ScenarioTree,
                            levels: AdaptedProcess | Sequence[float]) -> list[str]:
    lv = values_of(levels)
    out = []
    for v in tree.nodes:
        for c in v.children:
            if tree.nodes[c].stage == tree.m:
                continue  # terminal levels are sentinels, never consulted
            if lv[c] < lv[v.index]:
                out.append(f"level drops from {lv[v.index]!r} to {lv[c]!r} "
                           f"at '{tree.nodes[c].path}'")
    return out


def clamp_level(tree: ScenarioTree, raw: AdaptedProcess | Sequence[float],
                n: int) -> AdaptedProcess:
    """Running pathwise supremum over the strict past, clamped to [0, n].

    The supremum over the empty past is 0, so the root clamps to 0; the
    value at stage j uses raw levels of stages strictly before j.  The
    output is nondecreasing along every path.
    """
    lv = values_of(raw)
    out = [0.0] * len(tree.nodes)
    for v in tree.nodes:
        if v.parent is None:
            out[v.index] = 0.0
        else:
            out[v.index] = min(float(n), max(out[v.parent], lv[v.parent], 0.0))
    return AdaptedProcess(out)


def round_level_down(levels: AdaptedProcess | Sequence[float]) -> AdaptedProcess:
    """Nodewise floor; keeps pathwise monotonicity and every integer-level
    hitting set, and never decreases the principal's objective."""
    return AdaptedProcess([float(math.floor(x)) for x in values_of(levels)])


def verify_representation(spec: ProblemSpec,
                          contract: AdaptedProcess | Sequence[float],
                          levels: AdaptedProcess | Sequence[float]) -> float:
    """Largest absolute residual of the representation identity.

    At every node the contract value is compared against the conditional
    expectation of the terminal payment plus the per-atom interpolated rate
    at the running supremum of the level from that node on (exclusive of the
    atom's own stage).  The terminal payment used is the contract's own.
    """
    tree = spec.tree
    y = values_of(contract)
    lv = values_of(levels)
    w = spec.mu_a.weights
    worst = 0.0

    def expect(idx: int, run_sup: float) -> float:
        v = tree.nodes[idx]
        if not v.children:
            return y[idx]
        atom = w[v.stage + 1]
        total = 0.0
        for c, p in zip(v.children, v.probs):
            total += p * (atom * interpolate_f(tree.nodes[c].f, run_sup)
                          + expect(c, max(run_sup, lv[c])))
        return total

    for v in tree.nodes:
        if not v.children:
            continue  # identity at leaves is the terminal payment itself
        rhs = expect(v.index, lv[v.index])
        worst = max(worst, abs(rhs - y[v.index]))
    return worst


def hitting_rule_flags(tree: ScenarioTree, levels: AdaptedProcess | Sequence[float],
                       threshold: float, *, tol: float = 1e-9) -> tuple[bool, ...]:
    """Flags of the first-passage rule to ``level >= threshold``; terminal
    nodes always stop (the level there is the +inf sentinel)."""
    lv = values_of(levels)
    return tuple(
        v.stage == tree.m or lv[v.index] >= threshold - tol
        for v in tree.nodes)
