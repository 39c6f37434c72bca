"""Principal-side solvers: objective evaluation, the level dynamic program,
the ordered-multiple-stopping reduction, an exhaustive oracle, and incentive
verification of solver output."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .model import (AdaptedProcess, CapExceededError, MarkovLattice,
                    ProblemSpec, ScenarioTree, values_of)
from .representation import (build_contract_from_level, hitting_rule_flags,
                             interpolate_f, monotonicity_violations)
from .snell import (MultiStopResult, SnellResult, StoppingRule,
                    agent_best_response, ordered_multistop)

DEFAULT_BRUTE_CAP = 20
VALUE_TOL = 1e-9


@dataclass
class PrincipalSolution:
    value: float
    policy: list[int]
    contract: AdaptedProcess
    exit_rules: list[StoppingRule]
    method: str
    multistop: MultiStopResult | None = None
    enumerated: int | None = None  # labelings visited by the oracle


def _atom_reward(node_g, node_f, level_prev: float, n: int,
                 c_p: float, c_a: float) -> float:
    """One atom's contribution given the level just before it: principal
    rates of the agents still present, minus the interpolated agent rate
    paid to each agent already released."""
    released = min(n, int(math.floor(level_prev))) if level_prev > 0.0 else 0
    reward = c_p * sum(node_g[released:])
    if released > 0:
        reward -= released * c_a * interpolate_f(node_f, level_prev)
    return reward


def principal_objective(spec: ProblemSpec,
                        levels: AdaptedProcess | Sequence[float]) -> float:
    """Expected principal reward of a pathwise-nondecreasing level process.

    The atom at stage j is priced with the level at stage j-1 on the path
    (zero before the root), so every agent is present at the time-0 atom;
    each path also pays the terminal payoff once per agent.  Fractional
    levels are allowed: agent i counts as released when the level is >= i.
    """
    tree = spec.tree
    lv = values_of(levels)
    issues = monotonicity_violations(tree, lv)
    if issues:
        raise ValueError("level process must be nondecreasing along paths: "
                         + "; ".join(issues))
    wa, wp = spec.mu_a.weights, spec.mu_p.weights
    total = 0.0
    for v in tree.nodes:
        prev = 0.0 if v.parent is None else lv[v.parent]
        total += v.prob * _atom_reward(v.g, v.f, prev, spec.n,
                                       wp[v.stage], wa[v.stage])
        if v.stage == tree.m:
            total -= v.prob * spec.n * v.xi
    return total


def exit_rules_of_policy(tree: ScenarioTree, levels: Sequence[float],
                         n: int) -> list[StoppingRule]:
    """Level-i first-passage rules for i = 1..n; paths never reaching a
    level stop at the terminal stage."""
    return [StoppingRule(hitting_rule_flags(tree, levels, float(i)))
            for i in range(1, n + 1)]


def _solution_from_policy(spec: ProblemSpec, policy: list[int], value: float,
                          method: str) -> PrincipalSolution:
    tree = spec.tree
    return PrincipalSolution(
        value=value,
        policy=policy,
        contract=build_contract_from_level(spec, [float(x) for x in policy]),
        exit_rules=exit_rules_of_policy(tree, policy, spec.n),
        method=method,
    )


def solve_principal_dp(spec: ProblemSpec) -> PrincipalSolution:
    """Exact dynamic program over (node, level carried in).

    Backward values V(node, l) = atom reward at l plus the best choice of a
    new level l' >= l for the children; ties break toward the smallest l',
    which keeps agents employed longest among the optima.  Terminal nodes
    keep the carried level.
    """
    tree = spec.tree
    n = spec.n
    wa, wp = spec.mu_a.weights, spec.mu_p.weights
    nv = len(tree.nodes)
    val = [[0.0] * (n + 1) for _ in range(nv)]
    choice = [[0] * (n + 1) for _ in range(nv)]
    for v in reversed(tree.nodes):
        rewards = [_atom_reward(v.g, v.f, float(l), n, wp[v.stage], wa[v.stage])
                   for l in range(n + 1)]
        if not v.children:
            for l in range(n + 1):
                val[v.index][l] = rewards[l] - n * v.xi
                choice[v.index][l] = l
            continue
        cont = [sum(p * val[c][l] for c, p in zip(v.children, v.probs))
                for l in range(n + 1)]
        # suffix argmax with smallest-index tie-break
        best_l = n
        best = cont[n]
        for l in range(n, -1, -1):
            if cont[l] >= best:
                best, best_l = cont[l], l
            val[v.index][l] = rewards[l] + best
            choice[v.index][l] = best_l
    policy = [0] * nv
    for v in tree.nodes:
        carried = 0 if v.parent is None else policy[v.parent]
        policy[v.index] = choice[v.index][carried]
    return _solution_from_policy(spec, policy, val[0][0], "dp")


def multistop_increments(spec: ProblemSpec) -> list[list[float]]:
    """Per-agent stop-and-keep increments of the ordered-stopping form:
    the principal rate plus the telescoped agent-rate margin
    i*f_i - (i-1)*f_{i-1} (with f_0 = 0), both weighted by their atoms."""
    tree = spec.tree
    wa, wp = spec.mu_a.weights, spec.mu_p.weights
    out = []
    for i in range(1, spec.n + 1):
        d = [0.0] * len(tree.nodes)
        for v in tree.nodes:
            margin = i * v.f[i - 1] - (i - 1) * (v.f[i - 2] if i >= 2 else 0.0)
            d[v.index] = wp[v.stage] * v.g[i - 1] + wa[v.stage] * margin
        out.append(d)
    return out


def solve_principal_multistop(spec: ProblemSpec) -> PrincipalSolution:
    """Solve via the equivalent ordered multiple-stopping problem.

    The multistop optimum, minus the constant n * E[ total top-rate mass
    plus terminal payoff ], equals the principal's value; the policy is
    rebuilt by counting, per node, how many stops occurred at or before it.
    """
    tree = spec.tree
    n = spec.n
    ms = ordered_multistop(tree, multistop_increments(spec))
    wa = spec.mu_a.weights
    top_rate_mass = sum(v.prob * wa[v.stage] * v.f[n - 1] for v in tree.nodes)
    xi_mass = sum(v.prob * v.xi for v in tree.nodes if v.stage == tree.m)
    value = ms.value - n * (top_rate_mass + xi_mass)

    policy = [0] * len(tree.nodes)
    for rule in ms.rules:
        hits = rule.realized(tree)

        def mark(idx: int, seen: bool) -> None:
            seen = seen or idx in hits
            if seen:
                policy[idx] += 1
            for c in tree.nodes[idx].children:
                mark(c, seen)

        mark(0, False)
    sol = _solution_from_policy(spec, policy, value, "multistop")
    sol.exit_rules = list(ms.rules)
    sol.multistop = ms
    return sol


def brute_force_principal(spec: ProblemSpec, *,
                          cap: int | None = None) -> PrincipalSolution:
    """Exhaustive enumeration of monotone integer level assignments.

    Levels are assigned to non-terminal nodes in id order, each at least its
    parent's; terminal nodes keep the parent level, which never enters the
    objective.  The first maximizer found is the lexicographically smallest
    one in node-id order.  Guarded by a node-count cap.
    """
    tree = spec.tree
    n = spec.n
    if cap is None:
        cap = DEFAULT_BRUTE_CAP
    if len(tree.nodes) > cap:
        raise CapExceededError(
            f"{len(tree.nodes)} nodes exceeds the enumeration cap {cap}")
    wa, wp = spec.mu_a.weights, spec.mu_p.weights
    # contrib[v][l] = probability-weighted atom reward of node v when the
    # level carried into it is l, terminal payoff included at leaves.
    contrib = []
    for v in tree.nodes:
        row = []
        for l in range(n + 1):
            r = v.prob * _atom_reward(v.g, v.f, float(l), n, wp[v.stage], wa[v.stage])
            if v.stage == tree.m:
                r -= v.prob * n * v.xi
            row.append(r)
        contrib.append(row)
    interior = [v for v in tree.nodes if v.children]
    base = contrib[0][0]

    best_value = -math.inf
    best_policy: list[int] | None = None
    assign = [0] * len(tree.nodes)
    visited = 0

    def recurse(k: int, acc: float) -> None:
        nonlocal best_value, best_policy, visited
        if k == len(interior):
            visited += 1
            if acc > best_value:
                best_value = acc
                best_policy = list(assign)
            return
        v = interior[k]
        lo = 0 if v.parent is None else assign[v.parent]
        for l in range(lo, n + 1):
            assign[v.index] = l
            extra = sum(contrib[c][l] for c in v.children)
            recurse(k + 1, acc + extra)

    recurse(0, base)
    policy = list(best_policy)
    for v in tree.nodes:
        if not v.children:
            policy[v.index] = 0 if v.parent is None else policy[v.parent]
    value = principal_objective(spec, [float(x) for x in policy])
    sol = _solution_from_policy(spec, policy, value, "brute")
    sol.enumerated = visited
    return sol


def realized_principal_value(spec: ProblemSpec,
                             contract: AdaptedProcess | Sequence[float],
                             exit_rules: Sequence[StoppingRule]) -> float:
    """Principal reward realized by given exits: per agent, the accrued
    principal rate through the exit node minus the payment there."""
    tree = spec.tree
    y = values_of(contract)
    wp = spec.mu_p.weights
    total = 0.0
    for i, rule in enumerate(exit_rules):
        accrued = [0.0] * len(tree.nodes)
        for v in tree.nodes:
            base = accrued[v.parent] if v.parent is not None else 0.0
            accrued[v.index] = base + wp[v.stage] * v.g[i]
        for idx in rule.realized(tree):
            total += tree.nodes[idx].prob * (accrued[idx] - y[idx])
    return total


@dataclass
class IncentiveReport:
    ok: bool
    issues: list[str]
    realized_value: float
    best_responses: list[SnellResult]


def verify_incentive_compatibility(spec: ProblemSpec, sol: PrincipalSolution,
                                   *, tol: float = VALUE_TOL) -> IncentiveReport:
    """Check that the contract actually implements the claimed exits.

    Re-solves each agent's stopping problem under the solution's contract and
    compares the smallest optimal stop against the solution's exit rule, then
    recomputes the principal's realized reward under those exits and compares
    it with the claimed value.
    """
    tree = spec.tree
    issues: list[str] = []
    responses: list[SnellResult] = []
    for i in range(1, spec.n + 1):
        res, _ = agent_best_response(spec, i, sol.contract)
        responses.append(res)
        got = res.smallest_stop.realized(tree)
        want = sol.exit_rules[i - 1].realized(tree)
        if got != want:
            got_paths = sorted(tree.nodes[k].path or "(root)" for k in got)
            want_paths = sorted(tree.nodes[k].path or "(root)" for k in want)
            issues.append(f"agent {i}: smallest optimal stop {got_paths} "
                          f"differs from exit rule {want_paths}")
    realized = realized_principal_value(spec, sol.contract, sol.exit_rules)
    if abs(realized - sol.value) > tol:
        issues.append(f"realized principal value {realized!r} differs from "
                      f"claimed value {sol.value!r}")
    return IncentiveReport(ok=not issues, issues=issues,
                           realized_value=realized, best_responses=responses)


def solve_lattice_dp(lattice: MarkovLattice, mu_a: Sequence[float],
                     mu_p: Sequence[float]) -> float:
    """Principal value on a lattice without unrolling histories.

    The backward state is (stage, state, level carried in); conditional laws
    given the full history coincide with those given the current state, so
    this equals the tree dynamic program on the unrolled instance.
    """
    n = lattice.n
    m = lattice.m
    nxt = [[_atom_reward(lattice.g[m][x], lattice.f[m][x], float(l), n,
                         mu_p[m], mu_a[m]) - n * lattice.xi[x]
            for l in range(n + 1)]
           for x in range(len(lattice.states[m]))]
    for j in range(m - 1, -1, -1):
        cur = []
        for x in range(len(lattice.states[j])):
            row = lattice.transitions[j][x]
            cont = [sum(q * nxt[y][l] for y, q in enumerate(row) if q > 0.0)
                    for l in range(n + 1)]
            best = -math.inf
            vals = [0.0] * (n + 1)
            for l in range(n, -1, -1):
                best = max(best, cont[l])
                vals[l] = _atom_reward(lattice.g[j][x], lattice.f[j][x], float(l),
                                       n, mu_p[j], mu_a[j]) + best
            cur.append(vals)
        nxt = cur
    return sum(p * nxt[x][0] for x, p in enumerate(lattice.init) if p > 0.0)
