"""Grid-refinement experiments: coarsen a fine reference problem onto
sub-grids, solve every coarsening, and tabulate the value error.

The fine reference grid stands in for the continuum: its atomic measures are
aggregated over the half-open intervals between coarse points, coefficients
are sampled at the right endpoint of each interval, and the model is
restricted to the coarse stages (matrix products on lattices, ancestor
chains on trees).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Sequence

from .model import (AtomicMeasure, MarkovLattice, Node, ProblemSpec,
                    ScenarioTree, TimeGrid)
from .principal import solve_lattice_dp, solve_principal_dp


@dataclass(frozen=True)
class RefinementPlan:
    """Coarse sub-grids to evaluate, each a subset of the reference times
    containing both endpoints, ordered from coarse to fine."""

    grids: tuple[tuple[float, ...], ...]
    rule: str = "right_endpoint"


def _coarse_indices(ref: ProblemSpec, coarse_times: Sequence[float]) -> list[int]:
    index_of = {t: j for j, t in enumerate(ref.grid.times)}
    try:
        idx = [index_of[t] for t in coarse_times]
    except KeyError as exc:
        raise ValueError(f"coarse time {exc.args[0]!r} is not a reference grid point")
    if idx[0] != 0 or idx[-1] != ref.grid.m:
        raise ValueError("coarse grid must contain t_0 and the horizon")
    if any(a >= b for a, b in zip(idx, idx[1:])):
        raise ValueError("coarse times must be strictly increasing")
    return idx


def _aggregate_measure(weights: Sequence[float], idx: list[int]) -> AtomicMeasure:
    out = [weights[0]]
    for a, b in zip(idx, idx[1:]):
        out.append(sum(weights[a + 1:b + 1]))
    return AtomicMeasure(tuple(out))


def _compose_transitions(mats: list[list[list[float]]]) -> list[list[float]]:
    if len(mats) == 1:
        return [list(row) for row in mats[0]]
    acc = mats[0]
    for nxt in mats[1:]:
        acc = [[sum(row[k] * nxt[k][y] for k in range(len(nxt)))
                for y in range(len(nxt[0]))]
               for row in acc]
    return acc


def _coarsen_lattice(lat: MarkovLattice, idx: list[int]) -> MarkovLattice:
    states = [lat.states[j] for j in idx]
    transitions = [_compose_transitions(lat.transitions[a:b])
                   for a, b in zip(idx, idx[1:])]
    return MarkovLattice(
        states=[list(s) for s in states],
        init=list(lat.init),
        transitions=transitions,
        f=[[tuple(r) for r in lat.f[j]] for j in idx],
        g=[[tuple(r) for r in lat.g[j]] for j in idx],
        xi=list(lat.xi),
        n=lat.n,
    )


def _coarsen_tree(tree: ScenarioTree, idx: list[int]) -> ScenarioTree:
    """Keep the reference nodes at coarse stages; each keeps its full
    history, with edge probability the product along the dropped chain."""
    keep = set(idx)
    coarse_stage = {j: k for k, j in enumerate(idx)}
    nodes: list[Node] = []
    remap: dict[int, int] = {}

    def walk(ref_node: Node, parent_new: int | None, prob_chain: float) -> None:
        if ref_node.stage in keep:
            new_idx = len(nodes)
            parent = nodes[parent_new] if parent_new is not None else None
            path = (f"{parent.path}/{len(parent.children)}" if parent and parent.path
                    else str(len(parent.children)) if parent else "")
            nodes.append(Node(
                index=new_idx, stage=coarse_stage[ref_node.stage],
                parent=parent_new, path=path, f=ref_node.f, g=ref_node.g,
                xi=ref_node.xi, state=ref_node.state,
                prob=(parent.prob if parent else 1.0) * prob_chain))
            if parent is not None:
                parent.children.append(new_idx)
                parent.probs.append(prob_chain)
            remap[ref_node.index] = new_idx
            next_parent, next_prob = new_idx, 1.0
        else:
            next_parent, next_prob = parent_new, prob_chain
        for c, p in zip(ref_node.children, ref_node.probs):
            walk(tree_nodes[c], next_parent, next_prob * p)

    tree_nodes = tree.nodes
    walk(tree_nodes[0], None, 1.0)
    return ScenarioTree(nodes=nodes, m=len(idx) - 1, n=tree.n)


def coarsen_problem(ref: ProblemSpec, coarse_times: Sequence[float]) -> ProblemSpec:
    """Restrict a reference problem to a sub-grid of its times.

    Atom weights are aggregated over (previous coarse time, coarse time];
    the weight at t_0 is carried over; rates and payoffs are read at the
    coarse grid points themselves (right endpoints of the aggregation
    intervals).  The identity sub-grid reproduces the reference problem
    field for field.
    """
    idx = _coarse_indices(ref, coarse_times)
    grid = TimeGrid(tuple(ref.grid.times[j] for j in idx))
    mu_a = _aggregate_measure(ref.mu_a.weights, idx)
    mu_p = _aggregate_measure(ref.mu_p.weights, idx)
    if isinstance(ref.model, MarkovLattice):
        model: MarkovLattice | ScenarioTree = _coarsen_lattice(ref.model, idx)
    else:
        model = _coarsen_tree(ref.model, idx)
    return ProblemSpec(grid=grid, mu_a=mu_a, mu_p=mu_p, model=model, n=ref.n)


def principal_value(spec: ProblemSpec) -> float:
    """Unrestricted principal value, by the appropriate exact method."""
    if isinstance(spec.model, MarkovLattice):
        return solve_lattice_dp(spec.model, spec.mu_a.weights, spec.mu_p.weights)
    return solve_principal_dp(spec).value


@dataclass
class ConvergenceRow:
    mesh: float
    value: float
    abs_error: float
    flag: bool  # error increased relative to the previous (coarser) grid


@dataclass
class ConvergenceTable:
    reference_value: float
    rows: list[ConvergenceRow]


def run_convergence(ref: ProblemSpec, plan: RefinementPlan) -> ConvergenceTable:
    """Solve the reference and every planned coarsening; rows keep plan
    order.  A flagged row marks a non-monotone error step, which the theory
    permits (convergence is guaranteed, monotonicity is not)."""
    v_ref = principal_value(ref)
    rows: list[ConvergenceRow] = []
    prev_err: float | None = None
    for times in plan.grids:
        coarse = coarsen_problem(ref, times)
        mesh = max(b - a for a, b in zip(times, times[1:]))
        value = principal_value(coarse)
        err = abs(value - v_ref)
        flagged = prev_err is not None and err > prev_err + 1e-15
        rows.append(ConvergenceRow(mesh=mesh, value=value, abs_error=err,
                                   flag=flagged))
        prev_err = err
    return ConvergenceTable(reference_value=v_ref, rows=rows)


def table_to_csv(table: ConvergenceTable) -> str:
    out = io.StringIO()
    out.write("mesh,value,abs_error,flag\n")
    for row in table.rows:
        out.write(f"{row.mesh!r},{row.value!r},{row.abs_error!r},"
                  f"{int(row.flag)}\n")
    return out.getvalue()
