import math
import os

import pytest

import exitcontracts as xc
from exitcontracts.markovian import edge_monotonicity_violations
from exitcontracts.random_instances import random_lattice_problem

WITNESS = os.path.join(os.path.dirname(__file__), "data", "markov_gap_witness.json")


def test_mincut_matches_oracle_on_random_lattices(rng):
    for _ in range(40):
        spec = random_lattice_problem(rng)
        v_cut, pol_cut = xc.solve_markovian_mincut(spec)
        v_brute, pol_brute = xc.brute_force_markovian(spec)
        assert abs(v_cut - v_brute) <= 1e-9
        assert edge_monotonicity_violations(spec.lattice, pol_cut.levels) == []
        assert pol_cut.levels == pol_brute.levels  # both take the minimal optimum


def test_mincut_handles_random_initial_states(rng):
    for _ in range(15):
        spec = random_lattice_problem(rng, deterministic_init=False)
        v_cut, _ = xc.solve_markovian_mincut(spec)
        v_brute, _ = xc.brute_force_markovian(spec)
        assert abs(v_cut - v_brute) <= 1e-9


def test_restriction_never_beats_the_tree_value(rng):
    for _ in range(30):
        spec = random_lattice_problem(rng)
        v_markov, _ = xc.solve_markovian_mincut(spec)
        v_full = xc.solve_principal_dp(xc.ensure_tree(spec)).value
        assert v_markov <= v_full + 1e-9


def test_single_state_chain_restriction_is_vacuous(rng):
    for _ in range(10):
        spec = random_lattice_problem(rng, max_states=1)
        v_markov, _ = xc.solve_markovian_mincut(spec)
        v_full = xc.solve_principal_dp(xc.ensure_tree(spec)).value
        assert abs(v_markov - v_full) <= 1e-9


def test_frozen_witness_has_a_strict_gap():
    spec = xc.load_problem(WITNESS)
    v_markov, _ = xc.solve_markovian_mincut(spec)
    v_brute, _ = xc.brute_force_markovian(spec)
    v_full = xc.solve_principal_dp(xc.ensure_tree(spec)).value
    assert abs(v_markov - v_brute) <= 1e-9
    assert v_full - v_markov > 1e-6


def test_markov_contract_collapses_across_histories(rng):
    for _ in range(20):
        spec = random_lattice_problem(rng)
        _, policy = xc.solve_markovian_mincut(spec)
        per_state = xc.build_markovian_contract(spec, policy)
        tree_spec = xc.ensure_tree(spec)
        tree = tree_spec.tree
        lifted = [float(policy.levels[v.stage][v.state]) for v in tree.nodes]
        per_node = xc.build_contract_from_level(tree_spec, lifted)
        for v in tree.nodes:
            assert abs(per_node[v.index] - per_state[v.stage][v.state]) <= 1e-12


def test_markov_contract_terminal_values(rng):
    spec = random_lattice_problem(rng)
    _, policy = xc.solve_markovian_mincut(spec)
    contract = xc.build_markovian_contract(spec, policy)
    assert contract[-1] == spec.lattice.xi


def test_objective_rejects_non_monotone_levels():
    lattice = xc.MarkovLattice(
        states=[["a"], ["a", "b"], ["a"]],
        init=[1.0],
        transitions=[[[0.5, 0.5]], [[1.0], [1.0]]],
        f=[[(0.0,)], [(0.0,), (0.5,)], [(0.0,)]],
        g=[[(1.0,)], [(1.0,), (1.0,)], [(1.0,)]],
        xi=[0.0], n=1)
    spec = xc.ProblemSpec(
        grid=xc.TimeGrid((0.0, 0.5, 1.0)),
        mu_a=xc.AtomicMeasure((0.0, 1.0, 1.0)),
        mu_p=xc.AtomicMeasure((0.0, 1.0, 1.0)),
        model=lattice, n=1)
    with pytest.raises(ValueError):
        xc.markovian_objective(spec, [[1], [1, 1], [0]])


def test_markovian_floor_dominance(rng):
    # fractional edge-monotone markov levels never beat their floor
    for _ in range(30):
        spec = random_lattice_problem(rng)
        lat = spec.lattice
        levels = []
        for j, stage in enumerate(lat.states):
            if j == 0:
                levels.append([rng.uniform(0, spec.n) for _ in stage])
                continue
            row = []
            for x in range(len(stage)):
                lo = 0.0
                for xp in range(len(lat.states[j - 1])):
                    if lat.transitions[j - 1][xp][x] > 0.0:
                        lo = max(lo, levels[j - 1][xp])
                row.append(rng.uniform(lo, float(spec.n)))
            levels.append(row)
        floored = [[math.floor(x) for x in row] for row in levels]
        assert (xc.markovian_objective(spec, floored)
                >= xc.markovian_objective(spec, levels) - 1e-12)
