"""Acceptance suite: every criterion at its pinned tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one line per
criterion.  The randomized sweeps use fixed seeds, so the suite is
deterministic.
"""

import os
import random
import time

import pytest

import exitcontracts as xc
from exitcontracts.representation import hitting_rule_flags, interpolate_f
from exitcontracts.random_instances import (random_fractional_levels,
                                            random_lattice_problem,
                                            random_monotone_policy,
                                            random_tree_problem)
from _reference import chain_reference_problem, dyadic_grids

TRIPLE_INSTANCES = 200
ROUNDTRIP_INSTANCES = 200
DOMINANCE_INSTANCES = 200
LATTICE_INSTANCES = 100

AGREE_TOL = 1e-9
RESIDUAL_TOL = 1e-9
BISECTION_TOL = 1e-8
DOMINANCE_TOL = 1e-12
CERTIFICATE_TOL = 1e-12
GAP_FLOOR = 1e-6

WITNESS = os.path.join(os.path.dirname(__file__), "data", "markov_gap_witness.json")


@pytest.fixture(scope="module")
def triple_sweep():
    rng = random.Random(94110)
    t0 = time.perf_counter()
    runs = []
    for _ in range(TRIPLE_INSTANCES):
        spec = random_tree_problem(rng)
        sols = (xc.solve_principal_dp(spec),
                xc.solve_principal_multistop(spec),
                xc.brute_force_principal(spec))
        runs.append((spec, sols))
    return runs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def roundtrip_sweep():
    rng = random.Random(60601)
    runs = []
    for _ in range(ROUNDTRIP_INSTANCES):
        spec = random_tree_problem(rng)
        policy = random_monotone_policy(rng, spec.tree, spec.n)
        contract = xc.build_contract_from_level(spec, [float(x) for x in policy])
        levels = xc.represent_contract(spec, contract)
        runs.append((spec, policy, contract, levels))
    return runs


def test_criterion_1_triple_solver_agreement(triple_sweep):
    runs, elapsed = triple_sweep
    worst = 0.0
    for spec, (dp, ms, bf) in runs:
        worst = max(worst, abs(dp.value - ms.value), abs(dp.value - bf.value),
                    abs(ms.value - bf.value))
    assert worst <= AGREE_TOL
    assert elapsed < 60.0
    print(f"\n[PASS] criterion 1: dp = multistop = brute on {len(runs)} instances "
          f"(max spread {worst:.2e}, {elapsed:.1f}s)")


def test_criterion_2_incentive_compatibility(triple_sweep):
    runs, _ = triple_sweep
    checked = 0
    worst = 0.0
    for spec, sols in runs:
        for sol in sols:
            report = xc.verify_incentive_compatibility(spec, sol, tol=AGREE_TOL)
            assert report.ok, (sol.method, report.issues)
            worst = max(worst, abs(report.realized_value - sol.value))
            checked += 1
    assert worst <= AGREE_TOL
    print(f"[PASS] criterion 2: exits and realized payoff reproduced on "
          f"{checked} solver outputs (max value gap {worst:.2e})")


def test_criterion_3_representation_round_trips(roundtrip_sweep):
    worst = 0.0
    for spec, policy, contract, levels in roundtrip_sweep:
        tree = spec.tree
        worst = max(worst, xc.verify_representation(spec, contract, levels))
        for i in range(1, spec.n + 1):
            original = xc.StoppingRule(
                hitting_rule_flags(tree, [float(x) for x in policy], float(i)))
            extracted = xc.StoppingRule(hitting_rule_flags(tree, levels.values, float(i)))
            assert original.realized(tree) == extracted.realized(tree)
    assert worst <= RESIDUAL_TOL
    print(f"[PASS] criterion 3: round trips on {len(roundtrip_sweep)} policies "
          f"(max residual {worst:.2e}, hitting rules exact)")


def test_criterion_4_pwl_matches_bisection(roundtrip_sweep):
    worst = 0.0
    nodes_checked = 0
    for spec, _, contract, levels in roundtrip_sweep:
        tree = spec.tree
        wa = spec.mu_a.weights
        yv = contract.values

        def zval(idx, level):
            v = tree.nodes[idx]
            if not v.children:
                return yv[idx]
            cont = sum(p * (zval(c, level)
                            + wa[v.stage + 1] * interpolate_f(tree.nodes[c].f, level))
                       for c, p in zip(v.children, v.probs))
            return max(cont, yv[idx])

        def cval(idx, level):
            v = tree.nodes[idx]
            return sum(p * (zval(c, level)
                            + wa[v.stage + 1] * interpolate_f(tree.nodes[c].f, level))
                       for c, p in zip(v.children, v.probs))

        for v in tree.nodes:
            if not v.children:
                continue
            lo, hi = -1.0, float(spec.n) + 1.0
            while cval(v.index, lo) > yv[v.index]:
                lo = 2.0 * lo - 1.0
            while cval(v.index, hi) <= yv[v.index]:
                hi = 2.0 * hi + 1.0
            while hi - lo > 1e-10:
                mid = 0.5 * (lo + hi)
                if cval(v.index, mid) <= yv[v.index]:
                    lo = mid
                else:
                    hi = mid
            worst = max(worst, abs(lo - levels[v.index]))
            nodes_checked += 1
    assert worst <= BISECTION_TOL
    print(f"[PASS] criterion 4: exact levels match bisection at {nodes_checked} "
          f"nodes (max gap {worst:.2e})")


def test_criterion_5_ordered_exits(triple_sweep):
    runs, _ = triple_sweep
    violations = 0
    for spec, sols in runs:
        for sol in sols:
            if not xc.rules_are_ordered(spec.tree, sol.exit_rules):
                violations += 1
    assert violations == 0
    print(f"[PASS] criterion 5: exit times pathwise ordered on "
          f"{3 * len(runs)} solutions (0 violations)")


def test_criterion_6_rounding_dominance():
    rng = random.Random(77002)
    worst = 0.0
    for _ in range(DOMINANCE_INSTANCES):
        spec = random_tree_problem(rng)
        levels = random_fractional_levels(rng, spec.tree, spec.n)
        floored = xc.round_level_down(levels)
        gap = (xc.principal_objective(spec, floored)
               - xc.principal_objective(spec, levels))
        worst = min(worst, gap)
    assert worst >= -DOMINANCE_TOL
    print(f"[PASS] criterion 6: floor never loses on {DOMINANCE_INSTANCES} "
          f"fractional policies (min margin {worst:.2e})")


def test_criterion_7_markovian_restriction():
    rng = random.Random(30301)
    worst = 0.0
    excess = 0.0
    for _ in range(LATTICE_INSTANCES):
        spec = random_lattice_problem(rng)
        v_cut, _ = xc.solve_markovian_mincut(spec)
        v_brute, _ = xc.brute_force_markovian(spec)
        worst = max(worst, abs(v_cut - v_brute))
        v_tree = xc.solve_principal_dp(xc.ensure_tree(spec)).value
        excess = max(excess, v_cut - v_tree)
    assert worst <= AGREE_TOL
    assert excess <= AGREE_TOL
    witness = xc.load_problem(WITNESS)
    v_cut, _ = xc.solve_markovian_mincut(witness)
    v_tree = xc.solve_principal_dp(xc.ensure_tree(witness)).value
    gap = v_tree - v_cut
    assert gap > GAP_FLOOR
    print(f"[PASS] criterion 7: min-cut = oracle on {LATTICE_INSTANCES} lattices "
          f"(max spread {worst:.2e}), restriction <= tree value, "
          f"witness gap {gap:.4f}")


def test_criterion_8_convergence_to_the_fine_reference():
    t0 = time.perf_counter()
    ref = chain_reference_problem(stages=64)
    plan = xc.RefinementPlan(grids=dyadic_grids(ref, meshes=(2, 4, 8, 16, 32, 64)))
    table = xc.run_convergence(ref, plan)
    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0
    v_ref = table.reference_value
    bar = max(0.01 * abs(v_ref), 1e-3 if abs(v_ref) < 1e-6 else 0.0)
    finest_proper = table.rows[-2].abs_error  # the m = 32 row
    assert finest_proper < bar
    assert table.rows[-1].abs_error == 0.0  # identity coarsening is exact
    print(f"[PASS] criterion 8: reference value {v_ref:.6f}; error at m=32 "
          f"{finest_proper:.2e} < {bar:.2e}; identity exact ({elapsed:.1f}s)")


def test_criterion_9_snell_certificates(triple_sweep, roundtrip_sweep):
    runs, _ = triple_sweep
    checked = 0
    for spec, sols in runs:
        tree = spec.tree
        ms = next(s.multistop for s in sols if s.multistop is not None)
        for res in ms.envelopes:
            assert xc.certificate_violations(tree, res, tol=CERTIFICATE_TOL) == []
            checked += 1
        for sol in sols[:1]:
            for i in range(1, spec.n + 1):
                res, _ = xc.agent_best_response(spec, i, sol.contract)
                assert xc.certificate_violations(tree, res, tol=CERTIFICATE_TOL) == []
                checked += 1
    for spec, _, contract, _ in roundtrip_sweep:
        for i in range(1, spec.n + 1):
            res, _ = xc.agent_best_response(spec, i, contract)
            assert xc.certificate_violations(spec.tree, res,
                                             tol=CERTIFICATE_TOL) == []
            checked += 1
    print(f"[PASS] criterion 9: supermartingale, pre-stop martingale, and "
          f"touch conditions hold within {CERTIFICATE_TOL:.0e} on {checked} "
          f"Snell computations")
