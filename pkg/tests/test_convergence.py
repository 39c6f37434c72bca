import math

import pytest

import exitcontracts as xc
from exitcontracts.model import problem_to_dict
from exitcontracts.random_instances import random_lattice_problem
from _reference import chain_reference_problem, dyadic_grids


def test_identity_coarsening_is_field_exact(rng):
    for _ in range(10):
        ref = random_lattice_problem(rng)
        same = xc.coarsen_problem(ref, ref.grid.times)
        assert problem_to_dict(same) == problem_to_dict(ref)
        assert xc.principal_value(same) == xc.principal_value(ref)


def test_identity_coarsening_on_trees(rng):
    from exitcontracts.random_instances import random_tree_problem
    for _ in range(10):
        ref = random_tree_problem(rng)
        same = xc.coarsen_problem(ref, ref.grid.times)
        assert problem_to_dict(same) == problem_to_dict(ref)
        assert xc.principal_value(same) == xc.principal_value(ref)


def test_atom_aggregation_is_additive():
    ref = chain_reference_problem(stages=4)
    ref = xc.ProblemSpec(grid=ref.grid,
                         mu_a=xc.AtomicMeasure((0.0, 0.5, 0.5, 0.5, 0.5)),
                         mu_p=ref.mu_p, model=ref.model, n=ref.n)
    coarse = xc.coarsen_problem(ref, (0.0, 0.5, 1.0))
    assert coarse.mu_a.weights == (0.0, 1.0, 1.0)
    assert math.isclose(sum(coarse.mu_a.weights), sum(ref.mu_a.weights), abs_tol=1e-12)
    assert math.isclose(sum(coarse.mu_p.weights), sum(ref.mu_p.weights), abs_tol=1e-12)


def test_mass_conservation_on_random_dyadic_plans(rng):
    ref = chain_reference_problem(stages=16)
    for k in (2, 4, 8):
        coarse = xc.coarsen_problem(ref, tuple(ref.grid.times[j] for j in range(0, 17, 16 // k)))
        assert abs(sum(coarse.mu_a.weights) - sum(ref.mu_a.weights)) <= 1e-12
        assert abs(sum(coarse.mu_p.weights) - sum(ref.mu_p.weights)) <= 1e-12


def test_non_subset_grid_is_rejected():
    ref = chain_reference_problem(stages=8)
    with pytest.raises(ValueError):
        xc.coarsen_problem(ref, (0.0, 0.33, 1.0))
    with pytest.raises(ValueError):
        xc.coarsen_problem(ref, (0.125, 1.0))


def test_time_constant_deterministic_chain_has_zero_error():
    # constant coefficients, one state, proportional measures: every agent's
    # margin keeps one sign along the grid, so optimal switches sit at the
    # endpoints and coarsening changes nothing
    stages = 12
    times = tuple(j / stages for j in range(stages + 1))
    lattice = xc.MarkovLattice(
        states=[["only"]] * (stages + 1),
        init=[1.0],
        transitions=[[[1.0]]] * stages,
        f=[[(-0.7, 0.4)]] * (stages + 1),
        g=[[(0.8, -0.3)]] * (stages + 1),
        xi=[0.1], n=2)
    mu = xc.AtomicMeasure((0.0, *(1.0 / stages,) * stages))
    ref = xc.ProblemSpec(grid=xc.TimeGrid(times), mu_a=mu, mu_p=mu,
                         model=lattice, n=2)
    plan = xc.RefinementPlan(grids=(
        (0.0, 1.0),
        tuple(times[j] for j in range(0, 13, 3)),
        tuple(times[j] for j in range(0, 13, 2)),
        times,
    ))
    table = xc.run_convergence(ref, plan)
    for row in table.rows:
        assert row.abs_error <= 1e-12


def test_convergence_rows_and_flags():
    ref = chain_reference_problem(stages=16)
    grids = dyadic_grids(ref, meshes=(2, 4, 8, 16))
    table = xc.run_convergence(ref, xc.RefinementPlan(grids=grids))
    assert len(table.rows) == 4
    assert table.rows[-1].abs_error == 0.0  # identity element
    assert [round(r.mesh, 6) for r in table.rows] == [0.5, 0.25, 0.125, 0.0625]
    csv = xc.table_to_csv(table)
    lines = csv.strip().splitlines()
    assert lines[0] == "mesh,value,abs_error,flag"
    assert len(lines) == 5


def test_flag_marks_error_increase():
    ref = chain_reference_problem(stages=8)
    grids = dyadic_grids(ref, meshes=(8, 2))  # exact first, coarse second
    table = xc.run_convergence(ref, xc.RefinementPlan(grids=grids))
    assert table.rows[0].abs_error == 0.0
    assert table.rows[1].flag
