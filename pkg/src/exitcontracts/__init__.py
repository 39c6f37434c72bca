"""Exact solvers for the discrete-time principal/multi-agent exit-contract
problem on finite scenario trees and Markov lattices."""

from .model import (AdaptedProcess, AtomicMeasure, CapExceededError,
                    MarkovLattice, Node, ProblemFormatError, ProblemSpec,
                    ScenarioTree, TimeGrid, ValidationError, Violation,
                    compile_lattice_to_tree, dumps_problem, ensure_tree,
                    load_problem, loads_problem, save_problem,
                    validate_problem)
from .pwl import PwlMonotone, combine
from .snell import (MultiStopResult, SnellResult, StoppingRule,
                    agent_best_response, certificate_violations,
                    ordered_multistop, rules_are_ordered, same_stopping_time,
                    snell_envelope)
from .representation import (admissibility_violations, build_contract_from_level,
                             clamp_level, hitting_rule_flags, interpolate_f,
                             represent_contract, round_level_down,
                             verify_representation)
from .principal import (IncentiveReport, PrincipalSolution,
                        brute_force_principal, exit_rules_of_policy,
                        principal_objective, realized_principal_value,
                        solve_lattice_dp, solve_principal_dp,
                        solve_principal_multistop,
                        verify_incentive_compatibility)
from .markovian import (MarkovLevelPolicy, brute_force_markovian,
                        build_markovian_contract, markovian_objective,
                        solve_markovian_mincut)
from .convergence import (ConvergenceRow, ConvergenceTable, RefinementPlan,
                          coarsen_problem, principal_value, run_convergence,
                          table_to_csv)

__version__ = "0.1.0"
