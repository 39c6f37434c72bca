"""Command-line surface over the solver library.

Every command reads a problem file, emits a human-readable summary (or the
full JSON report with ``--json``), and uses the exit-code contract:
0 success, 1 parse failure, 2 invariant violation, 3 size cap exceeded.
Reports are deterministic: rerunning a command on the same file changes
only the wall-clock field.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import random
import sys
import time

from . import __version__
from .convergence import RefinementPlan, run_convergence, table_to_csv
from .markovian import brute_force_markovian, solve_markovian_mincut
from .model import (AdaptedProcess, CapExceededError, MarkovLattice,
                    ProblemFormatError, ProblemSpec, ScenarioTree,
                    ValidationError, ensure_tree, load_problem,
                    validate_problem)
from .principal import (brute_force_principal, solve_principal_dp,
                        solve_principal_multistop,
                        verify_incentive_compatibility)
from .representation import (build_contract_from_level, represent_contract,
                             verify_representation)
from .snell import agent_best_response, certificate_violations

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_INVALID = 2
EXIT_CAP = 3


def _digest(path: str) -> str:
    with open(path, "rb") as fh:
        return "sha256:" + hashlib.sha256(fh.read()).hexdigest()


def _emit(report: dict, args, started: float) -> None:
    report["wall_clock_s"] = time.perf_counter() - started
    if getattr(args, "json", False):
        print(json.dumps(report, sort_keys=True, indent=1))
        return
    for line in _summarize(report):
        print(line)


def _summarize(report: dict) -> list[str]:
    out = [f"{report['command']}: {report.get('status', 'ok')}"]
    for key in ("value", "agent_value", "max_residual", "reference_value"):
        if key in report:
            out.append(f"  {key} = {report[key]!r}")
    if "exit_rules" in report:
        first = report.get("agent", 1)
        for i, paths in enumerate(report["exit_rules"], start=first):
            out.append(f"  agent {i} exits at: {', '.join(p or '(root)' for p in paths)}")
    if "levels" in report and isinstance(report["levels"], dict):
        out.append("  levels: " + ", ".join(
            f"{k or '(root)'}={v!r}" for k, v in sorted(report["levels"].items())))
    if "violations" in report:
        out.extend(f"  {v}" for v in report["violations"])
    if "rows" in report:
        out.append("  mesh,value,abs_error,flag")
        for row in report["rows"]:
            out.append(f"  {row['mesh']!r},{row['value']!r},{row['abs_error']!r},{int(row['flag'])}")
    if "suites" in report:
        for name, res in report["suites"].items():
            out.append(f"  {name}: {res}")
    out.append(f"  wall_clock_s = {report['wall_clock_s']:.3f}")
    return out


def _rules_to_paths(tree: ScenarioTree, rules) -> list[list[str]]:
    return [sorted(tree.nodes[k].path for k in rule.realized(tree))
            for rule in rules]


def _load_node_values(tree: ScenarioTree, path: str, *,
                      terminal_default: float | None = None) -> AdaptedProcess:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            mapping = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ProblemFormatError(f"cannot read node values from {path}: {exc}")
    if not isinstance(mapping, dict):
        raise ProblemFormatError(f"{path}: expected an object of path -> value")
    vals = []
    for v in tree.nodes:
        if v.path in mapping:
            vals.append(float(mapping[v.path]))
        elif terminal_default is not None and v.stage == tree.m:
            vals.append(terminal_default)
        else:
            raise ProblemFormatError(f"{path}: missing value for node '{v.path or '(root)'}'")
    return AdaptedProcess(vals)


def _load_spec(args) -> ProblemSpec:
    return load_problem(args.file)


def cmd_validate(args) -> int:
    started = time.perf_counter()
    report = {"command": "validate", "file": args.file, "input_digest": _digest(args.file)}
    try:
        spec = load_problem(args.file, validate=False)
    except ProblemFormatError as exc:
        report.update(status="parse error", violations=[str(exc)])
        _emit(report, args, started)
        return EXIT_PARSE
    violations = validate_problem(spec)
    report["violations"] = [str(v) for v in violations]
    report["status"] = "valid" if not violations else "invalid"
    _emit(report, args, started)
    return EXIT_OK if not violations else EXIT_INVALID


def cmd_agent(args) -> int:
    started = time.perf_counter()
    spec = ensure_tree(_load_spec(args))
    tree = spec.tree
    contract = _load_node_values(tree, args.contract)
    result, value = agent_best_response(spec, args.agent, contract)
    report = {
        "command": "agent", "file": args.file, "input_digest": _digest(args.file),
        "agent": args.agent,
        "agent_value": value,
        "envelope": result.envelope.to_mapping(tree),
        "gains": result.gains.to_mapping(tree),
        "exit_rules": _rules_to_paths(tree, [result.smallest_stop]),
        "certificate_violations": certificate_violations(tree, result),
    }
    _emit(report, args, started)
    return EXIT_OK


def cmd_represent(args) -> int:
    started = time.perf_counter()
    spec = ensure_tree(_load_spec(args))
    tree = spec.tree
    contract = _load_node_values(tree, args.contract)
    try:
        levels = represent_contract(spec, contract)
    except ValueError as exc:
        report = {"command": "represent", "file": args.file,
                  "input_digest": _digest(args.file),
                  "status": "inadmissible", "violations": [str(exc)]}
        _emit(report, args, started)
        return EXIT_INVALID
    residual = verify_representation(spec, contract, levels)
    report = {
        "command": "represent", "file": args.file, "input_digest": _digest(args.file),
        "levels": levels.to_mapping(tree, skip_terminal=True),
        "max_residual": residual,
    }
    _emit(report, args, started)
    return EXIT_OK


def cmd_contract(args) -> int:
    started = time.perf_counter()
    spec = ensure_tree(_load_spec(args))
    tree = spec.tree
    levels = _load_node_values(tree, args.levels, terminal_default=0.0)
    contract = build_contract_from_level(spec, levels)
    residual = verify_representation(spec, contract, levels)
    report = {
        "command": "contract", "file": args.file, "input_digest": _digest(args.file),
        "contract": contract.to_mapping(tree),
        "max_residual": residual,
    }
    _emit(report, args, started)
    return EXIT_OK


_PRINCIPAL_SOLVERS = {
    "dp": solve_principal_dp,
    "multistop": solve_principal_multistop,
    "brute": brute_force_principal,
}


def cmd_principal(args) -> int:
    started = time.perf_counter()
    spec = ensure_tree(_load_spec(args))
    tree = spec.tree
    sol = _PRINCIPAL_SOLVERS[args.method](spec)
    report = {
        "command": "principal", "file": args.file, "input_digest": _digest(args.file),
        "method": sol.method,
        "value": sol.value,
        "policy": {v.path: sol.policy[v.index] for v in tree.nodes},
        "contract": sol.contract.to_mapping(tree),
        "exit_rules": _rules_to_paths(tree, sol.exit_rules),
    }
    if args.verify:
        ic = verify_incentive_compatibility(spec, sol)
        report["incentive_compatible"] = ic.ok
        report["realized_value"] = ic.realized_value
        issues = list(ic.issues)
        try:
            others = [s for name, s in (("dp", solve_principal_dp(spec)),
                                        ("multistop", solve_principal_multistop(spec)),
                                        ("brute", brute_force_principal(spec)))
                      if name != args.method]
            spread = max(abs(o.value - sol.value) for o in others)
            report["cross_method_spread"] = spread
            if spread > 1e-9:
                issues.append(f"cross-method value spread {spread!r} above 1e-9")
        except CapExceededError as exc:
            report["cross_method_spread"] = None
            report["cross_method_note"] = str(exc)
        report["verify_issues"] = issues
        report["status"] = "ok" if not issues else "verification failed"
    _emit(report, args, started)
    return EXIT_OK


def cmd_markovian(args) -> int:
    started = time.perf_counter()
    spec = _load_spec(args)
    if not isinstance(spec.model, MarkovLattice):
        print("markovian: the problem file must carry a lattice model", file=sys.stderr)
        return EXIT_INVALID
    if args.oracle:
        value, policy = brute_force_markovian(spec)
        method = "brute"
    else:
        value, policy = solve_markovian_mincut(spec)
        method = "mincut"
    report = {
        "command": "markovian", "file": args.file, "input_digest": _digest(args.file),
        "method": method,
        "value": value,
        "levels": {f"stage{j}/{name}": policy.levels[j][x]
                   for j, stage in enumerate(spec.lattice.states)
                   for x, name in enumerate(stage)},
    }
    _emit(report, args, started)
    return EXIT_OK


def cmd_converge(args) -> int:
    started = time.perf_counter()
    spec = _load_spec(args)
    try:
        with open(args.plan, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        grids = tuple(tuple(float(t) for t in g) for g in doc["grids"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        print(f"converge: cannot read plan file: {exc}", file=sys.stderr)
        return EXIT_PARSE
    plan = RefinementPlan(grids=grids, rule=doc.get("rule", "right_endpoint"))
    table = run_convergence(spec, plan)
    report = {
        "command": "converge", "file": args.file, "input_digest": _digest(args.file),
        "reference_value": table.reference_value,
        "rows": [{"mesh": r.mesh, "value": r.value, "abs_error": r.abs_error,
                  "flag": r.flag} for r in table.rows],
    }
    if args.csv:
        sys.stdout.write(table_to_csv(table))
        return EXIT_OK
    _emit(report, args, started)
    return EXIT_OK


def cmd_selftest(args) -> int:
    started = time.perf_counter()
    from .random_instances import (random_admissible_contract,
                                   random_lattice_problem,
                                   random_monotone_policy,
                                   random_tree_problem)

    rng = random.Random(args.seed)
    suites: dict[str, str] = {}
    failures = 0

    spread = 0.0
    for _ in range(args.trials):
        spec = random_tree_problem(rng)
        sols = [solve_principal_dp(spec), solve_principal_multistop(spec),
                brute_force_principal(spec)]
        spread = max(spread, max(abs(a.value - b.value)
                                 for a in sols for b in sols))
        for sol in sols:
            if not verify_incentive_compatibility(spec, sol).ok:
                failures += 1
    suites["principal solvers"] = (
        f"{'ok' if spread <= 1e-9 and failures == 0 else 'FAIL'} "
        f"(trials={args.trials}, value spread={spread:.2e})")
    failures += 0 if spread <= 1e-9 else 1

    worst = 0.0
    for _ in range(args.trials):
        spec = random_tree_problem(rng)
        policy = random_monotone_policy(rng, spec.tree, spec.n)
        contract = build_contract_from_level(spec, [float(x) for x in policy])
        worst = max(worst, verify_representation(
            spec, contract, represent_contract(spec, contract)))
        y = random_admissible_contract(rng, spec)
        worst = max(worst, verify_representation(
            spec, y, represent_contract(spec, y)))
    suites["representation round trips"] = (
        f"{'ok' if worst <= 1e-9 else 'FAIL'} (trials={args.trials}, residual={worst:.2e})")
    failures += 0 if worst <= 1e-9 else 1

    mspread = 0.0
    for _ in range(args.trials):
        spec = random_lattice_problem(rng)
        v1, _ = solve_markovian_mincut(spec)
        v2, _ = brute_force_markovian(spec)
        mspread = max(mspread, abs(v1 - v2))
    suites["markovian solvers"] = (
        f"{'ok' if mspread <= 1e-9 else 'FAIL'} (trials={args.trials}, spread={mspread:.2e})")
    failures += 0 if mspread <= 1e-9 else 1

    report = {"command": "selftest", "seed": args.seed, "trials": args.trials,
              "suites": suites,
              "status": "ok" if failures == 0 else "FAIL"}
    _emit(report, args, started)
    return EXIT_OK if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exitcontracts",
        description="Exit-contract design on finite scenario trees")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(fn=fn)
        p.add_argument("--json", action="store_true", help="emit the full JSON report")
        return p

    p = add("validate", cmd_validate, "check a problem file against every invariant")
    p.add_argument("file")

    p = add("agent", cmd_agent, "one agent's optimal exit under a given contract")
    p.add_argument("file")
    p.add_argument("--agent", type=int, required=True, help="agent index, 1-based")
    p.add_argument("--contract", required=True, help="JSON map of node path -> payment")

    p = add("represent", cmd_represent, "extract the level process of a contract")
    p.add_argument("file")
    p.add_argument("--contract", required=True)

    p = add("contract", cmd_contract, "build the contract induced by a level process")
    p.add_argument("file")
    p.add_argument("--levels", required=True, help="JSON map of node path -> level")

    p = add("principal", cmd_principal, "solve for an optimal contract")
    p.add_argument("file")
    p.add_argument("--method", choices=sorted(_PRINCIPAL_SOLVERS), default="dp")
    p.add_argument("--verify", action="store_true",
                   help="re-check incentives and cross-method agreement")

    p = add("markovian", cmd_markovian, "solve the Markovian-contract restriction")
    p.add_argument("file")
    p.add_argument("--oracle", action="store_true", help="force the exhaustive oracle")

    p = add("converge", cmd_converge, "grid-refinement error table")
    p.add_argument("file")
    p.add_argument("--plan", required=True, help="JSON plan with a 'grids' list")
    p.add_argument("--csv", action="store_true", help="emit the raw CSV table")

    p = add("selftest", cmd_selftest, "run the randomized property suites")
    p.add_argument("--trials", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ProblemFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print("invalid problem:", file=sys.stderr)
        for v in exc.report:
            print(f"  {v}", file=sys.stderr)
        return EXIT_INVALID
    except CapExceededError as exc:
        print(f"size cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
