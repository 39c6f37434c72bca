"""Problem data model: time grids, atomic measures, scenario trees,
finite-state lattices, and the JSON problem-file round trip."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

PROB_TOL = 1e-12
LEAF_PROB_TOL = 1e-10
DEFAULT_STRICT_EPS = 1e-9
DEFAULT_TREE_CAP = 20000


class ProblemFormatError(Exception):
    """Problem file cannot be parsed or does not follow the schema."""


class CapExceededError(Exception):
    """An exact method was asked to run on an instance above its size guard."""


@dataclass(frozen=True)
class Violation:
    where: str
    message: str

    def __str__(self) -> str:
        return f"{self.where}: {self.message}"


class ValidationError(Exception):
    """Instance data violates a model invariant; carries the full report."""

    def __init__(self, report: list[Violation]):
        self.report = report
        super().__init__("; ".join(str(v) for v in report))


@dataclass(frozen=True)
class TimeGrid:
    """Ordered times t_0 < ... < t_m with t_0 = 0."""

    times: tuple[float, ...]

    @property
    def m(self) -> int:
        return len(self.times) - 1

    @property
    def horizon(self) -> float:
        return self.times[-1]


@dataclass(frozen=True)
class AtomicMeasure:
    """Nonnegative mass per grid point; strictly positive from t_1 on."""

    weights: tuple[float, ...]

    @property
    def total(self) -> float:
        return sum(self.weights)


@dataclass
class Node:
    index: int
    stage: int
    parent: int | None
    path: str
    f: tuple[float, ...]
    g: tuple[float, ...]
    children: list[int] = field(default_factory=list)
    probs: list[float] = field(default_factory=list)
    xi: float | None = None
    state: int | None = None  # originating lattice state, when compiled
    prob: float = 1.0  # unconditional probability of reaching this node


@dataclass
class ScenarioTree:
    """Finite filtered space: one node per (stage, history), breadth-first ids.

    ``nodes[0]`` is the root; children always carry larger indices than their
    parent, so forward passes can iterate ids ascending and backward passes
    descending.
    """

    nodes: list[Node]
    m: int
    n: int

    @property
    def root(self) -> Node:
        return self.nodes[0]

    def leaves(self) -> list[Node]:
        return [v for v in self.nodes if v.stage == self.m]

    def node_by_path(self) -> dict[str, Node]:
        return {v.path: v for v in self.nodes}

    def ancestors_inclusive(self, index: int) -> list[int]:
        out = []
        cur: int | None = index
        while cur is not None:
            out.append(cur)
            cur = self.nodes[cur].parent
        out.reverse()
        return out


@dataclass
class MarkovLattice:
    """Finite-state Markov chain observed on the grid.

    ``states[j]`` are the stage-j state labels, ``transitions[j]`` the
    row-stochastic matrix from stage j to stage j+1, ``f``/``g`` indexed as
    [stage][state][agent], ``xi`` per terminal state.
    """

    states: list[list[str]]
    init: list[float]
    transitions: list[list[list[float]]]
    f: list[list[tuple[float, ...]]]
    g: list[list[tuple[float, ...]]]
    xi: list[float]
    n: int

    @property
    def m(self) -> int:
        return len(self.states) - 1

    def marginals(self) -> list[list[float]]:
        """Reach probability of every (stage, state)."""
        out = [list(self.init)]
        for j in range(self.m):
            nxt = [0.0] * len(self.states[j + 1])
            for x, px in enumerate(out[j]):
                if px == 0.0:
                    continue
                row = self.transitions[j][x]
                for y, q in enumerate(row):
                    if q > 0.0:
                        nxt[y] += px * q
            out.append(nxt)
        return out


@dataclass
class ProblemSpec:
    """A full instance: grid, the two atomic measures, and the model."""

    grid: TimeGrid
    mu_a: AtomicMeasure
    mu_p: AtomicMeasure
    model: ScenarioTree | MarkovLattice
    n: int

    @property
    def tree(self) -> ScenarioTree:
        if not isinstance(self.model, ScenarioTree):
            raise TypeError("model is a lattice; compile it to a tree first")
        return self.model

    @property
    def lattice(self) -> MarkovLattice:
        if not isinstance(self.model, MarkovLattice):
            raise TypeError("model is a scenario tree, not a lattice")
        return self.model


@dataclass
class AdaptedProcess:
    """One real value per tree node, aligned with ``tree.nodes`` order."""

    values: list[float]

    def __getitem__(self, index: int) -> float:
        return self.values[index]

    def __len__(self) -> int:
        return len(self.values)

    @staticmethod
    def from_mapping(tree: ScenarioTree, mapping: dict[str, float],
                     *, default: float | None = None) -> "AdaptedProcess":
        vals = []
        for v in tree.nodes:
            if v.path in mapping:
                vals.append(float(mapping[v.path]))
            elif default is not None:
                vals.append(default)
            else:
                raise ProblemFormatError(f"missing value for node '{v.path}'")
        return AdaptedProcess(vals)

    def to_mapping(self, tree: ScenarioTree, *, skip_terminal: bool = False) -> dict[str, float]:
        out = {}
        for v in tree.nodes:
            if skip_terminal and v.stage == tree.m:
                continue
            out[v.path] = self.values[v.index]
        return out


def values_of(process: "AdaptedProcess | Sequence[float]") -> Sequence[float]:
    return process.values if isinstance(process, AdaptedProcess) else process


# ---------------------------------------------------------------------------
# construction helpers


def build_tree(m: int, n: int, root_spec: dict) -> ScenarioTree:
    """Build a ScenarioTree from nested dicts with keys f, g, children, p, xi."""
    nodes: list[Node] = []
    queue: list[tuple[dict, int | None, int, str, float]] = [(root_spec, None, 0, "", 1.0)]
    while queue:
        spec, parent, stage, path, prob = queue.pop(0)
        idx = len(nodes)
        node = Node(
            index=idx,
            stage=stage,
            parent=parent,
            path=path,
            f=tuple(float(x) for x in spec.get("f", ())),
            g=tuple(float(x) for x in spec.get("g", ())),
            xi=float(spec["xi"]) if "xi" in spec else None,
            state=spec.get("state"),
            prob=prob,
        )
        nodes.append(node)
        if parent is not None:
            nodes[parent].children.append(idx)
            nodes[parent].probs.append(float(spec.get("p", 1.0)))
        for k, child in enumerate(spec.get("children", ())):
            cpath = f"{path}/{k}" if path else str(k)
            queue.append((child, idx, stage + 1, cpath, prob * float(child.get("p", 1.0))))
    return ScenarioTree(nodes=nodes, m=m, n=n)


def compile_lattice_to_tree(lattice: MarkovLattice, *, cap: int = DEFAULT_TREE_CAP) -> ScenarioTree:
    """Unroll the lattice into the tree of positive-probability state histories.

    Requires a deterministic initial state so the tree has a single root;
    zero-probability transitions produce no child.
    """
    support = [x for x, p in enumerate(lattice.init) if p > 0.0]
    if len(support) != 1 or not math.isclose(lattice.init[support[0]], 1.0, abs_tol=PROB_TOL):
        raise ValueError("tree compilation needs a deterministic initial state")
    x0 = support[0]
    m = lattice.m
    root = Node(index=0, stage=0, parent=None, path="",
                f=lattice.f[0][x0], g=lattice.g[0][x0],
                xi=lattice.xi[x0] if m == 0 else None, state=x0, prob=1.0)
    nodes = [root]
    frontier = [0]
    for j in range(m):
        nxt: list[int] = []
        for vi in frontier:
            v = nodes[vi]
            row = lattice.transitions[j][v.state]
            child_no = 0
            for y, q in enumerate(row):
                if q <= 0.0:
                    continue
                idx = len(nodes)
                if idx >= cap:
                    raise CapExceededError(
                        f"compiled tree exceeds {cap} nodes; instance too large for exact tree methods")
                path = f"{v.path}/{child_no}" if v.path else str(child_no)
                child = Node(index=idx, stage=j + 1, parent=vi, path=path,
                             f=lattice.f[j + 1][y], g=lattice.g[j + 1][y],
                             xi=lattice.xi[y] if j + 1 == m else None,
                             state=y, prob=v.prob * q)
                nodes.append(child)
                v.children.append(idx)
                v.probs.append(q)
                nxt.append(idx)
                child_no += 1
        frontier = nxt
    return ScenarioTree(nodes=nodes, m=m, n=lattice.n)


def ensure_tree(spec: ProblemSpec, *, cap: int = DEFAULT_TREE_CAP) -> ProblemSpec:
    """Return an equivalent ProblemSpec whose model is a scenario tree."""
    if isinstance(spec.model, ScenarioTree):
        return spec
    tree = compile_lattice_to_tree(spec.lattice, cap=cap)
    return ProblemSpec(grid=spec.grid, mu_a=spec.mu_a, mu_p=spec.mu_p, model=tree, n=spec.n)


# ---------------------------------------------------------------------------
# validation


def validate_problem(spec: ProblemSpec, *, strict_eps: float = DEFAULT_STRICT_EPS) -> list[Violation]:
    """Check every model invariant; an empty report means the instance is valid."""
    out: list[Violation] = []
    times = spec.grid.times
    m = spec.grid.m
    if m < 1:
        out.append(Violation("grid", "need at least two grid points"))
    if times and times[0] != 0.0:
        out.append(Violation("grid", f"t_0 must be 0, got {times[0]!r}"))
    for j in range(len(times) - 1):
        if not times[j] < times[j + 1]:
            out.append(Violation(f"grid[{j + 1}]", "times must be strictly increasing"))
    if spec.n < 1:
        out.append(Violation("agents", "need at least one agent"))
    for name, mu in (("muA", spec.mu_a), ("muP", spec.mu_p)):
        if len(mu.weights) != m + 1:
            out.append(Violation(name, f"expected {m + 1} weights, got {len(mu.weights)}"))
            continue
        for j, c in enumerate(mu.weights):
            if not math.isfinite(c) or c < 0.0:
                out.append(Violation(f"{name}[{j}]", f"weight must be finite and >= 0, got {c!r}"))
            elif j >= 1 and c <= 0.0:
                out.append(Violation(f"{name}[{j}]", "atoms after t_0 must carry positive mass"))

    def check_rates(where: str, f: Sequence[float], g: Sequence[float]):
        if len(f) != spec.n:
            out.append(Violation(where, f"expected {spec.n} agent rates, got {len(f)}"))
            return
        if len(g) != spec.n:
            out.append(Violation(where, f"expected {spec.n} principal rates, got {len(g)}"))
        for i in range(spec.n - 1):
            if not f[i + 1] - f[i] >= strict_eps:
                out.append(Violation(
                    where, f"agent rates must be strictly increasing with margin {strict_eps}: "
                           f"f_{i + 1}={f[i]!r} vs f_{i + 2}={f[i + 1]!r}"))

    if isinstance(spec.model, ScenarioTree):
        tree = spec.model
        if tree.m != m:
            out.append(Violation("tree", f"tree stage count {tree.m} != grid stage count {m}"))
        roots = [v for v in tree.nodes if v.parent is None]
        if len(roots) != 1 or roots[0].index != 0 or roots[0].stage != 0:
            out.append(Violation("tree", "need exactly one root at stage 0"))
        for v in tree.nodes:
            where = f"tree node '{v.path or '(root)'}'"
            check_rates(where, v.f, v.g)
            if v.children:
                if v.stage >= tree.m:
                    out.append(Violation(where, "node beyond the terminal stage has children"))
                for ci, p in zip(v.children, v.probs):
                    if tree.nodes[ci].stage != v.stage + 1:
                        out.append(Violation(where, "child is not one stage deeper"))
                    if not p > 0.0:
                        out.append(Violation(where, f"child probability must be positive, got {p!r}"))
                if abs(sum(v.probs) - 1.0) > PROB_TOL:
                    out.append(Violation(where, f"child probabilities sum to {sum(v.probs)!r}, not 1"))
                if v.xi is not None:
                    out.append(Violation(where, "interior node must not carry a terminal payoff"))
            else:
                if v.stage != tree.m:
                    out.append(Violation(where, f"leaf at stage {v.stage}, expected stage {tree.m}"))
                if v.xi is None:
                    out.append(Violation(where, "terminal node is missing its payoff"))
    else:
        lat = spec.model
        if lat.m != m:
            out.append(Violation("lattice", f"lattice stage count {lat.m} != grid stage count {m}"))
        if len(lat.transitions) != lat.m:
            out.append(Violation("lattice", f"expected {lat.m} transition matrices, got {len(lat.transitions)}"))
        if abs(sum(lat.init) - 1.0) > PROB_TOL or any(p < 0.0 for p in lat.init):
            out.append(Violation("lattice init", "initial distribution must be nonnegative and sum to 1"))
        if len(lat.init) != len(lat.states[0]):
            out.append(Violation("lattice init", "length does not match stage-0 state count"))
        for j, mat in enumerate(lat.transitions):
            if len(mat) != len(lat.states[j]):
                out.append(Violation(f"lattice stage {j}", "transition row count does not match state count"))
                continue
            for x, row in enumerate(mat):
                where = f"lattice stage {j} state {lat.states[j][x]}"
                if len(row) != len(lat.states[j + 1]):
                    out.append(Violation(where, "transition row length does not match next stage"))
                    continue
                if any(q < 0.0 for q in row):
                    out.append(Violation(where, "transition probabilities must be nonnegative"))
                if abs(sum(row) - 1.0) > PROB_TOL:
                    out.append(Violation(where, f"transition row sums to {sum(row)!r}, not 1"))
        for j in range(lat.m + 1):
            if len(lat.f[j]) != len(lat.states[j]) or len(lat.g[j]) != len(lat.states[j]):
                out.append(Violation(f"lattice stage {j}", "rate table size does not match state count"))
                continue
            for x in range(len(lat.states[j])):
                check_rates(f"lattice stage {j} state {lat.states[j][x]}", lat.f[j][x], lat.g[j][x])
        if len(lat.xi) != len(lat.states[-1]):
            out.append(Violation("lattice xi", "terminal payoff table size does not match state count"))
    return out


# ---------------------------------------------------------------------------
# JSON round trip


def _require(obj: dict, key: str, where: str) -> Any:
    if key not in obj:
        raise ProblemFormatError(f"{where}: missing key '{key}'")
    return obj[key]


def loads_problem(text: str, *, validate: bool = True,
                  strict_eps: float = DEFAULT_STRICT_EPS) -> ProblemSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProblemFormatError("top level must be an object")
    try:
        grid = TimeGrid(tuple(float(t) for t in _require(doc, "grid", "top level")))
        mu_a = AtomicMeasure(tuple(float(c) for c in _require(doc, "muA", "top level")))
        mu_p = AtomicMeasure(tuple(float(c) for c in _require(doc, "muP", "top level")))
        n = int(_require(doc, "agents", "top level"))
        if "tree" in doc:
            model: ScenarioTree | MarkovLattice = build_tree(grid.m, n, doc["tree"])
        elif "lattice" in doc:
            lat = doc["lattice"]
            states = [[str(s) for s in stage] for stage in _require(lat, "states", "lattice")]
            model = MarkovLattice(
                states=states,
                init=[float(p) for p in _require(lat, "init", "lattice")],
                transitions=[[[float(q) for q in row] for row in mat]
                             for mat in _require(lat, "transitions", "lattice")],
                f=[[tuple(float(x) for x in per_state) for per_state in stage]
                   for stage in _require(lat, "f", "lattice")],
                g=[[tuple(float(x) for x in per_state) for per_state in stage]
                   for stage in _require(lat, "g", "lattice")],
                xi=[float(x) for x in _require(lat, "xi", "lattice")],
                n=n,
            )
        else:
            raise ProblemFormatError("top level: need either 'tree' or 'lattice'")
    except (TypeError, ValueError, KeyError) as exc:
        raise ProblemFormatError(f"malformed problem document: {exc}") from exc
    spec = ProblemSpec(grid=grid, mu_a=mu_a, mu_p=mu_p, model=model, n=n)
    if validate:
        report = validate_problem(spec, strict_eps=strict_eps)
        if report:
            raise ValidationError(report)
    return spec


def load_problem(path: str, *, validate: bool = True,
                 strict_eps: float = DEFAULT_STRICT_EPS) -> ProblemSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_problem(fh.read(), validate=validate, strict_eps=strict_eps)


def _tree_to_dict(tree: ScenarioTree, v: Node) -> dict:
    out: dict[str, Any] = {"f": list(v.f), "g": list(v.g)}
    if v.parent is not None:
        parent = tree.nodes[v.parent]
        out["p"] = parent.probs[parent.children.index(v.index)]
    if v.state is not None:
        out["state"] = v.state
    if v.xi is not None:
        out["xi"] = v.xi
    if v.children:
        out["children"] = [_tree_to_dict(tree, tree.nodes[c]) for c in v.children]
    return out


def problem_to_dict(spec: ProblemSpec) -> dict:
    doc: dict[str, Any] = {
        "grid": list(spec.grid.times),
        "muA": list(spec.mu_a.weights),
        "muP": list(spec.mu_p.weights),
        "agents": spec.n,
    }
    if isinstance(spec.model, ScenarioTree):
        doc["tree"] = _tree_to_dict(spec.model, spec.model.root)
    else:
        lat = spec.model
        doc["lattice"] = {
            "states": lat.states,
            "init": lat.init,
            "transitions": lat.transitions,
            "f": [[list(r) for r in stage] for stage in lat.f],
            "g": [[list(r) for r in stage] for stage in lat.g],
            "xi": lat.xi,
        }
    return doc


def dumps_problem(spec: ProblemSpec) -> str:
    """Serialize so that loading reproduces every float bit-exactly."""
    return json.dumps(problem_to_dict(spec), indent=1, sort_keys=True)


def save_problem(spec: ProblemSpec, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_problem(spec))
        fh.write("\n")
