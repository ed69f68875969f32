"""Discrete Bayesian networks: types, validation, serialization, generation.

An assignment is a plain ``dict`` mapping variable names to state indices;
evidence maps variable names to state *labels* (the external form).  All
probability arithmetic on joints happens in log space because target
likelihoods can be far below the smallest normal double.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass

import numpy as np

ROW_SUM_TOL = 1e-6

_DOC_KEYS = {"variables", "cpts", "evidence"}
_VAR_KEYS = {"name", "states"}
_CPT_KEYS = {"child", "parents", "table"}


class NetworkFormatError(ValueError):
    """A network document is malformed (bad JSON, unknown keys, bad shapes)."""


@dataclass(frozen=True)
class ValidationFinding:
    kind: str
    subject: str
    message: str
    deviation: float | None = None


class NetworkValidationError(ValueError):
    """A structurally parsed network violates a semantic invariant."""

    def __init__(self, findings: list[ValidationFinding]):
        self.findings = list(findings)
        super().__init__("; ".join(f.message for f in self.findings))


@dataclass(frozen=True)
class Variable:
    name: str
    states: tuple[str, ...]

    @property
    def card(self) -> int:
        return len(self.states)

    def state_index(self, label: str) -> int:
        try:
            return self.states.index(label)
        except ValueError:
            raise KeyError(f"variable {self.name!r} has no state {label!r}") from None


class Cpt:
    """Conditional probability table for one child variable.

    ``table`` has one row per parent configuration (row-major, first parent
    most significant) and one column per child state.
    """

    __slots__ = ("child", "parents", "table")

    def __init__(self, child: str, parents: tuple[str, ...], table: np.ndarray):
        self.child = child
        self.parents = tuple(parents)
        arr = np.asarray(table, dtype=np.float64)
        if arr.ndim != 2:
            raise NetworkFormatError(f"cpt for {child!r}: table must be two-dimensional")
        arr = arr.copy()
        arr.flags.writeable = False
        self.table = arr

    def deterministic_rows(self) -> np.ndarray:
        """Boolean mask of rows that are exact point masses."""
        return (self.table == 1.0).sum(axis=1) == 1


class BayesianNetwork:
    """Immutable DAG of discrete variables with one CPT per variable."""

    def __init__(self, variables: list[Variable] | tuple[Variable, ...],
                 cpts: list[Cpt] | tuple[Cpt, ...]):
        self.variables = tuple(variables)
        self.cpts = tuple(cpts)
        self._index = {v.name: i for i, v in enumerate(self.variables)}
        self._by_child = {c.child: c for c in self.cpts}

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def variable(self, name: str) -> Variable:
        return self.variables[self._index[name]]

    def index(self, name: str) -> int:
        return self._index[name]

    def card(self, name: str) -> int:
        return self.variable(name).card

    def cpt(self, name: str) -> Cpt:
        return self._by_child[name]

    def parents(self, name: str) -> tuple[str, ...]:
        return self._by_child[name].parents

    def children(self, name: str) -> tuple[str, ...]:
        return tuple(c.child for c in self.cpts if name in c.parents)

    def parent_strides(self, name: str) -> np.ndarray:
        """Row-index strides for the parent configuration of ``name``."""
        cards = [self.card(p) for p in self.parents(name)]
        strides = np.ones(len(cards), dtype=np.int64)
        for j in range(len(cards) - 2, -1, -1):
            strides[j] = strides[j + 1] * cards[j + 1]
        return strides


def validate_network(net: BayesianNetwork) -> list[ValidationFinding]:
    """Check names, references, table shapes, row sums and acyclicity.

    Returns an empty list iff the network is valid; findings never raise.
    """
    findings: list[ValidationFinding] = []
    seen = set()
    for v in net.variables:
        if v.name in seen:
            findings.append(ValidationFinding(
                "duplicate", v.name, f"duplicate variable name {v.name!r}"))
        seen.add(v.name)
        if len(set(v.states)) != len(v.states):
            findings.append(ValidationFinding(
                "state", v.name, f"variable {v.name!r} has duplicate state labels"))
        if v.card < 2:
            findings.append(ValidationFinding(
                "state", v.name, f"variable {v.name!r} needs at least 2 states"))

    names = set(net._index)
    covered = set()
    refs_ok = True
    for c in net.cpts:
        if c.child not in names:
            findings.append(ValidationFinding(
                "reference", c.child, f"cpt references unknown child {c.child!r}"))
            refs_ok = False
            continue
        if c.child in covered:
            findings.append(ValidationFinding(
                "duplicate", c.child, f"more than one cpt for {c.child!r}"))
        covered.add(c.child)
        bad_parent = False
        for p in c.parents:
            if p not in names:
                findings.append(ValidationFinding(
                    "reference", c.child,
                    f"cpt for {c.child!r} references unknown parent {p!r}"))
                bad_parent = True
                refs_ok = False
        if len(set(c.parents)) != len(c.parents):
            findings.append(ValidationFinding(
                "reference", c.child, f"cpt for {c.child!r} repeats a parent"))
            bad_parent = True
        if bad_parent:
            continue
        n_rows = 1
        for p in c.parents:
            n_rows *= net.card(p)
        if c.table.shape != (n_rows, net.card(c.child)):
            findings.append(ValidationFinding(
                "shape", c.child,
                f"cpt for {c.child!r} has shape {c.table.shape}, "
                f"expected {(n_rows, net.card(c.child))}"))
            continue
        if np.any(c.table < 0.0) or np.any(c.table > 1.0):
            findings.append(ValidationFinding(
                "row_sum", c.child, f"cpt for {c.child!r} has entries outside [0, 1]"))
        sums = c.table.sum(axis=1)
        worst = int(np.argmax(np.abs(sums - 1.0)))
        dev = float(abs(sums[worst] - 1.0))
        if dev > ROW_SUM_TOL:
            findings.append(ValidationFinding(
                "row_sum", c.child,
                f"cpt row {worst} of {c.child!r} sums to {sums[worst]!r}", dev))

    missing = names - covered
    for name in sorted(missing, key=net.index):
        findings.append(ValidationFinding(
            "reference", name, f"variable {name!r} has no cpt"))

    if refs_ok and not missing:
        cycle = _find_cycle(net)
        if cycle:
            findings.append(ValidationFinding(
                "cycle", cycle[0], "cycle detected: " + " -> ".join(cycle)))
    return findings


def _find_cycle(net: BayesianNetwork) -> list[str] | None:
    color = {n: 0 for n in net.names}
    stack: list[str] = []

    def visit(n: str) -> list[str] | None:
        color[n] = 1
        stack.append(n)
        for ch in net.children(n):
            if color[ch] == 1:
                i = stack.index(ch)
                return stack[i:] + [ch]
            if color[ch] == 0:
                found = visit(ch)
                if found:
                    return found
        stack.pop()
        color[n] = 2
        return None

    for n in net.names:
        if color[n] == 0:
            found = visit(n)
            if found:
                return found
    return None


def topological_order(net: BayesianNetwork) -> list[str]:
    """Parents before children; ties broken by declaration order."""
    indeg = {n: len(net.parents(n)) for n in net.names}
    ready = [net.index(n) for n in net.names if indeg[n] == 0]
    heapq.heapify(ready)
    out: list[str] = []
    while ready:
        name = net.variables[heapq.heappop(ready)].name
        out.append(name)
        for ch in net.children(name):
            indeg[ch] -= 1
            if indeg[ch] == 0:
                heapq.heappush(ready, net.index(ch))
    if len(out) != len(net.names):
        raise NetworkValidationError([ValidationFinding(
            "cycle", out[0] if out else "", "cycle detected during topological sort")])
    return out


def joint_log_prob(net: BayesianNetwork, assignment: dict[str, int]) -> float:
    """Log joint probability of a full assignment; ``-inf`` on any zero factor."""
    missing = [n for n in net.names if n not in assignment]
    if missing:
        raise ValueError(f"assignment is missing variables: {missing}")
    matrix = np.array([[assignment[n] for n in net.names]], dtype=np.int64)
    return float(joint_log_prob_batch(net, matrix)[0])


def joint_log_prob_batch(net: BayesianNetwork, matrix: np.ndarray) -> np.ndarray:
    """Vectorized ``joint_log_prob`` over rows of state indices.

    ``matrix`` columns follow the network's declaration order.
    """
    total = np.zeros(matrix.shape[0], dtype=np.float64)
    for c in net.cpts:
        if c.parents:
            pcols = [net.index(p) for p in c.parents]
            cfg = matrix[:, pcols] @ net.parent_strides(c.child)
        else:
            cfg = np.zeros(matrix.shape[0], dtype=np.int64)
        entries = c.table[cfg, matrix[:, net.index(c.child)]]
        with np.errstate(divide="ignore"):
            total += np.log(entries)
    return total


def evidence_indices(net: BayesianNetwork, evidence: dict[str, str]) -> dict[str, int]:
    return {name: net.variable(name).state_index(label)
            for name, label in evidence.items()}


# ---------------------------------------------------------------------------
# Document format
# ---------------------------------------------------------------------------

def parse_network(text: str) -> tuple[BayesianNetwork, dict[str, str] | None]:
    """Parse the JSON network document format.

    Top-level keys: ``variables`` (array of ``{"name", "states"}``), ``cpts``
    (array of ``{"child", "parents", "table"}``), optional ``evidence``
    (object of variable -> state label).  Unknown keys are rejected.  CPT rows
    must sum to 1 within ``ROW_SUM_TOL`` and are renormalized exactly on load.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise NetworkFormatError(
            f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict):
        raise NetworkFormatError("document root must be an object")
    unknown = set(doc) - _DOC_KEYS
    if unknown:
        raise NetworkFormatError(f"unknown top-level keys: {sorted(unknown)}")
    for key in ("variables", "cpts"):
        if key not in doc or not isinstance(doc[key], list):
            raise NetworkFormatError(f"missing or non-array {key!r} section")

    variables = []
    for i, entry in enumerate(doc["variables"]):
        path = f"variables[{i}]"
        if not isinstance(entry, dict):
            raise NetworkFormatError(f"{path} must be an object")
        if set(entry) != _VAR_KEYS:
            raise NetworkFormatError(f"{path}: keys must be exactly {sorted(_VAR_KEYS)}")
        name, states = entry["name"], entry["states"]
        if not isinstance(name, str) or not isinstance(states, list) \
                or not all(isinstance(s, str) for s in states):
            raise NetworkFormatError(f"{path}: name must be a string, states string array")
        variables.append(Variable(name, tuple(states)))

    cpts = []
    for i, entry in enumerate(doc["cpts"]):
        path = f"cpts[{i}]"
        if not isinstance(entry, dict):
            raise NetworkFormatError(f"{path} must be an object")
        if set(entry) != _CPT_KEYS:
            raise NetworkFormatError(f"{path}: keys must be exactly {sorted(_CPT_KEYS)}")
        child, parents, table = entry["child"], entry["parents"], entry["table"]
        if not isinstance(child, str) or not isinstance(parents, list) \
                or not all(isinstance(p, str) for p in parents):
            raise NetworkFormatError(f"{path}: child/parents must be strings")
        if not isinstance(table, list) or not table \
                or not all(isinstance(row, list) for row in table):
            raise NetworkFormatError(f"{path}: table must be a non-empty array of rows")
        width = len(table[0])
        for j, row in enumerate(table):
            if len(row) != width:
                raise NetworkFormatError(f"{path}.table[{j}]: ragged row")
            if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in row):
                raise NetworkFormatError(f"{path}.table[{j}]: entries must be numbers")
        cpts.append(Cpt(child, tuple(parents), np.array(table, dtype=np.float64)))

    net = BayesianNetwork(variables, cpts)
    findings = validate_network(net)
    if findings:
        raise NetworkValidationError(findings)

    # Renormalize rows exactly so the in-memory invariant is exact sums.
    cpts = [Cpt(c.child, c.parents, c.table / c.table.sum(axis=1, keepdims=True))
            for c in net.cpts]
    net = BayesianNetwork(variables, cpts)

    evidence = None
    if "evidence" in doc:
        raw = doc["evidence"]
        if not isinstance(raw, dict) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in raw.items()):
            raise NetworkFormatError("evidence must map variable names to state labels")
        ev_findings = []
        for name, label in raw.items():
            if name not in net._index:
                ev_findings.append(ValidationFinding(
                    "evidence", name, f"evidence references unknown variable {name!r}"))
            elif label not in net.variable(name).states:
                ev_findings.append(ValidationFinding(
                    "evidence", name,
                    f"evidence state {label!r} is not a state of {name!r}"))
        if ev_findings:
            raise NetworkValidationError(ev_findings)
        evidence = dict(raw) if raw else None
    return net, evidence


def serialize_network(net: BayesianNetwork, evidence: dict[str, str] | None = None) -> str:
    """Canonical document: declaration order, sorted evidence keys, 2-space indent."""
    doc: dict = {
        "variables": [{"name": v.name, "states": list(v.states)} for v in net.variables],
        "cpts": [{"child": c.child,
                  "parents": list(c.parents),
                  "table": [[float(x) for x in row] for row in c.table]}
                 for c in net.cpts],
    }
    if evidence:
        doc["evidence"] = {k: evidence[k] for k in sorted(evidence)}
    return json.dumps(doc, indent=2) + "\n"


# ---------------------------------------------------------------------------
# Random test networks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    nodes: int
    max_parents: int = 2
    states: int = 2
    det_fraction: float = 0.0
    evidence_leaves: int = 1

    def validate(self) -> None:
        if self.nodes < 1:
            raise ValueError("infeasible config: need at least one node")
        if self.states < 2:
            raise ValueError("infeasible config: need at least two states")
        if self.max_parents < 0 or self.max_parents >= self.nodes:
            raise ValueError("infeasible config: max parents must be < node count")
        if not 0.0 <= self.det_fraction <= 1.0:
            raise ValueError("infeasible config: det fraction outside [0, 1]")
        if not 0 <= self.evidence_leaves <= self.nodes:
            raise ValueError("infeasible config: evidence count outside [0, nodes]")


def generate_random_network(cfg: GeneratorConfig,
                            seed: int) -> tuple[BayesianNetwork, dict[str, str]]:
    """Random DAG with a guaranteed fraction of deterministic rows.

    Edges only point from lower to higher declaration index, so the result is
    acyclic by construction.  Each CPT gets ``ceil(det_fraction * rows)``
    deterministic rows.  Evidence is produced by forward-sampling one full
    instance and observing leaf variables, which guarantees P(e) > 0.
    """
    cfg.validate()
    rng = np.random.default_rng(seed)
    card = cfg.states
    labels = tuple(str(i) for i in range(card))

    variables = [Variable(f"X{i}", labels) for i in range(cfg.nodes)]
    parent_sets: list[tuple[str, ...]] = []
    for i in range(cfg.nodes):
        hi = min(cfg.max_parents, i)
        n_par = int(rng.integers(0, hi + 1)) if hi else 0
        chosen = sorted(rng.choice(i, size=n_par, replace=False).tolist()) if n_par else []
        parent_sets.append(tuple(f"X{j}" for j in chosen))

    cpts = []
    for i in range(cfg.nodes):
        n_rows = card ** len(parent_sets[i])
        n_det = math.ceil(cfg.det_fraction * n_rows)
        det_rows = set(rng.choice(n_rows, size=n_det, replace=False).tolist()) if n_det else set()
        table = np.empty((n_rows, card))
        for r in range(n_rows):
            if r in det_rows:
                row = np.zeros(card)
                row[int(rng.integers(card))] = 1.0
            else:
                row = rng.dirichlet(np.ones(card))
                row = row / row.sum()
            table[r] = row
        cpts.append(Cpt(f"X{i}", parent_sets[i], table))

    net = BayesianNetwork(variables, cpts)

    # Prefer leaves (no children), then the latest-declared internal nodes.
    has_child = set()
    for ps in parent_sets:
        has_child.update(ps)
    leaves = [n for n in net.names if n not in has_child]
    internal = [n for n in reversed(net.names) if n in has_child]
    targets = (leaves + internal)[:cfg.evidence_leaves]

    sample: dict[str, int] = {}
    for name in net.names:  # declaration order is topological here
        c = net.cpt(name)
        if c.parents:
            idx = int(np.array([sample[p] for p in c.parents]) @ net.parent_strides(name))
        else:
            idx = 0
        sample[name] = int(rng.choice(card, p=c.table[idx]))

    evidence = {name: labels[sample[name]] for name in targets}
    return net, evidence
