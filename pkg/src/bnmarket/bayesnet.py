"""Discrete Bayesian networks: DAG structure queries and exact inference.

Variables take values from named label domains. Networks are immutable once
built; price updates construct fresh networks, so any number of readers can
share a published network without locking.

Inference is exact enumeration over the ancestral closure of the queried
variables (barren variables integrate out to 1 and are never visited). When
evidence covers a variable's whole Markov blanket there is a closed-form
product shortcut, exposed separately as :func:`blanket_conditional`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

from .errors import BadSpecError, NullEventError

# Beyond this many factors, products accumulate in log space to dodge
# underflow on deep networks.
_LOG_SPACE_CUTOFF = 16

ROW_SUM_TOLERANCE = 1e-12


def product(factors: Sequence[float]) -> float:
    """Multiply probabilities; long products go through log space.

    A zero factor short-circuits to 0.0, so log space only ever sees
    positive values.
    """
    if len(factors) <= _LOG_SPACE_CUTOFF:
        out = 1.0
        for f in factors:
            out *= f
        return out
    total = 0.0
    for f in factors:
        if f == 0.0:
            return 0.0
        total += math.log(f)
    return math.exp(total)


@dataclass(frozen=True)
class VariableSpec:
    """A named discrete variable: ordered value labels plus its position in
    the market's global variable order."""

    name: str
    domain: tuple[str, ...]
    index: int

    def __post_init__(self):
        if len(self.domain) < 2:
            raise BadSpecError(f"variable {self.name!r} needs at least 2 values")
        if len(set(self.domain)) != len(self.domain):
            raise BadSpecError(f"variable {self.name!r} has duplicate value labels")

    @property
    def size(self) -> int:
        return len(self.domain)

    def value_index(self, label: str) -> int:
        try:
            return self.domain.index(label)
        except ValueError:
            raise BadSpecError(
                f"value {label!r} is not in the domain of {self.name!r}"
            ) from None


class Dag:
    """Directed acyclic graph over a fixed variable list.

    Parents, children, descendants, and Markov blankets are precomputed at
    construction; instances are immutable.
    """

    def __init__(self, variables: Sequence[VariableSpec], edges: Iterable[tuple[str, str]]):
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise BadSpecError("duplicate variable names")
        for i, v in enumerate(variables):
            if v.index != i:
                raise BadSpecError(
                    f"variable {v.name!r} carries index {v.index}, expected {i}"
                )
        self.variables: tuple[VariableSpec, ...] = tuple(variables)
        self._by_name = {v.name: v for v in self.variables}

        edge_list = []
        seen = set()
        for a, b in edges:
            if a not in self._by_name or b not in self._by_name:
                raise BadSpecError(f"edge ({a!r}, {b!r}) references an unknown variable")
            if a == b:
                raise BadSpecError(f"self-loop on {a!r}")
            if (a, b) in seen:
                raise BadSpecError(f"duplicate edge ({a!r}, {b!r})")
            seen.add((a, b))
            edge_list.append((a, b))
        self.edges: frozenset[tuple[str, str]] = frozenset(edge_list)

        parents: dict[str, list[str]] = {n: [] for n in names}
        children: dict[str, list[str]] = {n: [] for n in names}
        for a, b in edge_list:
            parents[b].append(a)
            children[a].append(b)
        key = lambda n: self._by_name[n].index
        self._parents = {n: tuple(sorted(ps, key=key)) for n, ps in parents.items()}
        self._children = {n: tuple(sorted(cs, key=key)) for n, cs in children.items()}

        self.topo_order: tuple[str, ...] = self._kahn_order()
        self._topo_pos = {n: i for i, n in enumerate(self.topo_order)}

        self._descendants: dict[str, tuple[str, ...]] = {}
        for n in reversed(self.topo_order):
            acc: set[str] = set()
            for c in self._children[n]:
                acc.add(c)
                acc.update(self._descendants[c])
            self._descendants[n] = tuple(sorted(acc, key=self._topo_pos.__getitem__))

        self._ancestors: dict[str, frozenset[str]] = {}
        for n in self.topo_order:
            acc = set()
            for p in self._parents[n]:
                acc.add(p)
                acc.update(self._ancestors[p])
            self._ancestors[n] = frozenset(acc)

    def _kahn_order(self) -> tuple[str, ...]:
        # Deterministic: among ready variables, lowest index first.
        indeg = {n: len(self._parents[n]) for n in self._by_name}
        ready = sorted((n for n, d in indeg.items() if d == 0), key=lambda n: self._by_name[n].index)
        order = []
        while ready:
            n = ready.pop(0)
            order.append(n)
            changed = False
            for c in self._children[n]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
                    changed = True
            if changed:
                ready.sort(key=lambda m: self._by_name[m].index)
        if len(order) != len(self.variables):
            raise BadSpecError("graph contains a cycle")
        return tuple(order)

    # -- structure queries -------------------------------------------------

    def variable(self, name: str) -> VariableSpec:
        try:
            return self._by_name[name]
        except KeyError:
            raise BadSpecError(f"unknown variable {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def parents(self, name: str) -> tuple[str, ...]:
        self.variable(name)
        return self._parents[name]

    def children(self, name: str) -> tuple[str, ...]:
        self.variable(name)
        return self._children[name]

    def descendants(self, name: str) -> tuple[str, ...]:
        """All descendants, in topological order."""
        self.variable(name)
        return self._descendants[name]

    def topo_position(self, name: str) -> int:
        self.variable(name)
        return self._topo_pos[name]

    def ancestors(self, name: str) -> frozenset[str]:
        self.variable(name)
        return self._ancestors[name]

    def markov_blanket(self, name: str) -> frozenset[str]:
        """Parents, children, and co-parents of children, minus the variable."""
        self.variable(name)
        blanket = set(self._parents[name]) | set(self._children[name])
        for c in self._children[name]:
            blanket.update(self._parents[c])
        blanket.discard(name)
        return frozenset(blanket)

    def adjacent(self, a: str, b: str) -> bool:
        return (a, b) in self.edges or (b, a) in self.edges

    def is_decomposable(self) -> bool:
        """True when every variable's parents are pairwise adjacent, which
        collapses each Markov blanket to parents plus children."""
        for n in self._by_name:
            ps = self._parents[n]
            for a, b in itertools.combinations(ps, 2):
                if not self.adjacent(a, b):
                    return False
        return True


def structure_queries(dag: Dag, name: str) -> dict[str, frozenset[str]]:
    """Parents, children, descendants, and Markov blanket of one variable."""
    dag.variable(name)
    return {
        "parents": frozenset(dag.parents(name)),
        "children": frozenset(dag.children(name)),
        "descendants": frozenset(dag.descendants(name)),
        "markov_blanket": dag.markov_blanket(name),
    }


def is_decomposable(dag: Dag) -> bool:
    return dag.is_decomposable()


@dataclass(frozen=True)
class Cpt:
    """Conditional probability table: one row per full parent valuation.

    Rows are tuples aligned with the variable's domain; table keys are
    tuples of parent value indices aligned with ``parents``.
    """

    variable: str
    parents: tuple[str, ...]
    table: dict[tuple[int, ...], tuple[float, ...]]

    def row(self, context: tuple[int, ...]) -> tuple[float, ...]:
        return self.table[context]


def _validate_cpt(cpt: Cpt, dag: Dag) -> None:
    var = dag.variable(cpt.variable)
    if cpt.parents != dag.parents(cpt.variable):
        raise BadSpecError(
            f"CPT of {cpt.variable!r} declares parents {cpt.parents}, "
            f"graph says {dag.parents(cpt.variable)}"
        )
    sizes = [dag.variable(p).size for p in cpt.parents]
    expected = 1
    for s in sizes:
        expected *= s
    if len(cpt.table) != expected:
        raise BadSpecError(
            f"CPT of {cpt.variable!r} has {len(cpt.table)} rows, expected {expected}"
        )
    for ctx, row in cpt.table.items():
        if len(ctx) != len(cpt.parents) or any(
            not (0 <= v < s) for v, s in zip(ctx, sizes)
        ):
            raise BadSpecError(f"CPT of {cpt.variable!r}: bad context {ctx}")
        if len(row) != var.size:
            raise BadSpecError(f"CPT of {cpt.variable!r}: row length mismatch at {ctx}")
        if any(p < 0.0 for p in row):
            raise BadSpecError(f"CPT of {cpt.variable!r}: negative entry at {ctx}")
        if abs(sum(row) - 1.0) > ROW_SUM_TOLERANCE:
            raise BadSpecError(
                f"CPT of {cpt.variable!r}: row at {ctx} sums to {sum(row)!r}"
            )


def uniform_cpt(dag: Dag, name: str) -> Cpt:
    var = dag.variable(name)
    parents = dag.parents(name)
    sizes = [dag.variable(p).size for p in parents]
    row = tuple(1.0 / var.size for _ in range(var.size))
    table = {ctx: row for ctx in itertools.product(*(range(s) for s in sizes))}
    return Cpt(name, parents, table)


class BayesNet:
    """A DAG plus one CPT per variable. Immutable once constructed."""

    def __init__(self, dag: Dag, cpts: Mapping[str, Cpt]):
        missing = [v.name for v in dag.variables if v.name not in cpts]
        if missing:
            raise BadSpecError(f"missing CPTs for {missing}")
        extra = [n for n in cpts if n not in dag]
        if extra:
            raise BadSpecError(f"CPTs for undeclared variables {extra}")
        for cpt in cpts.values():
            _validate_cpt(cpt, dag)
        self.dag = dag
        self.cpts: dict[str, Cpt] = dict(cpts)

    @property
    def variables(self) -> tuple[VariableSpec, ...]:
        return self.dag.variables

    def replace_cpts(self, new: Mapping[str, Cpt]) -> "BayesNet":
        merged = dict(self.cpts)
        merged.update(new)
        return BayesNet(self.dag, merged)

    def to_index_valuation(self, valuation: Mapping[str, str]) -> dict[str, int]:
        out = {}
        for name, label in valuation.items():
            out[name] = self.dag.variable(name).value_index(label)
        return out

    def cpt_entry(self, name: str, value: int, assignment: Mapping[str, int]) -> float:
        """CPT lookup with parent values read from ``assignment``."""
        cpt = self.cpts[name]
        ctx = tuple(assignment[p] for p in cpt.parents)
        return cpt.table[ctx][value]


def uniform_net(dag: Dag) -> BayesNet:
    return BayesNet(dag, {v.name: uniform_cpt(dag, v.name) for v in dag.variables})


# -- exact queries ----------------------------------------------------------


def joint_probability(bn: BayesNet, valuation: Mapping[str, str]) -> float:
    """Probability of one total outcome: the product of CPT entries."""
    if len(valuation) != len(bn.variables):
        raise BadSpecError("joint_probability needs a total valuation")
    idx = bn.to_index_valuation(valuation)
    factors = [bn.cpt_entry(v.name, idx[v.name], idx) for v in bn.variables]
    return product(factors)


def _ancestral_closure(dag: Dag, names: Iterable[str]) -> list[str]:
    """The queried variables plus all their ancestors, in topological order."""
    keep: set[str] = set()
    for n in names:
        keep.add(n)
        keep.update(dag.ancestors(n))
    return [n for n in dag.topo_order if n in keep]


def joint_marginal(bn: BayesNet, names: Sequence[str]) -> dict[tuple[int, ...], float]:
    """Exact joint marginal over ``names``: value-index tuples (in the given
    order) mapped to probabilities. Zero-probability assignments are absent.

    Works over the ancestral closure of the query, sweeping it in
    topological order and summing out each variable as soon as nothing
    downstream reads it, so the live frontier stays small on sparse graphs
    (a branch of a tournament bracket keeps only a couple of variables live
    no matter how deep it is).
    """
    targets = list(names)
    for n in targets:
        bn.dag.variable(n)
    target_set = set(targets)
    if len(target_set) != len(targets):
        raise BadSpecError("joint marginal targets must be distinct")
    closure = _ancestral_closure(bn.dag, targets)
    last_use: dict[str, int] = {}
    for pos, name in enumerate(closure):
        for p in bn.cpts[name].parents:
            last_use[p] = pos

    live: list[str] = []
    state: dict[tuple[int, ...], float] = {(): 1.0}
    for pos, name in enumerate(closure):
        cpt = bn.cpts[name]
        parent_idx = [live.index(p) for p in cpt.parents]
        extended: dict[tuple[int, ...], float] = {}
        for key, prob in state.items():
            row = cpt.table[tuple(key[i] for i in parent_idx)]
            for value, p_value in enumerate(row):
                if p_value == 0.0:
                    continue
                extended[key + (value,)] = prob * p_value
        live.append(name)
        state = extended

        done = [
            v for v in live if v not in target_set and last_use.get(v, -1) <= pos
        ]
        if done:
            keep = [i for i, v in enumerate(live) if v not in done]
            live = [live[i] for i in keep]
            compacted: dict[tuple[int, ...], float] = {}
            for key, prob in state.items():
                short = tuple(key[i] for i in keep)
                compacted[short] = compacted.get(short, 0.0) + prob
            state = compacted

    order = [live.index(t) for t in targets]
    return {tuple(key[i] for i in order): prob for key, prob in state.items()}


def _event_probability_indices(
    bn: BayesNet,
    fixed: Mapping[str, int],
    predicate: Callable[[Mapping[str, int]], bool] | None = None,
    predicate_vars: Iterable[str] = (),
) -> float:
    wanted = set(fixed) | set(predicate_vars)
    names = [v.name for v in bn.variables if v.name in wanted]
    table = joint_marginal(bn, names)
    total = 0.0
    for key, prob in table.items():
        assignment = dict(zip(names, key))
        if any(assignment[n] != v for n, v in fixed.items()):
            continue
        if predicate is not None and not predicate(assignment):
            continue
        total += prob
    return total


def event_probability(
    bn: BayesNet,
    valuation: Mapping[str, str],
    predicate: Callable[[Mapping[str, int]], bool] | None = None,
    predicate_vars: Iterable[str] = (),
) -> float:
    """Exact probability of a partial valuation, optionally intersected with
    an event given as a predicate over value indices."""
    return _event_probability_indices(
        bn, bn.to_index_valuation(valuation), predicate, predicate_vars
    )


def conditional_query(
    bn: BayesNet, target: str, evidence: Mapping[str, str]
) -> dict[str, float]:
    """Exact row of P(target | evidence), keyed by value label.

    Raises :class:`NullEventError` when the evidence has probability zero.
    """
    var = bn.dag.variable(target)
    if target in evidence:
        raise BadSpecError(f"target {target!r} already assigned in evidence")
    fixed = bn.to_index_valuation(evidence)

    names = [target, *fixed]
    table = joint_marginal(bn, names)
    ev_values = tuple(fixed[n] for n in names[1:])
    weights = [table.get((value, *ev_values), 0.0) for value in range(var.size)]
    norm = sum(weights)
    if norm <= 0.0:
        raise NullEventError(
            f"conditioning on null event while querying {target!r}"
        )
    return {label: weights[i] / norm for i, label in enumerate(var.domain)}


def blanket_conditional(
    bn: BayesNet, target: str, evidence: Mapping[str, int]
) -> tuple[float, ...]:
    """Closed-form P(target | evidence) when evidence covers the target's
    whole Markov blanket.

    The row is the normalized product of the target's own CPT row and each
    child's CPT entry at the evidence. Callers must guarantee the evidence
    event has positive probability; a zero normalizer still raises.
    """
    var = bn.dag.variable(target)
    blanket = bn.dag.markov_blanket(target)
    missing = blanket - set(evidence)
    if missing:
        raise BadSpecError(
            f"blanket conditional for {target!r} is missing evidence on {sorted(missing)}"
        )
    assignment = dict(evidence)
    children = bn.dag.children(target)
    weights = []
    for value in range(var.size):
        assignment[target] = value
        factors = [bn.cpt_entry(target, value, assignment)]
        factors += [bn.cpt_entry(c, assignment[c], assignment) for c in children]
        weights.append(product(factors))
    norm = sum(weights)
    if norm <= 0.0:
        raise NullEventError(f"conditioning on null event at the blanket of {target!r}")
    return tuple(w / norm for w in weights)


# -- JSON form ---------------------------------------------------------------
#
# {"variables": [{"name": "X1", "domain": ["T1", ...]}, ...],
#  "edges": [["X1", "X2"], ...],
#  "cpts": {"X2": [{"given": {"X1": "T1"}, "row": {"T1": 0.5, ...}}, ...]}}
#
# A variable absent from "cpts" (or the whole key omitted) gets uniform rows.


def dag_from_json(doc: Mapping) -> Dag:
    try:
        raw_vars = doc["variables"]
    except (KeyError, TypeError):
        raise BadSpecError("network JSON needs a 'variables' list") from None
    if not isinstance(raw_vars, list) or not raw_vars:
        raise BadSpecError("'variables' must be a nonempty list")
    variables = []
    for i, rv in enumerate(raw_vars):
        try:
            name, domain = rv["name"], rv["domain"]
        except (KeyError, TypeError):
            raise BadSpecError(f"variable entry {i} needs 'name' and 'domain'") from None
        if not isinstance(domain, list) or not all(isinstance(d, str) for d in domain):
            raise BadSpecError(f"domain of {name!r} must be a list of labels")
        variables.append(VariableSpec(name, tuple(domain), i))
    edges = []
    for e in doc.get("edges", []):
        if not (isinstance(e, (list, tuple)) and len(e) == 2):
            raise BadSpecError(f"bad edge entry {e!r}")
        edges.append((e[0], e[1]))
    return Dag(variables, edges)


def bayesnet_from_json(doc: Mapping) -> BayesNet:
    dag = dag_from_json(doc)
    raw_cpts = doc.get("cpts", {}) or {}
    if not isinstance(raw_cpts, Mapping):
        raise BadSpecError("'cpts' must be an object keyed by variable name")
    cpts: dict[str, Cpt] = {}
    for v in dag.variables:
        if v.name not in raw_cpts:
            cpts[v.name] = uniform_cpt(dag, v.name)
            continue
        parents = dag.parents(v.name)
        table: dict[tuple[int, ...], tuple[float, ...]] = {}
        for entry in raw_cpts[v.name]:
            try:
                given, row = entry["given"], entry["row"]
            except (KeyError, TypeError):
                raise BadSpecError(
                    f"CPT entry for {v.name!r} needs 'given' and 'row'"
                ) from None
            if set(given) != set(parents):
                raise BadSpecError(
                    f"CPT entry for {v.name!r} conditions on {sorted(given)}, "
                    f"parents are {sorted(parents)}"
                )
            ctx = tuple(dag.variable(p).value_index(given[p]) for p in parents)
            if ctx in table:
                raise BadSpecError(f"duplicate CPT context for {v.name!r}: {given}")
            if set(row) != set(v.domain):
                raise BadSpecError(
                    f"CPT row for {v.name!r} must cover exactly its domain"
                )
            table[ctx] = tuple(float(row[label]) for label in v.domain)
        cpts[v.name] = Cpt(v.name, parents, table)
    return BayesNet(dag, cpts)


def bayesnet_to_json(bn: BayesNet) -> dict:
    doc: dict = {
        "variables": [{"name": v.name, "domain": list(v.domain)} for v in bn.variables],
        "edges": sorted([a, b] for a, b in bn.dag.edges),
        "cpts": {},
    }
    for v in bn.variables:
        cpt = bn.cpts[v.name]
        entries = []
        for ctx in sorted(cpt.table):
            given = {
                p: bn.dag.variable(p).domain[ci] for p, ci in zip(cpt.parents, ctx)
            }
            row = dict(zip(v.domain, cpt.table[ctx]))
            entries.append({"given": given, "row": row})
        doc["cpts"][v.name] = entries
    return doc
