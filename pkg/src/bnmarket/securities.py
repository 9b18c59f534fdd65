"""CNF securities: parsing, evaluation, model counting, and the structural
checks that decide whether a security can be priced with an exact network
update.

Grammar (whitespace insignificant)::

    security := clause ("&" clause)*
    clause   := lit | "(" lit ("|" lit)* ")"
    lit      := IDENT "=" LABEL | IDENT "!=" LABEL

Identifiers and labels both match ``[A-Za-z_][A-Za-z0-9_]*``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .bayesnet import Dag, VariableSpec
from .errors import BadSpecError, CompatCheckTooLargeError, SecurityParseError

# Exhaustive compatibility checking is exponential in the number of formula
# variables; refuse anything wider than this rather than run unbounded.
MAX_COMPAT_VARIABLES = 24


@dataclass(frozen=True)
class Literal:
    variable: str
    value: str
    negated: bool = False

    def render(self) -> str:
        op = "!=" if self.negated else "="
        return f"{self.variable}{op}{self.value}"


@dataclass(frozen=True)
class Clause:
    literals: tuple[Literal, ...]

    def __post_init__(self):
        if not self.literals:
            raise BadSpecError("empty clause")

    def render(self) -> str:
        if len(self.literals) == 1:
            return self.literals[0].render()
        return "(" + " | ".join(lit.render() for lit in self.literals) + ")"


class CnfSecurity:
    """A conjunction of clauses over the market's variables.

    Evaluation is total: every full outcome either satisfies the formula
    (pays $1 per share) or does not.
    """

    def __init__(
        self,
        clauses: Sequence[Clause],
        variables: Sequence[VariableSpec],
        source_text: str | None = None,
    ):
        if not clauses:
            raise BadSpecError("security needs at least one clause")
        self.clauses: tuple[Clause, ...] = tuple(clauses)
        self.variables: tuple[VariableSpec, ...] = tuple(variables)
        self._by_name = {v.name: v for v in self.variables}
        for clause in self.clauses:
            for lit in clause.literals:
                var = self._by_name.get(lit.variable)
                if var is None:
                    raise BadSpecError(f"unknown variable {lit.variable!r} in security")
                var.value_index(lit.value)
        self.source_text = source_text if source_text is not None else self.render()
        # Index form for fast evaluation: per clause, (name, value index, negated).
        self._compiled: tuple[tuple[tuple[str, int, bool], ...], ...] = tuple(
            tuple(
                (lit.variable, self._by_name[lit.variable].value_index(lit.value), lit.negated)
                for lit in clause.literals
            )
            for clause in self.clauses
        )
        used = {lit.variable for clause in self.clauses for lit in clause.literals}
        self.vars_used: tuple[str, ...] = tuple(
            v.name for v in self.variables if v.name in used
        )
        self._used_specs: tuple[VariableSpec, ...] = tuple(
            self._by_name[n] for n in self.vars_used
        )
        self._total_outcomes = 1
        for v in self.variables:
            self._total_outcomes *= v.size
        self._unused_product = 1
        for v in self.variables:
            if v.name not in used:
                self._unused_product *= v.size

    def render(self) -> str:
        return " & ".join(clause.render() for clause in self.clauses)

    def __repr__(self) -> str:  # pragma: no cover
        return f"CnfSecurity({self.render()!r})"

    def evaluate_indices(self, assignment: Mapping[str, int]) -> int:
        """Evaluate from value indices; needs every used variable assigned."""
        for clause in self._compiled:
            satisfied = False
            for name, value, negated in clause:
                if (assignment[name] == value) != negated:
                    satisfied = True
                    break
            if not satisfied:
                return 0
        return 1

    def structurally_equal(self, other: "CnfSecurity") -> bool:
        return self.clauses == other.clauses


# -- parsing -----------------------------------------------------------------


def _tokenize(text: str):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isalpha() or ch == "_":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("NAME", text[i:j], i))
            i = j
        elif text.startswith("!=", i):
            tokens.append(("NEQ", "!=", i))
            i += 2
        elif ch in "=|&()":
            kind = {"=": "EQ", "|": "OR", "&": "AND", "(": "LP", ")": "RP"}[ch]
            tokens.append((kind, ch, i))
            i += 1
        else:
            raise SecurityParseError(f"unexpected character {ch!r}", i)
    tokens.append(("END", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str, variables: Sequence[VariableSpec]):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0
        self.by_name = {v.name: v for v in variables}

    def peek(self):
        return self.tokens[self.pos]

    def take(self, kind: str):
        tok = self.tokens[self.pos]
        if tok[0] != kind:
            raise SecurityParseError(
                f"expected {kind}, found {tok[1]!r}" if tok[1] else f"expected {kind}",
                tok[2],
            )
        self.pos += 1
        return tok

    def parse_literal(self) -> Literal:
        name_tok = self.take("NAME")
        var = self.by_name.get(name_tok[1])
        if var is None:
            raise SecurityParseError(f"unknown variable {name_tok[1]!r}", name_tok[2])
        op = self.peek()
        if op[0] == "EQ":
            self.take("EQ")
            negated = False
        elif op[0] == "NEQ":
            self.take("NEQ")
            negated = True
        else:
            raise SecurityParseError("expected '=' or '!='", op[2])
        label_tok = self.take("NAME")
        if label_tok[1] not in var.domain:
            raise SecurityParseError(
                f"value {label_tok[1]!r} is not in the domain of {var.name!r}",
                label_tok[2],
            )
        return Literal(var.name, label_tok[1], negated)

    def parse_clause(self) -> Clause:
        if self.peek()[0] == "LP":
            lp = self.take("LP")
            if self.peek()[0] == "RP":
                raise SecurityParseError("empty clause", lp[2])
            lits = [self.parse_literal()]
            while self.peek()[0] == "OR":
                self.take("OR")
                lits.append(self.parse_literal())
            self.take("RP")
            return Clause(tuple(lits))
        return Clause((self.parse_literal(),))

    def parse(self) -> list[Clause]:
        clauses = [self.parse_clause()]
        while self.peek()[0] == "AND":
            self.take("AND")
            clauses.append(self.parse_clause())
        self.take("END")
        return clauses


def parse_security(text: str, variables: Sequence[VariableSpec]) -> CnfSecurity:
    """Parse security text against the market's variables.

    Round-trips: ``parse_security(f.render(), vars)`` reproduces ``f`` up to
    whitespace. Errors carry the byte offset of the offending token.
    """
    clauses = _Parser(text, variables).parse()
    return CnfSecurity(clauses, variables, source_text=text)


def eval_formula(f: CnfSecurity, valuation: Mapping[str, str]) -> int:
    """1 when every clause holds under a total valuation, else 0."""
    if len(valuation) != len(f.variables):
        raise BadSpecError("eval_formula needs a total valuation")
    idx = {}
    for v in f.variables:
        if v.name not in valuation:
            raise BadSpecError(f"valuation is missing {v.name!r}")
        idx[v.name] = v.value_index(valuation[v.name])
    return f.evaluate_indices(idx)


# -- counting ----------------------------------------------------------------


def _index_valuation(
    f: CnfSecurity, valuation: Mapping[str, str]
) -> dict[str, int]:
    by_name = {v.name: v for v in f.variables}
    out = {}
    for name, label in valuation.items():
        var = by_name.get(name)
        if var is None:
            raise BadSpecError(f"unknown variable {name!r}")
        out[name] = var.value_index(label)
    return out


def _count_models_indices(f: CnfSecurity, fixed: Mapping[str, int]) -> int:
    free = [v for v in f._used_specs if v.name not in fixed]
    # variables the formula never mentions contribute a plain product of
    # domain sizes; divide out whichever of them `fixed` pins down
    untouched = f._unused_product
    for name in fixed:
        var = f._by_name[name]
        if name not in f.vars_used:
            untouched //= var.size
    assignment = dict(fixed)
    count = 0
    for combo in itertools.product(*(range(v.size) for v in free)):
        assignment.update((v.name, value) for v, value in zip(free, combo))
        count += f.evaluate_indices(assignment)
    return count * untouched


def count_models(f: CnfSecurity, fixed: Mapping[str, str] | None = None) -> int:
    """Exact number of total outcomes consistent with ``fixed`` that satisfy
    the formula.

    Only the formula's own unfixed variables are enumerated; variables the
    formula never mentions contribute a product of domain sizes.
    """
    return _count_models_indices(f, _index_valuation(f, fixed or {}))


def pivotal_variables(f: CnfSecurity) -> frozenset[str]:
    """Variables whose value can change the formula's truth in some context."""
    pivotal = set()
    by_name = {v.name: v for v in f.variables}
    for name in f.vars_used:
        var = by_name[name]
        others = [by_name[o] for o in f.vars_used if o != name]
        assignment: dict[str, int] = {}
        found = False
        for combo in itertools.product(*(range(o.size) for o in others)):
            assignment.update((o.name, value) for o, value in zip(others, combo))
            seen = None
            for value in range(var.size):
                assignment[name] = value
                out = f.evaluate_indices(assignment)
                if seen is None:
                    seen = out
                elif out != seen:
                    found = True
                    break
            if found:
                break
        if found:
            pivotal.add(name)
    return frozenset(pivotal)


# -- compatibility with a DAG --------------------------------------------------


@dataclass(frozen=True)
class CompatWitness:
    """A replayable counterexample: flipping ``variable`` between the two
    values changes the formula differently in the two outside contexts."""

    variable: str
    value_a: str
    value_b: str
    blanket: dict[str, str]
    context_a: dict[str, str]
    context_b: dict[str, str]

    def _diff(self, f: CnfSecurity, context: Mapping[str, str]) -> int:
        base = {**self.blanket, **context}
        va = eval_formula(f, {**base, self.variable: self.value_a})
        vb = eval_formula(f, {**base, self.variable: self.value_b})
        return va - vb

    def verify(self, f: CnfSecurity) -> bool:
        return self._diff(f, self.context_a) != self._diff(f, self.context_b)


@dataclass(frozen=True)
class CompatReport:
    compatible: bool
    witness: CompatWitness | None = None


def clique_scoped(f: CnfSecurity, dag: Dag) -> bool:
    """True when the formula's variables are pairwise adjacent in the graph.

    Requires a decomposable graph; a clique-scoped security is always safe
    for exact updating there.
    """
    if not dag.is_decomposable():
        raise BadSpecError("clique scope check requires a decomposable graph")
    for name in f.vars_used:
        dag.variable(name)
    for a, b in itertools.combinations(f.vars_used, 2):
        if not dag.adjacent(a, b):
            return False
    return True


def is_compatible(f: CnfSecurity, dag: Dag) -> CompatReport:
    """Decide whether the formula's flip behavior in every variable depends
    only on that variable's Markov blanket.

    Checked exhaustively: for each variable, each blanket valuation, the
    vector of formula differences across the variable's values must be the
    same in every outside context. Variables the formula never mentions are
    pinned to their first label; they cannot affect the formula, so one
    representative context suffices.
    """
    for name in f.vars_used:
        dag.variable(name)
    if len(f.vars_used) > MAX_COMPAT_VARIABLES:
        raise CompatCheckTooLargeError(
            f"compatibility check too large: {len(f.vars_used)} formula variables "
            f"(limit {MAX_COMPAT_VARIABLES})"
        )
    if dag.is_decomposable() and clique_scoped(f, dag):
        return CompatReport(True, None)

    used = set(f.vars_used)
    names = [v.name for v in dag.variables]
    first_value = {n: 0 for n in names}

    for target in f.vars_used:
        var = dag.variable(target)
        blanket = dag.markov_blanket(target)
        outside = [n for n in names if n != target and n not in blanket]
        blanket_enum = [n for n in names if n in blanket and n in used]
        outside_enum = [n for n in outside if n in used]

        base = dict(first_value)
        for bl_combo in itertools.product(
            *(range(dag.variable(n).size) for n in blanket_enum)
        ):
            assignment = dict(base)
            assignment.update(zip(blanket_enum, bl_combo))
            reference: tuple[int, ...] | None = None
            reference_ctx: tuple[int, ...] | None = None
            for out_combo in itertools.product(
                *(range(dag.variable(n).size) for n in outside_enum)
            ):
                assignment.update(zip(outside_enum, out_combo))
                values = []
                for value in range(var.size):
                    assignment[target] = value
                    values.append(f.evaluate_indices(assignment))
                profile = tuple(v - values[0] for v in values)
                if reference is None:
                    reference = profile
                    reference_ctx = out_combo
                elif profile != reference:
                    mismatch = next(
                        i for i in range(var.size) if profile[i] != reference[i]
                    )
                    witness = _build_witness(
                        dag,
                        target,
                        var.domain[0],
                        var.domain[mismatch],
                        blanket,
                        blanket_enum,
                        bl_combo,
                        outside,
                        outside_enum,
                        reference_ctx,
                        out_combo,
                    )
                    return CompatReport(False, witness)
    return CompatReport(True, None)


def _build_witness(
    dag: Dag,
    target: str,
    value_a: str,
    value_b: str,
    blanket: frozenset[str],
    blanket_enum: list[str],
    bl_combo: tuple[int, ...],
    outside: list[str],
    outside_enum: list[str],
    ctx_a: tuple[int, ...],
    ctx_b: tuple[int, ...],
) -> CompatWitness:
    def labels(names: Iterable[str], enum_names: list[str], combo) -> dict[str, str]:
        chosen = dict(zip(enum_names, combo))
        out = {}
        for n in names:
            var = dag.variable(n)
            out[n] = var.domain[chosen.get(n, 0)]
        return out

    return CompatWitness(
        variable=target,
        value_a=value_a,
        value_b=value_b,
        blanket=labels(sorted(blanket, key=lambda n: dag.variable(n).index), blanket_enum, bl_combo),
        context_a=labels(outside, outside_enum, ctx_a),
        context_b=labels(outside, outside_enum, ctx_b),
    )


# -- the formula-induced distribution -----------------------------------------
#
# Buying a formula injects a belief proportional to e raised to the formula's
# truth value. Its conditionals reduce to two model counts:
#
#   P(X = i | y) = ((e-1) * count(X=i, y) + prod_{l not in Y+X} |dom l|)
#                / ((e-1) * count(y)      + prod_{l not in Y}   |dom l|)


class _LazyConditionalRow:
    """Per-value view of a formula conditional: the shared denominator is
    computed once, numerators only for the values actually read. Update
    anchoring touches a couple of entries out of potentially wide rows."""

    __slots__ = ("f", "target", "given", "outside_y", "denom", "_cache")

    def __init__(self, f: CnfSecurity, target: str, given: Mapping[str, int]):
        var = f._by_name[target]
        if target in given:
            raise BadSpecError(f"target {target!r} already assigned")
        pinned = var.size
        for name in given:
            pinned *= f._by_name[name].size
        self.f = f
        self.target = target
        self.given = dict(given)
        self.outside_y = f._total_outcomes // pinned
        g_y = _count_models_indices(f, given)
        self.denom = (math.e - 1.0) * g_y + self.outside_y * var.size
        self._cache: dict[int, float] = {}

    def __getitem__(self, value: int) -> float:
        got = self._cache.get(value)
        if got is None:
            g_iy = _count_models_indices(self.f, {**self.given, self.target: value})
            got = ((math.e - 1.0) * g_iy + self.outside_y) / self.denom
            self._cache[value] = got
        return got


def _formula_conditional_indices(
    f: CnfSecurity, target: str, given: Mapping[str, int]
) -> tuple[float, ...]:
    lazy = _LazyConditionalRow(f, target, given)
    return tuple(lazy[value] for value in range(f._by_name[target].size))


def formula_conditional(
    f: CnfSecurity, target: str, given: Mapping[str, str] | None = None
) -> dict[str, float]:
    """Conditional row of the formula-induced distribution, by model counting.

    Always strictly positive: even a contradiction leaves the counting
    formula's additive domain-size terms."""
    by_name = {v.name: v for v in f.variables}
    if target not in by_name:
        raise BadSpecError(f"unknown variable {target!r}")
    row = _formula_conditional_indices(f, target, _index_valuation(f, given or {}))
    return dict(zip(by_name[target].domain, row))
