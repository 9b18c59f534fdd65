"""Brute-force ground truth over the full outcome space.

Everything here materializes dense vectors indexed by a mixed-radix encoding
of outcomes (variable-index order, least significant last, i.e. C order), so
golden files and cross-checks are stable. Deliberately capped at 2**20
outcomes; the engine proper never densifies.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .bayesnet import BayesNet, Cpt, Dag, VariableSpec
from .errors import BadSpecError, MarketError, NullEventError
from .securities import CnfSecurity

MAX_OUTCOMES = 2**20

PROBABILITY = "probability"
QUANTITY = "quantity"

_PROB_SUM_TOL = 1e-9


def _outcome_count(variables: Sequence[VariableSpec]) -> int:
    n = 1
    for v in variables:
        n *= v.size
    return n


def _check_size(variables: Sequence[VariableSpec]) -> None:
    if _outcome_count(variables) > MAX_OUTCOMES:
        raise MarketError(
            f"outcome space too large for dense work: {_outcome_count(variables)}"
        )


@dataclass(frozen=True)
class JointTable:
    """Dense vector over the full outcome space, tagged as probabilities or
    market quantities."""

    variables: tuple[VariableSpec, ...]
    values: np.ndarray
    kind: str = PROBABILITY

    def __post_init__(self):
        _check_size(self.variables)
        values = np.array(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (_outcome_count(self.variables),):
            raise BadSpecError("joint table length does not match the outcome space")
        if self.kind == PROBABILITY:
            if np.any(values < 0.0):
                raise BadSpecError("negative probability in joint table")
            if abs(float(values.sum()) - 1.0) > _PROB_SUM_TOL:
                raise BadSpecError(
                    f"joint table sums to {float(values.sum())!r}, expected 1"
                )
        elif self.kind != QUANTITY:
            raise BadSpecError(f"unknown table kind {self.kind!r}")
        values.flags.writeable = False

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(v.size for v in self.variables)

    def grid(self) -> np.ndarray:
        return self.values.reshape(self.shape)

    def index_of(self, valuation: Mapping[str, str]) -> int:
        idx = 0
        for v in self.variables:
            idx = idx * v.size + v.value_index(valuation[v.name])
        return idx

    def valuation_at(self, index: int) -> dict[str, str]:
        out: dict[str, str] = {}
        for v in reversed(self.variables):
            index, r = divmod(index, v.size)
            out[v.name] = v.domain[r]
        return {v.name: out[v.name] for v in self.variables}


def densify(bn: BayesNet) -> JointTable:
    """Exact dense joint of a network, by broadcast-multiplying each CPT."""
    _check_size(bn.variables)
    shape = tuple(v.size for v in bn.variables)
    pos = {v.name: i for i, v in enumerate(bn.variables)}
    joint = np.ones(shape)
    for v in bn.variables:
        cpt = bn.cpts[v.name]
        axes = [pos[p] for p in cpt.parents] + [pos[v.name]]
        local_shape = [bn.dag.variable(p).size for p in cpt.parents] + [v.size]
        local = np.empty(local_shape)
        for ctx, row in cpt.table.items():
            local[ctx] = row
        # Broadcast the local factor into the full-rank shape.
        expanded_shape = [1] * len(shape)
        for ax, size in zip(axes, local_shape):
            expanded_shape[ax] = size
        order = np.argsort(axes)
        local = np.transpose(local, order)
        joint = joint * local.reshape(expanded_shape)
    return JointTable(bn.variables, joint.reshape(-1), PROBABILITY)


def refit_bayesnet(
    table: JointTable, dag: Dag, fallback: BayesNet | None = None
) -> BayesNet:
    """Recover CPTs from a dense joint by conditioning on each parent set.

    Parent contexts with zero mass have no defined conditional; their rows
    come from ``fallback`` when given, else they are uniform.
    """
    grid = table.grid()
    pos = {v.name: i for i, v in enumerate(table.variables)}
    cpts: dict[str, Cpt] = {}
    for v in table.variables:
        parents = dag.parents(v.name)
        keep = [pos[p] for p in parents] + [pos[v.name]]
        drop = tuple(i for i in range(len(table.variables)) if i not in keep)
        marg = grid.sum(axis=drop) if drop else grid
        # Axes of marg follow variable order; move target axis last.
        axis_names = [n.name for n in table.variables if pos[n.name] in keep]
        order = [axis_names.index(p) for p in parents] + [axis_names.index(v.name)]
        marg = np.transpose(marg, order)
        table_rows: dict[tuple[int, ...], tuple[float, ...]] = {}
        for ctx in np.ndindex(*(dag.variable(p).size for p in parents)):
            row = marg[ctx]
            total = float(row.sum())
            if total > 0.0:
                table_rows[ctx] = tuple(float(x) / total for x in row)
            elif fallback is not None:
                table_rows[ctx] = fallback.cpts[v.name].table[ctx]
            else:
                table_rows[ctx] = tuple(1.0 / v.size for _ in range(v.size))
        cpts[v.name] = Cpt(v.name, parents, table_rows)
    return BayesNet(dag, cpts)


# -- securities against the dense space ---------------------------------------


def satisfaction_vector(f: CnfSecurity) -> np.ndarray:
    """0/1 vector over the outcome space: which outcomes satisfy the formula."""
    variables = f.variables
    _check_size(variables)
    shape = tuple(v.size for v in variables)
    pos = {v.name: i for i, v in enumerate(variables)}
    result = np.ones(shape, dtype=bool)
    for clause in f.clauses:
        clause_mask = np.zeros(shape, dtype=bool)
        for lit in clause.literals:
            var = variables[pos[lit.variable]]
            axis_mask = np.zeros(var.size, dtype=bool)
            axis_mask[var.value_index(lit.value)] = True
            if lit.negated:
                axis_mask = ~axis_mask
            expanded = [1] * len(shape)
            expanded[pos[lit.variable]] = var.size
            clause_mask |= axis_mask.reshape(expanded)
        result &= clause_mask
    return result.reshape(-1).astype(float)


def formula_table(f: CnfSecurity) -> JointTable:
    """Dense table of the belief a trade injects: mass proportional to e
    raised to the formula's truth value."""
    ind = satisfaction_vector(f)
    weights = np.exp(ind)
    return JointTable(f.variables, weights / weights.sum(), PROBABILITY)


# -- LMSR over explicit quantity vectors ---------------------------------------


def quantities_from(table: JointTable, b: float) -> JointTable:
    """A quantity vector whose prices reproduce the given probabilities.

    Quantities are only determined up to an additive constant; this picks
    q = b*log(p), with zero-probability outcomes at -inf.
    """
    if table.kind != PROBABILITY:
        raise BadSpecError("expected a probability table")
    with np.errstate(divide="ignore"):
        q = b * np.log(table.values)
    return JointTable(table.variables, q, QUANTITY)


def oracle_cost(q: JointTable, b: float) -> float:
    """Cost-function value b*log(sum exp(q/b)), stable under large or -inf
    entries."""
    if q.kind != QUANTITY:
        raise BadSpecError("expected a quantity table")
    scaled = q.values / b
    m = float(np.max(scaled))
    return b * (m + math.log(float(np.exp(scaled - m).sum())))

def oracle_prices(q: JointTable, b: float) -> JointTable:
    """Instantaneous prices: softmax of q/b. Always sums to one."""
    if q.kind != QUANTITY:
        raise BadSpecError("expected a quantity table")
    scaled = q.values / b
    scaled = scaled - float(np.max(scaled))
    w = np.exp(scaled)
    return JointTable(q.variables, w / w.sum(), PROBABILITY)


def oracle_trade(
    q: JointTable, f: CnfSecurity, delta: float, b: float
) -> tuple[JointTable, float]:
    """Sell delta*b shares of the formula: bump every satisfying outcome's
    quantity by delta*b. Returns the new vector and the dollar cost (the
    difference of cost-function values)."""
    if q.kind != QUANTITY:
        raise BadSpecError("expected a quantity table")
    bump = delta * b * satisfaction_vector(f)
    t = JointTable(q.variables, q.values + bump, QUANTITY)
    return t, oracle_cost(t, b) - oracle_cost(q, b)


def oracle_logop(
    p1: JointTable, w1: float, p2: JointTable, w2: float
) -> JointTable:
    """Normalized weighted geometric mixture of two dense distributions.

    A weight of zero drops its input entirely (even where that input is
    zero). A negative weight on a zero-probability outcome is undefined.
    """
    if p1.variables != p2.variables:
        raise BadSpecError("log opinion pool inputs disagree on variables")
    with np.errstate(divide="ignore"):
        log1 = np.log(p1.values)
        log2 = np.log(p2.values)
    total = np.zeros_like(log1)
    for w, logs in ((w1, log1), (w2, log2)):
        if w == 0.0:
            continue
        contrib = w * logs
        if np.any(np.isposinf(contrib)):
            raise MarketError("negative weight on a zero-probability outcome")
        total = total + contrib
    if np.all(np.isneginf(total)):
        raise NullEventError("log opinion pool has empty support")
    m = float(np.max(total[np.isfinite(total)]))
    w = np.exp(total - m)
    return JointTable(p1.variables, w / w.sum(), PROBABILITY)


def oracle_update_prices(
    prices: JointTable, f: CnfSecurity, delta: float
) -> JointTable:
    """Dense form of the price move from selling delta*b shares of f:
    reweight satisfying outcomes by exp(delta) and renormalize. Zeros stay
    zero for any delta."""
    weights = prices.values * np.exp(delta * satisfaction_vector(f))
    return JointTable(prices.variables, weights / weights.sum(), PROBABILITY)


def oracle_local_markov(p: JointTable, dag: Dag, tol: float = 1e-12) -> bool:
    """Check every local Markov property numerically: given any blanket
    valuation, the target's conditional must not depend on the remaining
    variables. Contexts with zero mass are vacuous."""
    if tuple(dag.variables) != p.variables:
        raise BadSpecError("table and graph disagree on variables")
    grid = p.grid()
    pos = {v.name: i for i, v in enumerate(p.variables)}
    n = len(p.variables)
    for v in p.variables:
        blanket = sorted(dag.markov_blanket(v.name), key=lambda x: pos[x])
        rest = [
            u.name
            for u in p.variables
            if u.name != v.name and u.name not in blanket
        ]
        if not rest:
            continue
        order = [pos[x] for x in blanket] + [pos[x] for x in rest] + [pos[v.name]]
        arranged = np.transpose(grid, order)
        b_shape = arranged.shape[: len(blanket)]
        r_shape = arranged.shape[len(blanket) : len(blanket) + len(rest)]
        k = arranged.shape[-1]
        flat = arranged.reshape(int(np.prod(b_shape, dtype=int)), int(np.prod(r_shape, dtype=int)), k)
        for bslice in flat:
            reference = None
            for row in bslice:
                total = row.sum()
                if total <= 0.0:
                    continue
                cond = row / total
                if reference is None:
                    reference = cond
                elif np.max(np.abs(cond - reference)) > tol:
                    return False
    return True


# -- golden files ---------------------------------------------------------------


def to_golden(table: JointTable) -> str:
    """Render as a JSON list of (outcome index, value) pairs with 17
    significant digits, the stable on-disk fixture format."""
    pairs = [[i, f"{float(x):.17g}"] for i, x in enumerate(table.values)]
    return json.dumps({"kind": table.kind, "entries": pairs})


def from_golden(variables: Sequence[VariableSpec], text: str) -> JointTable:
    doc = json.loads(text)
    values = np.zeros(_outcome_count(variables))
    for i, rendered in doc["entries"]:
        values[i] = float(rendered)
    return JointTable(tuple(variables), values, doc["kind"])
