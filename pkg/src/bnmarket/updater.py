"""Price updating: log-opinion-pool aggregation on a shared DAG, exact
structure-preserving trade application, the closed-form post-trade
conditional, and the KL-projection fallback for securities that are not
structure preserving.

The structural fact doing all the work: selling delta*b shares of a formula
multiplies every outcome's price by exp(delta * F(outcome)) and renormalizes,
which is exactly a weighted geometric pool of the market distribution with
the formula-induced belief. When the DAG is decomposable and the formula is
compatible with it, that pool is again representable on the same DAG, and
its CPTs can be recovered variable by variable without densifying.

The per-variable recovery works from "anchor" valuations of the variable's
children (which, with the parents, cover its whole Markov blanket on a
decomposable graph; deeper descendants sum out bottom-up and never need
fixing). For a variable X with parents fixed to pa and a child valuation d
of positive probability:

    new P(X=i | pa)  is proportional to  new P(X=i | d, pa) / new P(d | X=i, pa)

The first factor is a Markov-blanket conditional, so it is a pointwise
product of the pooled components' local conditionals; the second is a
product of already-updated child CPT entries (descendants are processed
first). With strictly positive tables a single anchor serves every value of
X; with structural zeros (tournament consistency), values may need different
anchors, and relative scales are chained through values that share one.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .bayesnet import (
    BayesNet,
    Cpt,
    Dag,
    event_probability,
    joint_marginal,
    product,
)
from .errors import (
    BadSpecError,
    CompatCheckTooLargeError,
    DegeneratePriceError,
    MarketError,
    NotStructurePreservingError,
    NullEventError,
)
from .lmsr import APPROX, AUTO, EXACT, MarketState, cost_of, price_of
from .oracle import (
    MAX_OUTCOMES,
    JointTable,
    densify,
    formula_table,
    oracle_logop,
    refit_bayesnet,
)
from .securities import (
    CnfSecurity,
    _formula_conditional_indices,
    _LazyConditionalRow,
    is_compatible,
    pivotal_variables,
)

_KL_DIAGNOSTIC_LIMIT = 2**16


@dataclass(frozen=True)
class UpdatePlan:
    """What a trade will touch: exact mode updates only pivotal variables
    and their ancestors; approximate mode touches everything."""

    mode: str
    pivotal: frozenset[str]
    touched: frozenset[str]
    formula_cpts: dict[str, Cpt]


@dataclass(frozen=True)
class TradeReceipt:
    security_text: str
    delta: float
    dollar_cost: float
    mode: str
    pre_price: float
    post_price: float
    revision: int
    approx_kl: float | None = None
    warning: str | None = None


class _DisconnectedSupport(Exception):
    """Raised when within-row anchor chaining cannot relate all supported
    values; the caller falls back to a dense recomputation."""


def _pow(raw: float, weight: float) -> float:
    if raw == 0.0:
        if weight > 0.0:
            return 0.0
        raise MarketError("negative weight on a zero-probability conditional")
    return raw**weight


class _Pool:
    """Computes a weighted geometric pool of distributions sharing one
    decomposable DAG, returning the result as CPTs on that DAG.

    ``components`` pairs each input with its weight; the first must be a
    BayesNet (its rows define the support, and rows at zero-probability
    parent contexts are carried over unchanged). Later components are
    BayesNets on the same DAG or CNF securities (pooled via their induced
    distribution, whose conditionals come from model counting and are
    strictly positive).
    """

    def __init__(
        self,
        dag: Dag,
        components: Sequence[tuple[BayesNet | CnfSecurity, float]],
        touched: frozenset[str],
    ):
        self.dag = dag
        self.base, self.base_weight = components[0]
        if not isinstance(self.base, BayesNet):
            raise BadSpecError("first pool component must be a network")
        self.others = list(components[1:])
        self.touched = touched

    def run(self) -> BayesNet:
        updated: dict[str, Cpt] = {}
        for name in reversed(self.dag.topo_order):
            if name not in self.touched:
                updated[name] = self.base.cpts[name]
                continue
            updated[name] = self._update_cpt(name, updated)
        return BayesNet(self.dag, updated)

    def _update_cpt(self, name: str, updated: Mapping[str, Cpt]) -> Cpt:
        base_cpt = self.base.cpts[name]
        var = self.dag.variable(name)
        # One marginal table decides reachability for every parent context.
        context_mass = (
            joint_marginal(self.base, list(base_cpt.parents))
            if base_cpt.parents
            else None
        )
        new_table: dict[tuple[int, ...], tuple[float, ...]] = {}
        changed = False
        for ctx in sorted(base_cpt.table):
            row = base_cpt.table[ctx]
            reachable = context_mass is None or context_mass.get(ctx, 0.0) > 0.0
            new_row = self._update_row(
                name, var.size, base_cpt.parents, ctx, row, reachable, updated
            )
            if new_row is None:
                new_table[ctx] = row
            else:
                new_table[ctx] = new_row
                changed = True
        if not changed:
            return base_cpt
        return Cpt(name, base_cpt.parents, new_table)

    def _update_row(
        self,
        name: str,
        size: int,
        parents: tuple[str, ...],
        ctx: tuple[int, ...],
        row: tuple[float, ...],
        reachable: bool,
        updated: Mapping[str, Cpt],
    ) -> tuple[float, ...] | None:
        support = [i for i in range(size) if row[i] > 0.0]
        # Single-support rows are fixed points of any pool (zeros are never
        # revived and rows sum to one), and rows at unreachable parent
        # contexts never influence the joint: both are carried over.
        if len(support) == 1 or not reachable:
            return None
        evidence = dict(zip(parents, ctx))

        # dependency order: a child that is a co-parent of another child
        # must take its anchor value first
        children = tuple(
            sorted(self.dag.children(name), key=self.dag.topo_position)
        )
        if not children:
            weights = {}
            comp_rows = [self._component_row(comp, name, evidence) for comp, _ in self.others]
            for i in support:
                val = _pow(row[i], self.base_weight)
                for (comp, w), crow in zip(self.others, comp_rows):
                    val *= _pow(crow[i], w)
                weights[i] = val
            return self._normalize(size, weights)

        def weight_under(d: dict[str, int], comp_rows, value: int) -> float | None:
            """Relative weight of ``value`` under anchor ``d``, or None when
            the anchor cannot speak for it (a child entry is structurally
            zero there)."""
            assignment = {**evidence, **d, name: value}
            base_children = [
                self.base.cpt_entry(c, d[c], assignment) for c in children
            ]
            if any(x == 0.0 for x in base_children):
                return None
            val = _pow(row[value] * product(base_children), self.base_weight)
            for (comp, w), crow in zip(self.others, comp_rows):
                if isinstance(comp, BayesNet):
                    craw = comp.cpts[name].table[ctx][value] * product(
                        [comp.cpt_entry(c, d[c], assignment) for c in children]
                    )
                else:
                    craw = crow[value]
                val *= _pow(craw, w)
            div = product(
                [
                    updated[c].table[self._ctx_for(updated[c], assignment)][d[c]]
                    for c in children
                ]
            )
            return val / div

        def rows_for(d: dict[str, int]):
            # formula rows are lazy: anchoring reads a handful of entries
            ev_full = {**evidence, **d}
            return [
                comp.cpts[name].table[ctx]
                if isinstance(comp, BayesNet)
                else _LazyConditionalRow(comp, name, ev_full)
                for comp, _ in self.others
            ]

        # One frame of relative weights per anchor-connected component;
        # strictly positive tables produce a single frame after one bridge
        # test per value. Each value's own anchor is valid for it by
        # construction. A cluster keeps the anchor that created it (its
        # weights stay expressed against that anchor), so a later value
        # falling inside an earlier anchor's reach folds the frames together
        # even when no earlier member is visible from the new anchor.
        clusters: list[dict[int, float] | None] = []
        anchors: list[tuple[dict[str, int], list]] = []
        membership: dict[int, int] = {}
        for i in support:
            if i in membership:
                continue
            d = self._anchor_for(name, evidence, i, children)
            comp_rows = rows_for(d)
            w_i = weight_under(d, comp_rows, i)
            home = None
            for idx, cluster in enumerate(clusters):
                if cluster is None:
                    continue
                for j, u_j in cluster.items():
                    if u_j > 0.0:
                        w_j = weight_under(d, comp_rows, j)
                        if w_j is not None and w_j > 0.0:
                            home = idx
                            u_i = (u_j / w_j) * w_i
                            break
                if home is not None:
                    break
            if home is None:
                home = len(clusters)
                clusters.append({i: w_i})
                anchors.append((d, comp_rows))
                u_i = w_i
            else:
                clusters[home][i] = u_i
            membership[i] = home
            if u_i <= 0.0:
                continue
            # deferred merges: this value may sit inside the reach of the
            # anchor that created some other, so far unconnected, cluster
            for idx, cluster in enumerate(clusters):
                if idx == home or cluster is None:
                    continue
                d_other, rows_other = anchors[idx]
                w = weight_under(d_other, rows_other, i)
                if w is None or w <= 0.0:
                    continue
                factor = u_i / w
                for v, u_v in cluster.items():
                    clusters[home][v] = u_v * factor
                    membership[v] = home
                clusters[idx] = None
        live = [c for c in clusters if c]
        if len(live) == 1:
            return self._normalize(size, live[0])
        return self._exhaustive_row(name, size, ctx, row, support, evidence, children, updated)

    def _exhaustive_row(
        self, name, size, ctx, row, support, evidence, children, updated
    ) -> tuple[float, ...]:
        """Second tier for fragmented supports: every value's anchor is
        evaluated against every value, and scales are chained to a fixed
        point. Raises for genuinely disconnected supports (the caller then
        recomputes densely)."""
        anchors: list[dict[str, int]] = []
        seen = set()
        for i in support:
            d = self._anchor_for(name, evidence, i, children)
            key = tuple(sorted(d.items()))
            if key not in seen:
                seen.add(key)
                anchors.append(d)

        anchor_data = []
        for d in anchors:
            ev_full = {**evidence, **d}
            comp_rows = [
                self._component_row(comp, name, ev_full) for comp, _ in self.others
            ]
            entries: list[tuple[int, float]] = []
            assignment = dict(ev_full)
            for i in support:
                assignment[name] = i
                base_children = [
                    self.base.cpt_entry(c, d[c], assignment) for c in children
                ]
                if any(x == 0.0 for x in base_children):
                    continue  # this anchor cannot speak for value i
                raw = row[i] * product(base_children)
                val = _pow(raw, self.base_weight)
                for (comp, w), crow in zip(self.others, comp_rows):
                    if isinstance(comp, BayesNet):
                        craw = comp.cpts[name].table[ctx][i] * product(
                            [comp.cpt_entry(c, d[c], assignment) for c in children]
                        )
                    else:
                        craw = crow[i]
                    val *= _pow(craw, w)
                div = product(
                    [updated[c].table[self._ctx_for(updated[c], assignment)][d[c]] for c in children]
                )
                entries.append((i, val / div))
            anchor_data.append(entries)

        weights = self._chain(support, anchor_data)
        return self._normalize(size, weights)

    @staticmethod
    def _ctx_for(cpt: Cpt, assignment: Mapping[str, int]) -> tuple[int, ...]:
        return tuple(assignment[p] for p in cpt.parents)

    def _component_row(
        self, comp: BayesNet | CnfSecurity, name: str, evidence: Mapping[str, int]
    ) -> tuple[float, ...]:
        if isinstance(comp, BayesNet):
            # Only used in the no-descendant branch, where the conditional
            # given the parents is the CPT row itself.
            cpt = comp.cpts[name]
            return cpt.table[tuple(evidence[p] for p in cpt.parents)]
        return _formula_conditional_indices(comp, name, evidence)

    def _anchor_for(
        self,
        name: str,
        evidence: Mapping[str, int],
        value: int,
        children: tuple[str, ...],
    ) -> dict[str, int]:
        """A child valuation of positive probability given (name=value,
        parents): walk the children in topological order (any co-parents
        among them come first), taking each one's first positive CPT entry."""
        assignment = {**evidence, name: value}
        anchor: dict[str, int] = {}
        for j in children:
            cpt = self.base.cpts[j]
            row = cpt.table[tuple(assignment[p] for p in cpt.parents)]
            pick = next(i for i, p in enumerate(row) if p > 0.0)
            assignment[j] = pick
            anchor[j] = pick
        return anchor

    @staticmethod
    def _chain(
        support: list[int], anchor_data: list[list[tuple[int, float]]]
    ) -> dict[int, float]:
        """Merge per-anchor relative weights into one row. Each anchor is
        consistent up to an unknown positive scale; scales are fixed by
        values shared between anchors."""
        resolved: dict[int, float] = {}
        applied = [False] * len(anchor_data)

        def apply(idx: int, scale: float) -> None:
            applied[idx] = True
            for i, w in anchor_data[idx]:
                if i not in resolved:
                    resolved[i] = scale * w

        apply(0, 1.0)
        progress = True
        while progress:
            progress = False
            for idx, entries in enumerate(anchor_data):
                if applied[idx]:
                    continue
                scale = None
                for i, w in entries:
                    if w > 0.0 and resolved.get(i, 0.0) > 0.0:
                        scale = resolved[i] / w
                        break
                if scale is not None:
                    apply(idx, scale)
                    progress = True
        if len(resolved) < len(support):
            raise _DisconnectedSupport()
        return resolved

    @staticmethod
    def _normalize(size: int, weights: Mapping[int, float]) -> tuple[float, ...]:
        total = sum(weights.values())
        if total <= 0.0:
            raise MarketError("pooled row has empty support")
        return tuple(weights.get(i, 0.0) / total for i in range(size))


def _pool_on_dag(
    dag: Dag,
    components: Sequence[tuple[BayesNet | CnfSecurity, float]],
    touched: frozenset[str] | None = None,
) -> BayesNet:
    if not dag.is_decomposable():
        raise BadSpecError("pooling on a DAG requires a decomposable graph")
    live = [(c, w) for c, w in components if w != 0.0]
    if not live:
        from .bayesnet import uniform_net

        return uniform_net(dag)
    if not isinstance(live[0][0], BayesNet):
        raise BadSpecError("first pool component must be a network")
    if touched is None:
        touched = frozenset(v.name for v in dag.variables)
    try:
        return _Pool(dag, live, touched).run()
    except _DisconnectedSupport:
        return _dense_pool(dag, live, touched)


def _dense_pool(
    dag: Dag,
    components: Sequence[tuple[BayesNet | CnfSecurity, float]],
    touched: frozenset[str],
) -> BayesNet:
    """Fallback for supports too fragmented to chain locally: pool the dense
    joints and refit CPTs. Still exact, but capped by the dense size guard."""
    base, base_w = components[0]
    table = densify(base)
    if base_w != 1.0:
        # A zero second weight makes this normalize(table ** base_w).
        table = oracle_logop(table, base_w, table, 0.0)
    for comp, weight in components[1:]:
        other = densify(comp) if isinstance(comp, BayesNet) else formula_table(comp)
        table = oracle_logop(table, 1.0, other, weight)
    refit = refit_bayesnet(table, dag, fallback=base)
    kept = {name: base.cpts[name] for name in base.cpts if name not in touched}
    return refit.replace_cpts(kept) if kept else refit


# -- public operations ---------------------------------------------------------


def logop(
    p1: BayesNet | JointTable,
    w1: float,
    p2: BayesNet | JointTable,
    w2: float,
) -> BayesNet | JointTable:
    """Normalized weighted geometric mixture of two distributions.

    Dense inputs give a dense answer. Two networks over the same
    decomposable DAG pool directly on that DAG. Mixed inputs densify the
    network side first (size-guarded).
    """
    if isinstance(p1, BayesNet) and isinstance(p2, BayesNet):
        if p1.dag.variables != p2.dag.variables or p1.dag.edges != p2.dag.edges:
            raise BadSpecError("pooled networks must share one DAG")
        return _pool_on_dag(p1.dag, [(p1, w1), (p2, w2)])
    t1 = densify(p1) if isinstance(p1, BayesNet) else p1
    t2 = densify(p2) if isinstance(p2, BayesNet) else p2
    return oracle_logop(t1, w1, t2, w2)


def comp_price(g: Dag, pr: BayesNet, f: CnfSecurity, delta: float) -> BayesNet:
    """The market distribution after delta*b shares of a compatible security
    sell against a decomposable network.

    Equivalent to pooling ``pr`` with the formula-induced belief at weight
    ``delta``. CPTs of variables that are neither pivotal in the formula nor
    ancestors of a pivotal variable are returned as the same objects passed
    in. Callers are responsible for having verified compatibility.
    """
    if not g.is_decomposable():
        raise BadSpecError("exact updates require a decomposable graph")
    if pr.dag.variables != g.variables or pr.dag.edges != g.edges:
        raise BadSpecError("distribution is not over the given graph")
    if delta == 0.0:
        return pr
    pivotal = pivotal_variables(f)
    touched = set(pivotal)
    for name in pivotal:
        touched.update(g.ancestors(name))
    return _pool_on_dag(g, [(pr, 1.0), (f, delta)], frozenset(touched))


def conditional_after_trade(
    pr: BayesNet,
    a: CnfSecurity,
    b_evt: Mapping[str, str],
    e_evt: Mapping[str, str],
    delta: float,
) -> float:
    """P(B | E) after delta*b shares of security A are bought, in closed form
    from pre-trade conditionals:

        P'(B|E) = P(B|E) * (e^d P(A|B,E) + P(not A|B,E))
                         / (e^d P(A|E)   + P(not A|E))
    """
    merged = dict(e_evt)
    for k, v in b_evt.items():
        if k in merged and merged[k] != v:
            raise NullEventError(f"events disagree on {k!r}")
        merged[k] = v
    p_be = event_probability(pr, merged)
    if p_be <= 0.0:
        raise NullEventError("conditioning on null event")
    p_e = event_probability(pr, e_evt)

    def satisfied(assignment: Mapping[str, int]) -> bool:
        return bool(a.evaluate_indices(assignment))

    p_a_be = event_probability(pr, merged, satisfied, a.vars_used) / p_be
    p_a_e = event_probability(pr, e_evt, satisfied, a.vars_used) / p_e
    boost = math.exp(delta)
    return (p_be / p_e) * (boost * p_a_be + (1.0 - p_a_be)) / (
        boost * p_a_e + (1.0 - p_a_e)
    )


_PROJECTION_COUNT_LIMIT = 2**16


def kl_projection(f: CnfSecurity, g: Dag) -> BayesNet:
    """The closest distribution on ``g`` (in divergence from the
    formula-induced belief): every CPT row is the belief's conditional given
    the parent context. Defined for any formula, and always strictly
    positive.

    Conditionals come from model counting; when the formula is wide enough
    that per-row counting would dwarf one dense pass, and the outcome space
    is small enough for one, the same rows are read off the densified belief
    instead.
    """
    formula_width = 1
    for v in f.variables:
        if v.name in f.vars_used:
            formula_width *= v.size
    if formula_width > _PROJECTION_COUNT_LIMIT:
        outcome_count = 1
        for v in g.variables:
            outcome_count *= v.size
        if outcome_count > MAX_OUTCOMES:
            raise MarketError(
                "projection too large: formula too wide for counting and the "
                "outcome space too large for a dense pass"
            )
        return refit_bayesnet(formula_table(f), g)
    cpts: dict[str, Cpt] = {}
    for v in g.variables:
        parents = g.parents(v.name)
        sizes = [g.variable(p).size for p in parents]
        table = {}
        for ctx in itertools.product(*(range(s) for s in sizes)):
            given = dict(zip(parents, ctx))
            table[ctx] = _formula_conditional_indices(f, v.name, given)
        cpts[v.name] = Cpt(v.name, parents, table)
    return BayesNet(g, cpts)


def kl_divergence(p: JointTable, q_dist: JointTable) -> float:
    """KL(p, q) = sum p log(p/q), with 0 log 0 = 0. Support violations give
    +inf rather than an exception: the value is the signal."""
    if p.variables != q_dist.variables:
        raise BadSpecError("divergence inputs disagree on variables")
    if p.kind != "probability" or q_dist.kind != "probability":
        raise BadSpecError("divergence needs probability tables")
    mask = p.values > 0.0
    if np.any(q_dist.values[mask] == 0.0):
        return math.inf
    pv = p.values[mask]
    qv = q_dist.values[mask]
    return float(np.sum(pv * np.log(pv / qv)))


def plan_update(g: Dag, f: CnfSecurity, mode: str) -> UpdatePlan:
    """Which CPTs a trade in ``f`` will replace, and the injected belief's
    conditionals at those variables' parent contexts.

    An exact plan exists only for securities verified structure preserving.
    """
    if mode not in (EXACT, APPROX):
        raise BadSpecError(f"plan mode must be exact or approx, got {mode!r}")
    pivotal = pivotal_variables(f)
    if mode == EXACT:
        resolve_mode(g, f, EXACT)  # raises unless exactness is certified
        touched = set(pivotal)
        for name in pivotal:
            touched.update(g.ancestors(name))
    else:
        touched = {v.name for v in g.variables}
    projection = kl_projection(f, g)
    return UpdatePlan(
        mode=mode,
        pivotal=pivotal,
        touched=frozenset(touched),
        formula_cpts={name: projection.cpts[name] for name in sorted(touched)},
    )


def resolve_mode(
    dag: Dag, f: CnfSecurity, requested: str, compat: bool | None = None
) -> tuple[str, str | None]:
    """Pick the update mode. ``auto`` chooses exact when the security is
    verifiably structure preserving; an oversized compatibility check
    degrades to approx with a warning. Requesting exact raises when exactness
    cannot be certified.

    ``compat`` lets callers supply an already-verified compatibility verdict
    (the service caches them per market structure and security text).
    """
    if requested == APPROX:
        return APPROX, None
    if requested not in (EXACT, AUTO):
        raise BadSpecError(f"unknown mode {requested!r}")
    if not dag.is_decomposable():
        if requested == EXACT:
            raise NotStructurePreservingError(
                "exact updates need a decomposable graph"
            )
        return APPROX, None
    if compat is None:
        try:
            compat = is_compatible(f, dag).compatible
        except CompatCheckTooLargeError as exc:
            if requested == EXACT:
                raise
            return APPROX, str(exc)
    if compat:
        return EXACT, None
    if requested == EXACT:
        raise NotStructurePreservingError(
            f"security {f.render()!r} is not structure preserving for this graph"
        )
    return APPROX, None


def _outcome_count(bn: BayesNet) -> int:
    n = 1
    for v in bn.variables:
        n *= v.size
    return n


def apply_trade(
    ms: MarketState,
    f: CnfSecurity,
    delta: float,
    mode: str = AUTO,
    compat: bool | None = None,
) -> tuple[MarketState, TradeReceipt]:
    """Execute a trade: returns the post-trade state and a receipt.

    Zero-delta trades are receipts only; they neither advance the revision
    nor change the state.
    """
    dag = ms.distribution.dag
    resolved, warning = resolve_mode(dag, f, mode, compat)
    pre = price_of(ms, f)
    if delta == 0.0:
        receipt = TradeReceipt(
            security_text=f.source_text,
            delta=0.0,
            dollar_cost=0.0,
            mode=resolved,
            pre_price=pre,
            post_price=pre,
            revision=ms.revision,
            warning=warning,
        )
        return ms, receipt
    if pre <= 0.0 or pre >= 1.0:
        raise DegeneratePriceError(
            f"security is priced at {pre}; only zero-share trades are allowed"
        )
    cost = cost_of(ms, f, delta)

    approx_kl = None
    if resolved == EXACT:
        new_bn = comp_price(dag, ms.distribution, f, delta)
    else:
        projection = kl_projection(f, dag)
        if dag.is_decomposable():
            new_bn = _pool_on_dag(dag, [(ms.distribution, 1.0), (projection, delta)])
        else:
            # The pooled joint need not factor over a non-decomposable graph:
            # pool densely, then keep the structure by refitting parent
            # conditionals (zero-mass contexts keep their old rows).
            if _outcome_count(ms.distribution) > MAX_OUTCOMES:
                raise MarketError(
                    "approximate update on a non-decomposable graph needs a dense pass; "
                    "outcome space too large"
                )
            pooled = oracle_logop(
                densify(ms.distribution), 1.0, densify(projection), delta
            )
            new_bn = refit_bayesnet(pooled, dag, fallback=ms.distribution)
        if _outcome_count(ms.distribution) <= _KL_DIAGNOSTIC_LIMIT:
            approx_kl = kl_divergence(formula_table(f), densify(projection))

    new_ms = ms.advanced(new_bn)
    post = price_of(new_ms, f)
    receipt = TradeReceipt(
        security_text=f.source_text,
        delta=delta,
        dollar_cost=cost,
        mode=resolved,
        pre_price=pre,
        post_price=post,
        revision=new_ms.revision,
        approx_kl=approx_kl,
        warning=warning,
    )
    return new_ms, receipt
