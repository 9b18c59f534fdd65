"""LMSR pricing against a Bayesian-network market distribution.

The network *is* the market state: explicit quantity vectors never
materialize here (prices determine all behavior; quantities are recoverable
only up to an additive constant, and live in the oracle for cross-checks).

All functions are pure; trade application lives in :mod:`bnmarket.updater`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

from .bayesnet import BayesNet, joint_marginal
from .errors import BadSpecError, DegeneratePriceError
from .securities import CnfSecurity

EXACT = "exact"
APPROX = "approx"
AUTO = "auto"


@dataclass(frozen=True)
class MarketState:
    """Liquidity, current price distribution, and a revision counter that
    advances by exactly one per applied trade."""

    b: float
    distribution: BayesNet
    revision: int = 0
    created_at: float = 0.0
    updated_at: float = 0.0

    def __post_init__(self):
        if not (self.b > 0.0):
            raise BadSpecError(f"liquidity must be positive, got {self.b!r}")

    @staticmethod
    def fresh(b: float, distribution: BayesNet) -> "MarketState":
        now = time.time()
        return MarketState(b, distribution, 0, now, now)

    def advanced(self, distribution: BayesNet) -> "MarketState":
        return replace(
            self,
            distribution=distribution,
            revision=self.revision + 1,
            updated_at=time.time(),
        )

    def fingerprint(self) -> tuple:
        """Hashable exact-value summary of everything replay must reproduce.

        Timestamps are excluded on purpose: two states are the same market
        state when liquidity, revision, and every CPT float agree bitwise.
        """
        rows = []
        for v in self.distribution.variables:
            cpt = self.distribution.cpts[v.name]
            for ctx in sorted(cpt.table):
                rows.append((v.name, ctx, cpt.table[ctx]))
        return (self.b, self.revision, tuple(rows))


@dataclass(frozen=True)
class Quote:
    security: CnfSecurity
    current_price: float
    delta: float
    dollar_cost: float
    post_price: float
    mode: str
    warning: str | None = None


def formula_probability(bn: BayesNet, f: CnfSecurity) -> float:
    """P(f) under the network: enumerate assignments of the formula's own
    variables and sum their exact joint marginals over the satisfying ones."""
    if tuple(bn.variables) != f.variables:
        raise BadSpecError("security was parsed against different variables")
    table = joint_marginal(bn, list(f.vars_used))
    total = 0.0
    for key, prob in table.items():
        if f.evaluate_indices(dict(zip(f.vars_used, key))):
            total += prob
    # Floating-point accumulation can leave a tautology at 1 + 1ulp; clamp.
    return min(max(total, 0.0), 1.0)


def price_of(ms: MarketState, f: CnfSecurity) -> float:
    return formula_probability(ms.distribution, f)


def _cost(b: float, p: float, delta: float) -> float:
    # b * log(exp(delta) * p + 1 - p), arranged to survive large |delta|.
    if delta >= 0.0:
        return b * (delta + math.log(p + (1.0 - p) * math.exp(-delta)))
    return b * math.log(p * math.exp(delta) + (1.0 - p))


def cost_of(ms: MarketState, f: CnfSecurity, delta: float) -> float:
    """Dollar cost of delta*b shares of f at the current prices.

    Zero shares cost zero even at a degenerate price; otherwise prices of
    exactly 0 or 1 are refused (a 0-price security cannot be revived, and a
    sure thing has no price to move)."""
    if delta == 0.0:
        return 0.0
    p = price_of(ms, f)
    if p <= 0.0 or p >= 1.0:
        raise DegeneratePriceError(
            f"security is priced at {p}; only zero-share trades are allowed"
        )
    return _cost(ms.b, p, delta)


def shares_for_budget(ms: MarketState, f: CnfSecurity, budget: float) -> float:
    """Invert the cost function: the delta whose cost equals ``budget``.

    The achievable range is (b*log(1-p), +inf); the lower end is the maximum
    proceeds from selling the security to a zero price."""
    if budget == 0.0:
        return 0.0
    p = price_of(ms, f)
    if p <= 0.0 or p >= 1.0:
        raise DegeneratePriceError(
            f"security is priced at {p}; only zero-share trades are allowed"
        )
    scaled = budget / ms.b
    if scaled <= math.log1p(-p):
        raise BadSpecError(
            f"budget {budget} is outside the achievable range "
            f"(must exceed {ms.b * math.log1p(-p)})"
        )
    if scaled > 0.0:
        # exp(scaled) can overflow; pull the exponent out first.
        return scaled - math.log(p) + math.log1p(-(1.0 - p) * math.exp(-scaled))
    return math.log(math.exp(scaled) - (1.0 - p)) - math.log(p)


def quote(
    ms: MarketState, f: CnfSecurity, delta: float, compat: bool | None = None
) -> Quote:
    """Price a prospective trade without touching the market.

    The post-trade price comes from applying the trade to a scratch copy;
    the mode reports how the trade would be applied (exact when the security
    is provably structure preserving, else approximate)."""
    from . import updater  # circular at module scope: quote previews a trade

    mode, warning = updater.resolve_mode(ms.distribution.dag, f, AUTO, compat)
    p = price_of(ms, f)
    if delta == 0.0:
        return Quote(f, p, 0.0, 0.0, p, mode, warning)
    cost = cost_of(ms, f, delta)
    post_state, _receipt = updater.apply_trade(ms, f, delta, mode)
    return Quote(f, p, delta, cost, price_of(post_state, f), mode, warning)
