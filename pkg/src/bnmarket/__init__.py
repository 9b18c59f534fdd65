"""LMSR market making for combinatorial prediction markets whose price
distribution lives in a Bayesian network."""

from .bayesnet import (
    BayesNet,
    Cpt,
    Dag,
    VariableSpec,
    bayesnet_from_json,
    bayesnet_to_json,
    blanket_conditional,
    conditional_query,
    event_probability,
    is_decomposable,
    joint_probability,
    structure_queries,
    uniform_net,
)
from .errors import (
    BadSpecError,
    CompatCheckTooLargeError,
    DegeneratePriceError,
    MarketError,
    NotStructurePreservingError,
    NullEventError,
    SecurityParseError,
    StaleQuoteError,
)
from .lmsr import MarketState, Quote, cost_of, price_of, quote, shares_for_budget
from .oracle import (
    JointTable,
    densify,
    formula_table,
    from_golden,
    oracle_cost,
    oracle_local_markov,
    oracle_logop,
    oracle_prices,
    oracle_trade,
    oracle_update_prices,
    quantities_from,
    refit_bayesnet,
    satisfaction_vector,
    to_golden,
)
from .securities import (
    Clause,
    CnfSecurity,
    CompatReport,
    CompatWitness,
    Literal,
    clique_scoped,
    count_models,
    eval_formula,
    formula_conditional,
    is_compatible,
    parse_security,
    pivotal_variables,
)
from .service import MarketStore, create_app
from .tournament import (
    TournamentSpec,
    build_tournament,
    default_spec,
    from_preset,
    parlay_security,
    team_security,
    tournament_variables,
)
from .updater import (
    TradeReceipt,
    UpdatePlan,
    apply_trade,
    comp_price,
    conditional_after_trade,
    kl_divergence,
    kl_projection,
    logop,
    plan_update,
    resolve_mode,
)

__all__ = [name for name in dir() if not name.startswith("_")]
