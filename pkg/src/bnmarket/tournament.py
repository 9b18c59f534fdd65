"""Single-elimination tournament markets over a balanced binary bracket.

Game variables are numbered heap-style: X1 is the final, games X_{2j} and
X_{2j+1} feed game X_j, and each game's domain is every team that can reach
it. Edges run root to leaves, so every variable has at most one parent and
the graph is decomposable.

The default initial distribution ("consistent uniform") puts probability
zero on every impossible bracket: a feeding game won by team t forces the
fed game's entrant, so given a parent value inside the child's domain the
child copies it, and otherwise (the other side of the draw) the child is
uniform. All consistent brackets end up equally likely.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .bayesnet import BayesNet, Cpt, Dag, VariableSpec
from .errors import BadSpecError
from .securities import CnfSecurity, parse_security


@dataclass(frozen=True)
class TournamentSpec:
    """Bracket shape: ``rounds`` rounds over ``2**rounds`` uniquely named
    teams."""

    rounds: int
    teams: tuple[str, ...]

    def __post_init__(self):
        if self.rounds < 2:
            raise BadSpecError("a tournament needs at least 2 rounds")
        if len(self.teams) != 2**self.rounds:
            raise BadSpecError(
                f"{self.rounds} rounds need {2 ** self.rounds} teams, "
                f"got {len(self.teams)}"
            )
        if len(set(self.teams)) != len(self.teams):
            raise BadSpecError("duplicate team names")
        ident = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
        for t in self.teams:
            if not ident.match(t):
                raise BadSpecError(f"team name {t!r} is not a valid label")

    @property
    def game_count(self) -> int:
        return 2**self.rounds - 1

    def game_name(self, j: int) -> str:
        if not 1 <= j <= self.game_count:
            raise BadSpecError(f"no game numbered {j}")
        return f"X{j}"

    def domain_of(self, j: int) -> tuple[str, ...]:
        """Teams that can reach game j: a leaf game sees its two entrants,
        an inner game the union of its feeders."""
        n = 2**self.rounds
        if j >= n // 2:
            lo = 2 * j - n  # zero-based index of the first entrant
            return (self.teams[lo], self.teams[lo + 1])
        return self.domain_of(2 * j) + self.domain_of(2 * j + 1)


def default_spec(rounds: int) -> TournamentSpec:
    return TournamentSpec(rounds, tuple(f"T{i + 1}" for i in range(2**rounds)))


def tournament_variables(spec: TournamentSpec) -> tuple[VariableSpec, ...]:
    return tuple(
        VariableSpec(spec.game_name(j), spec.domain_of(j), j - 1)
        for j in range(1, spec.game_count + 1)
    )


def build_tournament(
    spec: TournamentSpec, positive_epsilon: float | None = None
) -> tuple[Dag, BayesNet]:
    """The bracket DAG and its consistent-uniform initial distribution.

    ``positive_epsilon`` switches to a smoothed preset: each forced row
    leaks that much total mass onto the impossible entrants, giving the
    joint full support (some property checks need strict positivity).
    """
    variables = tournament_variables(spec)
    edges = []
    for j in range(1, spec.game_count + 1):
        for c in (2 * j, 2 * j + 1):
            if c <= spec.game_count:
                edges.append((spec.game_name(j), spec.game_name(c)))
    dag = Dag(variables, edges)

    cpts: dict[str, Cpt] = {}
    for j in range(1, spec.game_count + 1):
        name = spec.game_name(j)
        domain = spec.domain_of(j)
        parents = dag.parents(name)
        if not parents:
            row = tuple(1.0 / len(domain) for _ in domain)
            cpts[name] = Cpt(name, parents, {(): row})
            continue
        parent_domain = dag.variable(parents[0]).domain
        table = {}
        for pi, winner in enumerate(parent_domain):
            if winner in domain:
                if positive_epsilon is None:
                    row = tuple(1.0 if t == winner else 0.0 for t in domain)
                else:
                    leak = positive_epsilon / (len(domain) - 1)
                    row = tuple(
                        1.0 - positive_epsilon if t == winner else leak
                        for t in domain
                    )
            else:
                row = tuple(1.0 / len(domain) for _ in domain)
            table[(pi,)] = row
        cpts[name] = Cpt(name, parents, table)
    return dag, BayesNet(dag, cpts)


def team_security(spec: TournamentSpec, game: str, team: str) -> CnfSecurity:
    """The single-literal security paying out when ``team`` wins ``game``."""
    variables = tournament_variables(spec)
    by_name = {v.name: v for v in variables}
    if game not in by_name:
        raise BadSpecError(f"unknown game {game!r}")
    if team not in by_name[game].domain:
        raise BadSpecError(f"team {team!r} cannot reach game {game!r}")
    return parse_security(f"{game}={team}", variables)


def parlay_security(
    spec: TournamentSpec, parent_game: str, team1: str, child_game: str, team2: str
) -> CnfSecurity:
    """Both-win conjunction for a game and one of its two feeder games."""
    variables = tournament_variables(spec)
    by_name = {v.name: v for v in variables}
    for g in (parent_game, child_game):
        if g not in by_name:
            raise BadSpecError(f"unknown game {g!r}")
    pj = int(parent_game[1:])
    cj = int(child_game[1:])
    if cj not in (2 * pj, 2 * pj + 1):
        raise BadSpecError(
            f"{child_game!r} does not feed {parent_game!r}; parlays pair a game "
            "with one of its feeders"
        )
    if team1 not in by_name[parent_game].domain:
        raise BadSpecError(f"team {team1!r} cannot reach game {parent_game!r}")
    if team2 not in by_name[child_game].domain:
        raise BadSpecError(f"team {team2!r} cannot reach game {child_game!r}")
    return parse_security(f"{parent_game}={team1} & {child_game}={team2}", variables)


_PRESET_RE = re.compile(r"tournament:m=(\d+)\Z")


def from_preset(
    text: str,
    teams: list[str] | None = None,
    positive_epsilon: float | None = None,
) -> tuple[TournamentSpec, Dag, BayesNet]:
    """Resolve a preset name like ``tournament:m=3``; team labels default to
    T1..T{2^m}."""
    m = _PRESET_RE.match(text.strip())
    if not m:
        raise BadSpecError(f"unknown preset {text!r}")
    rounds = int(m.group(1))
    if teams is not None:
        spec = TournamentSpec(rounds, tuple(teams))
    else:
        spec = default_spec(rounds)
    dag, bn = build_tournament(spec, positive_epsilon)
    return spec, dag, bn
