// Pure view-model construction: bracket layout from the market description
// plus marginal rows. No probability is ever computed here; rows are carried
// through exactly as the service sent them.

import type { Marginals, MarketDescription } from "./api.js";

export interface TeamRow {
  team: string;
  probability: number;
}

export interface GameView {
  game: string;
  /** 1 is the opening round; the final is round m. */
  round: number;
  rows: TeamRow[];
}

export interface BracketView {
  marketId: string;
  /** rounds[0] is the opening round; the last entry holds only the final. */
  rounds: GameView[][];
  championship: TeamRow[];
  revision: number;
  /** Games whose displayed rows do not sum to one within tolerance. */
  rowSumViolations: string[];
}

export interface Pick {
  game: string;
  team: string;
}

export const RENDER_SUM_TOLERANCE = 1e-6;

function gameNumber(game: string): number {
  const n = Number(game.slice(1));
  if (!game.startsWith("X") || !Number.isInteger(n) || n < 1) {
    throw new Error(`not a bracket game name: ${game}`);
  }
  return n;
}

/** Round of a game in a bracket of `totalGames` = 2^m - 1 games. Opening
 * games (the leaves, X_{2^{m-1}}..) are round 1; the final X1 is round m. */
export function roundOf(game: string, totalGames: number): number {
  const m = Math.round(Math.log2(totalGames + 1));
  const j = gameNumber(game);
  return m - Math.floor(Math.log2(j));
}

/** The two games feeding this one, if any. */
export function feederGames(game: string, totalGames: number): string[] {
  const j = gameNumber(game);
  return [2 * j, 2 * j + 1].filter((c) => c <= totalGames).map((c) => `X${c}`);
}

export function buildBracketView(
  market: MarketDescription,
  marginals: Marginals,
  revision: number,
): BracketView {
  const totalGames = market.variables.length;
  const m = Math.round(Math.log2(totalGames + 1));
  const rounds: GameView[][] = Array.from({ length: m }, () => []);
  const violations: string[] = [];
  for (const variable of market.variables) {
    const row = marginals[variable.name];
    if (!row) continue;
    const rows: TeamRow[] = variable.domain.map((team) => ({
      team,
      probability: row[team],
    }));
    const total = rows.reduce((acc, r) => acc + r.probability, 0);
    if (Math.abs(total - 1) > RENDER_SUM_TOLERANCE) {
      violations.push(variable.name);
    }
    const round = roundOf(variable.name, totalGames);
    rounds[round - 1].push({ game: variable.name, round, rows });
  }
  for (const round of rounds) {
    round.sort((a, b) => gameNumber(a.game) - gameNumber(b.game));
  }
  const final = rounds[m - 1]?.[0];
  return {
    marketId: market.id,
    rounds,
    championship: final?.rows ?? [],
    revision,
    rowSumViolations: violations,
  };
}

/**
 * Turn bracket picks into security text. One pick is a single-team
 * security; two picks on a game and one of its feeders form a parlay
 * (parent leg first). Anything else has no click-built form and returns
 * null (free text still works).
 */
export function buildSecurityText(
  picks: Pick[],
  totalGames: number,
): string | null {
  if (picks.length === 1) {
    return `${picks[0].game}=${picks[0].team}`;
  }
  if (picks.length === 2) {
    const [a, b] = picks;
    if (feederGames(a.game, totalGames).includes(b.game)) {
      return `${a.game}=${a.team} & ${b.game}=${b.team}`;
    }
    if (feederGames(b.game, totalGames).includes(a.game)) {
      return `${b.game}=${b.team} & ${a.game}=${a.team}`;
    }
  }
  return null;
}

/** Add or replace a pick; re-picking the same team clears it. */
export function togglePick(picks: Pick[], game: string, team: string): Pick[] {
  const existing = picks.find((p) => p.game === game);
  if (existing && existing.team === team) {
    return picks.filter((p) => p.game !== game);
  }
  const kept = picks.filter((p) => p.game !== game);
  const next = [...kept, { game, team }];
  return next.length > 2 ? next.slice(next.length - 2) : next;
}
