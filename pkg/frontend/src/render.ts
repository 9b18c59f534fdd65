// HTML string renderers. Every number shown to the trader is the service's
// value passed through String(); the client never rounds, pads, or
// recomputes a probability or cost.

import type { QuotePayload, ReceiptPayload } from "./api.js";
import type { BracketView, GameView, Pick, TeamRow } from "./model.js";
import type { BlotterEntry, TicketState } from "./terminal.js";

export function formatNumber(value: number): string {
  return String(value);
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function modeBadge(mode: "exact" | "approx"): string {
  return `<span class="badge badge-${mode}">${mode}</span>`;
}

export function renderChampionship(rows: TeamRow[]): string {
  const bars = rows
    .map((row) => {
      const width = Math.max(0, Math.min(100, row.probability * 100));
      return `<div class="champ-row">
        <span class="champ-team">${escapeHtml(row.team)}</span>
        <div class="champ-bar"><div class="champ-fill" style="width:${width}%"></div></div>
        <span class="champ-prob">${formatNumber(row.probability)}</span>
      </div>`;
    })
    .join("");
  return `<section class="championship"><h2>Championship</h2>${bars}</section>`;
}

export function renderGame(game: GameView, picks: Pick[]): string {
  const rows = game.rows
    .map((row) => {
      const picked = picks.some(
        (p) => p.game === game.game && p.team === row.team,
      );
      return `<tr class="${picked ? "picked" : ""}" data-game="${game.game}" data-team="${escapeHtml(row.team)}">
        <td class="team">${escapeHtml(row.team)}</td>
        <td class="prob">${formatNumber(row.probability)}</td>
      </tr>`;
    })
    .join("");
  return `<table class="game" data-game="${game.game}">
    <caption>${game.game}</caption><tbody>${rows}</tbody></table>`;
}

export function renderBracket(view: BracketView, picks: Pick[]): string {
  // opening round on the left, final on the right
  const columns = view.rounds
    .map((games, i) => {
      const label = `R${i + 1}`;
      const body = games.map((g) => renderGame(g, picks)).join("");
      return `<div class="round"><h3>${label}</h3>${body}</div>`;
    })
    .join("");
  const warning = view.rowSumViolations.length
    ? `<p class="warn">rows off unity: ${view.rowSumViolations.join(", ")}</p>`
    : "";
  return `<section class="bracket" data-revision="${view.revision}">${warning}${columns}</section>`;
}

export function renderQuote(quote: QuotePayload): string {
  const warning = quote.warning
    ? `<p class="warn">${escapeHtml(quote.warning)}</p>`
    : "";
  return `<div class="quote">
    <div>price <b>${formatNumber(quote.current_price)}</b></div>
    <div>cost <b>$${formatNumber(quote.dollar_cost)}</b></div>
    <div>post price <b>${formatNumber(quote.post_price)}</b></div>
    <div>${modeBadge(quote.mode)} @ revision ${quote.revision}</div>
    ${warning}
  </div>`;
}

export function renderTicket(ticket: TicketState): string {
  const quote = ticket.quote ? renderQuote(ticket.quote) : "";
  const error = ticket.error
    ? `<p class="error">${escapeHtml(ticket.error)}</p>`
    : "";
  const requote = ticket.requote
    ? `<p class="warn">stale quote: ${escapeHtml(ticket.requote)}</p>`
    : "";
  return `<section class="ticket">
    <h2>Order ticket</h2>
    <input id="security" value="${escapeHtml(ticket.securityText)}" placeholder="X1=T1 or free CNF text" />
    <select id="amount-kind">
      <option value="shares" ${ticket.amountKind === "shares" ? "selected" : ""}>shares</option>
      <option value="budget" ${ticket.amountKind === "budget" ? "selected" : ""}>budget</option>
    </select>
    <input id="amount" type="number" step="any" value="${ticket.amount}" />
    <button id="quote-btn" data-action="quote">Quote</button>
    <button id="submit-btn" data-action="submit" ${ticket.quote ? "" : "disabled"}>Submit</button>
    ${quote}${requote}${error}
  </section>`;
}

export function renderBlotter(entries: BlotterEntry[]): string {
  if (!entries.length) {
    return `<section class="blotter"><h2>Blotter</h2><p>no trades yet</p></section>`;
  }
  const rows = entries
    .map(
      (e) => `<tr>
      <td>${escapeHtml(e.at)}</td>
      <td>${escapeHtml(e.receipt.security)}</td>
      <td>${formatNumber(e.receipt.delta)}</td>
      <td>$${formatNumber(e.receipt.dollar_cost)}</td>
      <td>${modeBadge(e.receipt.mode)}</td>
      <td>${formatNumber(e.receipt.pre_price)} &rarr; ${formatNumber(e.receipt.post_price)}</td>
      <td>${e.receipt.revision}</td>
    </tr>`,
    )
    .join("");
  return `<section class="blotter"><h2>Blotter</h2>
    <table><thead><tr><th>at</th><th>security</th><th>delta</th><th>cost</th>
    <th>mode</th><th>price</th><th>rev</th></tr></thead>
    <tbody>${rows}</tbody></table></section>`;
}

export interface AppState {
  view: BracketView | null;
  ticket: TicketState;
  blotter: BlotterEntry[];
  busy: boolean;
  status: string;
}

/** The sections the 1s poll refreshes in place, leaving the ticket DOM
 * (and whatever the trader is typing) alone. */
export function renderMarketPanes(view: BracketView, picks: Pick[]): string {
  return `${renderChampionship(view.championship)}${renderBracket(view, picks)}`;
}

export function renderApp(state: AppState): string {
  if (!state.view) {
    return `<main class="terminal"><p>${escapeHtml(state.status || "loading market...")}</p></main>`;
  }
  return `<main class="terminal ${state.busy ? "busy" : ""}">
    <header><h1>${escapeHtml(state.view.marketId)}</h1>
      <span class="revision" id="revision">revision ${state.view.revision}</span>
      <span class="status">${escapeHtml(state.status)}</span>
    </header>
    <div id="market-panes">${renderMarketPanes(state.view, state.ticket.picks)}</div>
    ${renderTicket(state.ticket)}
    ${renderBlotter(state.blotter)}
  </main>`;
}
