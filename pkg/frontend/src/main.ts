// Browser bootstrap: binds the terminal state machine to the page with one
// delegated click handler and a 1s polling loop.

import { MarketApi } from "./api.js";
import { renderApp, renderMarketPanes } from "./render.js";
import { Terminal } from "./terminal.js";

const params = new URLSearchParams(window.location.search);
const serviceUrl = params.get("service") ?? "http://127.0.0.1:8720";
const marketId = params.get("market") ?? "cup";

const terminal = new Terminal(new MarketApi(serviceUrl), marketId);
const root = document.getElementById("app")!;

function readTicketInputs(): void {
  const security = document.getElementById("security") as HTMLInputElement | null;
  const kind = document.getElementById("amount-kind") as HTMLSelectElement | null;
  const amount = document.getElementById("amount") as HTMLInputElement | null;
  if (security && security.value !== terminal.ticket.securityText) {
    terminal.setSecurityText(security.value);
  }
  if (kind && amount) {
    terminal.setAmount(
      kind.value === "budget" ? "budget" : "shares",
      Number(amount.value) || 0,
    );
  }
}

function draw(): void {
  root.innerHTML = renderApp({
    view: terminal.view,
    ticket: terminal.ticket,
    blotter: terminal.blotter,
    busy: terminal.busy,
    status: terminal.status,
  });
}

// Polling repaints only the market panes so in-progress ticket input is
// never clobbered mid-keystroke.
function drawMarket(): void {
  const panes = document.getElementById("market-panes");
  if (panes && terminal.view) {
    panes.innerHTML = renderMarketPanes(terminal.view, terminal.ticket.picks);
  }
  const revision = document.getElementById("revision");
  if (revision && terminal.view) {
    revision.textContent = `revision ${terminal.view.revision}`;
  }
}

root.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const row = target.closest("tr[data-game]") as HTMLElement | null;
  if (row?.dataset.game && row.dataset.team) {
    terminal.pickTeam(row.dataset.game, row.dataset.team);
    draw();
    return;
  }
  const action = (target.closest("[data-action]") as HTMLElement | null)?.dataset
    .action;
  if (action === "quote") {
    readTicketInputs();
    void terminal.refreshQuote().then(draw);
  } else if (action === "submit") {
    void terminal.submit().then(draw);
  }
});

void terminal.load().then(draw, (fault) => {
  terminal.status = String(fault);
  draw();
});

setInterval(() => {
  const before = terminal.view?.revision;
  void terminal.poll().then(() => {
    if (terminal.view && terminal.view.revision !== before) {
      drawMarket();
    }
  });
}, 1000);
