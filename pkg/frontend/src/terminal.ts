// Terminal state machine: market view, order ticket, blotter. Pure of DOM
// concerns so the whole trading flow is unit-testable against recorded
// service fixtures.

import { ApiFault } from "./api.js";
import type {
  MarketDescription,
  QuotePayload,
  ReceiptPayload,
  TerminalApi,
} from "./api.js";
import {
  buildBracketView,
  buildSecurityText,
  togglePick,
  type BracketView,
  type Pick,
} from "./model.js";

export interface TicketState {
  securityText: string;
  amountKind: "shares" | "budget";
  amount: number;
  quote: QuotePayload | null;
  /** Detail of a rejected stale-quote submission, with the re-quoted cost. */
  requote: string | null;
  error: string | null;
  picks: Pick[];
}

export interface BlotterEntry {
  at: string;
  receipt: ReceiptPayload;
}

function freshTicket(): TicketState {
  return {
    securityText: "",
    amountKind: "shares",
    amount: 1,
    quote: null,
    requote: null,
    error: null,
    picks: [],
  };
}

export class Terminal {
  view: BracketView | null = null;
  market: MarketDescription | null = null;
  ticket: TicketState = freshTicket();
  blotter: BlotterEntry[] = [];
  busy = false;
  status = "";

  constructor(
    private readonly api: TerminalApi,
    readonly marketId: string,
    private readonly now: () => string = () => new Date().toISOString(),
  ) {}

  /**
   * Fetch description and marginals as one consistent view: the revision is
   * re-read afterwards and the whole load retries if a trade slipped in
   * between the two requests.
   */
  async load(): Promise<void> {
    for (let attempt = 0; attempt < 5; attempt++) {
      const before = await this.api.describe(this.marketId);
      const marginals = await this.api.marginals(this.marketId);
      const after = await this.api.describe(this.marketId);
      if (before.revision === after.revision) {
        this.market = after;
        this.view = buildBracketView(after, marginals, after.revision);
        return;
      }
    }
    throw new Error("market kept moving while loading; try again");
  }

  pickTeam(game: string, team: string): void {
    if (!this.market) return;
    this.ticket.picks = togglePick(this.ticket.picks, game, team);
    const text = buildSecurityText(this.ticket.picks, this.market.variables.length);
    if (text !== null) {
      this.ticket.securityText = text;
    }
    this.ticket.quote = null;
    this.ticket.requote = null;
    this.ticket.error = null;
  }

  setSecurityText(text: string): void {
    // Free text is validated server-side only; picks no longer apply.
    this.ticket.securityText = text;
    this.ticket.picks = [];
    this.ticket.quote = null;
    this.ticket.requote = null;
    this.ticket.error = null;
  }

  setAmount(kind: "shares" | "budget", amount: number): void {
    this.ticket.amountKind = kind;
    this.ticket.amount = amount;
    this.ticket.quote = null;
    this.ticket.requote = null;
  }

  private amountPayload(): { shares?: number; budget?: number } {
    return this.ticket.amountKind === "shares"
      ? { shares: this.ticket.amount }
      : { budget: this.ticket.amount };
  }

  async refreshQuote(): Promise<void> {
    if (!this.ticket.securityText) {
      this.ticket.error = "enter or pick a security first";
      return;
    }
    this.busy = true;
    try {
      this.ticket.quote = await this.api.quote(
        this.marketId,
        this.ticket.securityText,
        this.amountPayload(),
      );
      this.ticket.error = null;
      this.ticket.requote = null;
    } catch (fault) {
      this.ticket.quote = null;
      this.ticket.error = fault instanceof ApiFault ? fault.detail : String(fault);
    } finally {
      this.busy = false;
    }
  }

  /**
   * Submit the ticket pinned to the revision it was quoted at. A stale
   * rejection surfaces the service's re-quote and fetches a fresh quote;
   * nothing executes at a price the trader has not seen.
   */
  async submit(): Promise<void> {
    const quote = this.ticket.quote;
    if (!quote) {
      this.ticket.error = "quote the ticket before submitting";
      return;
    }
    this.busy = true;
    try {
      const receipt = await this.api.trade(this.marketId, {
        security: this.ticket.securityText,
        ...this.amountPayload(),
        mode: "auto",
        quote_revision: quote.revision,
      });
      this.blotter = [{ at: this.now(), receipt }, ...this.blotter];
      this.ticket = { ...freshTicket(), amountKind: this.ticket.amountKind };
      this.busy = false;
      await this.load();
    } catch (fault) {
      this.busy = false;
      if (fault instanceof ApiFault && fault.code === "stale_quote") {
        // show the rejection (with the service's re-quoted cost) next to a
        // freshly fetched quote
        const detail = fault.detail;
        this.ticket.quote = null;
        await this.refreshQuote();
        this.ticket.requote = detail;
        return;
      }
      this.ticket.error = fault instanceof ApiFault ? fault.detail : String(fault);
    }
  }

  /** Poll marginals; skipped while a trade or quote is in flight. */
  async poll(): Promise<void> {
    if (this.busy) return;
    try {
      await this.load();
      this.status = "";
    } catch (fault) {
      this.status = String(fault);
    }
  }
}
