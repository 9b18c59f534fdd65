// Typed client over the market service's HTTP API. The terminal displays
// service numbers verbatim, so nothing here reformats or recomputes them.

export interface VariableInfo {
  name: string;
  domain: string[];
}

export interface MarketDescription {
  id: string;
  b: number;
  revision: number;
  decomposable: boolean;
  preset: string | null;
  variables: VariableInfo[];
  edges: [string, string][];
}

/** variable -> team -> probability, exactly as the service rendered it. */
export type Marginals = Record<string, Record<string, number>>;

export interface QuotePayload {
  security: string;
  current_price: number;
  delta: number;
  dollar_cost: number;
  post_price: number;
  mode: "exact" | "approx";
  warning: string | null;
  revision: number;
}

export interface ReceiptPayload {
  security: string;
  delta: number;
  dollar_cost: number;
  mode: "exact" | "approx";
  pre_price: number;
  post_price: number;
  revision: number;
  approx_kl: number | null;
  warning: string | null;
}

export interface TradeRequest {
  security: string;
  shares?: number;
  budget?: number;
  mode?: "exact" | "approx" | "auto";
  quote_revision?: number;
}

export class ApiFault extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    readonly detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

interface ResponseLike {
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<ResponseLike>;

async function unwrap<T>(response: ResponseLike): Promise<T> {
  const body = (await response.json()) as Record<string, unknown>;
  if (response.status >= 400) {
    throw new ApiFault(
      response.status,
      String(body["error"] ?? "unknown"),
      String(body["detail"] ?? ""),
    );
  }
  return body as T;
}

export class MarketApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  describe(id: string): Promise<MarketDescription> {
    return this.fetchFn(this.url(`/markets/${encodeURIComponent(id)}`)).then(
      (r) => unwrap<MarketDescription>(r),
    );
  }

  marginals(id: string): Promise<Marginals> {
    return this.fetchFn(
      this.url(`/markets/${encodeURIComponent(id)}/marginals`),
    ).then((r) => unwrap<Marginals>(r));
  }

  quote(
    id: string,
    security: string,
    amount: { shares?: number; budget?: number },
  ): Promise<QuotePayload> {
    const params = new URLSearchParams({ security });
    if (amount.shares !== undefined) params.set("shares", String(amount.shares));
    if (amount.budget !== undefined) params.set("budget", String(amount.budget));
    return this.fetchFn(
      this.url(`/markets/${encodeURIComponent(id)}/quote?${params.toString()}`),
    ).then((r) => unwrap<QuotePayload>(r));
  }

  trade(id: string, request: TradeRequest): Promise<ReceiptPayload> {
    return this.fetchFn(this.url(`/markets/${encodeURIComponent(id)}/trades`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    }).then((r) => unwrap<ReceiptPayload>(r));
  }
}

/** The slice of the API the terminal logic needs; tests substitute fakes. */
export interface TerminalApi {
  describe(id: string): Promise<MarketDescription>;
  marginals(id: string): Promise<Marginals>;
  quote(
    id: string,
    security: string,
    amount: { shares?: number; budget?: number },
  ): Promise<QuotePayload>;
  trade(id: string, request: TradeRequest): Promise<ReceiptPayload>;
}
