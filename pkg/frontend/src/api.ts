// Typed client for the engine's HTTP interface. The console displays API
// response fields verbatim; nothing here recomputes costs or benefits.

export interface PeerRow {
  peer: string;
  position: number;
  usedBytes: number;
  capacityBytes: number;
  views: number;
  documents: number;
}

export interface ViewRow {
  viewId: string;
  pattern: string;
  estimatedBytes: number;
  actualBytes: number;
  createdAtRound: number;
}

export interface PeerStats {
  peer: string;
  usedBytes: number;
  capacityBytes: number;
  traffic: Record<string, { messages: number; bytes: number }>;
  windowQueries: { query: string; count: number }[];
}

export interface TableDto {
  columns: string[];
  rows: (string | null)[][];
}

export interface PlanNode {
  op: string;
  children?: PlanNode[];
  view?: string;
  holder?: string;
  estimatedBytes?: number;
  columns?: string[];
  uris?: string[];
  pattern?: string;
  [key: string]: unknown;
}

export interface QueryResponse {
  table: TableDto;
  peer: string;
  query: string;
  costBytes: number;
  rows: number;
  helpers: string[];
  plan: PlanNode;
}

export interface EngineState {
  tick: number;
  mode: string;
  tauTicks: number;
  theta: number;
  round: number;
  pendingConfig: Record<string, unknown>;
  started: boolean;
}

export interface RoundReportDto {
  peer: string;
  round: number;
  added: { pattern: string; estimatedBytes: number; actualBytes: number }[];
  dropped: string[];
  discarded: string[];
  usedBytes: number;
  capacityBytes: number;
}

export interface RoundDto {
  round: number;
  appliedConfig: Record<string, unknown>;
  reports: RoundReportDto[];
  windowQueryBytes: number;
}

export interface MetricsRecord {
  tick: number;
  type: string;
  queries?: { peer: string; query: string; costBytes: number; rows: number }[];
  rounds?: RoundDto[];
  counters?: Record<string, { messages: number; bytes: number }>;
  [key: string]: unknown;
}

export interface ConfigBody {
  tau_ticks?: number;
  theta?: number;
  budget_bytes?: number | Record<string, number>;
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
  }
}

async function unwrap<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = (await res.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // keep statusText
    }
    throw new ApiError(res.status, detail);
  }
  return (await res.json()) as T;
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private url(path: string): string {
    return this.baseUrl + path;
  }

  getPeers(): Promise<PeerRow[]> {
    return fetch(this.url("/peers")).then((r) => unwrap<PeerRow[]>(r));
  }

  getPeerViews(peer: string): Promise<ViewRow[]> {
    return fetch(this.url(`/peers/${encodeURIComponent(peer)}/views`)).then((r) =>
      unwrap<ViewRow[]>(r),
    );
  }

  getPeerStats(peer: string): Promise<PeerStats> {
    return fetch(this.url(`/peers/${encodeURIComponent(peer)}/stats`)).then((r) =>
      unwrap<PeerStats>(r),
    );
  }

  getRecentPlans(): Promise<QueryResponse[]> {
    return fetch(this.url("/plans/recent")).then((r) => unwrap<QueryResponse[]>(r));
  }

  getState(): Promise<EngineState> {
    return fetch(this.url("/state")).then((r) => unwrap<EngineState>(r));
  }

  submitQuery(peer: string, query: string): Promise<QueryResponse> {
    return fetch(this.url("/queries"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ peer, query }),
    }).then((r) => unwrap<QueryResponse>(r));
  }

  postConfig(body: ConfigBody): Promise<{ pending: Record<string, unknown> }> {
    return fetch(this.url("/config"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    }).then((r) => unwrap<{ pending: Record<string, unknown> }>(r));
  }

  step(ticks: number): Promise<{ tick: number }> {
    return fetch(this.url("/step"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ ticks }),
    }).then((r) => unwrap<{ tick: number }>(r));
  }

  // Subscribes to the server-sent event stream and invokes onRecord per
  // metrics record until the signal aborts. Uses fetch streaming so the same
  // code path works in the browser and in node tests.
  async streamEvents(
    onRecord: (rec: MetricsRecord) => void,
    signal: AbortSignal,
  ): Promise<void> {
    const res = await fetch(this.url("/events"), { signal });
    if (!res.ok || !res.body) throw new ApiError(res.status, "event stream unavailable");
    const reader = res.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    try {
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        buffer += decoder.decode(value, { stream: true });
        const { records, rest } = parseSseChunk(buffer);
        buffer = rest;
        for (const rec of records) onRecord(rec);
      }
    } finally {
      reader.releaseLock();
    }
  }
}

// Splits accumulated SSE text into complete `data:` records and the unfinished
// tail. Exported separately so parsing is testable without a live stream.
export function parseSseChunk(buffer: string): {
  records: MetricsRecord[];
  rest: string;
} {
  const records: MetricsRecord[] = [];
  const parts = buffer.split("\n\n");
  const rest = parts.pop() ?? "";
  for (const part of parts) {
    const data = part
      .split("\n")
      .filter((line) => line.startsWith("data:"))
      .map((line) => line.slice(5).trimStart())
      .join("\n");
    if (data) records.push(JSON.parse(data) as MetricsRecord);
  }
  return { records, rest };
}
