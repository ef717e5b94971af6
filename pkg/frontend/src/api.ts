// Typed client for the schemabot HTTP API. The UI owns no dialog logic:
// everything it shows comes straight out of these response bodies.

export interface SchemaInfo {
  id: string;
  domain: string;
  slots: string[];
  template_turns: number;
}

export interface MessageResponse {
  session_id: string;
  turn_index: number;
  user_text: string;
  belief_sql: string;
  db_count: number;
  action: string[];
  delex: string;
  response: string;
  unresolved: boolean;
  out_of_scope: boolean;
  degraded: boolean;
  retries: number;
  latency_ms: number;
  request_id: string;
}

export interface SessionCreated {
  session_id: string;
  schema_ids: string[];
  request_id: string;
}

/** Service-reported failure: carries the machine code from the error body. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** Transport-level failure (service unreachable, timeout, bad payload). */
export class TransportError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "TransportError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly fetchFn: FetchLike;

  constructor(
    readonly baseUrl: string,
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, {
        method,
        headers: { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new TransportError(err instanceof Error ? err.message : String(err));
    }
    let payload: unknown;
    try {
      payload = await response.json();
    } catch {
      throw new TransportError(`non-JSON response (HTTP ${response.status})`);
    }
    if (!response.ok) {
      const detail = payload as { error?: { code?: string; message?: string } };
      throw new ApiError(
        response.status,
        detail.error?.code ?? "internal_error",
        detail.error?.message ?? `HTTP ${response.status}`,
      );
    }
    return payload as T;
  }

  async health(): Promise<{ status: string }> {
    return this.request("GET", "/v1/health");
  }

  async schemas(): Promise<SchemaInfo[]> {
    const body = await this.request<{ schemas: SchemaInfo[] }>("GET", "/v1/schemas");
    return body.schemas;
  }

  async createSession(schemaIds?: string[]): Promise<SessionCreated> {
    const body = schemaIds && schemaIds.length ? { schema_ids: schemaIds } : {};
    return this.request("POST", "/v1/sessions", body);
  }

  async sendMessage(sessionId: string, text: string): Promise<MessageResponse> {
    return this.request("POST", `/v1/sessions/${sessionId}/messages`, { text });
  }
}
