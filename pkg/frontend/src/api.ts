// Thin typed client over the service API. The UI never transforms retrieval
// results; it only renders what the service returns.

import type {
  BuildResponse, ChatResponse, ChunkRecord, CommunityRecord, EntityRecord,
  ErrorBody, GraphStats, HealthResponse, QueryMode, ReportRecord,
} from "./types.js";

export class ApiRequestError extends Error {
  constructor(public status: number, public body: ErrorBody) {
    super(body.message);
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let body: ErrorBody;
    try {
      body = (await response.json()) as ErrorBody;
    } catch {
      body = { code: "http_error", message: `HTTP ${response.status}`, details: null };
    }
    throw new ApiRequestError(response.status, body);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(public baseUrl: string = "") {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async chat(question: string, mode: QueryMode,
             sessionId: string | null): Promise<ChatResponse> {
    const payload: Record<string, unknown> = { question, mode };
    if (sessionId) payload.session_id = sessionId;
    const response = await fetch(this.url("/chat"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
    return asJson<ChatResponse>(response);
  }

  async health(): Promise<HealthResponse> {
    return asJson<HealthResponse>(await fetch(this.url("/health")));
  }

  async build(stages: string[]): Promise<BuildResponse> {
    const response = await fetch(this.url("/index/build"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ stages }),
    });
    return asJson<BuildResponse>(response);
  }

  async graphStats(): Promise<GraphStats> {
    return asJson<GraphStats>(await fetch(this.url("/graph/stats")));
  }

  async chunk(id: string): Promise<ChunkRecord> {
    return asJson<ChunkRecord>(await fetch(this.url(`/chunks/${id}`)));
  }

  async entity(id: string): Promise<EntityRecord> {
    return asJson<EntityRecord>(await fetch(this.url(`/entities/${id}`)));
  }

  async community(id: string): Promise<CommunityRecord> {
    return asJson<CommunityRecord>(await fetch(this.url(`/communities/${id}`)));
  }

  async report(id: string): Promise<ReportRecord> {
    return asJson<ReportRecord>(await fetch(this.url(`/reports/${id}`)));
  }
}
