// Mocked-service plumbing shared by the contract tests.

import { vi } from "vitest";
import { ApiClient } from "../src/api.js";
import { App } from "../src/app.js";
import type { ChatResponse, ChunkRecord, HealthResponse, Manifest,
              ReportRecord } from "../src/types.js";

export interface RecordedCall {
  url: string;
  method: string;
  body: unknown;
}

export type Route = (url: string, init?: RequestInit) =>
  { status: number; body: unknown } | undefined;

/** Installs a fetch mock; later routes win. Returns the recorded calls. */
export function mockService(...routes: Route[]): RecordedCall[] {
  const calls: RecordedCall[] = [];
  vi.stubGlobal("fetch", async (url: string, init?: RequestInit) => {
    calls.push({
      url,
      method: init?.method ?? "GET",
      body: init?.body ? JSON.parse(init.body as string) : null,
    });
    for (const route of [...routes].reverse()) {
      const hit = route(url, init);
      if (hit) {
        return {
          ok: hit.status >= 200 && hit.status < 300,
          status: hit.status,
          json: async () => hit.body,
        } as Response;
      }
    }
    throw new Error(`unmatched request: ${url}`);
  });
  return calls;
}

export function newApp(): App {
  document.body.innerHTML = '<div id="root"></div>';
  const root = document.getElementById("root") as HTMLElement;
  const app = new App(root, new ApiClient("http://svc"));
  app.render();
  return app;
}

export function rootEl(): HTMLElement {
  return document.getElementById("root") as HTMLElement;
}

export async function tick(times = 4): Promise<void> {
  for (let i = 0; i < times; i++) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}

export function ask(question: string): void {
  const input = rootEl().querySelector(".question-input") as HTMLInputElement;
  input.value = question;
  const form = rootEl().querySelector(".composer") as HTMLFormElement;
  form.dispatchEvent(new Event("submit", { cancelable: true }));
}

export function pickMode(mode: string): void {
  const select = rootEl().querySelector(".mode-select") as HTMLSelectElement;
  select.value = mode;
  select.dispatchEvent(new Event("change"));
}

// ------------------------------------------------------------- canned data

export const CHAT_RESPONSE: ChatResponse = {
  session_id: "s-abc123",
  question: "Which AI systems are considered high risk?",
  mode: "naive",
  config_hash: "cfg1",
  answer: {
    text: "[ck-6] AI systems are considered high-risk where they fall under Annex III.",
    citations: [
      { ref_id: "ck-6", kind: "chunk", char_span: null },
      { ref_id: "ent-1", kind: "entity", char_span: null },
      { ref_id: "c0-2", kind: "community_report", char_span: null },
    ],
    mode: "naive",
    trace: [{ stage: "retrieve", scores: [["ck-6", 0.9]] },
            { stage: "pack", packed: ["ck-6"], total_tokens: 120, budget_tokens: 6000 }],
  },
};

export const CHUNK: ChunkRecord = {
  chunk_id: "ck-6",
  doc_id: "doc1",
  section_path: ["Article 6 Classification of high-risk AI systems"],
  text: "AI systems are considered high-risk where they fall under Annex III.",
  token_count: 14,
  char_span: [100, 169],
};

export const REPORT: ReportRecord = {
  community_id: "c0-2",
  level: 0,
  summary: "Institutions overseeing enforcement cooperate closely.",
  token_count: 7,
  included_elements: [{ kind: "entity", ref_id: "ent-1" }],
};

export const EMPTY_MANIFEST: Manifest = {
  corpus_id: "corp1",
  created_at: "2026-01-01T00:00:00+00:00",
  config_hash: "cfg1",
  stages: {},
  counts: {},
  documents: [],
};

export const BUILT_MANIFEST: Manifest = {
  ...EMPTY_MANIFEST,
  stages: {
    chunks: { status: "done" },
    embed: { status: "done" },
    graph: { status: "done" },
    communities: { status: "done" },
    reports: { status: "done" },
  },
  counts: { chunks: 12, vectors: 12, entities: 12, relationships: 15,
            claims: 13, communities: 5, reports: 5 },
};

export function healthRoute(manifest: Manifest): Route {
  const body: HealthResponse = { status: "ok", manifest };
  return (url) => url.endsWith("/health") ? { status: 200, body } : undefined;
}

export function chatRoute(response: ChatResponse = CHAT_RESPONSE): Route {
  return (url, init) =>
    url.endsWith("/chat") && init?.method === "POST"
      ? { status: 200, body: response }
      : undefined;
}
