// View state and its pure transitions. Rendering is a function of this state,
// so replaying a recorded response sequence reproduces the view exactly.

import { ApiClient, ApiRequestError } from "./api.js";
import type { AnswerPayload, Citation, Manifest, QueryMode } from "./types.js";

export interface ChatMessage {
  question: string;
  mode: QueryMode;
  answer?: AnswerPayload;
  error?: { status: number; code: string; message: string };
}

export interface SourcePanel {
  kind: string;
  refId: string;
  title: string;
  breadcrumbs: string[];
  text: string;
  unavailable: boolean;
}

export interface ChatViewState {
  sessionId: string | null;
  messages: ChatMessage[];
  mode: QueryMode;
  pending: boolean;
  banner: string | null; // actionable notice, e.g. index missing
  sourcePanel: SourcePanel | null;
}

export function initialChatState(): ChatViewState {
  return { sessionId: null, messages: [], mode: "naive", pending: false,
           banner: null, sourcePanel: null };
}

export function startQuestion(state: ChatViewState, question: string): ChatViewState {
  return {
    ...state,
    pending: true,
    banner: null,
    messages: [...state.messages, { question, mode: state.mode }],
  };
}

export function applyAnswer(state: ChatViewState, sessionId: string,
                            answer: AnswerPayload): ChatViewState {
  const messages = state.messages.slice();
  messages[messages.length - 1] = { ...messages[messages.length - 1], answer };
  return { ...state, pending: false, sessionId, messages };
}

export function applyChatError(state: ChatViewState, error: ApiRequestError): ChatViewState {
  const messages = state.messages.slice();
  const last = messages[messages.length - 1];
  messages[messages.length - 1] = {
    ...last,
    error: { status: error.status, code: error.body.code, message: error.body.message },
  };
  const banner = error.status === 409
    ? `${error.body.message} - build the index first`
    : null;
  return { ...state, pending: false, banner, messages };
}

export function applyNetworkFailure(state: ChatViewState, message: string): ChatViewState {
  const messages = state.messages.slice();
  const last = messages[messages.length - 1];
  messages[messages.length - 1] = {
    ...last,
    error: { status: 0, code: "network", message },
  };
  return { ...state, pending: false, messages };
}

export function sourceUnavailable(kind: string, refId: string): SourcePanel {
  return { kind, refId, title: "source unavailable", breadcrumbs: [],
           text: "", unavailable: true };
}

/** Resolve a citation through the GET endpoint matching its kind. */
export async function fetchSource(client: ApiClient,
                                  citation: Citation): Promise<SourcePanel> {
  const { kind, ref_id: refId } = citation;
  try {
    if (kind === "chunk") {
      const chunk = await client.chunk(refId);
      return { kind, refId, title: chunk.chunk_id,
               breadcrumbs: chunk.section_path, text: chunk.text,
               unavailable: false };
    }
    if (kind === "entity") {
      const entity = await client.entity(refId);
      return { kind, refId, title: `${entity.name} (${entity.type})`,
               breadcrumbs: [], text: entity.description, unavailable: false };
    }
    if (kind === "community_report") {
      const report = await client.report(refId);
      return { kind, refId, title: report.community_id,
               breadcrumbs: [`level ${report.level}`], text: report.summary,
               unavailable: false };
    }
    if (kind === "community") {
      const community = await client.community(refId);
      return { kind, refId, title: community.community_id,
               breadcrumbs: [`level ${community.level}`],
               text: community.member_nodes.join(", "), unavailable: false };
    }
    // relationships and claims have no GET endpoint; show the reference.
    return { kind, refId, title: `${kind} ${refId}`, breadcrumbs: [],
             text: "", unavailable: false };
  } catch (error) {
    if (error instanceof ApiRequestError && error.status === 404) {
      return sourceUnavailable(kind, refId);
    }
    throw error;
  }
}

// ----------------------------------------------------------------- dashboard

export const STAGES = ["embed", "graph", "communities", "reports"] as const;

const STAGE_DEPS: Record<string, string[]> = {
  embed: [],
  graph: [],
  communities: ["graph"],
  reports: ["communities"],
};

export interface DashboardState {
  manifest: Manifest | null;
  building: boolean;
  error: string | null;
}

export function initialDashboardState(): DashboardState {
  return { manifest: null, building: false, error: null };
}

export function stageStatus(manifest: Manifest | null, stage: string): string {
  const record = manifest?.stages?.[stage];
  return record ? record.status : "missing";
}

/** A stage can start when its dependencies are done and no build is running. */
export function stageEnabled(state: DashboardState, stage: string): boolean {
  if (state.building) return false;
  return STAGE_DEPS[stage].every(
    (dep) => stageStatus(state.manifest, dep) === "done");
}
