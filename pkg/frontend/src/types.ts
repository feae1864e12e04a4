// Wire types for the regrag HTTP JSON API.

export type QueryMode = "naive" | "graph_global" | "graph_local";

export const QUERY_MODES: QueryMode[] = ["naive", "graph_global", "graph_local"];

export interface Citation {
  ref_id: string;
  kind: string; // chunk | entity | relationship | claim | community_report
  char_span: [number, number] | null;
}

export interface AnswerPayload {
  text: string;
  citations: Citation[];
  mode: string;
  trace: unknown[];
}

export interface ChatResponse {
  session_id: string;
  question: string;
  mode: string;
  config_hash: string;
  answer: AnswerPayload;
}

export interface ErrorBody {
  code: string;
  message: string;
  details: unknown;
}

export interface StageRecord {
  status: string;
  config_hash?: string;
  input_hash?: string;
  built_at?: string;
}

export interface Manifest {
  corpus_id: string;
  created_at: string;
  config_hash: string;
  stages: Record<string, StageRecord>;
  counts: Record<string, number>;
  documents: { doc_id: string; title: string; chunk_count: number }[];
}

export interface HealthResponse {
  status: string;
  manifest: Manifest;
}

export interface BuildResponse {
  stages: Record<string, string>;
  counts: Record<string, number>;
  config_hash: string;
}

export interface ChunkRecord {
  chunk_id: string;
  doc_id: string;
  section_path: string[];
  text: string;
  token_count: number;
  char_span: [number, number];
}

export interface EntityRecord {
  entity_id: string;
  name: string;
  type: string;
  description: string;
  source_chunks: string[];
}

export interface CommunityRecord {
  community_id: string;
  level: number;
  member_nodes: string[];
  children: string[];
  parent: string | null;
}

export interface ReportRecord {
  community_id: string;
  level: number;
  summary: string;
  token_count: number;
  included_elements: { kind: string; ref_id: string }[];
}

export interface GraphStats {
  entities: number;
  edges: number;
  claims: number;
  total_edge_weight: number;
  degree_histogram: Record<string, number>;
}
