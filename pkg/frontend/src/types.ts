// Wire types for the /v1 API.

export type SuggestionSource = "matched" | "generated";

export interface Suggestion {
  suggestion_id: string;
  text: string;
  source: SuggestionSource;
  rank: number;
  qid?: string;
  score?: number;
}

export interface SuggestionSetPayload {
  session_id: string;
  trigger_turn_index: number;
  suggestions: Suggestion[];
  produced_at: number;
  stage_latency_ms: Record<string, number>;
  degraded: boolean;
  degraded_stages: string[];
}

export interface AnswerBody {
  text: string;
  source: "faq" | "rag";
  qid: string | null;
  latency_ms: number;
}

export interface AnswerPayload {
  suggestion_id: string;
  question: string | null;
  answer: AnswerBody;
}

export interface FaqTaggedPayload {
  qid: string;
  suggestion_id: string;
}

export interface ApiEvent {
  sequence: number;
  event_kind: string;
  session_id: string;
  payload: SuggestionSetPayload | AnswerPayload | FaqTaggedPayload | Record<string, unknown>;
}

export interface FaqEntry {
  qid: string;
  question: string;
  answer: string | null;
  frequency: number;
  source: string;
  created_at: number;
  updated_at: number;
}

export interface FaqPage {
  total: number;
  page: number;
  page_size: number;
  entries: FaqEntry[];
}

export interface SessionInfo {
  session_id: string;
  turns: number;
  last_trigger_index: number | null;
  active_suggestions: Suggestion[];
  last_event_seq: number;
}
