// Pure view-model reducers. The DOM layer feeds events in and re-renders
// from the returned models; nothing here touches the network or document.

import type {
  AnswerPayload,
  ApiEvent,
  FaqPage,
  Suggestion,
  SuggestionSetPayload,
} from "./types";
import type { ConnState } from "./machine";

export const MAX_SUGGESTIONS = 6;

export interface TranscriptLine {
  index: number;
  speaker: string;
  text: string;
}

export interface AgentView {
  sessionId: string | null;
  transcript: TranscriptLine[];
  suggestions: Suggestion[];
  activeTurnIndex: number | null;
  answeredIds: string[];
  taggableIds: string[]; // answered AND generated-source
  taggedIds: string[];
  lastAnswer: AnswerPayload | null;
  degraded: boolean;
  conn: ConnState;
  lastSeq: number;
  notice: string | null;
}

export function initialAgentView(): AgentView {
  return {
    sessionId: null,
    transcript: [],
    suggestions: [],
    activeTurnIndex: null,
    answeredIds: [],
    taggableIds: [],
    taggedIds: [],
    lastAnswer: null,
    degraded: false,
    conn: "disconnected",
    lastSeq: 0,
    notice: null,
  };
}

export function applyEvent(view: AgentView, event: ApiEvent): AgentView {
  const next = { ...view, lastSeq: Math.max(view.lastSeq, event.sequence) };
  switch (event.event_kind) {
    case "suggestion_set": {
      const payload = event.payload as SuggestionSetPayload;
      // a new set supersedes the old one entirely; never show more than six
      next.suggestions = payload.suggestions.slice(0, MAX_SUGGESTIONS);
      next.activeTurnIndex = payload.trigger_turn_index;
      next.degraded = payload.degraded;
      next.notice = payload.degraded
        ? `degraded round (${payload.degraded_stages.join(", ") || "no stages"})`
        : null;
      return next;
    }
    case "answer": {
      const payload = event.payload as AnswerPayload;
      const answered = view.suggestions.find(
        (s) => s.suggestion_id === payload.suggestion_id,
      );
      next.lastAnswer = payload;
      next.answeredIds = [...view.answeredIds, payload.suggestion_id];
      if (answered?.source === "generated") {
        next.taggableIds = [...view.taggableIds, payload.suggestion_id];
      }
      next.suggestions = view.suggestions.filter(
        (s) => s.suggestion_id !== payload.suggestion_id,
      );
      return next;
    }
    case "faq_tagged": {
      const payload = event.payload as { suggestion_id: string };
      next.taggedIds = [...view.taggedIds, payload.suggestion_id];
      return next;
    }
    case "degraded_notice": {
      next.degraded = true;
      return next;
    }
    default:
      return next;
  }
}

export function canTag(view: AgentView, suggestionId: string): boolean {
  return view.taggableIds.includes(suggestionId) && !view.taggedIds.includes(suggestionId);
}

export interface SupervisorView {
  page: FaqPage | null;
  pageNumber: number;
  answerlessOnly: boolean;
  editingQid: string | null;
  error: string | null;
}

export function initialSupervisorView(): SupervisorView {
  return { page: null, pageNumber: 1, answerlessOnly: false, editingQid: null, error: null };
}
