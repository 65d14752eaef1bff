// Thin typed client over the /v1 HTTP API. No retries, no local caching:
// the service is the source of truth and callers refetch after mutations.

import type { AnswerPayload, FaqEntry, FaqPage, SessionInfo, SuggestionSetPayload } from "./types";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private token: string,
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
      },
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    if (!response.ok) {
      let detail = `HTTP ${response.status}`;
      try {
        const parsed = (await response.json()) as { detail?: string };
        if (parsed.detail) detail = parsed.detail;
      } catch {
        // keep the generic message
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  startSession(): Promise<{ session_id: string }> {
    return this.request("POST", "/v1/sessions");
  }

  getSession(sessionId: string): Promise<SessionInfo> {
    return this.request("GET", `/v1/sessions/${sessionId}`);
  }

  postTurn(sessionId: string, speaker: string, text: string): Promise<{ index: number; triggered: boolean }> {
    return this.request("POST", `/v1/sessions/${sessionId}/turns`, { speaker, text });
  }

  manualTrigger(sessionId: string): Promise<{ suggestion_set: SuggestionSetPayload }> {
    return this.request("POST", `/v1/sessions/${sessionId}/trigger`);
  }

  select(sessionId: string, suggestionId: string): Promise<AnswerPayload> {
    return this.request("POST", `/v1/sessions/${sessionId}/select`, { suggestion_id: suggestionId });
  }

  tagFaq(sessionId: string, suggestionId: string): Promise<{ qid: string; suggestion_id: string }> {
    return this.request("POST", `/v1/sessions/${sessionId}/tag-faq`, { suggestion_id: suggestionId });
  }

  listFaqs(page = 1, pageSize = 20, answerless = false): Promise<FaqPage> {
    const params = new URLSearchParams({
      page: String(page),
      page_size: String(pageSize),
      answerless: String(answerless),
    });
    return this.request("GET", `/v1/faqs?${params}`);
  }

  createFaq(question: string, answer: string | null): Promise<FaqEntry> {
    return this.request("POST", "/v1/faqs", { question, answer });
  }

  updateFaq(qid: string, fields: { question?: string; answer?: string }): Promise<FaqEntry> {
    return this.request("PUT", `/v1/faqs/${qid}`, fields);
  }

  deleteFaq(qid: string): Promise<{ removed: boolean }> {
    return this.request("DELETE", `/v1/faqs/${qid}`);
  }
}
