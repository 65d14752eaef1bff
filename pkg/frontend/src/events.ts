// SSE subscription over fetch streaming. The native EventSource cannot send
// an Authorization header, so frames are read from a streamed response body
// instead. Reconnects resume from the last seen sequence; a
// `resync_required` control frame means the gap left the server's replay
// buffer and the owner must refetch full state.

import type { ApiEvent } from "./types";
import { ConnState, transition } from "./machine";
import type { FetchLike } from "./api";

export interface SubscriptionHandlers {
  onEvent(event: ApiEvent): void;
  onStateChange(state: ConnState): void;
  onResyncRequired(): void;
}

interface Frame {
  kind: string;
  data: string;
}

export function parseFrames(buffer: string): { frames: Frame[]; rest: string } {
  const frames: Frame[] = [];
  const parts = buffer.split("\n\n");
  const rest = parts.pop() ?? "";
  for (const part of parts) {
    let kind = "message";
    let data = "";
    for (const line of part.split("\n")) {
      if (line.startsWith("event:")) kind = line.slice(6).trim();
      else if (line.startsWith("data:")) data += line.slice(5).trim();
    }
    if (data) frames.push({ kind, data });
  }
  return { frames, rest };
}

export class EventSubscription {
  private state: ConnState = "disconnected";
  private stopped = false;
  private controller: AbortController | null = null;
  lastSeq = 0;

  constructor(
    private baseUrl: string,
    private sessionId: string,
    private token: string,
    private handlers: SubscriptionHandlers,
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
    private reconnectDelayMs = 1000,
    private sleep: (ms: number) => Promise<void> = (ms) => new Promise((r) => setTimeout(r, ms)),
  ) {}

  get connectionState(): ConnState {
    return this.state;
  }

  private setState(event: Parameters<typeof transition>[1]): void {
    const next = transition(this.state, event);
    if (next !== this.state) {
      this.state = next;
      this.handlers.onStateChange(next);
    }
  }

  degrade(): void {
    this.setState("degrade");
  }

  async start(): Promise<void> {
    this.stopped = false;
    while (!this.stopped) {
      this.setState("connect");
      try {
        await this.streamOnce();
      } catch {
        // fall through to reconnect
      }
      if (this.stopped) break;
      this.setState("drop");
      await this.sleep(this.reconnectDelayMs);
    }
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
    this.setState("drop");
  }

  private async streamOnce(): Promise<void> {
    this.controller = new AbortController();
    const url = `${this.baseUrl}/v1/sessions/${this.sessionId}/events?last_seq=${this.lastSeq}`;
    const response = await this.fetchImpl(url, {
      headers: { Authorization: `Bearer ${this.token}` },
      signal: this.controller.signal,
    });
    if (!response.ok || !response.body) {
      throw new Error(`event stream failed: HTTP ${response.status}`);
    }
    this.setState("open");
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { value, done } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      const { frames, rest } = parseFrames(buffer);
      buffer = rest;
      for (const frame of frames) this.dispatch(frame);
      if (this.stopped) break;
    }
  }

  private dispatch(frame: Frame): void {
    let body: Record<string, unknown>;
    try {
      body = JSON.parse(frame.data) as Record<string, unknown>;
    } catch {
      return; // skip unparseable frames rather than dropping the stream
    }
    if (frame.kind === "resync_required") {
      const last = body["last_seq"];
      if (typeof last === "number") this.lastSeq = last;
      this.handlers.onResyncRequired();
      return;
    }
    const event = body as unknown as ApiEvent;
    if (typeof event.sequence === "number") {
      this.lastSeq = Math.max(this.lastSeq, event.sequence);
    }
    if (frame.kind === "degraded_notice") {
      this.setState("degrade");
    } else if (frame.kind === "suggestion_set") {
      const payload = event.payload as { degraded?: boolean };
      if (payload.degraded) this.setState("degrade");
      else this.setState("recover");
    }
    this.handlers.onEvent(event);
  }
}
