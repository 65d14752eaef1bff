import { describe, expect, it } from "vitest";

import { EventSubscription, parseFrames } from "../src/events";
import type { ApiEvent } from "../src/types";
import type { ConnState } from "../src/machine";

function frame(kind: string, body: unknown): string {
  return `event: ${kind}\ndata: ${JSON.stringify(body)}\n\n`;
}

function streamResponse(frames: string[], signal?: AbortSignal | null): Response {
  const encoder = new TextEncoder();
  const stream = new ReadableStream<Uint8Array>({
    start(controller) {
      for (const f of frames) controller.enqueue(encoder.encode(f));
      if (signal) {
        signal.addEventListener("abort", () => {
          try {
            controller.close();
          } catch {
            /* already closed */
          }
        });
      } else {
        controller.close();
      }
    },
  });
  return new Response(stream, { status: 200 });
}

describe("parseFrames", () => {
  it("splits complete frames and keeps the partial tail", () => {
    const body = frame("suggestion_set", { sequence: 1 }) + "event: answer\ndata: {";
    const { frames, rest } = parseFrames(body);
    expect(frames).toEqual([
      { kind: "suggestion_set", data: '{"sequence":1}' },
    ]);
    expect(rest).toBe("event: answer\ndata: {");
  });

  it("defaults the kind to message", () => {
    const { frames } = parseFrames('data: {"x":1}\n\n');
    expect(frames[0].kind).toBe("message");
  });
});

function subscription(
  fetchImpl: (input: string, init?: RequestInit) => Promise<Response>,
  overrides: Partial<{ onResync: () => void }> = {},
) {
  const events: ApiEvent[] = [];
  const states: ConnState[] = [];
  let stopAfter: ((sub: EventSubscription) => void) | null = null;
  const sub = new EventSubscription(
    "http://svc", "s1", "agent-token",
    {
      onEvent: (e) => {
        events.push(e);
        if (stopAfter) stopAfter(sub);
      },
      onStateChange: (s) => states.push(s),
      onResyncRequired: overrides.onResync ?? (() => undefined),
    },
    fetchImpl,
    1,
    async () => undefined, // no real backoff sleeping in tests
  );
  return { sub, events, states, setStop: (f: (s: EventSubscription) => void) => (stopAfter = f) };
}

describe("EventSubscription", () => {
  it("dispatches events in order and tracks lastSeq", async () => {
    const frames = [
      frame("suggestion_set", { sequence: 1, event_kind: "suggestion_set", session_id: "s1", payload: { suggestions: [], degraded: false } }),
      frame("answer", { sequence: 2, event_kind: "answer", session_id: "s1", payload: {} }),
    ];
    const { sub, events, setStop } = subscription(async (_url, init) =>
      streamResponse(frames, init?.signal));
    setStop((s) => {
      if (events.length >= 2) s.stop();
    });
    await sub.start();
    expect(events.map((e) => e.sequence)).toEqual([1, 2]);
    expect(sub.lastSeq).toBe(2);
  });

  it("resumes with last_seq on reconnect", async () => {
    const urls: string[] = [];
    let call = 0;
    const { sub, events, setStop } = subscription(async (url, init) => {
      urls.push(url);
      call += 1;
      if (call === 1) {
        return streamResponse([
          frame("suggestion_set", { sequence: 3, event_kind: "suggestion_set", session_id: "s1", payload: { suggestions: [], degraded: false } }),
        ]); // closes -> forces reconnect
      }
      return streamResponse([
        frame("answer", { sequence: 4, event_kind: "answer", session_id: "s1", payload: {} }),
      ], init?.signal);
    });
    setStop((s) => {
      if (events.length >= 2) s.stop();
    });
    await sub.start();
    expect(urls[0]).toContain("last_seq=0");
    expect(urls[1]).toContain("last_seq=3");
  });

  it("resync_required updates lastSeq and asks the owner to refetch", async () => {
    let resyncs = 0;
    const frames = [
      frame("resync_required", { session_id: "s1", last_seq: 70 }),
      frame("answer", { sequence: 71, event_kind: "answer", session_id: "s1", payload: {} }),
    ];
    const { sub, events, setStop } = subscription(
      async (_url, init) => streamResponse(frames, init?.signal),
      { onResync: () => (resyncs += 1) },
    );
    setStop((s) => s.stop());
    await sub.start();
    expect(resyncs).toBe(1);
    expect(sub.lastSeq).toBe(71);
    expect(events.length).toBe(1);
  });

  it("walks connecting -> live and drops to disconnected on stop", async () => {
    const frames = [
      frame("suggestion_set", { sequence: 1, event_kind: "suggestion_set", session_id: "s1", payload: { suggestions: [], degraded: false } }),
    ];
    const { sub, states, setStop } = subscription(async (_url, init) =>
      streamResponse(frames, init?.signal));
    setStop((s) => s.stop());
    await sub.start();
    expect(states[0]).toBe("connecting");
    expect(states).toContain("live");
    expect(states[states.length - 1]).toBe("disconnected");
  });

  it("a degraded set degrades the connection state; a clean one recovers it", async () => {
    const frames = [
      frame("suggestion_set", { sequence: 1, event_kind: "suggestion_set", session_id: "s1", payload: { suggestions: [], degraded: true } }),
      frame("suggestion_set", { sequence: 2, event_kind: "suggestion_set", session_id: "s1", payload: { suggestions: [], degraded: false } }),
    ];
    const { sub, states, events, setStop } = subscription(async (_url, init) =>
      streamResponse(frames, init?.signal));
    setStop((s) => {
      if (events.length >= 2) s.stop();
    });
    await sub.start();
    const afterFirst = states.indexOf("degraded");
    expect(afterFirst).toBeGreaterThan(-1);
    expect(states.slice(afterFirst)).toContain("live");
  });
});
