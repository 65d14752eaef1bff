import { describe, expect, it } from "vitest";

import {
  escapeHtml,
  renderAnswer,
  renderFaqTable,
  renderStatus,
  renderSuggestions,
} from "../src/render";
import { applyEvent, initialAgentView, initialSupervisorView } from "../src/state";
import type { ApiEvent, FaqEntry, Suggestion } from "../src/types";

function suggestion(id: string, source: "matched" | "generated", rank = 1): Suggestion {
  return { suggestion_id: id, text: `Question ${id}?`, source, rank };
}

function viewWith(suggestions: Suggestion[], degraded = false) {
  const event: ApiEvent = {
    sequence: 1,
    event_kind: "suggestion_set",
    session_id: "s1",
    payload: {
      session_id: "s1", trigger_turn_index: 0, suggestions,
      produced_at: 0, stage_latency_ms: {}, degraded,
      degraded_stages: degraded ? ["match"] : [],
    },
  };
  return applyEvent(initialAgentView(), event);
}

describe("suggestion panel", () => {
  it("renders the matched block above the generated block", () => {
    const html = renderSuggestions(viewWith([
      suggestion("g1", "generated"),
      suggestion("m1", "matched"),
    ]));
    expect(html.indexOf("Matched FAQs")).toBeGreaterThanOrEqual(0);
    expect(html.indexOf("Matched FAQs")).toBeLessThan(html.indexOf("Generated questions"));
  });

  it("never renders more than six suggestions", () => {
    const many = Array.from({ length: 10 }, (_, i) =>
      suggestion(`s${i}`, i % 2 ? "matched" : "generated", i));
    const html = renderSuggestions(viewWith(many));
    expect((html.match(/class="suggestion /g) ?? []).length).toBe(6);
  });

  it("tag button only on generated suggestions, disabled before answering", () => {
    const html = renderSuggestions(viewWith([
      suggestion("m1", "matched"),
      suggestion("g1", "generated"),
    ]));
    const cards = html.split("<li").slice(1);
    const matchedCard = cards.find((c) => c.includes('data-id="m1"') && c.includes("suggestion-matched"));
    const generatedCard = cards.find((c) => c.includes("suggestion-generated"));
    expect(matchedCard).not.toContain('data-action="tag"');
    expect(generatedCard).toContain('data-action="tag"');
    expect(generatedCard).toContain("disabled");
  });

  it("escapes question text", () => {
    const view = viewWith([{
      suggestion_id: "x", source: "generated", rank: 1,
      text: `<script>alert("boom")</script>`,
    }]);
    const html = renderSuggestions(view);
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
  });

  it("renders a pushed six-suggestion set within the 500 ms budget", () => {
    const six = [
      suggestion("m1", "matched", 1), suggestion("m2", "matched", 2),
      suggestion("m3", "matched", 3), suggestion("g1", "generated", 1),
      suggestion("g2", "generated", 2), suggestion("g3", "generated", 3),
    ];
    const start = performance.now();
    const html = renderSuggestions(viewWith(six));
    const elapsed = performance.now() - start;
    expect((html.match(/class="suggestion /g) ?? []).length).toBe(6);
    expect(elapsed).toBeLessThan(500);
  });
});

describe("answer card", () => {
  function answered(source: "faq" | "rag") {
    let view = viewWith([suggestion("g1", "generated")]);
    view = applyEvent(view, {
      sequence: 2, event_kind: "answer", session_id: "s1",
      payload: {
        suggestion_id: "g1", question: "Question g1?",
        answer: { text: "The answer.", source, qid: source === "faq" ? "Q1" : null, latency_ms: 2 },
      },
    });
    return view;
  }

  it("FAQ badge matches the payload source", () => {
    const html = renderAnswer(answered("faq"));
    expect(html).toContain("badge-faq");
    expect(html).toContain(">FAQ<");
    expect(html).not.toContain("badge-rag");
  });

  it("RAG badge matches the payload source", () => {
    const html = renderAnswer(answered("rag"));
    expect(html).toContain("badge-rag");
    expect(html).toContain(">RAG<");
  });

  it("offers tagging for an answered generated question", () => {
    const html = renderAnswer(answered("rag"));
    expect(html).toContain('data-action="tag"');
  });
});

describe("status", () => {
  it("shows the connection state chip", () => {
    const view = { ...initialAgentView(), conn: "live" as const };
    expect(renderStatus(view)).toContain("conn-live");
  });

  it("shows the degraded banner", () => {
    const view = viewWith([], true);
    expect(renderStatus(view)).toContain("banner-degraded");
  });
});

describe("faq table", () => {
  function page(entries: FaqEntry[]) {
    return {
      ...initialSupervisorView(),
      page: { total: entries.length, page: 1, page_size: 20, entries },
    };
  }

  const answered: FaqEntry = {
    qid: "Q1", question: "Answered?", answer: "Yes.", frequency: 3,
    source: "mined", created_at: 0, updated_at: 0,
  };
  const answerless: FaqEntry = {
    qid: "Q2", question: "Pending?", answer: null, frequency: 1,
    source: "mined", created_at: 0, updated_at: 0,
  };

  it("flags answerless entries", () => {
    const html = renderFaqTable(page([answered, answerless]));
    expect(html).toContain("needs answer");
    expect((html.match(/badge-answerless/g) ?? []).length).toBe(1);
  });

  it("editing row shows inputs and save/cancel", () => {
    const view = { ...page([answered]), editingQid: "Q1" };
    const html = renderFaqTable(view);
    expect(html).toContain('name="question"');
    expect(html).toContain('data-action="save"');
    expect(html).toContain('data-action="cancel"');
  });

  it("escapes html", () => {
    expect(escapeHtml(`<b a="c">`)).toBe("&lt;b a=&quot;c&quot;&gt;");
  });
});
