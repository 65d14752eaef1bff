// Pure HTML-string renderers: the DOM layer assigns innerHTML and wires
// clicks through data-action attributes, so everything visual is testable
// without a browser.

import type { AgentView, SupervisorView } from "./state";
import { canTag, MAX_SUGGESTIONS } from "./state";
import type { FaqEntry, Suggestion } from "./types";

export function escapeHtml(raw: string): string {
  return raw
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function suggestionCard(view: AgentView, s: Suggestion): string {
  const badge =
    s.source === "matched"
      ? `<span class="badge badge-matched">FAQ match</span>`
      : `<span class="badge badge-generated">generated</span>`;
  const tagButton =
    s.source === "generated"
      ? `<button data-action="tag" data-id="${s.suggestion_id}" ${
          canTag(view, s.suggestion_id) ? "" : "disabled"
        }>Tag as FAQ</button>`
      : "";
  return `
    <li class="suggestion suggestion-${s.source}" data-id="${s.suggestion_id}">
      ${badge}
      <span class="suggestion-text">${escapeHtml(s.text)}</span>
      <button data-action="select" data-id="${s.suggestion_id}">Answer</button>
      ${tagButton}
    </li>`;
}

export function renderSuggestions(view: AgentView): string {
  const visible = view.suggestions.slice(0, MAX_SUGGESTIONS);
  const matched = visible.filter((s) => s.source === "matched");
  const generated = visible.filter((s) => s.source === "generated");
  if (!visible.length) {
    return `<p class="empty">No suggestions yet.</p>`;
  }
  const matchedBlock = matched.length
    ? `<h3>Matched FAQs</h3><ul class="suggestion-list">${matched
        .map((s) => suggestionCard(view, s))
        .join("")}</ul>`
    : "";
  const generatedBlock = generated.length
    ? `<h3>Generated questions</h3><ul class="suggestion-list">${generated
        .map((s) => suggestionCard(view, s))
        .join("")}</ul>`
    : "";
  return matchedBlock + generatedBlock;
}

export function renderAnswer(view: AgentView): string {
  const answer = view.lastAnswer;
  if (!answer) return "";
  const badge =
    answer.answer.source === "faq"
      ? `<span class="badge badge-faq">FAQ</span>`
      : `<span class="badge badge-rag">RAG</span>`;
  const tagButton = canTag(view, answer.suggestion_id)
    ? `<button data-action="tag" data-id="${answer.suggestion_id}">Tag as FAQ</button>`
    : "";
  const tagged = view.taggedIds.includes(answer.suggestion_id)
    ? `<span class="badge badge-tagged">saved to FAQ</span>`
    : "";
  return `
    <div class="answer-card">
      ${badge}
      <p class="answer-question">${escapeHtml(answer.question ?? "")}</p>
      <p class="answer-text">${escapeHtml(answer.answer.text)}</p>
      ${tagButton}${tagged}
    </div>`;
}

export function renderTranscript(view: AgentView): string {
  if (!view.transcript.length) return `<p class="empty">No turns yet.</p>`;
  return `<ul class="transcript">${view.transcript
    .map(
      (t) =>
        `<li class="turn turn-${t.speaker}"><span class="speaker">${t.speaker}</span> ${escapeHtml(t.text)}</li>`,
    )
    .join("")}</ul>`;
}

export function renderStatus(view: AgentView): string {
  const chip = `<span class="conn conn-${view.conn}">${view.conn}</span>`;
  const banner = view.degraded
    ? `<div class="banner banner-degraded">Suggestions may be incomplete${
        view.notice ? ` — ${escapeHtml(view.notice)}` : ""
      }</div>`
    : "";
  return chip + banner;
}

export function renderFaqRow(entry: FaqEntry, editing: boolean): string {
  if (editing) {
    return `
      <tr class="faq-row editing" data-qid="${entry.qid}">
        <td>${entry.qid}</td>
        <td><input name="question" value="${escapeHtml(entry.question)}"></td>
        <td><input name="answer" value="${escapeHtml(entry.answer ?? "")}"></td>
        <td>${entry.frequency}</td>
        <td>
          <button data-action="save" data-qid="${entry.qid}">Save</button>
          <button data-action="cancel" data-qid="${entry.qid}">Cancel</button>
        </td>
      </tr>`;
  }
  const answerCell = entry.answer
    ? escapeHtml(entry.answer)
    : `<span class="badge badge-answerless">needs answer</span>`;
  return `
    <tr class="faq-row${entry.answer ? "" : " answerless"}" data-qid="${entry.qid}">
      <td>${entry.qid}</td>
      <td>${escapeHtml(entry.question)}</td>
      <td>${answerCell}</td>
      <td>${entry.frequency}</td>
      <td>
        <button data-action="edit" data-qid="${entry.qid}">Edit</button>
        <button data-action="delete" data-qid="${entry.qid}">Delete</button>
      </td>
    </tr>`;
}

export function renderFaqTable(view: SupervisorView): string {
  if (!view.page) return `<p class="empty">Loading…</p>`;
  const rows = view.page.entries
    .map((e) => renderFaqRow(e, view.editingQid === e.qid))
    .join("");
  const error = view.error ? `<div class="banner banner-error">${escapeHtml(view.error)}</div>` : "";
  const pages = Math.max(1, Math.ceil(view.page.total / view.page.page_size));
  return `
    ${error}
    <table class="faq-table">
      <thead><tr><th>QID</th><th>Question</th><th>Answer</th><th>Freq</th><th></th></tr></thead>
      <tbody>${rows}</tbody>
    </table>
    <div class="pager">
      <button data-action="prev-page" ${view.pageNumber <= 1 ? "disabled" : ""}>Prev</button>
      <span>page ${view.page.page} / ${pages} (${view.page.total} entries)</span>
      <button data-action="next-page" ${view.pageNumber >= pages ? "disabled" : ""}>Next</button>
    </div>`;
}
