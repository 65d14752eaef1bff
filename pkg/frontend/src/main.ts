// DOM bootstrap: wires the API client, event subscription, reducers and
// renderers together. All state lives in the two view models; every change
// re-renders the affected panel.

import { ApiClient, ApiError } from "./api";
import { EventSubscription } from "./events";
import {
  applyEvent,
  initialAgentView,
  initialSupervisorView,
  type AgentView,
  type SupervisorView,
} from "./state";
import {
  renderAnswer,
  renderFaqTable,
  renderStatus,
  renderSuggestions,
  renderTranscript,
} from "./render";

const $ = <T extends HTMLElement>(selector: string): T => {
  const node = document.querySelector<T>(selector);
  if (!node) throw new Error(`missing element ${selector}`);
  return node;
};

let agentView: AgentView = initialAgentView();
let supervisorView: SupervisorView = initialSupervisorView();
let agentApi: ApiClient | null = null;
let supervisorApi: ApiClient | null = null;
let subscription: EventSubscription | null = null;

const baseUrl = () => ($("#base-url") as HTMLInputElement).value.replace(/\/$/, "");

function renderAgent(): void {
  $("#status").innerHTML = renderStatus(agentView);
  $("#transcript").innerHTML = renderTranscript(agentView);
  $("#suggestions").innerHTML = renderSuggestions(agentView);
  $("#answer").innerHTML = renderAnswer(agentView);
  ($("#session-label") as HTMLElement).textContent = agentView.sessionId ?? "no session";
}

function renderSupervisor(): void {
  $("#faq-panel").innerHTML = renderFaqTable(supervisorView);
  ($("#answerless-toggle") as HTMLInputElement).checked = supervisorView.answerlessOnly;
}

async function refetchSessionState(): Promise<void> {
  if (!agentApi || !agentView.sessionId) return;
  const info = await agentApi.getSession(agentView.sessionId);
  agentView = { ...agentView, suggestions: info.active_suggestions.slice(0, 6) };
  renderAgent();
}

async function startSession(): Promise<void> {
  const token = ($("#agent-token") as HTMLInputElement).value || "agent-token";
  agentApi = new ApiClient(baseUrl(), token);
  const { session_id } = await agentApi.startSession();
  agentView = { ...initialAgentView(), sessionId: session_id };
  renderAgent();
  subscription?.stop();
  subscription = new EventSubscription(baseUrl(), session_id, token, {
    onEvent: (event) => {
      agentView = applyEvent(agentView, event);
      renderAgent();
    },
    onStateChange: (state) => {
      agentView = { ...agentView, conn: state };
      renderAgent();
    },
    onResyncRequired: () => {
      void refetchSessionState();
    },
  });
  void subscription.start();
}

async function postTurn(): Promise<void> {
  if (!agentApi || !agentView.sessionId) return;
  const speaker = ($("#speaker") as HTMLSelectElement).value;
  const textInput = $("#turn-text") as HTMLInputElement;
  const text = textInput.value.trim();
  if (!text) return;
  const { index } = await agentApi.postTurn(agentView.sessionId, speaker, text);
  agentView = {
    ...agentView,
    transcript: [...agentView.transcript, { index, speaker, text }],
  };
  textInput.value = "";
  renderAgent();
}

async function manualAssist(): Promise<void> {
  if (!agentApi || !agentView.sessionId) return;
  await agentApi.manualTrigger(agentView.sessionId); // the set arrives via the stream
}

async function onSuggestionAction(action: string, suggestionId: string): Promise<void> {
  if (!agentApi || !agentView.sessionId) return;
  try {
    if (action === "select") {
      await agentApi.select(agentView.sessionId, suggestionId); // answer event follows
    } else if (action === "tag") {
      await agentApi.tagFaq(agentView.sessionId, suggestionId); // faq_tagged event follows
    }
  } catch (err) {
    if (err instanceof ApiError && err.status === 404) {
      await refetchSessionState(); // stale suggestion from a superseded set
    } else {
      throw err;
    }
  }
}

async function refreshFaqs(): Promise<void> {
  if (!supervisorApi) return;
  try {
    const page = await supervisorApi.listFaqs(
      supervisorView.pageNumber, 20, supervisorView.answerlessOnly);
    supervisorView = { ...supervisorView, page, error: null };
  } catch (err) {
    supervisorView = { ...supervisorView, error: String(err) };
  }
  renderSupervisor();
}

async function onFaqAction(action: string, qid: string, row?: HTMLElement): Promise<void> {
  if (!supervisorApi) return;
  try {
    if (action === "edit") {
      supervisorView = { ...supervisorView, editingQid: qid };
      renderSupervisor();
      return;
    }
    if (action === "cancel") {
      supervisorView = { ...supervisorView, editingQid: null };
      renderSupervisor();
      return;
    }
    if (action === "save" && row) {
      const question = (row.querySelector("input[name=question]") as HTMLInputElement).value;
      const answer = (row.querySelector("input[name=answer]") as HTMLInputElement).value;
      await supervisorApi.updateFaq(qid, { question, answer });
      supervisorView = { ...supervisorView, editingQid: null };
    }
    if (action === "delete") {
      await supervisorApi.deleteFaq(qid);
    }
    await refreshFaqs(); // no optimistic updates; the service confirms first
  } catch (err) {
    supervisorView = { ...supervisorView, error: String(err) };
    renderSupervisor();
  }
}

function wire(): void {
  $("#start-session").addEventListener("click", () => void startSession());
  $("#send-turn").addEventListener("click", () => void postTurn());
  ($("#turn-text") as HTMLInputElement).addEventListener("keydown", (e) => {
    if (e.key === "Enter") void postTurn();
  });
  $("#manual-assist").addEventListener("click", () => void manualAssist());

  $("#suggestions").addEventListener("click", (e) => {
    const button = (e.target as HTMLElement).closest("button[data-action]");
    if (button) {
      void onSuggestionAction(
        button.getAttribute("data-action") ?? "",
        button.getAttribute("data-id") ?? "",
      );
    }
  });
  $("#answer").addEventListener("click", (e) => {
    const button = (e.target as HTMLElement).closest("button[data-action]");
    if (button) {
      void onSuggestionAction(
        button.getAttribute("data-action") ?? "",
        button.getAttribute("data-id") ?? "",
      );
    }
  });

  $("#connect-supervisor").addEventListener("click", () => {
    const token = ($("#supervisor-token") as HTMLInputElement).value || "supervisor-token";
    supervisorApi = new ApiClient(baseUrl(), token);
    supervisorView = initialSupervisorView();
    void refreshFaqs();
  });
  $("#answerless-toggle").addEventListener("change", (e) => {
    supervisorView = {
      ...supervisorView,
      answerlessOnly: (e.target as HTMLInputElement).checked,
      pageNumber: 1,
    };
    void refreshFaqs();
  });
  $("#create-faq").addEventListener("click", async () => {
    if (!supervisorApi) return;
    const question = ($("#new-question") as HTMLInputElement).value.trim();
    const answer = ($("#new-answer") as HTMLInputElement).value.trim() || null;
    if (!question) return;
    try {
      await supervisorApi.createFaq(question, answer);
      ($("#new-question") as HTMLInputElement).value = "";
      ($("#new-answer") as HTMLInputElement).value = "";
      await refreshFaqs();
    } catch (err) {
      supervisorView = { ...supervisorView, error: String(err) };
      renderSupervisor();
    }
  });
  $("#faq-panel").addEventListener("click", (e) => {
    const button = (e.target as HTMLElement).closest("button[data-action]");
    if (!button) return;
    const action = button.getAttribute("data-action") ?? "";
    if (action === "prev-page" || action === "next-page") {
      supervisorView = {
        ...supervisorView,
        pageNumber: Math.max(1, supervisorView.pageNumber + (action === "next-page" ? 1 : -1)),
      };
      void refreshFaqs();
      return;
    }
    const qid = button.getAttribute("data-qid") ?? "";
    const row = button.closest("tr") as HTMLElement | undefined;
    void onFaqAction(action, qid, row ?? undefined);
  });

  document.querySelectorAll("[data-tab]").forEach((tab) => {
    tab.addEventListener("click", () => {
      document.querySelectorAll(".tab-page").forEach((p) => p.classList.add("hidden"));
      $(`#${tab.getAttribute("data-tab")}`).classList.remove("hidden");
      document.querySelectorAll("[data-tab]").forEach((t) => t.classList.remove("active"));
      tab.classList.add("active");
    });
  });

  renderAgent();
}

wire();
