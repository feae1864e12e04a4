// DOM construction. Everything user-visible is set via textContent, and the
// whole view is rebuilt from state on every change.

import type { ChatMessage, ChatViewState, DashboardState, SourcePanel } from "./state.js";
import { STAGES, stageEnabled, stageStatus } from "./state.js";
import { QUERY_MODES } from "./types.js";
import type { Citation } from "./types.js";

export interface ChatHandlers {
  onSend: (question: string) => void;
  onModeChange: (mode: string) => void;
  onCitationClick: (citation: Citation) => void;
  onRetry: (question: string) => void;
}

export interface DashboardHandlers {
  onBuildStage: (stage: string) => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, className?: string, text?: string): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderCitations(citations: Citation[],
                         handlers: ChatHandlers): HTMLElement {
  const row = el("div", "citations");
  for (const citation of citations) {
    const chip = el("button", "citation-chip", `${citation.kind}:${citation.ref_id}`);
    chip.dataset.kind = citation.kind;
    chip.dataset.refId = citation.ref_id;
    chip.addEventListener("click", () => handlers.onCitationClick(citation));
    row.appendChild(chip);
  }
  return row;
}

function renderMessage(message: ChatMessage, handlers: ChatHandlers): HTMLElement {
  const wrap = el("div", "message");
  const question = el("div", "bubble question", message.question);
  question.dataset.mode = message.mode;
  wrap.appendChild(question);
  if (message.answer) {
    const answer = el("div", "bubble answer", message.answer.text);
    wrap.appendChild(answer);
    wrap.appendChild(renderCitations(message.answer.citations, handlers));
    const trace = el("details", "trace");
    trace.appendChild(el("summary", undefined, "trace"));
    const pre = el("pre");
    pre.textContent = JSON.stringify(message.answer.trace, null, 2);
    trace.appendChild(pre);
    wrap.appendChild(trace);
  } else if (message.error) {
    const error = el("div", "bubble error",
                     `${message.error.code}: ${message.error.message}`);
    wrap.appendChild(error);
    if (message.error.code === "network") {
      const retry = el("button", "retry", "retry");
      retry.addEventListener("click", () => handlers.onRetry(message.question));
      wrap.appendChild(retry);
    }
  } else {
    wrap.appendChild(el("div", "bubble answer pending", "..."));
  }
  return wrap;
}

function renderSourcePanel(panel: SourcePanel): HTMLElement {
  const aside = el("aside", "source-panel");
  aside.appendChild(el("h3", undefined, panel.title));
  if (panel.breadcrumbs.length) {
    aside.appendChild(el("div", "breadcrumbs", panel.breadcrumbs.join(" > ")));
  }
  if (panel.unavailable) {
    aside.appendChild(el("p", "unavailable", "source unavailable"));
  } else {
    aside.appendChild(el("p", "source-text", panel.text));
  }
  return aside;
}

export function renderChat(state: ChatViewState, handlers: ChatHandlers): HTMLElement {
  const root = el("section", "chat-view");

  if (state.banner) {
    const banner = el("div", "banner");
    banner.appendChild(el("span", undefined, state.banner));
    const link = el("a", "banner-link", "open build dashboard");
    link.setAttribute("href", "#build");
    banner.appendChild(link);
    root.appendChild(banner);
  }

  const log = el("div", "messages");
  for (const message of state.messages) {
    log.appendChild(renderMessage(message, handlers));
  }
  root.appendChild(log);

  if (state.sourcePanel) root.appendChild(renderSourcePanel(state.sourcePanel));

  const form = el("form", "composer");
  const select = el("select", "mode-select");
  for (const mode of QUERY_MODES) {
    const option = el("option", undefined, mode);
    option.value = mode;
    select.appendChild(option);
  }
  select.value = state.mode;
  select.addEventListener("change", () => handlers.onModeChange(select.value));

  const input = el("input", "question-input");
  input.setAttribute("type", "text");
  input.setAttribute("placeholder", "Ask about the indexed regulations");

  const send = el("button", "send", "send");
  send.setAttribute("type", "submit");
  send.disabled = state.pending;

  form.appendChild(select);
  form.appendChild(input);
  form.appendChild(send);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    if (!state.pending && input.value.trim()) handlers.onSend(input.value.trim());
  });
  root.appendChild(form);
  return root;
}

export function renderDashboard(state: DashboardState,
                                handlers: DashboardHandlers): HTMLElement {
  const root = el("section", "dashboard");
  root.appendChild(el("h2", undefined, "index build"));

  if (state.error) root.appendChild(el("div", "build-error", state.error));

  const grid = el("div", "stages");
  for (const stage of STAGES) {
    const card = el("div", "stage-card");
    card.dataset.stage = stage;
    card.appendChild(el("h4", undefined, stage));
    card.appendChild(el("div", "stage-status", stageStatus(state.manifest, stage)));
    const button = el("button", "stage-build", `build ${stage}`);
    button.disabled = !stageEnabled(state, stage);
    button.addEventListener("click", () => handlers.onBuildStage(stage));
    card.appendChild(button);
    grid.appendChild(card);
  }
  root.appendChild(grid);

  const counts = el("dl", "counts");
  const manifestCounts = state.manifest?.counts ?? {};
  for (const key of Object.keys(manifestCounts).sort()) {
    counts.appendChild(el("dt", undefined, key));
    const dd = el("dd", undefined, String(manifestCounts[key]));
    dd.dataset.count = key;
    counts.appendChild(dd);
  }
  root.appendChild(counts);
  return root;
}
