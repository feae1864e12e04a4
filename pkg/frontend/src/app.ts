// Wiring: owns the state, issues API calls, re-renders on every change.
// At most one chat request is in flight per session (send disabled while
// pending); the dashboard polls the manifest and disables controls during
// builds.

import { ApiClient, ApiRequestError } from "./api.js";
import { renderChat, renderDashboard } from "./render.js";
import {
  ChatViewState, DashboardState, applyAnswer, applyChatError,
  applyNetworkFailure, fetchSource, initialChatState, initialDashboardState,
  sourceUnavailable, startQuestion,
} from "./state.js";
import type { Citation, QueryMode } from "./types.js";

export class App {
  chat: ChatViewState = initialChatState();
  dashboard: DashboardState = initialDashboardState();
  view: "chat" | "build" = "chat";

  constructor(private root: HTMLElement, private client: ApiClient) {}

  render(): void {
    this.root.replaceChildren();
    const nav = document.createElement("nav");
    for (const view of ["chat", "build"] as const) {
      const link = document.createElement("a");
      link.textContent = view;
      link.setAttribute("href", `#${view}`);
      if (view === this.view) link.className = "active";
      link.addEventListener("click", (event) => {
        event.preventDefault();
        this.view = view;
        this.render();
      });
      nav.appendChild(link);
    }
    this.root.appendChild(nav);

    if (this.view === "chat") {
      this.root.appendChild(renderChat(this.chat, {
        onSend: (question) => void this.send(question),
        onModeChange: (mode) => {
          this.chat = { ...this.chat, mode: mode as QueryMode };
          this.render();
        },
        onCitationClick: (citation) => void this.openCitation(citation),
        onRetry: (question) => void this.send(question),
      }));
    } else {
      this.root.appendChild(renderDashboard(this.dashboard, {
        onBuildStage: (stage) => void this.buildStage(stage),
      }));
    }
  }

  async send(question: string): Promise<void> {
    if (this.chat.pending) return;
    this.chat = startQuestion(this.chat, question);
    this.render();
    try {
      const response = await this.client.chat(question, this.chat.mode,
                                              this.chat.sessionId);
      this.chat = applyAnswer(this.chat, response.session_id, response.answer);
    } catch (error) {
      if (error instanceof ApiRequestError) {
        this.chat = applyChatError(this.chat, error);
      } else {
        this.chat = applyNetworkFailure(this.chat, String(error));
      }
    }
    this.render();
  }

  async openCitation(citation: Citation): Promise<void> {
    try {
      this.chat = { ...this.chat, sourcePanel: await fetchSource(this.client, citation) };
    } catch {
      this.chat = { ...this.chat,
                    sourcePanel: sourceUnavailable(citation.kind, citation.ref_id) };
    }
    this.render();
  }

  async refreshManifest(): Promise<void> {
    const before = JSON.stringify(this.dashboard.manifest);
    try {
      const health = await this.client.health();
      this.dashboard = { ...this.dashboard, manifest: health.manifest };
    } catch (error) {
      this.dashboard = { ...this.dashboard, error: String(error) };
    }
    // Re-render only when something changed, so polling never clobbers typing.
    const changed = JSON.stringify(this.dashboard.manifest) !== before;
    if (this.view === "build" && (changed || this.dashboard.error)) {
      this.render();
    }
  }

  async buildStage(stage: string): Promise<void> {
    if (this.dashboard.building) return;
    this.dashboard = { ...this.dashboard, building: true, error: null };
    this.render();
    try {
      await this.client.build([stage]);
      this.dashboard = { ...this.dashboard, building: false };
      this.render();
      await this.refreshManifest();
    } catch (error) {
      const message = error instanceof ApiRequestError
        ? `${error.body.code}: ${error.body.message} ${JSON.stringify(error.body.details)}`
        : String(error);
      this.dashboard = { ...this.dashboard, building: false, error: message };
      this.render();
    }
  }
}

export function bootstrap(root: HTMLElement, baseUrl: string,
                          pollMs = 5000): App {
  const app = new App(root, new ApiClient(baseUrl));
  app.view = location.hash === "#build" ? "build" : "chat";
  window.addEventListener("hashchange", () => {
    app.view = location.hash === "#build" ? "build" : "chat";
    app.render();
  });
  app.render();
  void app.refreshManifest();
  if (pollMs > 0) setInterval(() => void app.refreshManifest(), pollMs);
  return app;
}
