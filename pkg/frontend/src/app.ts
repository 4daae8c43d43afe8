import { ApiClient, ApiError } from "./api.js";
import { clear, el } from "./dom.js";
import { highlightPython } from "./highlight.js";
import {
  ConsoleViewState,
  emptyState,
  withApprovals,
  withRegistry,
  withSelection,
  withSessions,
} from "./state.js";
import { streamEvents, type StreamHandle, type StreamStatus } from "./stream.js";
import type { ApprovalRequest, DecisionBody, TraceEvent } from "./types.js";
import { syncApprovalCards } from "./views/approvals.js";
import { renderRegistryList } from "./views/registry.js";
import { renderSessionTile } from "./views/sessions.js";
import { renderTraceRow } from "./views/trace.js";

export interface AppOptions {
  document: Document;
  /** Origin of the service, "" when served by the service itself. */
  base: string;
  fetchImpl: typeof fetch;
  pollIntervalMs?: number;
  streamRetryMs?: number;
}

/** The single-page console: polls sessions/approvals/registry, streams the
 * selected session's trace, and posts decisions. All view state is derived
 * from API responses; the only mutating requests are task submission and
 * approval decisions. */
export class ConsoleApp {
  readonly api: ApiClient;
  state: ConsoleViewState = emptyState();

  private readonly doc: Document;
  private readonly base: string;
  private readonly fetchImpl: typeof fetch;
  private readonly pollInterval: number;
  private readonly streamRetry: number;
  private timer: ReturnType<typeof setInterval> | null = null;
  private bannerTimer: ReturnType<typeof setTimeout> | null = null;
  private stream: StreamHandle | null = null;
  private refreshing = false;
  private registryFingerprint = "";

  constructor(options: AppOptions) {
    this.doc = options.document;
    this.base = options.base;
    this.fetchImpl = options.fetchImpl;
    this.api = new ApiClient(options.base, options.fetchImpl);
    this.pollInterval = options.pollIntervalMs ?? 400;
    this.streamRetry = options.streamRetryMs ?? 1000;
  }

  start(): void {
    this.mount();
    void this.refresh();
    this.timer = setInterval(() => void this.refresh(), this.pollInterval);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
    if (this.bannerTimer !== null) {
      clearTimeout(this.bannerTimer);
      this.bannerTimer = null;
    }
    this.stream?.stop();
    this.stream = null;
  }

  // -- skeleton -------------------------------------------------------------

  private mount(): void {
    const doc = this.doc;
    let root = doc.getElementById("console-root");
    if (root === null) {
      root = el(doc, "div", { id: "console-root" });
      doc.body.appendChild(root);
    }
    if (doc.getElementById("sessions") !== null) {
      return; // already mounted
    }

    const taskInput = el(doc, "input", {
      id: "task-input",
      type: "text",
      placeholder: "describe a task…",
      autocomplete: "off",
    }) as HTMLInputElement;
    const taskSubmit = el(doc, "button", { id: "task-submit", class: "btn primary", type: "button" }, [
      "run task",
    ]);
    taskSubmit.addEventListener("click", () => void this.submitTask(taskInput));

    root.appendChild(
      el(doc, "header", { class: "masthead" }, [
        el(doc, "h1", {}, ["toolsmith console"]),
        el(doc, "div", { class: "task-form" }, [taskInput, taskSubmit]),
        el(doc, "span", { id: "stream-status", class: "stream-status" }, ["idle"]),
      ]),
    );
    root.appendChild(el(doc, "div", { id: "banner", class: "banner hidden" }));
    root.appendChild(
      el(doc, "main", { class: "layout" }, [
        el(doc, "section", { id: "sessions-panel", class: "panel" }, [
          el(doc, "h2", {}, ["sessions"]),
          el(doc, "div", { id: "sessions" }),
        ]),
        el(doc, "section", { id: "approvals-panel", class: "panel" }, [
          el(doc, "h2", {}, ["approvals"]),
          el(doc, "div", { id: "approvals" }),
        ]),
        el(doc, "section", { id: "trace-panel", class: "panel" }, [
          el(doc, "h2", {}, ["trace"]),
          el(doc, "div", { id: "trace" }),
        ]),
        el(doc, "section", { id: "registry-panel", class: "panel" }, [
          el(doc, "h2", {}, ["registry"]),
          el(doc, "div", { id: "registry" }),
        ]),
      ]),
    );
  }

  private panel(id: string): HTMLElement {
    const node = this.doc.getElementById(id);
    if (node === null) {
      throw new Error(`console skeleton is missing #${id}`);
    }
    return node as HTMLElement;
  }

  // -- polling --------------------------------------------------------------

  async refresh(): Promise<void> {
    if (this.refreshing) {
      return;
    }
    this.refreshing = true;
    try {
      const [sessions, approvals, tools] = await Promise.all([
        this.api.listSessions(),
        this.api.listApprovals(),
        this.api.listTools(),
      ]);
      this.state = withSessions(this.state, sessions);
      this.state = withApprovals(this.state, approvals);
      this.state = withRegistry(this.state, tools);
      this.renderSessions();
      this.renderApprovals();
      this.renderRegistry();
    } catch {
      this.setStatus("unreachable");
    } finally {
      this.refreshing = false;
    }
  }

  private renderSessions(): void {
    const container = this.panel("sessions");
    clear(container);
    if (this.state.sessions.length === 0) {
      container.appendChild(el(this.doc, "p", { class: "empty" }, ["no sessions yet"]));
      return;
    }
    for (const session of this.state.sessions) {
      container.appendChild(
        renderSessionTile(this.doc, session, session.id === this.state.selectedSession, (id) =>
          this.selectSession(id),
        ),
      );
    }
  }

  private renderApprovals(): void {
    const container = this.panel("approvals");
    syncApprovalCards(this.doc, container, this.state.pendingApprovals, {
      onDecide: (request, decision) => this.decide(request, decision),
    });
    if (this.state.pendingApprovals.length === 0 && container.childNodes.length === 0) {
      container.appendChild(el(this.doc, "p", { class: "empty approvals-empty" }, ["nothing pending"]));
    } else {
      container.querySelector(".approvals-empty")?.remove();
    }
  }

  private renderRegistry(): void {
    const fingerprint = JSON.stringify(this.state.registryView);
    if (fingerprint === this.registryFingerprint) {
      return; // unchanged: keep any open source previews
    }
    this.registryFingerprint = fingerprint;
    const container = this.panel("registry");
    clear(container);
    container.appendChild(
      renderRegistryList(this.doc, this.state.registryView, (functionName, preview) =>
        void this.previewTool(functionName, preview),
      ),
    );
  }

  private async previewTool(functionName: string, preview: HTMLElement): Promise<void> {
    try {
      const detail = await this.api.getTool(functionName);
      clear(preview);
      preview.appendChild(highlightPython(this.doc, detail.source));
    } catch (error) {
      this.showBanner(error instanceof Error ? error.message : "failed to load tool");
    }
  }

  // -- actions ----------------------------------------------------------------

  async submitTask(input: HTMLInputElement): Promise<void> {
    const task = input.value.trim();
    if (!task) {
      this.showBanner("enter a task first");
      return;
    }
    try {
      const sessionId = await this.api.submitTask(task);
      input.value = "";
      this.selectSession(sessionId);
      await this.refresh();
    } catch (error) {
      this.showBanner(error instanceof Error ? error.message : "task submission failed");
    }
  }

  async decide(request: ApprovalRequest, decision: DecisionBody): Promise<void> {
    try {
      await this.api.decide(request.id, decision);
      this.panel("approvals")
        .querySelector(`[data-request-id="${request.id}"]`)
        ?.remove();
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.showBanner("resolved elsewhere");
      } else {
        this.showBanner(error instanceof Error ? error.message : "decision failed");
      }
    }
    await this.refresh();
  }

  selectSession(sessionId: string): void {
    if (this.state.selectedSession === sessionId) {
      return;
    }
    this.state = withSelection(this.state, sessionId);
    this.stream?.stop();
    const container = this.panel("trace");
    clear(container);
    this.stream = streamEvents({
      base: this.base,
      sessionId,
      fetchImpl: this.fetchImpl,
      retryDelayMs: this.streamRetry,
      onEvent: (event) => this.onTraceEvent(container, event),
      onStatus: (status) => this.setStatus(status),
    });
    this.renderSessions();
  }

  private onTraceEvent(container: HTMLElement, event: TraceEvent): void {
    container.appendChild(renderTraceRow(this.doc, event));
    if (event.kind === "approval_requested" || event.kind === "approval_decided") {
      void this.refresh(); // surface pending approvals without waiting a tick
    }
    if (event.kind === "terminal") {
      void this.refresh();
    }
  }

  // -- plumbing ---------------------------------------------------------------

  private setStatus(status: StreamStatus | "unreachable"): void {
    const node = this.doc.getElementById("stream-status");
    if (node !== null) {
      node.textContent = status;
    }
  }

  showBanner(message: string): void {
    const banner = this.panel("banner");
    banner.textContent = message;
    banner.classList.remove("hidden");
    if (this.bannerTimer !== null) {
      clearTimeout(this.bannerTimer);
    }
    this.bannerTimer = setTimeout(() => banner.classList.add("hidden"), 4000);
  }

}
