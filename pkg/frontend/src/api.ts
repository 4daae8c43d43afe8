import type {
  ApprovalRequest,
  DecisionBody,
  SessionSummary,
  ToolDetail,
  ToolEntry,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** Thin typed client over the service endpoints. The only mutating calls
 * the console ever makes are submitTask (POST /tasks) and decide
 * (POST /approvals/{id}); everything else is a read. */
export class ApiClient {
  constructor(
    private readonly base: string,
    private readonly fetchImpl: typeof fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const response = await this.fetchImpl(`${this.base}${path}`, init);
    const text = await response.text();
    let payload: unknown = null;
    if (text) {
      try {
        payload = JSON.parse(text);
      } catch {
        payload = null;
      }
    }
    if (!response.ok) {
      const message =
        payload !== null && typeof payload === "object" && "error" in payload
          ? String((payload as { error: unknown }).error)
          : `HTTP ${response.status}`;
      throw new ApiError(response.status, message);
    }
    return payload;
  }

  private post(path: string, body: unknown): Promise<unknown> {
    return this.request(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async listSessions(): Promise<SessionSummary[]> {
    const payload = (await this.request("/sessions")) as { sessions: SessionSummary[] };
    return payload.sessions;
  }

  async getSession(sessionId: string): Promise<SessionSummary> {
    return (await this.request(`/sessions/${sessionId}`)) as SessionSummary;
  }

  async getReport(sessionId: string): Promise<Record<string, unknown>> {
    return (await this.request(`/sessions/${sessionId}/report`)) as Record<string, unknown>;
  }

  async submitTask(task: string): Promise<string> {
    const payload = (await this.post("/tasks", { task })) as { session_id: string };
    return payload.session_id;
  }

  async listApprovals(): Promise<ApprovalRequest[]> {
    const payload = (await this.request("/approvals")) as { approvals: ApprovalRequest[] };
    return payload.approvals;
  }

  async decide(requestId: string, decision: DecisionBody): Promise<void> {
    await this.post(`/approvals/${requestId}`, decision);
  }

  async listTools(): Promise<ToolEntry[]> {
    const payload = (await this.request("/tools")) as { tools: ToolEntry[] };
    return payload.tools;
  }

  async getTool(functionName: string): Promise<ToolDetail> {
    return (await this.request(`/tools/${functionName}`)) as ToolDetail;
  }
}
