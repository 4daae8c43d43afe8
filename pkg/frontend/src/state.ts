import type { ApprovalRequest, SessionSummary, ToolEntry } from "./types.js";

/** Everything the console shows, derived solely from HTTP API responses.
 * Reducers return new states; nothing here mutates core data. */
export interface ConsoleViewState {
  sessions: SessionSummary[];
  selectedSession: string | null;
  pendingApprovals: ApprovalRequest[];
  registryView: ToolEntry[];
}

export function emptyState(): ConsoleViewState {
  return {
    sessions: [],
    selectedSession: null,
    pendingApprovals: [],
    registryView: [],
  };
}

export function withSessions(
  state: ConsoleViewState,
  sessions: SessionSummary[],
): ConsoleViewState {
  const ordered = [...sessions].sort((a, b) => b.created_at - a.created_at);
  return { ...state, sessions: ordered };
}

export function withApprovals(
  state: ConsoleViewState,
  approvals: ApprovalRequest[],
): ConsoleViewState {
  const ordered = [...approvals].sort((a, b) => a.created_at - b.created_at);
  return { ...state, pendingApprovals: ordered };
}

export function withRegistry(state: ConsoleViewState, tools: ToolEntry[]): ConsoleViewState {
  return { ...state, registryView: tools };
}

export function withSelection(
  state: ConsoleViewState,
  sessionId: string | null,
): ConsoleViewState {
  return { ...state, selectedSession: sessionId };
}
