/** Wire shapes of the HTTP API the console consumes. The console never
 * invents state: everything rendered is derived from these payloads. */

export interface UsageTotals {
  prompt_tokens: number;
  completion_tokens: number;
  total_tokens?: number;
  cost_usd?: string;
  [key: string]: unknown;
}

export interface SessionSummary {
  id: string;
  task: string;
  phase: string;
  terminal: string | null;
  answer: string;
  error: string | null;
  created_at: number;
  finished_at: number | null;
  provider_calls: number;
  usage: UsageTotals;
}

export interface TraceEvent {
  seq: number;
  kind: string;
  [key: string]: unknown;
}

export type ApprovalKind = "code_review" | "api_key_request";

export interface ApprovalRequest {
  id: string;
  session_id: string;
  kind: ApprovalKind;
  created_at: number;
  context: string;
  source?: string;
  source_hash?: string;
  api_names?: string[];
}

export interface DecisionBody {
  verdict: "approve" | "approve_edited" | "reject";
  edited_source?: string;
  keys?: Record<string, string>;
}

export interface ToolEntry {
  name: string;
  description: string;
  "function-name": string;
}

export interface ToolDetail extends ToolEntry {
  source: string;
  [key: string]: unknown;
}
