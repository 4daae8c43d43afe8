import { el, truncate } from "../dom.js";
import type { SessionSummary } from "../types.js";

export function renderSessionTile(
  doc: Document,
  session: SessionSummary,
  selected: boolean,
  onSelect: (sessionId: string) => void,
): HTMLElement {
  const status = session.terminal ?? session.phase;
  const tile = el(
    doc,
    "div",
    {
      class: `session-tile status-${status}${selected ? " selected" : ""}`,
      "data-session-id": session.id,
      "data-status": status,
    },
    [
      el(doc, "div", { class: "session-head" }, [
        el(doc, "span", { class: "session-id" }, [session.id.slice(0, 8)]),
        el(doc, "span", { class: `badge badge-${session.terminal ? "terminal" : "running"}` }, [
          status,
        ]),
      ]),
      el(doc, "div", { class: "session-task" }, [truncate(session.task, 120)]),
      el(doc, "div", { class: "session-meta" }, [
        `${session.provider_calls} calls`,
        session.answer ? " · answered" : "",
      ]),
    ],
  );
  tile.addEventListener("click", () => onSelect(session.id));
  return tile;
}
