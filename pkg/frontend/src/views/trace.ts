import { el, truncate } from "../dom.js";
import type { TraceEvent } from "../types.js";

/** One event, one row, appended in arrival order. The detail column is a
 * compact JSON rendering of the event body so every kind — including ones
 * added later — stays inspectable. */
export function renderTraceRow(doc: Document, event: TraceEvent): HTMLElement {
  return el(
    doc,
    "div",
    { class: `trace-row trace-${event.kind}`, "data-seq": String(event.seq) },
    [
      el(doc, "span", { class: "trace-seq" }, [String(event.seq)]),
      el(doc, "span", { class: "trace-kind" }, [event.kind]),
      el(doc, "span", { class: "trace-detail" }, [summarize(event)]),
    ],
  );
}

function summarize(event: TraceEvent): string {
  const { seq: _seq, kind: _kind, ...rest } = event;
  const body = JSON.stringify(rest);
  return body === "{}" ? "" : truncate(body, 200);
}
