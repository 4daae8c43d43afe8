import { el, clear } from "../dom.js";
import { highlightPython } from "../highlight.js";
import { lineDiff } from "../diff.js";
import type { ApprovalRequest, DecisionBody } from "../types.js";

export interface ApprovalHandlers {
  onDecide(request: ApprovalRequest, decision: DecisionBody): void | Promise<void>;
}

/** Render one pending approval as a card.
 *
 * Code reviews show the highlighted draft with an optional edit pane whose
 * changes preview as a line diff; approving with edits posts the edited
 * source. API key requests render password inputs only — entered values go
 * straight into the decision POST, the inputs are wiped before the request
 * is sent, and the values are never logged or written back into the DOM. */
export function renderApprovalCard(
  doc: Document,
  request: ApprovalRequest,
  handlers: ApprovalHandlers,
): HTMLElement {
  const card = el(doc, "article", {
    class: `approval-card approval-${request.kind}`,
    "data-request-id": request.id,
    "data-kind": request.kind,
    "data-created-at": String(request.created_at),
  });
  card.appendChild(
    el(doc, "header", { class: "approval-head" }, [
      el(doc, "span", { class: "approval-kind" }, [
        request.kind === "code_review" ? "code review" : "API keys",
      ]),
      el(doc, "span", { class: "approval-context" }, [request.context || request.id]),
      el(doc, "span", { class: "approval-session" }, [`session ${request.session_id.slice(0, 8)}`]),
    ]),
  );
  if (request.kind === "code_review") {
    renderCodeReview(doc, card, request, handlers);
  } else {
    renderKeyRequest(doc, card, request, handlers);
  }
  return card;
}

function renderCodeReview(
  doc: Document,
  card: HTMLElement,
  request: ApprovalRequest,
  handlers: ApprovalHandlers,
): void {
  const source = request.source ?? "";
  card.appendChild(highlightPython(doc, source));

  const editor = el(doc, "textarea", {
    class: "edit-pane hidden",
    rows: "14",
    spellcheck: "false",
  }) as HTMLTextAreaElement;
  editor.value = source;
  const diffPane = el(doc, "div", { class: "diff-pane hidden" });
  const refreshDiff = () => {
    clear(diffPane);
    for (const row of lineDiff(source, editor.value)) {
      diffPane.appendChild(el(doc, "div", { class: `diff-row diff-${row.kind}` }, [row.text]));
    }
  };
  editor.addEventListener("input", refreshDiff);

  const approveEdited = el(
    doc,
    "button",
    { class: "btn approve-edited hidden", type: "button" },
    ["approve with edits"],
  );
  approveEdited.addEventListener("click", () => {
    void handlers.onDecide(request, {
      verdict: "approve_edited",
      edited_source: editor.value,
    });
  });

  const editToggle = el(doc, "button", { class: "btn edit-toggle", type: "button" }, ["edit"]);
  editToggle.addEventListener("click", () => {
    editor.classList.toggle("hidden");
    diffPane.classList.toggle("hidden");
    approveEdited.classList.toggle("hidden");
    refreshDiff();
  });

  const approve = el(doc, "button", { class: "btn approve", type: "button" }, ["approve"]);
  approve.addEventListener("click", () => {
    void handlers.onDecide(request, { verdict: "approve" });
  });
  const reject = el(doc, "button", { class: "btn reject", type: "button" }, ["reject"]);
  reject.addEventListener("click", () => {
    void handlers.onDecide(request, { verdict: "reject" });
  });

  card.appendChild(editor);
  card.appendChild(diffPane);
  card.appendChild(
    el(doc, "div", { class: "approval-actions" }, [approve, approveEdited, reject, editToggle]),
  );
  if (request.source_hash) {
    card.appendChild(
      el(doc, "footer", { class: "approval-hash" }, [`sha256 ${request.source_hash.slice(0, 16)}…`]),
    );
  }
}

function renderKeyRequest(
  doc: Document,
  card: HTMLElement,
  request: ApprovalRequest,
  handlers: ApprovalHandlers,
): void {
  const names = request.api_names ?? [];
  const inputs = new Map<string, HTMLInputElement>();
  const form = el(doc, "div", { class: "key-form" });
  for (const name of names) {
    const input = el(doc, "input", {
      type: "password",
      class: "key-input",
      autocomplete: "off",
      placeholder: `key for ${name}`,
      "data-api-name": name,
    }) as HTMLInputElement;
    inputs.set(name, input);
    form.appendChild(el(doc, "label", { class: "key-label" }, [name, input]));
  }
  form.appendChild(
    el(doc, "p", { class: "key-note" }, ["Keys are sent once to the service and never shown again."]),
  );

  const submit = el(doc, "button", { class: "btn submit-keys", type: "button" }, ["provide keys"]);
  submit.addEventListener("click", () => {
    const keys: Record<string, string> = {};
    for (const [name, input] of inputs) {
      const value = input.value;
      input.value = ""; // wiped before the request leaves; never re-rendered
      if (value) {
        keys[name] = value;
      }
    }
    void handlers.onDecide(request, { verdict: "approve", keys });
  });
  const decline = el(doc, "button", { class: "btn reject decline-keys", type: "button" }, [
    "decline",
  ]);
  decline.addEventListener("click", () => {
    void handlers.onDecide(request, { verdict: "reject" });
  });

  card.appendChild(form);
  card.appendChild(el(doc, "div", { class: "approval-actions" }, [submit, decline]));
}

/** Reconcile the card list against the pending set without re-rendering
 * surviving cards (edits and half-typed keys must not be wiped by polls). */
export function syncApprovalCards(
  doc: Document,
  container: HTMLElement,
  pending: ApprovalRequest[],
  handlers: ApprovalHandlers,
): void {
  const wanted = new Set(pending.map((request) => request.id));
  for (const existing of Array.from(container.querySelectorAll(".approval-card"))) {
    const id = existing.getAttribute("data-request-id");
    if (id === null || !wanted.has(id)) {
      existing.remove();
    }
  }
  for (const request of pending) {
    if (!container.querySelector(`[data-request-id="${request.id}"]`)) {
      container.appendChild(renderApprovalCard(doc, request, handlers));
    }
  }
}
