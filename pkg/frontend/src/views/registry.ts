import { el, clear } from "../dom.js";
import type { ToolEntry } from "../types.js";

/** Manifest listing with on-demand source preview (read-only). */
export function renderRegistryList(
  doc: Document,
  tools: ToolEntry[],
  onPreview: (functionName: string, container: HTMLElement) => void,
): HTMLElement {
  const list = el(doc, "div", { class: "registry-list" });
  if (tools.length === 0) {
    list.appendChild(el(doc, "p", { class: "empty" }, ["registry is empty"]));
    return list;
  }
  for (const tool of tools) {
    const preview = el(doc, "div", { class: "tool-preview" });
    const toggle = el(doc, "button", { class: "btn tool-toggle", type: "button" }, [
      "view source",
    ]);
    toggle.addEventListener("click", () => {
      if (preview.childNodes.length > 0) {
        clear(preview);
      } else {
        onPreview(tool["function-name"], preview);
      }
    });
    list.appendChild(
      el(doc, "div", { class: "tool-entry", "data-function-name": tool["function-name"] }, [
        el(doc, "div", { class: "tool-head" }, [
          el(doc, "code", { class: "tool-fn" }, [tool["function-name"]]),
          el(doc, "span", { class: "tool-name" }, [tool.name]),
          toggle,
        ]),
        el(doc, "p", { class: "tool-description" }, [tool.description]),
        preview,
      ]),
    );
  }
  return list;
}
