/** Tiny Python syntax highlighter. Output is built exclusively from text
 * nodes and class names — untrusted source can never become markup. */

const PY_KEYWORDS = new Set([
  "False", "None", "True", "and", "as", "assert", "async", "await", "break",
  "class", "continue", "def", "del", "elif", "else", "except", "finally",
  "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal",
  "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
]);

const TOKEN_RE =
  /("""[\s\S]*?"""|'''[\s\S]*?'''|"(?:\\.|[^"\\\n])*"|'(?:\\.|[^'\\\n])*'|#[^\n]*|@[A-Za-z_][\w.]*|\b\d+(?:\.\d+)?\b|\b[A-Za-z_]\w*\b)/g;

function classify(token: string): string {
  if (token.startsWith("#")) return "tok-comment";
  if (token.startsWith('"') || token.startsWith("'")) return "tok-string";
  if (token.startsWith("@")) return "tok-decorator";
  if (/^\d/.test(token)) return "tok-number";
  if (PY_KEYWORDS.has(token)) return "tok-keyword";
  return "tok-name";
}

export function highlightPython(doc: Document, source: string): HTMLElement {
  const pre = doc.createElement("pre");
  pre.className = "code";
  let last = 0;
  for (const match of source.matchAll(TOKEN_RE)) {
    const start = match.index ?? 0;
    const token = match[0];
    if (start > last) {
      pre.appendChild(doc.createTextNode(source.slice(last, start)));
    }
    const span = doc.createElement("span");
    span.className = classify(token);
    span.textContent = token;
    pre.appendChild(span);
    last = start + token.length;
  }
  if (last < source.length) {
    pre.appendChild(doc.createTextNode(source.slice(last)));
  }
  return pre;
}
