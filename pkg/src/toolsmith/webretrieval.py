"""Search client and bounded page fetcher for API documentation, plus a
local stub server that replays recorded fixtures for deterministic runs.

The live wire shape is SerpAPI-like: GET <endpoint>/search?q=...&api_key=...
returning JSON with an "organic_results" array of {title, link, snippet}.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from html.parser import HTMLParser
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

import requests

from toolsmith.errors import SearchAuthError, SearchError

DEFAULT_MAX_PAGES = 2
DEFAULT_MAX_BYTES_PER_PAGE = 32 * 1024

_KEY_PARAM = re.compile(r"(api_key=)[^&\s]+")


def redact_url(url: str) -> str:
    """Strip the key from a search URL before it reaches any log/trace."""
    return _KEY_PARAM.sub(r"\1<<REDACTED:api_key>>", url)


@dataclass(frozen=True)
class SearchResult:
    title: str
    link: str
    snippet: str

    def to_dict(self) -> dict[str, str]:
        return {"title": self.title, "link": self.link, "snippet": self.snippet}


@dataclass(frozen=True)
class SearchResults:
    query: str
    results: tuple[SearchResult, ...] = ()


@dataclass(frozen=True)
class FetchedPage:
    url: str
    extracted_text: str


@dataclass(frozen=True)
class ApiDocBundle:
    """Everything retrieved about one API, ready for prompt assembly."""

    api_name: str
    snippets: tuple[SearchResult, ...] = ()
    fetched_pages: tuple[FetchedPage, ...] = ()
    failures: tuple[str, ...] = ()

    @property
    def empty(self) -> bool:
        return not self.snippets and not self.fetched_pages

    def total_chars(self) -> int:
        return sum(
            len(s.title) + len(s.snippet) for s in self.snippets
        ) + sum(len(p.extracted_text) for p in self.fetched_pages)


class _TextExtractor(HTMLParser):
    """Visible-text extraction: tags stripped, script/style dropped."""

    _SKIP = {"script", "style", "noscript", "template"}

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self._chunks: list[str] = []
        self._skip_depth = 0

    def handle_starttag(self, tag, attrs):
        if tag in self._SKIP:
            self._skip_depth += 1

    def handle_endtag(self, tag):
        if tag in self._SKIP and self._skip_depth:
            self._skip_depth -= 1

    def handle_data(self, data):
        if not self._skip_depth and data.strip():
            self._chunks.append(data)

    def text(self) -> str:
        return re.sub(r"\s+", " ", " ".join(self._chunks)).strip()


def extract_text(html: str) -> str:
    parser = _TextExtractor()
    parser.feed(html)
    parser.close()
    return parser.text()


class SearchClient:
    """Stateless search + page fetch; the key is read at send time only."""

    def __init__(self, endpoint: str, timeout: float = 15.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout

    def search(self, query: str, api_key: str | None = None) -> SearchResults:
        if not query.strip():
            raise ValueError("query must be non-blank")
        params = {"q": query}
        if api_key:
            params["api_key"] = api_key
        try:
            response = requests.get(
                f"{self.endpoint}/search", params=params, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise SearchError(f"search endpoint unreachable: {exc}")
        if response.status_code in (401, 403):
            raise SearchAuthError(
                f"search endpoint rejected the API key (HTTP {response.status_code})"
            )
        if response.status_code != 200:
            raise SearchError(f"search endpoint returned HTTP {response.status_code}")
        try:
            payload = response.json()
        except ValueError as exc:
            raise SearchError(f"search response is not JSON: {exc}")
        organic = payload.get("organic_results", [])
        if not isinstance(organic, list):
            raise SearchError("organic_results is not an array")
        results = tuple(
            SearchResult(
                title=str(item.get("title", "")),
                link=str(item.get("link", "")),
                snippet=str(item.get("snippet", "")),
            )
            for item in organic
            if isinstance(item, dict)
        )
        return SearchResults(query=query, results=results)

    def fetch_pages(
        self,
        api_name: str,
        results: SearchResults,
        max_pages: int = DEFAULT_MAX_PAGES,
        max_bytes_per_page: int = DEFAULT_MAX_BYTES_PER_PAGE,
    ) -> ApiDocBundle:
        """Fetch up to max_pages links in result order; failures are notes,
        never fatal."""
        if max_pages < 0:
            raise ValueError("max_pages must be >= 0")
        pages: list[FetchedPage] = []
        failures: list[str] = []
        for result in results.results[:max_pages] if max_pages else []:
            if not result.link:
                failures.append("result with empty link skipped")
                continue
            try:
                response = requests.get(result.link, timeout=self.timeout)
                response.raise_for_status()
            except requests.RequestException as exc:
                failures.append(f"{result.link}: {exc}")
                continue
            text = extract_text(response.text)[:max_bytes_per_page]
            pages.append(FetchedPage(url=result.link, extracted_text=text))
        return ApiDocBundle(
            api_name=api_name,
            snippets=results.results,
            fetched_pages=tuple(pages),
            failures=tuple(failures),
        )


class StubSearchServer:
    """Replays recorded search fixtures over localhost HTTP.

    Fixture directory layout:

        queries.json          {"queries": {"<q>": "file.json"},
                               "default": "file.json" (optional),
                               "require_api_key": "<value>" (optional)}
        <file>.json           SerpAPI-shaped response bodies
        pages/<name>.html     documents served at /pages/<name>.html

    The literal token {BASE} in any served body is rewritten to the live
    base URL, so fixtures can link to their own pages without knowing the
    port in advance.
    """

    def __init__(self, fixture_dir: str | Path, host: str = "127.0.0.1", port: int = 0):
        self.fixture_dir = Path(fixture_dir)
        self._host = host
        self._port = port
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        if self._server is None:
            raise RuntimeError("server not started")
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> str:
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # keep test output clean
                pass

            def do_GET(self):
                stub._handle(self)

        self._server = ThreadingHTTPServer((self._host, self._port), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self.base_url

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    # -- request handling ------------------------------------------------

    def _config(self) -> dict:
        path = self.fixture_dir / "queries.json"
        if not path.exists():
            return {}
        return json.loads(path.read_text(encoding="utf-8"))

    def _send(self, handler: BaseHTTPRequestHandler, status: int, body: str, ctype: str):
        data = body.replace("{BASE}", self.base_url).encode("utf-8")
        handler.send_response(status)
        handler.send_header("Content-Type", ctype)
        handler.send_header("Content-Length", str(len(data)))
        handler.end_headers()
        handler.wfile.write(data)

    def _handle(self, handler: BaseHTTPRequestHandler) -> None:
        parts = urlsplit(handler.path)
        if parts.path == "/search":
            self._handle_search(handler, parse_qs(parts.query))
            return
        if parts.path.startswith("/pages/"):
            name = Path(parts.path).name  # flatten any traversal attempt
            page = self.fixture_dir / "pages" / name
            if page.exists():
                ctype = "text/html" if page.suffix in (".html", ".htm") else "text/plain"
                self._send(handler, 200, page.read_text(encoding="utf-8"), ctype)
            else:
                self._send(handler, 404, json.dumps({"error": "no such page"}), "application/json")
            return
        self._send(handler, 404, json.dumps({"error": "no such route"}), "application/json")

    def _handle_search(self, handler: BaseHTTPRequestHandler, params: dict) -> None:
        config = self._config()
        required = config.get("require_api_key")
        if required is not None:
            supplied = params.get("api_key", [None])[0]
            if supplied != required:
                self._send(
                    handler, 401, json.dumps({"error": "invalid api key"}), "application/json"
                )
                return
        query = params.get("q", [""])[0]
        mapping = config.get("queries", {})
        filename = mapping.get(query, config.get("default"))
        if filename is None:
            self._send(
                handler, 404, json.dumps({"error": f"no fixture for query {query!r}"}),
                "application/json",
            )
            return
        fixture = self.fixture_dir / filename
        self._send(handler, 200, fixture.read_text(encoding="utf-8"), "application/json")
