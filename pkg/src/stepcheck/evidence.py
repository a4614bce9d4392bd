"""Evidence retrieval: web search snippets or model internal knowledge,
behind a persistent content-addressed cache for reproducible runs.

Web retrieval keeps the snippets of the first 5 results only. The search
provider is an adapter: anything returning (title, url, snippet) triples
works; the bundled adapter queries a privacy-focused search engine's HTML
endpoint with no extra dependencies.
"""

from __future__ import annotations

import hashlib
import html.parser
import json
import logging
import os
import tempfile
import time
import urllib.parse
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import httpx

from .core import (
    EvidenceSnippet,
    Role,
    RunConfig,
    SourceKind,
    canonical_json,
    fingerprint,
    snippet_from_record,
    snippet_to_record,
)
from .errors import SearchUnavailable
from .gateway import Gateway, user_request

logger = logging.getLogger(__name__)

CACHE_DIR_ENV = "STEPCHECK_CACHE_DIR"

WEB_RESULT_LIMIT = 5
# Keeps five snippets well inside the downstream 512-token completion budget.
SNIPPET_CHAR_CAP = 1200

INTERNAL_ANSWER_SUFFIX = "\nAnswer in one line."


@dataclass(frozen=True)
class SearchResult:
    title: str
    url: str
    snippet: str


@dataclass(frozen=True)
class SearchResultPage:
    query: str
    results: tuple[SearchResult, ...]
    fetched_at: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "results", tuple(self.results))


class SearchProvider(Protocol):
    def search(self, query: str, max_results: int) -> SearchResultPage: ...


class _ResultHtmlParser(html.parser.HTMLParser):
    """Pulls (title, url, snippet) triples out of the search engine's HTML."""

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.results: list[dict] = []
        self._capture: Optional[str] = None

    @staticmethod
    def _classes(attrs: list[tuple[str, Optional[str]]]) -> list[str]:
        for name, value in attrs:
            if name == "class" and value:
                return value.split()
        return []

    def handle_starttag(self, tag: str, attrs: list[tuple[str, Optional[str]]]) -> None:
        classes = self._classes(attrs)
        if tag == "a" and "result__a" in classes:
            href = dict(attrs).get("href") or ""
            self.results.append({"title": "", "url": _decode_redirect(href), "snippet": ""})
            self._capture = "title"
        elif "result__snippet" in classes and self.results:
            self._capture = "snippet"

    def handle_endtag(self, tag: str) -> None:
        if self._capture == "title" and tag == "a":
            self._capture = None
        elif self._capture == "snippet" and tag in ("a", "td", "div", "span"):
            self._capture = None

    def handle_data(self, data: str) -> None:
        if self._capture and self.results:
            self.results[-1][self._capture] += data


def _decode_redirect(href: str) -> str:
    """The engine wraps result links in a redirect with the target in `uddg`."""
    parsed = urllib.parse.urlparse(href)
    if parsed.path.endswith("/l/") or parsed.path == "/l":
        target = urllib.parse.parse_qs(parsed.query).get("uddg")
        if target:
            return target[0]
    if href.startswith("//"):
        return f"https:{href}"
    return href


def parse_search_html(page_html: str) -> list[SearchResult]:
    parser = _ResultHtmlParser()
    parser.feed(page_html)
    return [
        SearchResult(
            title=r["title"].strip(), url=r["url"], snippet=" ".join(r["snippet"].split())
        )
        for r in parser.results
        if r["url"]
    ]


class DuckDuckGoSearch:
    """Bundled web search adapter (HTML endpoint, no API key needed)."""

    ENDPOINT = "https://html.duckduckgo.com/html/"

    def __init__(
        self,
        client: Optional[httpx.Client] = None,
        attempts: int = 3,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self._client = client or httpx.Client(
            timeout=20.0,
            headers={"User-Agent": "Mozilla/5.0 (compatible; stepcheck/0.1)"},
            follow_redirects=True,
        )
        self._attempts = attempts
        self._sleep = sleep

    def search(self, query: str, max_results: int) -> SearchResultPage:
        last_reason = "no attempt made"
        for attempt in range(1, self._attempts + 1):
            try:
                response = self._client.post(self.ENDPOINT, data={"q": query})
            except httpx.HTTPError as exc:
                last_reason = f"transport error: {exc}"
            else:
                if response.status_code == 200:
                    results = parse_search_html(response.text)[:max_results]
                    return SearchResultPage(
                        query=query, results=tuple(results), fetched_at=time.time()
                    )
                last_reason = f"HTTP {response.status_code}"
            if attempt < self._attempts:
                self._sleep(float(attempt))
        raise SearchUnavailable(f"web search failed after {self._attempts} attempts: {last_reason}")


def cache_key(question: str, source_kind: SourceKind, config_fingerprint: str) -> str:
    """Deterministic key; question text is whitespace- and case-normalized."""
    normalized = " ".join(question.split()).casefold()
    payload = f"{source_kind.value}\n{normalized}\n{config_fingerprint}"
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def resolve_cache_dir(config: RunConfig) -> Path:
    env_value = os.environ.get(CACHE_DIR_ENV)
    if env_value:
        return Path(env_value)
    return config.cache_dir


class EvidenceCache:
    """Content-addressed snippet cache: one JSON file per key, written
    atomically so concurrent same-key writers are benign."""

    def __init__(self, root: Path):
        self.root = Path(root)

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> Optional[list[EvidenceSnippet]]:
        path = self._path(key)
        if not path.exists():
            return None
        record = json.loads(path.read_text(encoding="utf-8"))
        return [snippet_from_record(rec) for rec in record["snippets"]]

    def put(self, key: str, snippets: Sequence[EvidenceSnippet]) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = canonical_json({"key": key, "snippets": [snippet_to_record(s) for s in snippets]})
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                handle.write(payload)
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise

    def clear(self) -> int:
        """Remove every cached entry; returns the number of files removed."""
        removed = 0
        if not self.root.exists():
            return removed
        for file in sorted(self.root.rglob("*.json")):
            file.unlink()
            removed += 1
        for directory in sorted(self.root.rglob("*"), reverse=True):
            if directory.is_dir():
                try:
                    directory.rmdir()
                except OSError:
                    pass
        return removed


def _truncate(text: str) -> str:
    cleaned = text.strip()
    return cleaned[:SNIPPET_CHAR_CAP]


class Retriever:
    """Implements evidence lookup for a question against the configured source."""

    def __init__(
        self,
        config: RunConfig,
        cache: EvidenceCache,
        search: Optional[SearchProvider] = None,
        gateway: Optional[Gateway] = None,
    ):
        self._config = config
        self._cache = cache
        self._search = search
        self._gateway = gateway
        self._fingerprint = fingerprint(config)

    @classmethod
    def from_config(
        cls,
        config: RunConfig,
        gateway: Optional[Gateway] = None,
        search: Optional[SearchProvider] = None,
    ) -> "Retriever":
        if search is None and config.source_kind is SourceKind.WEB:
            search = DuckDuckGoSearch()
        return cls(config, EvidenceCache(resolve_cache_dir(config)), search, gateway)

    def retrieve(
        self, question: str, source_kind: Optional[SourceKind] = None
    ) -> list[EvidenceSnippet]:
        if not question.strip():
            raise ValueError("question must be non-empty")
        source = source_kind or self._config.source_kind
        key = cache_key(question, source, self._fingerprint)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        if source is SourceKind.WEB:
            snippets = self._retrieve_web(question)
        else:
            snippets = self._retrieve_internal(question)
        self._cache.put(key, snippets)
        return snippets

    def _retrieve_web(self, question: str) -> list[EvidenceSnippet]:
        if self._search is None:
            raise SearchUnavailable("no search provider configured")
        page = self._search.search(question, max_results=WEB_RESULT_LIMIT)
        snippets = []
        for rank, result in enumerate(page.results[:WEB_RESULT_LIMIT], start=1):
            snippets.append(
                EvidenceSnippet(
                    text=_truncate(result.snippet),
                    source_kind=SourceKind.WEB,
                    rank=rank,
                    source_ref=result.url,
                )
            )
        return snippets

    def _retrieve_internal(self, question: str) -> list[EvidenceSnippet]:
        if self._gateway is None:
            raise ValueError("internal-knowledge retrieval needs a model gateway")
        # The model answers the bare question directly; the answer doubles as
        # the evidence snippet, so no separate summarization pass is needed.
        completion = self._gateway.complete(
            user_request(Role.SUMMARIZER, f"{question}{INTERNAL_ANSWER_SUFFIX}", self._config)
        )
        if not completion.text.strip():
            return []
        return [
            EvidenceSnippet(
                text=_truncate(completion.text),
                source_kind=SourceKind.INTERNAL,
                rank=1,
                source_ref=completion.model_name,
            )
        ]
