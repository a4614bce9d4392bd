"""Shared fixtures and helpers: scripted gateways, canned search providers,
warm caches, and randomized domain-value generators."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import pytest

from stepcheck.core import (
    Claim,
    EvidenceSnippet,
    Predicate,
    QaStep,
    RunConfig,
    SourceKind,
    StepTiming,
    Verdict,
    VerificationTrace,
    fingerprint,
)
from stepcheck.engine import Engine
from stepcheck.evidence import EvidenceCache, Retriever, SearchResult, SearchResultPage, cache_key
from stepcheck.gateway import Gateway, ScriptedBackend
from stepcheck.prompts import PromptBanks, load_banks


@pytest.fixture(scope="session")
def banks() -> PromptBanks:
    return load_banks()


@dataclass
class CannedSearch:
    """Serves fixed result pages and counts how often the network is 'hit'."""

    pages: dict[str, list[SearchResult]] = field(default_factory=dict)
    calls: int = 0

    def add(self, query: str, results: Sequence[SearchResult]) -> None:
        self.pages[query] = list(results)

    def search(self, query: str, max_results: int) -> SearchResultPage:
        self.calls += 1
        results = self.pages.get(query, [])[:max_results]
        return SearchResultPage(query=query, results=tuple(results), fetched_at=0.0)


def make_results(count: int, stem: str = "result") -> list[SearchResult]:
    return [
        SearchResult(
            title=f"{stem} {i}",
            url=f"https://example.org/{stem}/{i}",
            snippet=f"snippet text for {stem} {i}",
        )
        for i in range(1, count + 1)
    ]


def make_config(tmp_path: Path, **overrides) -> RunConfig:
    overrides.setdefault("model_name", "scripted-model")
    overrides.setdefault("cache_dir", tmp_path / "cache")
    return RunConfig(**overrides)


def seed_cache(
    cache: EvidenceCache,
    config: RunConfig,
    question: str,
    snippets: Sequence[EvidenceSnippet],
    source_kind: Optional[SourceKind] = None,
) -> str:
    key = cache_key(question, source_kind or config.source_kind, fingerprint(config))
    cache.put(key, snippets)
    return key


def web_snippets(texts: Sequence[str]) -> list[EvidenceSnippet]:
    return [
        EvidenceSnippet(
            text=text,
            source_kind=SourceKind.WEB,
            rank=rank,
            source_ref=f"https://example.org/{rank}",
        )
        for rank, text in enumerate(texts, start=1)
    ]


@dataclass
class ScriptedSetup:
    engine: Engine
    backend: ScriptedBackend
    gateway: Gateway
    retriever: Retriever
    cache: EvidenceCache
    config: RunConfig


def scripted_engine(
    tmp_path: Path,
    script: Sequence[str],
    *,
    config: Optional[RunConfig] = None,
    search: Optional[CannedSearch] = None,
    banks: Optional[PromptBanks] = None,
) -> ScriptedSetup:
    config = config or make_config(tmp_path)
    backend = ScriptedBackend(script)
    gateway = Gateway(backend, config)
    cache = EvidenceCache(config.cache_dir)
    retriever = Retriever(config, cache, search=search, gateway=gateway)
    engine = Engine(gateway, retriever, config, banks=banks)
    return ScriptedSetup(
        engine=engine,
        backend=backend,
        gateway=gateway,
        retriever=retriever,
        cache=cache,
        config=config,
    )


def make_claim(text: str, claim_id: str = "c-1") -> Claim:
    return Claim(text=text, id=claim_id, origin="test")


def random_predicate(rng: random.Random) -> Predicate:
    # Reserved characters "(", ")", "," and ":::" stay out of the fields.
    alphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 -_'"

    def token() -> str:
        while True:
            value = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 12))).strip()
            if value:
                return value

    instruction = token() if rng.random() < 0.5 else None
    return Predicate(
        verb=token().replace(" ", ""),
        arguments=tuple(token() for _ in range(rng.randint(1, 4))),
        instruction=instruction,
    )


def random_trace(rng: random.Random, index: int) -> VerificationTrace:
    def text() -> str:
        alphabet = "abcdefghijklmnopqrstuvwxyz äöüßéčñ漢字?!.,:="
        return "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 40))).strip() or "x"

    steps = []
    for step_index in range(1, rng.randint(1, 5) + 1):
        no_evidence = rng.random() < 0.2
        source = rng.choice([SourceKind.WEB, SourceKind.INTERNAL])
        snippets = tuple(
            EvidenceSnippet(
                text=text(),
                source_kind=source,
                rank=rank,
                source_ref=text() if rng.random() < 0.8 else None,
            )
            for rank in range(1, rng.randint(0, 5) + 1)
        )
        steps.append(
            QaStep(
                index=step_index,
                question=text() + "?",
                answer="" if no_evidence else text() + ".",
                snippets=() if no_evidence else snippets,
                predicate=random_predicate(rng) if rng.random() < 0.5 else None,
                no_evidence=no_evidence,
            )
        )
    return VerificationTrace(
        claim=Claim(text=text() + ".", id=f"t-{index}", origin=rng.choice([None, "scifact"])),
        steps=tuple(steps),
        verdict=rng.choice([Verdict.SUPPORTED, Verdict.REFUTED]),
        explanation=text(),
        forced=rng.random() < 0.3,
        config_fingerprint=f"{rng.getrandbits(128):032x}",
        timings=tuple(
            StepTiming(index=i + 1, seconds=rng.random() * 10) for i in range(len(steps))
        ),
    )
