"""Core domain types: claims, QA steps, traces, verdicts, and run configuration.

Every type here is immutable after construction and safe to share across
threads. Traces serialize to a canonical JSON record (schema
``stepcheck-trace/1``), one object per trace, line-delimited when batched.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional

TRACE_SCHEMA = "stepcheck-trace/1"


class Verdict(Enum):
    """Binary outcome of a verification run. There is no third label."""

    SUPPORTED = "Supported"
    REFUTED = "Refuted"


class SourceKind(Enum):
    """Where evidence comes from: live web search or the model itself."""

    WEB = "web"
    INTERNAL = "internal"


class Role(Enum):
    """The three model roles in the pipeline."""

    QUESTION_GEN = "question_gen"
    SUMMARIZER = "summarizer"
    REASONER = "reasoner"


@dataclass(frozen=True)
class Claim:
    """A natural-language statement under verification."""

    text: str
    id: str
    origin: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("claim text must be non-empty")
        if not self.id:
            raise ValueError("claim id must be non-empty")


@dataclass(frozen=True)
class Predicate:
    """A structured question form: verb(arg1, arg2, ...) with an optional
    instruction describing what to verify."""

    verb: str
    arguments: tuple[str, ...]
    instruction: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "arguments", tuple(self.arguments))
        if not self.verb or self.verb != self.verb.strip():
            raise ValueError("predicate verb must be non-empty and trimmed")
        if not self.arguments:
            raise ValueError("predicate needs at least one argument")
        for arg in self.arguments:
            if not arg or arg != arg.strip():
                raise ValueError("predicate arguments must be non-empty and trimmed")
        if self.instruction is not None and not self.instruction.strip():
            raise ValueError("predicate instruction, when present, must be non-empty")

    def render(self) -> str:
        """Canonical text form; parsing it back yields an equal value."""
        head = f"{self.verb}({', '.join(self.arguments)})"
        if self.instruction is None:
            return head
        return f"{head} ::: {self.instruction}"


@dataclass(frozen=True)
class EvidenceSnippet:
    """One piece of evidence for a question."""

    text: str
    source_kind: SourceKind
    rank: int
    source_ref: Optional[str] = None

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValueError("snippet rank starts at 1")
        if self.source_kind is SourceKind.WEB and self.rank > 5:
            raise ValueError("web snippets are capped at the first 5 results")


@dataclass(frozen=True)
class QaStep:
    """One iteration of the loop: a question, its evidence, and the answer."""

    index: int
    question: str
    answer: str
    snippets: tuple[EvidenceSnippet, ...] = ()
    predicate: Optional[Predicate] = None
    no_evidence: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "snippets", tuple(self.snippets))
        if self.index < 1:
            raise ValueError("step index starts at 1")
        if not self.question.strip():
            raise ValueError("step question must be non-empty")
        if not self.answer.strip() and not self.no_evidence:
            raise ValueError("step answer may be empty only when no_evidence is set")


@dataclass(frozen=True)
class StepTiming:
    """Wall-clock duration of one QA step."""

    index: int
    seconds: float


@dataclass(frozen=True)
class VerificationTrace:
    """The complete record of one claim's verification."""

    claim: Claim
    steps: tuple[QaStep, ...]
    verdict: Verdict
    explanation: str
    forced: bool
    config_fingerprint: str
    timings: tuple[StepTiming, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "timings", tuple(self.timings))
        if not self.steps:
            raise ValueError("a trace holds at least one QA step")
        for position, step in enumerate(self.steps, start=1):
            if step.index != position:
                raise ValueError("step indices must be consecutive starting at 1")


@dataclass(frozen=True)
class RunConfig:
    """Pipeline configuration. Defaults match the reference protocol:
    up to five questions, temperature 0, 512 max completion tokens."""

    model_name: str = "gpt-4o-mini"
    source_kind: SourceKind = SourceKind.WEB
    predicate_mode: bool = False
    max_questions: int = 5
    temperature: float = 0.0
    max_tokens: int = 512
    concurrency_limit: int = 1
    cache_dir: Path = Path(".stepcheck-cache")
    banks_dir: Optional[Path] = None
    role_overrides: Optional[Mapping[Role, str]] = None

    def __post_init__(self) -> None:
        if self.max_questions < 1:
            raise ValueError("max_questions must be at least 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be at least 1")
        if self.concurrency_limit < 1:
            raise ValueError("concurrency_limit must be at least 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        object.__setattr__(self, "cache_dir", Path(self.cache_dir))
        if self.banks_dir is not None:
            object.__setattr__(self, "banks_dir", Path(self.banks_dir))

    def model_for(self, role: Role) -> str:
        if self.role_overrides and role in self.role_overrides:
            return self.role_overrides[role]
        return self.model_name


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def fingerprint(config: RunConfig) -> str:
    """Deterministic digest of the fields that change pipeline behaviour.

    Operational knobs (cache location, concurrency) are excluded so that a
    warmed cache stays valid when they change.
    """
    overrides = None
    if config.role_overrides:
        overrides = {role.value: name for role, name in config.role_overrides.items()}
    payload = {
        "model_name": config.model_name,
        "source_kind": config.source_kind.value,
        "predicate_mode": config.predicate_mode,
        "max_questions": config.max_questions,
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
        "banks_dir": str(config.banks_dir) if config.banks_dir else None,
        "role_overrides": overrides,
    }
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


# --- trace record serialization ---

def _predicate_to_record(p: Optional[Predicate]) -> Optional[dict]:
    if p is None:
        return None
    return {"verb": p.verb, "arguments": list(p.arguments), "instruction": p.instruction}


def _predicate_from_record(rec: Optional[dict]) -> Optional[Predicate]:
    if rec is None:
        return None
    return Predicate(rec["verb"], tuple(rec["arguments"]), rec.get("instruction"))


def snippet_to_record(snippet: EvidenceSnippet) -> dict:
    return {
        "text": snippet.text,
        "source_kind": snippet.source_kind.value,
        "rank": snippet.rank,
        "source_ref": snippet.source_ref,
    }


def snippet_from_record(rec: Mapping[str, Any]) -> EvidenceSnippet:
    return EvidenceSnippet(
        text=rec["text"],
        source_kind=SourceKind(rec["source_kind"]),
        rank=rec["rank"],
        source_ref=rec.get("source_ref"),
    )


def trace_to_record(trace: VerificationTrace) -> dict:
    return {
        "schema": TRACE_SCHEMA,
        "claim": {"text": trace.claim.text, "id": trace.claim.id, "origin": trace.claim.origin},
        "steps": [
            {
                "index": s.index,
                "question": s.question,
                "predicate": _predicate_to_record(s.predicate),
                "snippets": [snippet_to_record(sn) for sn in s.snippets],
                "answer": s.answer,
                "no_evidence": s.no_evidence,
            }
            for s in trace.steps
        ],
        "verdict": {"label": trace.verdict.value},
        "explanation": trace.explanation,
        "forced": trace.forced,
        "config_fingerprint": trace.config_fingerprint,
        "timings": [{"index": t.index, "seconds": t.seconds} for t in trace.timings],
    }


def trace_from_record(record: Mapping[str, Any]) -> VerificationTrace:
    if record.get("schema") != TRACE_SCHEMA:
        raise ValueError(f"unsupported trace schema: {record.get('schema')!r}")
    claim_rec = record["claim"]
    steps = tuple(
        QaStep(
            index=s["index"],
            question=s["question"],
            answer=s["answer"],
            snippets=tuple(snippet_from_record(sn) for sn in s["snippets"]),
            predicate=_predicate_from_record(s.get("predicate")),
            no_evidence=s["no_evidence"],
        )
        for s in record["steps"]
    )
    return VerificationTrace(
        claim=Claim(text=claim_rec["text"], id=claim_rec["id"], origin=claim_rec.get("origin")),
        steps=steps,
        verdict=Verdict(record["verdict"]["label"]),
        explanation=record["explanation"],
        forced=record["forced"],
        config_fingerprint=record["config_fingerprint"],
        timings=tuple(StepTiming(t["index"], t["seconds"]) for t in record["timings"]),
    )


def trace_to_json(trace: VerificationTrace) -> str:
    return canonical_json(trace_to_record(trace))


def trace_from_json(line: str) -> VerificationTrace:
    return trace_from_record(json.loads(line))
