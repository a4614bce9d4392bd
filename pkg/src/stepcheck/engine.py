"""The iterative verification loop.

For each claim: generate a question (with a predicate in predicate mode),
retrieve and summarize evidence, ask the verifier whether enough is known,
and repeat up to the question cap. The verdict comes from the final
reasoning prompt; hitting the cap without verifier approval forces one and
flags the trace.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
import os
import tempfile
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .core import (
    Claim,
    EvidenceSnippet,
    Predicate,
    QaStep,
    Role,
    RunConfig,
    SourceKind,
    StepTiming,
    Verdict,
    VerificationTrace,
    fingerprint,
    trace_to_json,
)
from .errors import (
    ClaimAborted,
    StepcheckError,
    StepTimeout,
    UnparsablePredicate,
    UnparsableQuestion,
    UnparsableVerdict,
)
from .evidence import Retriever
from .gateway import Gateway, user_request
from .prompts import (
    NO_EVIDENCE_ANSWER,
    PromptBanks,
    VerifierDecision,
    insert_note_before_cue,
    load_banks,
    parse_question,
    parse_question_with_predicate,
    parse_verdict,
    parse_verifier_decision,
    render_first_question,
    render_followup_question,
    render_predicate_first,
    render_predicate_followup,
    render_predicate_reasoner,
    render_reasoner,
    render_summarizer,
    render_verifier,
)

logger = logging.getLogger(__name__)

# A step that runs longer than this aborts the claim instead of silently
# truncating evidence. (In-flight HTTP calls are bounded by client timeouts;
# this is checked between calls.)
STEP_TIMEOUT_S = 60.0


class Phase(Enum):
    NEED_QUESTION = "need_question"
    NEED_ANSWER = "need_answer"
    NEED_DECISION = "need_decision"
    TERMINAL = "terminal"


# NEED_QUESTION -> TERMINAL is the abort edge: question generation failed on
# a later step and the verdict is forced over the steps gathered so far.
_ALLOWED_TRANSITIONS = {
    Phase.NEED_QUESTION: {Phase.NEED_ANSWER, Phase.TERMINAL},
    Phase.NEED_ANSWER: {Phase.NEED_DECISION},
    Phase.NEED_DECISION: {Phase.NEED_QUESTION, Phase.TERMINAL},
    Phase.TERMINAL: set(),
}


@dataclass
class EngineState:
    """Per-claim loop state; one instance per claim, never shared."""

    claim: Claim
    steps: list[QaStep] = field(default_factory=list)
    phase: Phase = Phase.NEED_QUESTION

    def advance(self, to: Phase) -> None:
        if to not in _ALLOWED_TRANSITIONS[self.phase]:
            raise ValueError(f"illegal phase transition {self.phase.value} -> {to.value}")
        self.phase = to


def _normalize_question(question: str) -> str:
    return " ".join(question.split()).casefold()


class Engine:
    """Drives the loop for one claim at a time; safe to reuse concurrently
    across claims because all per-claim state is local to each call."""

    def __init__(
        self,
        gateway: Gateway,
        retriever: Retriever,
        config: RunConfig,
        banks: Optional[PromptBanks] = None,
        clock: Optional[Callable[[], float]] = None,
    ):
        self._gateway = gateway
        self._retriever = retriever
        self._config = config
        self._banks = banks or load_banks(config.banks_dir)
        if clock is None:
            # Scripted runs must be bit-deterministic, so they get a fixed clock.
            clock = (lambda: 0.0) if gateway.deterministic else time.monotonic
        self._clock = clock
        self._fingerprint = fingerprint(config)

    # -- loop pieces --

    def next_question(
        self, claim: Claim, history: Sequence[QaStep]
    ) -> tuple[str, Optional[Predicate]]:
        """Generate the next question; re-ask once if it duplicates history."""
        prompt = self._question_prompt(claim, history)
        question, predicate = self._complete_question(prompt.text)
        seen = {_normalize_question(step.question) for step in history}
        if _normalize_question(question) in seen:
            retry_text = insert_note_before_cue(
                prompt.text,
                f'Note: the question "{question}" has already been asked. Ask a different question.',
            )
            question, predicate = self._complete_question(retry_text)
        return question, predicate

    def _question_prompt(self, claim: Claim, history: Sequence[QaStep]):
        if self._config.predicate_mode:
            if history:
                return render_predicate_followup(claim, history, self._banks)
            return render_predicate_first(claim, self._banks)
        if history:
            return render_followup_question(claim, history, self._banks)
        return render_first_question(claim, self._banks)

    def _complete_question(self, prompt_text: str) -> tuple[str, Optional[Predicate]]:
        completion = self._gateway.complete(
            user_request(Role.QUESTION_GEN, prompt_text, self._config)
        )
        if self._config.predicate_mode:
            return parse_question_with_predicate(completion.text)
        return parse_question(completion.text), None

    def answer_question(self, question: str) -> tuple[list[EvidenceSnippet], str, bool]:
        """Retrieve evidence and produce the step's answer text."""
        snippets = self._retriever.retrieve(question)
        if not snippets:
            return [], NO_EVIDENCE_ANSWER, True
        if self._config.source_kind is SourceKind.INTERNAL:
            # The internal-knowledge snippet already is a direct answer.
            return snippets, snippets[0].text, False
        prompt = render_summarizer(question, snippets)
        completion = self._gateway.complete(
            user_request(Role.SUMMARIZER, prompt.text, self._config)
        )
        if not completion.text.strip():
            return snippets, NO_EVIDENCE_ANSWER, True
        return snippets, completion.text, False

    def decide(self, claim: Claim, history: Sequence[QaStep]) -> VerifierDecision:
        prompt = render_verifier(claim, history, self._banks)
        completion = self._gateway.complete(user_request(Role.REASONER, prompt.text, self._config))
        return parse_verifier_decision(completion.text)

    def finalize(self, claim: Claim, history: Sequence[QaStep]) -> tuple[Verdict, str]:
        """Produce the verdict; one retry with an explicit label instruction."""
        if self._config.predicate_mode:
            prompt = render_predicate_reasoner(claim, history, self._banks)
        else:
            prompt = render_reasoner(claim, history, self._banks)
        completion = self._gateway.complete(user_request(Role.REASONER, prompt.text, self._config))
        try:
            return parse_verdict(completion.text)
        except UnparsableVerdict:
            retry_text = insert_note_before_cue(
                prompt.text,
                "Note: answer with a single bracketed label [SUPPORTED] or [REFUTED], "
                "followed by an explanation.",
            )
            completion = self._gateway.complete(
                user_request(Role.REASONER, retry_text, self._config)
            )
            try:
                return parse_verdict(completion.text)
            except UnparsableVerdict as exc:
                raise ClaimAborted(claim.id, f"unparsable verdict after retry: {exc}") from exc

    # -- the loop --

    def verify_claim(self, claim: Claim) -> VerificationTrace:
        if not claim.text.strip():
            raise ClaimAborted(claim.id, "empty claim text")
        state = EngineState(claim)
        timings: list[StepTiming] = []
        forced = True
        try:
            while len(state.steps) < self._config.max_questions:
                index = len(state.steps) + 1
                step_started = self._clock()
                try:
                    question, predicate = self.next_question(claim, state.steps)
                except (UnparsableQuestion, UnparsablePredicate) as exc:
                    if index == 1:
                        raise ClaimAborted(claim.id, f"first question failed: {exc}") from exc
                    # Later steps fall through to a forced verdict over what we have.
                    logger.warning("claim %s: question %d unparsable, forcing verdict", claim.id, index)
                    break
                state.advance(Phase.NEED_ANSWER)
                snippets, answer, no_evidence = self.answer_question(question)
                state.steps.append(
                    QaStep(
                        index=index,
                        question=question,
                        answer=answer,
                        snippets=tuple(snippets),
                        predicate=predicate,
                        no_evidence=no_evidence,
                    )
                )
                state.advance(Phase.NEED_DECISION)
                decision = self.decide(claim, state.steps)
                elapsed = self._clock() - step_started
                timings.append(StepTiming(index=index, seconds=elapsed))
                if elapsed > STEP_TIMEOUT_S:
                    raise ClaimAborted(
                        claim.id, f"step {index} exceeded {STEP_TIMEOUT_S:.0f}s"
                    ) from StepTimeout(f"step {index}: {elapsed:.1f}s")
                if decision is VerifierDecision.ENOUGH:
                    forced = False
                    state.advance(Phase.TERMINAL)
                    break
                if len(state.steps) < self._config.max_questions:
                    state.advance(Phase.NEED_QUESTION)
            if state.phase is not Phase.TERMINAL:
                state.advance(Phase.TERMINAL)
            verdict, explanation = self.finalize(claim, state.steps)
        except ClaimAborted:
            raise
        except StepcheckError as exc:
            raise ClaimAborted(claim.id, str(exc)) from exc
        return VerificationTrace(
            claim=claim,
            steps=tuple(state.steps),
            verdict=verdict,
            explanation=explanation,
            forced=forced,
            config_fingerprint=self._fingerprint,
            timings=tuple(timings),
        )


# -- run directory output --

def write_trace_file(traces: Iterable[VerificationTrace], path: Path) -> Path:
    """Write line-delimited trace records atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".partial")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            for trace in traces:
                handle.write(trace_to_json(trace))
                handle.write("\n")
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def write_manifest(
    path: Path,
    config: RunConfig,
    *,
    started: float,
    finished: float,
    completed: int,
    failed: int,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config_fingerprint": fingerprint(config),
        "model_name": config.model_name,
        "source_kind": config.source_kind.value,
        "predicate_mode": config.predicate_mode,
        "max_questions": config.max_questions,
        "started": _dt.datetime.fromtimestamp(started, tz=_dt.timezone.utc).isoformat(),
        "finished": _dt.datetime.fromtimestamp(finished, tz=_dt.timezone.utc).isoformat(),
        "completed": completed,
        "failed": failed,
    }
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".partial")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(json.dumps(manifest, indent=2, sort_keys=True))
            handle.write("\n")
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path
