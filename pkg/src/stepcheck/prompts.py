"""Prompt templates and output parsers for the three model roles.

Rendering is a pure function of (claim, history): the few-shot banks are
plain-text data files shipped with the package (override via
``RunConfig.banks_dir``), and every template ends with a fixed cue line that
the model is expected to complete.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .core import Claim, EvidenceSnippet, Predicate, QaStep, Verdict
from .errors import (
    EmptyHistory,
    MissingPredicate,
    NoSnippets,
    UnparsablePredicate,
    UnparsableQuestion,
    UnparsableVerdict,
)

# Fixed sentinel answer recorded for questions with no usable evidence.
NO_EVIDENCE_ANSWER = "No evidence found."


class TemplateId(Enum):
    FIRST_QUESTION = "first_question"
    FOLLOWUP_QUESTION = "followup_question"
    VERIFIER = "verifier"
    REASONER = "reasoner"
    PREDICATE_FIRST_QUESTION = "predicate_first_question"
    PREDICATE_FOLLOWUP = "predicate_followup"
    PREDICATE_REASONER = "predicate_reasoner"
    SUMMARIZER = "summarizer"


class VerifierDecision(Enum):
    ENOUGH = "enough"
    NOT_ENOUGH = "not_enough"


@dataclass(frozen=True)
class PromptText:
    text: str
    template_id: TemplateId


_BANK_FILES = {
    TemplateId.FIRST_QUESTION: "first_question.txt",
    TemplateId.FOLLOWUP_QUESTION: "followup_question.txt",
    TemplateId.VERIFIER: "verifier.txt",
    TemplateId.REASONER: "reasoner.txt",
    TemplateId.PREDICATE_FIRST_QUESTION: "predicate_first_question.txt",
    TemplateId.PREDICATE_FOLLOWUP: "predicate_followup.txt",
    TemplateId.PREDICATE_REASONER: "predicate_reasoner.txt",
}


def _parse_bank(raw: str) -> tuple[str, ...]:
    """Split a bank file into example blocks. Leading '#' lines are comments;
    a line containing only '---' separates blocks."""
    lines = raw.splitlines()
    start = 0
    while start < len(lines) and (not lines[start].strip() or lines[start].startswith("#")):
        start += 1
    blocks: list[list[str]] = [[]]
    for line in lines[start:]:
        if line.strip() == "---":
            blocks.append([])
        else:
            blocks[-1].append(line)
    examples = tuple("\n".join(block).strip("\n") for block in blocks)
    return tuple(block for block in examples if block.strip())


@dataclass(frozen=True)
class PromptBanks:
    """Few-shot example blocks for each template that uses them."""

    first_question: tuple[str, ...]
    followup_question: tuple[str, ...]
    verifier: tuple[str, ...]
    reasoner: tuple[str, ...]
    predicate_first_question: tuple[str, ...]
    predicate_followup: tuple[str, ...]
    predicate_reasoner: tuple[str, ...]

    def for_template(self, template_id: TemplateId) -> tuple[str, ...]:
        return getattr(self, template_id.value)


def load_banks(banks_dir: Optional[Path] = None) -> PromptBanks:
    """Load the packaged banks, or every ``<template>.txt`` under banks_dir."""

    def read(name: str) -> str:
        if banks_dir is not None:
            return (Path(banks_dir) / name).read_text(encoding="utf-8")
        return resources.files("stepcheck").joinpath(f"data/banks/{name}").read_text(
            encoding="utf-8"
        )

    fields = {tid.value: _parse_bank(read(fname)) for tid, fname in _BANK_FILES.items()}
    return PromptBanks(**fields)


def _join(blocks: Sequence[str], target: str) -> str:
    return "\n\n".join([*blocks, target])


def _answer_text(step: QaStep) -> str:
    if step.answer.strip():
        return step.answer
    return NO_EVIDENCE_ANSWER


def render_first_question(claim: Claim, banks: PromptBanks) -> PromptText:
    target = (
        f"Claim = {claim.text}\n"
        "To validate the above claim, the first simple question we need to ask is:\n"
        "Question ="
    )
    return PromptText(_join(banks.first_question, target), TemplateId.FIRST_QUESTION)


def render_followup_question(
    claim: Claim, history: Sequence[QaStep], banks: PromptBanks
) -> PromptText:
    if not history:
        raise EmptyHistory("follow-up question rendering needs at least one QA step")
    lines = [
        f"Claim = {claim.text}",
        "To validate the above claim, we need to ask the following simple questions sequentially:",
    ]
    for step in history:
        lines.append(f"Question {step.index} = {step.question}")
        lines.append(f"Answer {step.index} = {_answer_text(step)}")
    lines.append("Question =")
    return PromptText(_join(banks.followup_question, "\n".join(lines)), TemplateId.FOLLOWUP_QUESTION)


def render_verifier(claim: Claim, history: Sequence[QaStep], banks: PromptBanks) -> PromptText:
    if not history:
        raise EmptyHistory("verifier rendering needs at least one QA step")
    lines = [
        f"Claim = {claim.text}",
        "To validate the above claim, we have asked the following questions:",
    ]
    for step in history:
        lines.append(f"Question {step.index} = {step.question}")
        lines.append(f"Answer {step.index} = {_answer_text(step)}")
    lines.append("Can we know whether the claim is true or false now?")
    lines.append("Prediction =")
    return PromptText(_join(banks.verifier, "\n".join(lines)), TemplateId.VERIFIER)


def render_reasoner(claim: Claim, history: Sequence[QaStep], banks: PromptBanks) -> PromptText:
    if not history:
        raise EmptyHistory("final reasoning needs at least one QA step")
    lines = ["Question:", f"Is it true that {claim.text}?", "Context:"]
    for step in history:
        lines.append(f"{step.question} {_answer_text(step)}")
    lines.append("Prediction:")
    return PromptText(_join(banks.reasoner, "\n".join(lines)), TemplateId.REASONER)


def render_predicate_first(claim: Claim, banks: PromptBanks) -> PromptText:
    target = (
        f"Claim: {claim.text}\n"
        "\n"
        "To validate the above claim, we need to ask the first question with predicate:\n"
        "Question:"
    )
    return PromptText(
        _join(banks.predicate_first_question, target), TemplateId.PREDICATE_FIRST_QUESTION
    )


def render_predicate_followup(
    claim: Claim, history: Sequence[QaStep], banks: PromptBanks
) -> PromptText:
    if not history:
        raise EmptyHistory("follow-up question rendering needs at least one QA step")
    lines = [f"Claim: {claim.text}", ""]
    for step in history:
        if step.predicate is None:
            raise MissingPredicate(f"step {step.index} carries no predicate")
        lines.append(f"Question {step.index}:")
        lines.append(step.question)
        lines.append(f"Predicate {step.index}:")
        lines.append(step.predicate.render())
        lines.append(f"Answer {step.index}:")
        lines.append(_answer_text(step))
    lines.append("")
    lines.append("To validate the above claim, we need to ask the follow-up question with predicate:")
    lines.append("Follow-up Question:")
    return PromptText(_join(banks.predicate_followup, "\n".join(lines)), TemplateId.PREDICATE_FOLLOWUP)


def render_predicate_reasoner(
    claim: Claim, history: Sequence[QaStep], banks: PromptBanks
) -> PromptText:
    if not history:
        raise EmptyHistory("final reasoning needs at least one QA step")
    lines = ["Question:", f"Is it true that {claim.text}?", "Context:"]
    for step in history:
        if step.predicate is None:
            raise MissingPredicate(f"step {step.index} carries no predicate")
        lines.append(step.predicate.render())
    lines.append("")
    for step in history:
        lines.append(f"{step.question} {_answer_text(step)}")
    lines.append("Prediction:")
    return PromptText(
        _join(banks.predicate_reasoner, "\n".join(lines)), TemplateId.PREDICATE_REASONER
    )


def render_summarizer(question: str, snippets: Sequence[EvidenceSnippet]) -> PromptText:
    if not snippets:
        raise NoSnippets("summarizer rendering needs at least one snippet")
    lines = [
        "Summarize the numbered search results into a direct answer to the question.",
        "Use only the information in the results and answer in at most three sentences.",
        "",
        f"Question: {question}",
        "Results:",
    ]
    for snippet in snippets:
        lines.append(f"[{snippet.rank}] {snippet.text}")
    lines.append("Answer:")
    return PromptText("\n".join(lines), TemplateId.SUMMARIZER)


def insert_note_before_cue(prompt_text: str, note: str) -> str:
    """Add an instruction line just above the trailing cue line."""
    head, _, cue = prompt_text.rpartition("\n")
    if not head:
        return f"{note}\n{prompt_text}"
    return f"{head}\n{note}\n{cue}"


# --- output parsing ---

_QUESTION_MARKER = re.compile(r"Question(?:\s+\d+)?\s*=|Follow-up Question:")
_VERDICT_TOKEN = re.compile(r"\[(supported|refuted)\]", re.IGNORECASE)
_EXPLANATION_MARKER = re.compile(r"Explanation:\s*")


def parse_question(output: str) -> str:
    """Extract the generated question from a completion.

    Takes the text after the last question marker; without a marker, falls
    back to the last non-empty line if it ends with a question mark.
    """
    matches = list(_QUESTION_MARKER.finditer(output))
    if matches:
        tail = output[matches[-1].end():]
        for line in tail.splitlines():
            if line.strip():
                return line.strip()
        raise UnparsableQuestion(f"empty question after marker: {output!r}")
    lines = [line.strip() for line in output.splitlines() if line.strip()]
    if lines and lines[-1].endswith("?"):
        return lines[-1]
    raise UnparsableQuestion(f"no question found in completion: {output!r}")


def parse_verifier_decision(output: str) -> VerifierDecision:
    """Total: any unrecognized output keeps evidence gathering going."""
    lowered = output.lower()
    if "yes, we can know" in lowered:
        return VerifierDecision.ENOUGH
    if "no, we cannot know" in lowered:
        return VerifierDecision.NOT_ENOUGH
    return VerifierDecision.NOT_ENOUGH


def parse_verdict(output: str) -> tuple[Verdict, str]:
    """Take the last bracketed label (chain-of-thought text may mention both
    before concluding) and the text after an ``Explanation:`` marker."""
    tokens = _VERDICT_TOKEN.findall(output)
    if not tokens:
        raise UnparsableVerdict(f"no bracketed verdict token in completion: {output[:200]!r}")
    verdict = Verdict.SUPPORTED if tokens[-1].lower() == "supported" else Verdict.REFUTED
    explanation = output.strip()
    marker_matches = list(_EXPLANATION_MARKER.finditer(output))
    if marker_matches:
        explanation = output[marker_matches[-1].end():].strip()
    return verdict, explanation


def _split_top_level_args(inner: str) -> list[str]:
    args: list[str] = []
    depth = 0
    current: list[str] = []
    for ch in inner:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            args.append("".join(current))
            current = []
        else:
            current.append(ch)
    args.append("".join(current))
    return args


def parse_predicate(output: str) -> Predicate:
    """Parse ``Verb(arg, arg, ...) ::: instruction`` with the instruction part
    optional. Commas inside nested parentheses do not split arguments."""
    head, sep, instruction_text = output.strip().partition(":::")
    instruction = instruction_text.strip() if sep else None
    if instruction == "":
        instruction = None
    head = head.strip()
    open_idx = head.find("(")
    if open_idx <= 0 or not head.endswith(")"):
        raise UnparsablePredicate(f"not a verb(arguments) expression: {output!r}")
    verb = head[:open_idx].strip()
    if not verb:
        raise UnparsablePredicate(f"empty predicate verb: {output!r}")
    arguments = [arg.strip() for arg in _split_top_level_args(head[open_idx + 1:-1])]
    if any(not arg for arg in arguments):
        raise UnparsablePredicate(f"empty predicate argument: {output!r}")
    return Predicate(verb=verb, arguments=tuple(arguments), instruction=instruction)


def parse_question_with_predicate(output: str) -> tuple[str, Predicate]:
    """Split a predicate-mode completion into its question and predicate.

    The expected shape is the question text followed by a ``Predicate:`` line
    and the predicate expression.
    """
    before, sep, after = output.rpartition("Predicate:")
    if not sep:
        raise UnparsablePredicate(f"no 'Predicate:' section in completion: {output!r}")
    question = parse_question(before)
    for line in after.splitlines():
        if line.strip():
            return question, parse_predicate(line.strip())
    raise UnparsablePredicate(f"empty 'Predicate:' section in completion: {output!r}")
