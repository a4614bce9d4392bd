"""Exception taxonomy shared by every stepcheck module."""

from __future__ import annotations


class StepcheckError(Exception):
    """Base class for all errors raised by this package."""


# --- model gateway ---

class InvalidRequest(StepcheckError):
    """A chat request violates its construction invariants."""


class GatewayError(StepcheckError):
    """Base for gateway failures; carries the requesting role and attempt count."""

    def __init__(self, message: str, *, role: str = "?", attempts: int = 0):
        super().__init__(f"{message} (role={role}, attempts={attempts})")
        self.role = role
        self.attempts = attempts


class BackendUnavailable(GatewayError):
    """Transient backend failures persisted through every retry."""


class AuthError(GatewayError):
    """The backend rejected the configured credentials."""


class ScriptExhausted(StepcheckError):
    """A scripted backend received more calls than it has entries."""


# --- prompt rendering and output parsing ---

class EmptyHistory(StepcheckError):
    """A history-based template was rendered with no QA steps."""


class MissingPredicate(StepcheckError):
    """Predicate-mode rendering found a QA step without a predicate."""


class NoSnippets(StepcheckError):
    """The summarizer template was rendered with no evidence snippets."""


class UnparsableQuestion(StepcheckError):
    """No question could be extracted from a model completion."""


class UnparsablePredicate(StepcheckError):
    """A predicate expression does not match the verb(arguments) grammar."""


class UnparsableVerdict(StepcheckError):
    """A completion contains neither a [SUPPORTED] nor a [REFUTED] token."""


# --- evidence retrieval ---

class SearchUnavailable(StepcheckError):
    """The web search endpoint failed after every retry."""


# --- verification engine ---

class StepTimeout(StepcheckError):
    """A single QA step exceeded the wall-clock budget."""


class ClaimAborted(StepcheckError):
    """Verification of one claim failed; wraps the underlying cause."""

    def __init__(self, claim_id: str, reason: str):
        super().__init__(f"claim {claim_id!r} aborted: {reason}")
        self.claim_id = claim_id
        self.reason = reason


# --- dataset loading ---

class SchemaError(StepcheckError):
    """An input file is missing required fields or is structurally invalid."""


class LabelError(StepcheckError):
    """A record carries a label missing from the dataset's mapping table."""


# --- evaluation ---

class LengthMismatch(StepcheckError):
    """Prediction and gold vectors have different lengths."""


class RunFailed(StepcheckError):
    """Every claim in a benchmark run aborted; no metrics can be computed."""
