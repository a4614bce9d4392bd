"""stepcheck: step-by-step claim verification with full reasoning traces."""

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
    trace_from_json,
    trace_to_json,
)
from .engine import Engine
from .errors import ClaimAborted, StepcheckError
from .evaluation import Metrics, confusion, emit_report, precision_recall_f1, run_benchmark
from .evidence import EvidenceCache, Retriever, cache_key
from .gateway import Gateway, HttpBackend, ScriptedBackend, scripted_backend
from .prompts import VerifierDecision, load_banks

__version__ = "0.1.0"

__all__ = [
    "Claim",
    "ClaimAborted",
    "Engine",
    "EvidenceCache",
    "EvidenceSnippet",
    "Gateway",
    "HttpBackend",
    "Metrics",
    "Predicate",
    "QaStep",
    "Retriever",
    "Role",
    "RunConfig",
    "ScriptedBackend",
    "SourceKind",
    "StepTiming",
    "StepcheckError",
    "Verdict",
    "VerificationTrace",
    "VerifierDecision",
    "cache_key",
    "confusion",
    "emit_report",
    "fingerprint",
    "load_banks",
    "precision_recall_f1",
    "run_benchmark",
    "scripted_backend",
    "trace_from_json",
    "trace_to_json",
]
