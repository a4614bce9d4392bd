"""Binary precision/recall/F1 over a run, the benchmark executor, and
comparison reports against fixed previously-reported rows.

The positive class is Supported throughout, and reports say so in their
header. Zero denominators yield 0 so tiny runs still produce stable numbers.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence

from .core import RunConfig, Verdict, VerificationTrace
from .corpus import LabeledClaim
from .engine import Engine, write_manifest, write_trace_file
from .errors import ClaimAborted, LengthMismatch, RunFailed
from .evidence import Retriever
from .gateway import Gateway
from .prompts import PromptBanks

logger = logging.getLogger(__name__)

POSITIVE_CLASS = Verdict.SUPPORTED


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float

    def __post_init__(self) -> None:
        for value in (self.precision, self.recall, self.f1):
            if not 0.0 <= value <= 1.0:
                raise ValueError("metrics live in [0, 1]")


def confusion(predictions: Sequence[Verdict], golds: Sequence[Verdict]) -> ConfusionCounts:
    if len(predictions) != len(golds):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(golds)} golds")
    if not predictions:
        raise ValueError("confusion needs at least one pair")
    tp = fp = fn = tn = 0
    for pred, gold in zip(predictions, golds):
        if pred is POSITIVE_CLASS and gold is POSITIVE_CLASS:
            tp += 1
        elif pred is POSITIVE_CLASS:
            fp += 1
        elif gold is POSITIVE_CLASS:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def precision_recall_f1(counts: ConfusionCounts) -> Metrics:
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(precision=precision, recall=recall, f1=f1)


@dataclass(frozen=True)
class Failure:
    claim_id: str
    reason: str


@dataclass(frozen=True)
class BenchmarkResult:
    metrics: Metrics
    counts: ConfusionCounts
    traces: tuple[VerificationTrace, ...]
    failures: tuple[Failure, ...]

    @property
    def completed(self) -> int:
        return len(self.traces)


def run_benchmark(
    dataset: Sequence[LabeledClaim],
    config: RunConfig,
    *,
    gateway: Gateway,
    retriever: Retriever,
    banks: Optional[PromptBanks] = None,
    clock: Optional[Callable[[], float]] = None,
    out_dir: Optional[Path] = None,
) -> BenchmarkResult:
    """Verify every claim with bounded concurrency and score the verdicts.

    Aborted claims are excluded from the metrics and listed as failures.
    Results aggregate in dataset order regardless of completion order.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    ids = [item.claim.id for item in dataset]
    if len(set(ids)) != len(ids):
        raise ValueError("claim ids must be unique within a run")

    started = time.time()
    engine = Engine(gateway, retriever, config, banks=banks, clock=clock)
    # A shared scripted backend pops entries in call order, so scripted runs
    # stay sequential to keep that order well-defined.
    workers = 1 if gateway.deterministic else config.concurrency_limit

    outcomes: list[Optional[VerificationTrace]] = [None] * len(dataset)
    failures: list[Failure] = []

    def work(position: int) -> None:
        item = dataset[position]
        outcomes[position] = engine.verify_claim(item.claim)

    if workers == 1:
        ordered_failures: list[tuple[int, Failure]] = []
        for position in range(len(dataset)):
            try:
                work(position)
            except ClaimAborted as exc:
                ordered_failures.append((position, Failure(exc.claim_id, exc.reason)))
        failures = [failure for _, failure in ordered_failures]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(work, position) for position in range(len(dataset))]
            failure_map: dict[int, Failure] = {}
            for position, future in enumerate(futures):
                exc = future.exception()
                if exc is None:
                    continue
                if isinstance(exc, ClaimAborted):
                    failure_map[position] = Failure(exc.claim_id, exc.reason)
                else:
                    raise exc
            failures = [failure_map[p] for p in sorted(failure_map)]

    traces = [trace for trace in outcomes if trace is not None]
    if not traces:
        raise RunFailed(f"all {len(dataset)} claims aborted")

    predictions = [trace.verdict for trace in traces]
    golds = [
        item.gold for item, trace in zip(dataset, outcomes) if trace is not None
    ]
    counts = confusion(predictions, golds)
    metrics = precision_recall_f1(counts)
    result = BenchmarkResult(
        metrics=metrics, counts=counts, traces=tuple(traces), failures=tuple(failures)
    )

    if out_dir is not None:
        out_dir = Path(out_dir)
        write_trace_file(result.traces, out_dir / "traces.jsonl")
        write_manifest(
            out_dir / "manifest.json",
            config,
            started=started,
            finished=time.time(),
            completed=result.completed,
            failed=len(result.failures),
        )
        (out_dir / "failures.json").write_text(
            json.dumps(
                [{"claim_id": f.claim_id, "reason": f.reason} for f in result.failures],
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
    return result


# -- comparison reports --

@dataclass(frozen=True)
class ReportRow:
    label: str
    dataset: str
    precision_pct: float
    recall_pct: float
    f1_pct: float


def load_reference_rows() -> list[ReportRow]:
    payload = json.loads(
        resources.files("stepcheck")
        .joinpath("data/reference_results.json")
        .read_text(encoding="utf-8")
    )
    return [
        ReportRow(
            label=f"{row['system']} ({row['source']})",
            dataset=row["dataset"],
            precision_pct=row["precision"],
            recall_pct=row["recall"],
            f1_pct=row["f1"],
        )
        for row in payload["rows"]
    ]


def emit_report(
    results: Sequence[tuple[str, Metrics]],
    out_path: Path,
    *,
    dataset: str = "-",
    include_reference: bool = True,
) -> tuple[Path, Path]:
    """Write plain-text and CSV comparison tables.

    ``results`` rows are tagged with ``dataset``; reference rows carry their
    own dataset tags. The best F1 within each dataset is marked.
    """
    if not results:
        raise ValueError("emit_report needs at least one result row")
    rows = [
        ReportRow(
            label=label,
            dataset=dataset,
            precision_pct=round(metrics.precision * 100, 1),
            recall_pct=round(metrics.recall * 100, 1),
            f1_pct=round(metrics.f1 * 100, 1),
        )
        for label, metrics in results
    ]
    if include_reference:
        rows.extend(load_reference_rows())

    best: dict[str, float] = {}
    for row in rows:
        best[row.dataset] = max(best.get(row.dataset, -1.0), row.f1_pct)

    def is_best(row: ReportRow) -> bool:
        return row.f1_pct == best[row.dataset]

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    txt_path = out_path.with_suffix(".txt")
    csv_path = out_path.with_suffix(".csv")

    label_width = max(len(r.label) for r in rows) + 2
    dataset_width = max(len(r.dataset) for r in rows) + 2
    lines = [
        "Verification results (positive class: Supported; values in percent).",
        "The best F1 within each dataset is marked with *.",
        "",
        f"{'system':<{label_width}}{'dataset':<{dataset_width}}{'P':>7}{'R':>7}{'F1':>7}",
    ]
    for row in rows:
        marker = " *" if is_best(row) else ""
        lines.append(
            f"{row.label:<{label_width}}{row.dataset:<{dataset_width}}"
            f"{row.precision_pct:>7.1f}{row.recall_pct:>7.1f}{row.f1_pct:>7.1f}{marker}"
        )
    txt_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    with csv_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["system", "dataset", "precision", "recall", "f1", "best"])
        for row in rows:
            writer.writerow(
                [
                    row.label,
                    row.dataset,
                    f"{row.precision_pct:.1f}",
                    f"{row.recall_pct:.1f}",
                    f"{row.f1_pct:.1f}",
                    "yes" if is_best(row) else "",
                ]
            )
    return txt_path, csv_path
