"""Command-line entry point: verify single claims, run dataset benchmarks,
manage the evidence cache, and emit comparison reports.

Configuration precedence: flags > environment > config file > defaults.
The config file is JSON at ./stepcheck.json (override with --config).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional

import click

from .core import Claim, RunConfig, SourceKind
from .corpus import FORMATS, load
from .engine import Engine, write_trace_file
from .errors import ClaimAborted, RunFailed, StepcheckError
from .evaluation import Metrics, emit_report, run_benchmark
from .evidence import EvidenceCache, Retriever, resolve_cache_dir
from .gateway import Gateway, HttpBackend, ScriptedBackend

DEFAULT_CONFIG_FILE = Path("stepcheck.json")

_CONFIG_KEYS = {
    "model": "model_name",
    "source": "source_kind",
    "predicates": "predicate_mode",
    "max_questions": "max_questions",
    "temperature": "temperature",
    "max_tokens": "max_tokens",
    "concurrency": "concurrency_limit",
    "cache_dir": "cache_dir",
    "banks_dir": "banks_dir",
}


def _build_config(config_file: Optional[Path], **flags) -> RunConfig:
    values: dict = {}
    path = config_file or DEFAULT_CONFIG_FILE
    if path.exists():
        try:
            file_values = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise click.UsageError(f"invalid config file {path}: {exc}")
        for key, field in _CONFIG_KEYS.items():
            if key in file_values:
                values[field] = file_values[key]
    for key, field in _CONFIG_KEYS.items():
        if flags.get(key) is not None:
            values[field] = flags[key]
    if "source_kind" in values and not isinstance(values["source_kind"], SourceKind):
        values["source_kind"] = SourceKind(values["source_kind"])
    try:
        return RunConfig(**values)
    except (ValueError, TypeError) as exc:
        raise click.UsageError(str(exc))


def _build_backend(backend_spec: str):
    if backend_spec.startswith("scripted:"):
        script_path = Path(backend_spec.split(":", 1)[1])
        if not script_path.exists():
            raise click.UsageError(f"script file not found: {script_path}")
        entries = json.loads(script_path.read_text(encoding="utf-8"))
        if not isinstance(entries, list) or not all(isinstance(e, str) for e in entries):
            raise click.UsageError(f"{script_path} must hold a JSON array of strings")
        return ScriptedBackend(entries)
    if backend_spec == "http":
        return HttpBackend()
    raise click.UsageError(f"unknown backend {backend_spec!r}; use 'http' or 'scripted:PATH'")


def _build_engine(config: RunConfig, backend_spec: str) -> tuple[Engine, Gateway]:
    gateway = Gateway(_build_backend(backend_spec), config)
    retriever = Retriever.from_config(config, gateway=gateway)
    return Engine(gateway, retriever, config), gateway


def _common_options(fn):
    fn = click.option("--model", default=None, help="Base model name for all roles.")(fn)
    fn = click.option(
        "--source",
        type=click.Choice(["web", "internal"]),
        default=None,
        help="Evidence source.",
    )(fn)
    fn = click.option(
        "--predicates/--no-predicates",
        "predicates",
        default=None,
        help="Decompose questions into verb(subject, object) predicates.",
    )(fn)
    fn = click.option(
        "--max-questions", type=click.IntRange(min=1), default=None, help="Question cap."
    )(fn)
    fn = click.option("--cache-dir", type=click.Path(path_type=Path), default=None)(fn)
    fn = click.option("--banks-dir", type=click.Path(path_type=Path), default=None)(fn)
    fn = click.option(
        "--backend",
        "backend_spec",
        default="http",
        show_default=True,
        help="'http' or 'scripted:PATH' (JSON array of completions).",
    )(fn)
    fn = click.option(
        "--config",
        "config_file",
        type=click.Path(path_type=Path),
        default=None,
        help=f"Config file (default: {DEFAULT_CONFIG_FILE}).",
    )(fn)
    return fn


@click.group()
@click.version_option(package_name="stepcheck")
def main() -> None:
    """Step-by-step claim verification with full reasoning traces."""


@main.command()
@click.argument("claim_text")
@click.option("--out", type=click.Path(path_type=Path), default=None, help="Trace output file.")
@_common_options
def verify(claim_text, out, model, source, predicates, max_questions, cache_dir, banks_dir,
           backend_spec, config_file) -> None:
    """Verify one claim and print its QA trace and verdict."""
    if not claim_text.strip():
        raise click.UsageError("claim text must be non-empty")
    config = _build_config(
        config_file,
        model=model,
        source=source,
        predicates=predicates,
        max_questions=max_questions,
        cache_dir=cache_dir,
        banks_dir=banks_dir,
    )
    engine, _ = _build_engine(config, backend_spec)
    claim = Claim(text=claim_text.strip(), id="cli-1", origin="cli")
    try:
        trace = engine.verify_claim(claim)
    except (ClaimAborted, StepcheckError) as exc:
        raise click.ClickException(str(exc))

    click.echo(f"Claim: {claim.text}")
    for step in trace.steps:
        click.echo(f"[{step.index}] Q: {step.question}")
        if step.predicate is not None:
            click.echo(f"    predicate: {step.predicate.render()}")
        if step.no_evidence:
            click.echo("    evidence: none found")
        else:
            click.echo(f"    evidence: {len(step.snippets)} snippet(s)")
        click.echo(f"    A: {step.answer}")
    click.echo(f"VERDICT: {trace.verdict.value.upper()}{'  (forced by question cap)' if trace.forced else ''}")
    click.echo(f"Explanation: {trace.explanation}")
    if out is not None:
        write_trace_file([trace], out)
        click.echo(f"trace written to {out}")


@main.command()
@click.option(
    "--dataset",
    "dataset_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
)
@click.option("--format", "fmt", type=click.Choice(FORMATS), default="generic", show_default=True)
@click.option("--concurrency", type=click.IntRange(min=1), default=None)
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("stepcheck-run"),
    show_default=True,
)
@click.option("--label", default=None, help="Row label used in the report.")
@click.option("--reference/--no-reference", "include_reference", default=True, show_default=True)
@_common_options
def run(dataset_path, fmt, concurrency, out_dir, label, include_reference, model, source,
        predicates, max_questions, cache_dir, banks_dir, backend_spec, config_file) -> None:
    """Run the verifier over a labeled dataset and score it."""
    config = _build_config(
        config_file,
        model=model,
        source=source,
        predicates=predicates,
        max_questions=max_questions,
        cache_dir=cache_dir,
        banks_dir=banks_dir,
        concurrency=concurrency,
    )
    try:
        loaded = load(dataset_path, fmt)
    except StepcheckError as exc:
        raise click.UsageError(str(exc))
    click.echo(f"loaded {loaded.kept} claims ({loaded.dropped} dropped of {loaded.total} records)")
    if not loaded.claims:
        raise click.ClickException("no binary-labeled claims to verify")

    gateway = Gateway(_build_backend(backend_spec), config)
    retriever = Retriever.from_config(config, gateway=gateway)
    try:
        result = run_benchmark(
            list(loaded.claims), config, gateway=gateway, retriever=retriever, out_dir=out_dir
        )
    except (RunFailed, StepcheckError) as exc:
        raise click.ClickException(str(exc))

    metrics = result.metrics
    click.echo(
        f"completed {result.completed}/{loaded.kept} claims"
        f" ({len(result.failures)} aborted)"
    )
    click.echo(
        f"precision={metrics.precision:.4f} recall={metrics.recall:.4f} f1={metrics.f1:.4f}"
    )
    row_label = label or f"{config.model_name} ({config.source_kind.value}"
    if label is None:
        row_label += ", predicates)" if config.predicate_mode else ")"
    metrics_payload = {
        "label": row_label,
        "dataset": fmt,
        "precision": metrics.precision,
        "recall": metrics.recall,
        "f1": metrics.f1,
        "completed": result.completed,
        "failed": len(result.failures),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.json").write_text(
        json.dumps(metrics_payload, indent=2) + "\n", encoding="utf-8"
    )
    txt_path, csv_path = emit_report(
        [(row_label, metrics)],
        out_dir / "report",
        dataset=fmt,
        include_reference=include_reference,
    )
    click.echo(f"report written to {txt_path} and {csv_path}")


@main.command()
@click.option(
    "--results",
    "results_paths",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    multiple=True,
    required=True,
    help="metrics.json files produced by 'run' (repeatable).",
)
@click.option("--out", "out_base", type=click.Path(path_type=Path), default=Path("report"),
              show_default=True)
@click.option("--reference/--no-reference", "include_reference", default=True, show_default=True)
def report(results_paths, out_base, include_reference) -> None:
    """Combine run metrics into one comparison report."""
    rows = []
    datasets = set()
    for path in results_paths:
        payload = json.loads(path.read_text(encoding="utf-8"))
        rows.append(
            (
                payload["label"],
                Metrics(
                    precision=payload["precision"],
                    recall=payload["recall"],
                    f1=payload["f1"],
                ),
                payload.get("dataset", "-"),
            )
        )
        datasets.add(payload.get("dataset", "-"))
    # emit_report tags run rows with one dataset; mixed inputs fall back to '-'.
    dataset = datasets.pop() if len(datasets) == 1 else "-"
    txt_path, csv_path = emit_report(
        [(label, metrics) for label, metrics, _ in rows],
        out_base,
        dataset=dataset,
        include_reference=include_reference,
    )
    click.echo(f"report written to {txt_path} and {csv_path}")


@main.command("cache-warm")
@click.option(
    "--questions",
    "questions_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
    help="Text file with one question per line.",
)
@_common_options
def cache_warm(questions_path, model, source, predicates, max_questions, cache_dir, banks_dir,
               backend_spec, config_file) -> None:
    """Fetch and cache evidence for a list of questions."""
    config = _build_config(
        config_file,
        model=model,
        source=source,
        predicates=predicates,
        max_questions=max_questions,
        cache_dir=cache_dir,
        banks_dir=banks_dir,
    )
    gateway = Gateway(_build_backend(backend_spec), config)
    retriever = Retriever.from_config(config, gateway=gateway)
    questions = [
        line.strip() for line in questions_path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    warmed = 0
    for question in questions:
        try:
            retriever.retrieve(question)
            warmed += 1
        except StepcheckError as exc:
            click.echo(f"warm failed for {question!r}: {exc}", err=True)
    click.echo(f"warmed {warmed}/{len(questions)} questions into {resolve_cache_dir(config)}")
    if warmed < len(questions):
        sys.exit(1)


@main.command("cache-clear")
@click.option("--cache-dir", type=click.Path(path_type=Path), default=None)
@click.option(
    "--config", "config_file", type=click.Path(path_type=Path), default=None
)
def cache_clear(cache_dir, config_file) -> None:
    """Delete every cached evidence entry."""
    config = _build_config(config_file, cache_dir=cache_dir)
    cache = EvidenceCache(resolve_cache_dir(config))
    removed = cache.clear()
    click.echo(f"removed {removed} cached entries from {cache.root}")


if __name__ == "__main__":
    main()
