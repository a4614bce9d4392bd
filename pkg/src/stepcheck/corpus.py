"""Dataset loading: normalize claim files into binary-labeled claims.

Per-dataset field names and label vocabularies live in an editable mapping
table (``data/label_maps.json``) because upstream releases rename labels more
often than they change structure. Records whose mapped label is neither
supported nor refuted are dropped and counted.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

from .core import Claim, Verdict
from .errors import LabelError, SchemaError

logger = logging.getLogger(__name__)

FORMATS = ("scifact", "healthfc", "covert", "generic")

_BINARY = {"supported": Verdict.SUPPORTED, "refuted": Verdict.REFUTED}


@dataclass(frozen=True)
class LabeledClaim:
    claim: Claim
    gold: Verdict


@dataclass(frozen=True)
class RawRecord:
    """One file row with its label already mapped to the shared vocabulary
    (supported / refuted / nei / ...)."""

    id: str
    text: str
    mapped_label: str
    origin: str


@dataclass(frozen=True)
class LoadResult:
    claims: tuple[LabeledClaim, ...]
    kept: int
    dropped: int
    path: Path
    format: str

    @property
    def total(self) -> int:
        return self.kept + self.dropped


def load_label_maps(path: Optional[Path] = None) -> dict:
    if path is not None:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    return json.loads(
        resources.files("stepcheck").joinpath("data/label_maps.json").read_text(encoding="utf-8")
    )


def _first_present(record: Mapping[str, Any], names: Iterable[str]) -> Optional[Any]:
    for name in names:
        if name in record and record[name] not in (None, ""):
            return record[name]
    return None


def _map_label(raw_label: Any, table: Mapping[str, str], context: str) -> str:
    key = str(raw_label).strip().casefold()
    if key not in table:
        raise LabelError(f"unknown label {raw_label!r} in {context}")
    return table[key]


def _scifact_label(record: Mapping[str, Any], table: Mapping[str, str], context: str) -> str:
    """Native claim files put labels inside per-document evidence blocks; an
    empty evidence dict means not-enough-information."""
    evidence = record.get("evidence")
    if not isinstance(evidence, dict):
        raise SchemaError(f"missing label and evidence fields in {context}")
    labels = [
        entry.get("label")
        for doc_entries in evidence.values()
        if isinstance(doc_entries, list)
        for entry in doc_entries
        if isinstance(entry, dict) and entry.get("label")
    ]
    if not labels:
        return "nei"
    return _map_label(labels[0], table, context)


def _iter_jsonl(path: Path) -> Iterable[dict]:
    with path.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise SchemaError(f"{path}:{line_no}: expected a JSON object")
            yield record


def _iter_csv(path: Path) -> Iterable[dict]:
    with path.open(encoding="utf-8", newline="") as handle:
        sample = handle.read(4096)
        handle.seek(0)
        try:
            dialect = csv.Sniffer().sniff(sample, delimiters=",\t;")
        except csv.Error:
            dialect = csv.excel
        reader = csv.DictReader(handle, dialect=dialect)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file")
        yield from reader


def read_records(path: Path, fmt: str, label_maps: Optional[Mapping] = None) -> list[RawRecord]:
    """Read a dataset file into RawRecords with mapped labels, file order kept."""
    if fmt not in FORMATS:
        raise SchemaError(f"unknown dataset format {fmt!r}; expected one of {FORMATS}")
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"dataset file not found: {path}")
    spec = (label_maps or load_label_maps())[fmt]
    table = {k.casefold(): v for k, v in spec["labels"].items()}

    rows = _iter_jsonl(path) if spec["file_format"] == "jsonl" else _iter_csv(path)
    records: list[RawRecord] = []
    for row_no, row in enumerate(rows, start=1):
        context = f"{path.name} row {row_no}"
        text = _first_present(row, spec["claim_fields"])
        if text is None:
            raise SchemaError(f"no claim text field in {context} (tried {spec['claim_fields']})")
        raw_label = _first_present(row, spec["label_fields"])
        if raw_label is None:
            if fmt == "scifact":
                mapped = _scifact_label(row, table, context)
            else:
                raise SchemaError(f"no label field in {context} (tried {spec['label_fields']})")
        else:
            mapped = _map_label(raw_label, table, context)
        native_id = _first_present(row, spec["id_fields"])
        record_id = str(native_id) if native_id is not None else f"{fmt}-{row_no:04d}"
        records.append(RawRecord(id=record_id, text=str(text), mapped_label=mapped, origin=fmt))
    return records


def filter_binary(records: Iterable[RawRecord]) -> tuple[list[LabeledClaim], int]:
    """Keep supported/refuted records; return (kept claims, dropped count)."""
    kept: list[LabeledClaim] = []
    dropped = 0
    for record in records:
        gold = _BINARY.get(record.mapped_label)
        if gold is None:
            dropped += 1
            continue
        kept.append(
            LabeledClaim(
                claim=Claim(text=record.text, id=record.id, origin=record.origin), gold=gold
            )
        )
    return kept, dropped


def load(path: Path, fmt: str, label_maps: Optional[Mapping] = None) -> LoadResult:
    records = read_records(path, fmt, label_maps)
    claims, dropped = filter_binary(records)
    result = LoadResult(
        claims=tuple(claims), kept=len(claims), dropped=dropped, path=Path(path), format=fmt
    )
    logger.info(
        "%s (%s): kept %d, dropped %d of %d records",
        result.path.name,
        fmt,
        result.kept,
        result.dropped,
        result.total,
    )
    return result
