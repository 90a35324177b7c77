"""Corpus data model: records, ingestion, splits, and dataset statistics.

A record pairs one meta-analysis abstract (the label) with the ordered
abstracts of the studies it synthesizes.  Storage is line-delimited JSON,
one record per line; a two-column CSV fallback splits the support column
on a configurable delimiter.
"""
from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .chunker import MeasureUnit, measure

DEFAULT_CSV_SEPARATOR = "<SEP>"


class CorpusParseError(ValueError):
    """Malformed input file (cites the offending line)."""


class CorpusValidationError(ValueError):
    """Structurally valid input violating a record invariant."""


@dataclass(frozen=True)
class SupportAbstract:
    id: str
    text: str
    record_id: str


@dataclass(frozen=True)
class MetaRecord:
    id: str
    meta_abstract: str
    supports: tuple[SupportAbstract, ...]
    source_tag: str | None = None


@dataclass(frozen=True)
class Corpus:
    records: tuple[MetaRecord, ...]
    name: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def record_ids(self) -> list[str]:
        return [r.id for r in self.records]

    def by_id(self, record_id: str) -> MetaRecord:
        for r in self.records:
            if r.id == record_id:
                return r
        raise KeyError(record_id)


@dataclass(frozen=True)
class DatasetStats:
    unit: MeasureUnit
    min_input: int
    max_input: int
    mean_input: float
    min_label: int
    max_label: int
    mean_label: float
    total_records: int
    total_supports: int
    support_count_histogram: dict[int, int] = field(default_factory=dict)


@dataclass(frozen=True)
class SplitSpec:
    train_count: int
    val_count: int
    test_count: int
    shuffle_seed: int = 0


def validate_record(record: MetaRecord) -> None:
    if not record.meta_abstract.strip():
        raise CorpusValidationError(f"record {record.id!r}: empty meta abstract")
    if not record.supports:
        raise CorpusValidationError(f"record {record.id!r}: empty support set")
    seen: set[str] = set()
    for sup in record.supports:
        if not sup.text.strip():
            raise CorpusValidationError(
                f"record {record.id!r}: support {sup.id!r} has empty text"
            )
        if sup.id in seen:
            raise CorpusValidationError(
                f"record {record.id!r}: duplicate support id {sup.id!r}"
            )
        seen.add(sup.id)


def _record_from_dict(row: dict, where: str) -> MetaRecord:
    try:
        supports = tuple(
            SupportAbstract(id=str(s["id"]), text=str(s["text"]), record_id=str(row["id"]))
            for s in row["supports"]
        )
        record = MetaRecord(
            id=str(row["id"]),
            meta_abstract=str(row["meta_abstract"]),
            supports=supports,
            source_tag=row.get("source_tag"),
        )
    except (KeyError, TypeError) as exc:
        raise CorpusParseError(f"{where}: missing or malformed field ({exc})") from exc
    validate_record(record)
    return record


def _load_jsonl(path: Path) -> list[MetaRecord]:
    records = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(row, dict):
                raise CorpusParseError(f"{path}:{lineno}: expected an object")
            records.append(_record_from_dict(row, f"{path}:{lineno}"))
    return records


def _load_csv(path: Path, separator: str) -> list[MetaRecord]:
    records = []
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {
            "meta_abstract",
            "support_abstracts",
        } <= set(reader.fieldnames):
            raise CorpusParseError(
                f"{path}: expected columns meta_abstract, support_abstracts"
            )
        for i, row in enumerate(reader, start=1):
            rid = f"r{i:04d}"
            parts = [p for p in (row["support_abstracts"] or "").split(separator)]
            supports = tuple(
                SupportAbstract(id=f"s{j:03d}", text=part.strip(), record_id=rid)
                for j, part in enumerate(parts, start=1)
                if part.strip()
            )
            record = MetaRecord(
                id=rid, meta_abstract=(row["meta_abstract"] or "").strip(), supports=supports
            )
            validate_record(record)
            records.append(record)
    return records


def load_corpus(
    path: str | Path,
    format: str = "jsonl",
    csv_separator: str = DEFAULT_CSV_SEPARATOR,
    name: str | None = None,
) -> Corpus:
    """Load and validate a corpus; rejects duplicate record ids."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    if format == "jsonl":
        records = _load_jsonl(path)
    elif format == "csv":
        records = _load_csv(path, csv_separator)
    else:
        raise ValueError(f"unknown corpus format {format!r}")
    seen: set[str] = set()
    for record in records:
        if record.id in seen:
            raise CorpusValidationError(f"duplicate record id {record.id!r}")
        seen.add(record.id)
    return Corpus(records=tuple(records), name=name if name is not None else path.stem)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for r in corpus.records:
            row = {
                "id": r.id,
                "meta_abstract": r.meta_abstract,
                "supports": [{"id": s.id, "text": s.text} for s in r.supports],
            }
            if r.source_tag is not None:
                row["source_tag"] = r.source_tag
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def split_corpus(corpus: Corpus, spec: SplitSpec) -> tuple[Corpus, Corpus, Corpus]:
    """Disjoint train/val/test split of whole records, deterministic per seed."""
    total = spec.train_count + spec.val_count + spec.test_count
    if total > len(corpus.records):
        raise ValueError(
            f"split sizes sum to {total} but corpus has {len(corpus.records)} records"
        )
    indices = list(range(len(corpus.records)))
    random.Random(spec.shuffle_seed).shuffle(indices)
    picks = [corpus.records[i] for i in indices[:total]]
    train = picks[: spec.train_count]
    val = picks[spec.train_count : spec.train_count + spec.val_count]
    test = picks[spec.train_count + spec.val_count :]
    return (
        Corpus(records=tuple(train), name=f"{corpus.name}.train"),
        Corpus(records=tuple(val), name=f"{corpus.name}.val"),
        Corpus(records=tuple(test), name=f"{corpus.name}.test"),
    )


def compute_stats(corpus: Corpus, unit: MeasureUnit = MeasureUnit.WHITESPACE_TOKEN) -> DatasetStats:
    """Input/label length statistics and the support-count histogram.

    Input length of a record is the summed length of its support abstracts,
    without separator markers; labels are never chunked, so label lengths
    are plain abstract lengths.
    """
    if not corpus.records:
        return DatasetStats(
            unit=unit,
            min_input=0,
            max_input=0,
            mean_input=0.0,
            min_label=0,
            max_label=0,
            mean_label=0.0,
            total_records=0,
            total_supports=0,
            support_count_histogram={},
        )
    input_lengths = [
        sum(measure(s.text, unit) for s in r.supports) for r in corpus.records
    ]
    label_lengths = [measure(r.meta_abstract, unit) for r in corpus.records]
    histogram: dict[int, int] = {}
    for r in corpus.records:
        histogram[len(r.supports)] = histogram.get(len(r.supports), 0) + 1
    return DatasetStats(
        unit=unit,
        min_input=min(input_lengths),
        max_input=max(input_lengths),
        mean_input=sum(input_lengths) / len(input_lengths),
        min_label=min(label_lengths),
        max_label=max(label_lengths),
        mean_label=sum(label_lengths) / len(label_lengths),
        total_records=len(corpus.records),
        total_supports=sum(len(r.supports) for r in corpus.records),
        support_count_histogram=dict(sorted(histogram.items())),
    )
