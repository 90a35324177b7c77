"""Overlapping sliding-window decomposition of support-abstract sets.

The support abstracts of one record are concatenated into a single unit
stream, each abstract prefixed by an ``SP:`` separator marker, and a window
of ``cap`` units advances by ``cap - overlap`` units until the stream is
exhausted.  Every window except possibly the last is exactly ``cap`` units
long, and consecutive windows share exactly ``overlap`` units.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .corpus import SupportAbstract

DEFAULT_CAP = 2000
DEFAULT_OVERLAP = 200

_TOKEN_MARKER = ("SP:",)
_CHAR_MARKER = tuple("SP: ")


class ChunkingError(ValueError):
    """Invalid chunking parameters or inputs."""


class MeasureUnit(str, Enum):
    """Unit in which all lengths of this pipeline are counted."""

    WHITESPACE_TOKEN = "whitespace_token"
    CHARACTER = "character"


def measure(text: str, unit: MeasureUnit = MeasureUnit.WHITESPACE_TOKEN) -> int:
    """Length of ``text``: maximal non-whitespace runs, or scalar code points."""
    if unit is MeasureUnit.WHITESPACE_TOKEN:
        return len(text.split())
    return len(text)


def split_units(text: str, unit: MeasureUnit) -> list[str]:
    if unit is MeasureUnit.WHITESPACE_TOKEN:
        return text.split()
    return list(text)


def join_units(units: list[str], unit: MeasureUnit) -> str:
    if unit is MeasureUnit.WHITESPACE_TOKEN:
        return " ".join(units)
    return "".join(units)


def marker_units(unit: MeasureUnit) -> tuple[str, ...]:
    """Separator inserted before each abstract; counts toward chunk length."""
    if unit is MeasureUnit.WHITESPACE_TOKEN:
        return _TOKEN_MARKER
    return _CHAR_MARKER


@dataclass(frozen=True)
class Span:
    """Provenance interval: units [start, end) of one support abstract."""

    support_id: str
    start: int
    end: int


@dataclass(frozen=True)
class Chunk:
    id: str
    record_id: str
    seq: int
    text: str
    spans: tuple[Span, ...]


@dataclass(frozen=True)
class ChunkSet:
    record_id: str
    chunks: tuple[Chunk, ...]
    cap: int
    overlap: int
    unit: MeasureUnit

    @property
    def k(self) -> int:
        return len(self.chunks)


@dataclass(frozen=True)
class Violation:
    rule: str
    detail: str
    chunk_id: str | None = None


def expected_chunk_count(stream_len: int, cap: int, overlap: int) -> int:
    """Window count for a stream of ``stream_len`` units."""
    if stream_len <= cap:
        return 1
    return math.ceil((stream_len - cap) / (cap - overlap)) + 1


def _build_stream(
    supports: list[SupportAbstract], unit: MeasureUnit
) -> list[tuple[str, str | None, int]]:
    """Tagged unit stream: (unit text, owning support id or None for markers,
    unit offset within the abstract)."""
    stream: list[tuple[str, str | None, int]] = []
    for sup in supports:
        for m in marker_units(unit):
            stream.append((m, None, -1))
        for offset, u in enumerate(split_units(sup.text, unit)):
            stream.append((u, sup.id, offset))
    return stream


def _spans_of(window: list[tuple[str, str | None, int]]) -> tuple[Span, ...]:
    spans: list[Span] = []
    for _, sup_id, offset in window:
        if sup_id is None:
            continue
        if spans and spans[-1].support_id == sup_id and spans[-1].end == offset:
            spans[-1] = Span(sup_id, spans[-1].start, offset + 1)
        else:
            spans.append(Span(sup_id, offset, offset + 1))
    return tuple(spans)


def chunk_support_set(
    supports: list[SupportAbstract],
    cap: int = DEFAULT_CAP,
    overlap: int = DEFAULT_OVERLAP,
    unit: MeasureUnit = MeasureUnit.WHITESPACE_TOKEN,
) -> ChunkSet:
    """Decompose a support set into overlapping chunks of at most ``cap`` units.

    Windows slide over the concatenated stream with stride ``cap - overlap``;
    the final chunk may be shorter than ``cap`` but is never empty.
    """
    if cap <= 0:
        raise ChunkingError(f"cap must be positive, got {cap}")
    if not 0 <= overlap < cap:
        raise ChunkingError(f"overlap must satisfy 0 <= overlap < cap, got {overlap}")
    if not supports:
        raise ChunkingError("support set is empty")
    for sup in supports:
        if not sup.text.strip():
            raise ChunkingError(f"support abstract {sup.id!r} is empty")

    record_id = supports[0].record_id
    stream = _build_stream(supports, unit)
    stride = cap - overlap
    k = expected_chunk_count(len(stream), cap, overlap)

    chunks: list[Chunk] = []
    for i in range(k):
        window = stream[i * stride : i * stride + cap]
        text = join_units([u for u, _, _ in window], unit)
        chunks.append(
            Chunk(
                id=f"{record_id}/c{i + 1:03d}",
                record_id=record_id,
                seq=i + 1,
                text=text,
                spans=_spans_of(window),
            )
        )
    return ChunkSet(
        record_id=record_id, chunks=tuple(chunks), cap=cap, overlap=overlap, unit=unit
    )


def verify_chunkset(cs: ChunkSet, supports: list[SupportAbstract]) -> list[Violation]:
    """Check cap, overlap, and coverage invariants; empty list means all hold.

    Each violation names the offending chunk (where attributable) and the
    broken rule, so audits can replay a dump against its source corpus.
    """
    violations: list[Violation] = []

    if cs.k != len(cs.chunks):
        violations.append(Violation("count", f"k={cs.k} but {len(cs.chunks)} chunks"))

    lengths: dict[str, int] = {
        sup.id: len(split_units(sup.text, cs.unit)) for sup in supports
    }
    for chunk in cs.chunks:
        if measure(chunk.text, cs.unit) > cs.cap:
            violations.append(
                Violation(
                    "cap",
                    f"length {measure(chunk.text, cs.unit)} exceeds cap {cs.cap}",
                    chunk.id,
                )
            )
        if not chunk.spans:
            violations.append(Violation("empty-spans", "chunk covers no abstract units", chunk.id))
        for span in chunk.spans:
            if span.support_id not in lengths:
                violations.append(
                    Violation("span-bounds", f"unknown support {span.support_id!r}", chunk.id)
                )
            elif not 0 <= span.start < span.end <= lengths[span.support_id]:
                violations.append(
                    Violation(
                        "span-bounds",
                        f"span [{span.start},{span.end}) outside {span.support_id!r}"
                        f" of {lengths[span.support_id]} units",
                        chunk.id,
                    )
                )

    # Consecutive chunks must share exactly `overlap` units.
    unit_lists = [split_units(c.text, cs.unit) for c in cs.chunks]
    for prev, cur, prev_units, cur_units in zip(
        cs.chunks, cs.chunks[1:], unit_lists, unit_lists[1:]
    ):
        if cur.seq != prev.seq + 1:
            violations.append(
                Violation("count", f"seq jumps from {prev.seq} to {cur.seq}", cur.id)
            )
        if cs.overlap and prev_units[-cs.overlap :] != cur_units[: cs.overlap]:
            violations.append(
                Violation(
                    "overlap",
                    f"first {cs.overlap} units differ from predecessor tail",
                    cur.id,
                )
            )

    # Dropping each successor's overlap prefix must reconstruct the stream.
    expected = [u for u, _, _ in _build_stream(supports, cs.unit)]
    rebuilt: list[str] = []
    for i, units in enumerate(unit_lists):
        rebuilt.extend(units if i == 0 else units[cs.overlap :])
    if rebuilt != expected:
        gap = next(
            (i for i, (a, b) in enumerate(zip(rebuilt, expected)) if a != b),
            min(len(rebuilt), len(expected)),
        )
        violations.append(
            Violation(
                "coverage",
                f"reconstructed stream diverges from source at unit {gap}"
                f" (rebuilt {len(rebuilt)} of {len(expected)} units)",
            )
        )
    return violations


def write_chunk_dump(chunksets: list[ChunkSet], path: str | Path) -> int:
    """Line-delimited chunk dump with a parameter header; returns chunk count."""
    if not chunksets:
        raise ChunkingError("nothing to dump")
    first = chunksets[0]
    n = 0
    with Path(path).open("w", encoding="utf-8") as f:
        header = {"cap": first.cap, "overlap": first.overlap, "unit": first.unit.value}
        f.write(json.dumps(header) + "\n")
        for cs in chunksets:
            if (cs.cap, cs.overlap, cs.unit) != (first.cap, first.overlap, first.unit):
                raise ChunkingError("mixed chunking parameters in one dump")
            for chunk in cs.chunks:
                row = {
                    "id": chunk.id,
                    "record_id": chunk.record_id,
                    "seq": chunk.seq,
                    "text": chunk.text,
                    "spans": [[s.support_id, s.start, s.end] for s in chunk.spans],
                }
                f.write(json.dumps(row, ensure_ascii=False) + "\n")
                n += 1
    return n


def read_chunk_dump(path: str | Path) -> list[ChunkSet]:
    with Path(path).open("r", encoding="utf-8") as f:
        header = json.loads(f.readline())
        cap, overlap = header["cap"], header["overlap"]
        unit = MeasureUnit(header["unit"])
        by_record: dict[str, list[Chunk]] = {}
        for line in f:
            if not line.strip():
                continue
            row = json.loads(line)
            chunk = Chunk(
                id=row["id"],
                record_id=row["record_id"],
                seq=row["seq"],
                text=row["text"],
                spans=tuple(Span(s[0], s[1], s[2]) for s in row["spans"]),
            )
            by_record.setdefault(chunk.record_id, []).append(chunk)
    return [
        ChunkSet(record_id=rid, chunks=tuple(chunks), cap=cap, overlap=overlap, unit=unit)
        for rid, chunks in by_record.items()
    ]
