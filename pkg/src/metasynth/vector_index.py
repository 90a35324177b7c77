"""Exact cosine-similarity vector index over chunk embeddings.

A flat store scanned exhaustively: at a few thousand chunks per corpus an
exact scan is fast, keeps retrieval auditable against a brute-force oracle,
and needs no approximate-index tuning.  Embeddings come from an HTTP
endpoint speaking the common ``{model, input} -> {data:[{embedding}]}``
wire shape, or from the deterministic hashing embedder for offline runs.
"""
from __future__ import annotations

import base64
import hashlib
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .chunker import Chunk

INDEX_FORMAT_VERSION = 1
DEFAULT_K = 4


class EmbeddingError(RuntimeError):
    """Embedding endpoint failure or malformed embedding response."""


class VectorIndexError(ValueError):
    """Invalid index operation (dimension mismatch, zero-norm vector, bad k)."""


class IndexFileError(ValueError):
    """Unreadable index file: version mismatch or failed content check."""


@dataclass(frozen=True)
class EmbeddingEndpoint:
    base_url: str
    model: str = "default"
    auth_token: str | None = None
    timeout_s: float = 30.0
    retry_limit: int = 2
    backoff_base_s: float = 0.5


@dataclass(frozen=True)
class IndexEntry:
    chunk_id: str
    record_id: str
    vector: np.ndarray
    text_digest: str


@dataclass(frozen=True)
class SearchHit:
    chunk_id: str
    score: float
    rank: int


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class HashingEmbedder:
    """Deterministic pseudo-embeddings derived from a text hash.

    Test double for the embedding endpoint: same (seed, text) always yields
    the same vector, so the whole pipeline runs offline and reproducibly.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.seed = seed

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        if not texts:
            raise EmbeddingError("no texts to embed")
        vectors = []
        for text in texts:
            digest = hashlib.sha256(f"{self.seed}:{text}".encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            vec = rng.standard_normal(self.dim)
            if float(np.linalg.norm(vec)) < 1e-12:
                vec[0] = 1.0
            vectors.append(vec)
        return vectors


class HttpEmbedder:
    """Client for an embeddings endpoint; retries transient failures."""

    def __init__(self, endpoint: EmbeddingEndpoint, session: requests.Session | None = None):
        self.endpoint = endpoint
        self.session = session or requests.Session()

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        return embed_batch(texts, self.endpoint, session=self.session)


def make_embedder(endpoint: EmbeddingEndpoint):
    """Embedder for a config: ``hash:<dim>[:<seed>]`` URLs select the offline
    double, anything else an HTTP client."""
    if endpoint.base_url.startswith("hash:"):
        parts = endpoint.base_url.split(":")
        dim = int(parts[1]) if len(parts) > 1 and parts[1] else 64
        seed = int(parts[2]) if len(parts) > 2 and parts[2] else 0
        return HashingEmbedder(dim=dim, seed=seed)
    return HttpEmbedder(endpoint)


def embed_batch(
    texts: list[str],
    endpoint: EmbeddingEndpoint,
    session: requests.Session | None = None,
) -> list[np.ndarray]:
    """One vector per text, order preserved, uniform dimension."""
    if not texts:
        raise EmbeddingError("no texts to embed")
    if any(not t for t in texts):
        raise EmbeddingError("texts must be non-empty")
    session = session or requests.Session()
    url = endpoint.base_url.rstrip("/")
    if not url.endswith("/embeddings"):
        url = f"{url}/embeddings"
    headers = {"Content-Type": "application/json"}
    if endpoint.auth_token:
        headers["Authorization"] = f"Bearer {endpoint.auth_token}"

    last_error: Exception | None = None
    for attempt in range(endpoint.retry_limit + 1):
        try:
            resp = session.post(
                url,
                json={"model": endpoint.model, "input": texts},
                headers=headers,
                timeout=endpoint.timeout_s,
            )
            if resp.status_code >= 500 or resp.status_code == 429:
                raise requests.HTTPError(f"HTTP {resp.status_code}", response=resp)
            resp.raise_for_status()
            data = resp.json()["data"]
            break
        except (requests.ConnectionError, requests.Timeout, requests.HTTPError) as exc:
            status = getattr(getattr(exc, "response", None), "status_code", None)
            if status is not None and 400 <= status < 500 and status != 429:
                raise EmbeddingError(f"embedding endpoint rejected request: {exc}") from exc
            last_error = exc
            if attempt < endpoint.retry_limit:
                time.sleep(endpoint.backoff_base_s * 2**attempt)
    else:
        raise EmbeddingError(
            f"embedding endpoint unreachable after {endpoint.retry_limit + 1} attempts: {last_error}"
        )

    if len(data) != len(texts):
        raise EmbeddingError(f"expected {len(texts)} embeddings, got {len(data)}")
    vectors = [np.asarray(item["embedding"], dtype=np.float64) for item in data]
    dims = {v.shape[0] for v in vectors}
    if len(dims) != 1:
        raise EmbeddingError(f"dimension mismatch across batch: {sorted(dims)}")
    for v in vectors:
        if not np.all(np.isfinite(v)):
            raise EmbeddingError("embedding has non-finite components")
    return vectors


def entries_from_chunks(chunks: list[Chunk], embedder) -> list[IndexEntry]:
    vectors = embedder.embed([c.text for c in chunks])
    return [
        IndexEntry(
            chunk_id=c.id,
            record_id=c.record_id,
            vector=v,
            text_digest=text_digest(c.text),
        )
        for c, v in zip(chunks, vectors)
    ]


@dataclass
class _Snapshot:
    ids: tuple[str, ...]
    records: tuple[str, ...]
    unit_rows: np.ndarray  # row-normalized vectors, shape (n, dim)


class VectorIndex:
    """Flat cosine index: many concurrent readers, writes swap a snapshot."""

    def __init__(
        self,
        dim: int | None = None,
        unit: str = "whitespace_token",
        embedder_spec: dict | None = None,
    ):
        self.dim = dim
        self.unit = unit
        # which embedder produced the vectors (url + model, never the token);
        # downstream stages embed queries with the same one
        self.embedder_spec = embedder_spec
        self._entries: dict[str, IndexEntry] = {}
        self._lock = threading.Lock()
        self._snapshot: _Snapshot | None = None

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> list[IndexEntry]:
        return list(self._entries.values())

    def get(self, chunk_id: str) -> IndexEntry | None:
        return self._entries.get(chunk_id)

    def upsert(self, entries: list[IndexEntry]) -> tuple[int, int]:
        """Insert or replace entries; returns (inserted, updated) counts."""
        for e in entries:
            vec = np.asarray(e.vector, dtype=np.float64)
            if vec.ndim != 1:
                raise VectorIndexError(f"entry {e.chunk_id!r}: vector must be 1-d")
            if not np.all(np.isfinite(vec)):
                raise VectorIndexError(f"entry {e.chunk_id!r}: non-finite vector")
            if float(np.linalg.norm(vec)) == 0.0:
                raise VectorIndexError(f"entry {e.chunk_id!r}: zero-norm vector")
            if self.dim is not None and vec.shape[0] != self.dim:
                raise VectorIndexError(
                    f"entry {e.chunk_id!r}: dim {vec.shape[0]} != index dim {self.dim}"
                )
        inserted = updated = 0
        with self._lock:
            for e in entries:
                if self.dim is None:
                    self.dim = int(np.asarray(e.vector).shape[0])
                if e.chunk_id in self._entries:
                    updated += 1
                else:
                    inserted += 1
                self._entries[e.chunk_id] = IndexEntry(
                    chunk_id=e.chunk_id,
                    record_id=e.record_id,
                    vector=np.asarray(e.vector, dtype=np.float64).copy(),
                    text_digest=e.text_digest,
                )
            self._snapshot = self._build_snapshot()
        return inserted, updated

    def _build_snapshot(self) -> _Snapshot | None:
        if not self._entries:
            return None
        items = sorted(self._entries.values(), key=lambda e: e.chunk_id)
        rows = np.stack([e.vector for e in items])
        norms = np.linalg.norm(rows, axis=1, keepdims=True)
        return _Snapshot(
            ids=tuple(e.chunk_id for e in items),
            records=tuple(e.record_id for e in items),
            unit_rows=rows / norms,
        )

    def search(
        self,
        query: np.ndarray,
        k: int = DEFAULT_K,
        filter_record_id: str | None = None,
    ) -> list[SearchHit]:
        """Exact top-k by cosine; ties broken by chunk id ascending."""
        if k <= 0:
            raise VectorIndexError(f"k must be positive, got {k}")
        snap = self._snapshot
        if snap is None:
            raise VectorIndexError("index is empty")
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dim,):
            raise VectorIndexError(f"query dim {q.shape} != index dim {self.dim}")
        qnorm = float(np.linalg.norm(q))
        if qnorm == 0.0:
            raise VectorIndexError("zero-norm query")

        scores = snap.unit_rows @ (q / qnorm)
        candidates = range(len(snap.ids))
        if filter_record_id is not None:
            candidates = [i for i in candidates if snap.records[i] == filter_record_id]
        order = sorted(candidates, key=lambda i: (-scores[i], snap.ids[i]))[:k]
        return [
            SearchHit(
                chunk_id=snap.ids[i],
                score=float(min(1.0, max(-1.0, scores[i]))),
                rank=rank,
            )
            for rank, i in enumerate(order, start=1)
        ]

    def persist(self, path: str | Path) -> None:
        """Versioned header + entries + content-hash footer."""
        body_lines = [
            json.dumps(
                {
                    "version": INDEX_FORMAT_VERSION,
                    "dim": self.dim,
                    "unit": self.unit,
                    "count": len(self._entries),
                    "embedder": self.embedder_spec,
                }
            )
        ]
        for e in sorted(self._entries.values(), key=lambda e: e.chunk_id):
            body_lines.append(
                json.dumps(
                    {
                        "chunk_id": e.chunk_id,
                        "record_id": e.record_id,
                        "digest": e.text_digest,
                        "vec": base64.b64encode(
                            e.vector.astype("<f8").tobytes()
                        ).decode("ascii"),
                    }
                )
            )
        body = "".join(line + "\n" for line in body_lines).encode("utf-8")
        footer = json.dumps({"sha256": hashlib.sha256(body).hexdigest()})
        Path(path).write_bytes(body + footer.encode("utf-8") + b"\n")


def load_index(path: str | Path) -> VectorIndex:
    raw = Path(path).read_bytes()
    lines = raw.split(b"\n")
    if len(lines) < 2 or not lines[-2]:
        raise IndexFileError(f"{path}: truncated index file")
    body = b"\n".join(lines[:-2]) + b"\n"
    try:
        footer = json.loads(lines[-2])
        expected = footer["sha256"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise IndexFileError(f"{path}: missing or malformed footer") from exc
    if hashlib.sha256(body).hexdigest() != expected:
        raise IndexFileError(f"{path}: content hash mismatch (corrupt file)")

    header = json.loads(lines[0])
    if header.get("version") != INDEX_FORMAT_VERSION:
        raise IndexFileError(
            f"{path}: version {header.get('version')} unsupported"
            f" (expected {INDEX_FORMAT_VERSION})"
        )
    index = VectorIndex(
        dim=header["dim"],
        unit=header.get("unit", "whitespace_token"),
        embedder_spec=header.get("embedder"),
    )
    entries = []
    for line in lines[1:-2]:
        if not line:
            continue
        row = json.loads(line)
        vec = np.frombuffer(base64.b64decode(row["vec"]), dtype="<f8")
        entries.append(
            IndexEntry(
                chunk_id=row["chunk_id"],
                record_id=row["record_id"],
                vector=vec.astype(np.float64),
                text_digest=row["digest"],
            )
        )
    if len(entries) != header["count"]:
        raise IndexFileError(
            f"{path}: header declares {header['count']} entries, found {len(entries)}"
        )
    if entries:
        index.upsert(entries)
    return index
