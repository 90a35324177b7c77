from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from oracles import brute_force_top_k

from metasynth.vector_index import (
    EmbeddingEndpoint,
    EmbeddingError,
    HashingEmbedder,
    IndexEntry,
    IndexFileError,
    VectorIndex,
    VectorIndexError,
    embed_batch,
    entries_from_chunks,
    load_index,
    make_embedder,
    text_digest,
)
from metasynth.chunker import chunk_support_set
from conftest import make_supports


def make_entries(n: int, dim: int = 8, seed: int = 0, record: str = "r1") -> list[IndexEntry]:
    rng = np.random.default_rng(seed)
    return [
        IndexEntry(
            chunk_id=f"{record}/c{i:04d}",
            record_id=record,
            vector=rng.standard_normal(dim),
            text_digest=text_digest(f"text {i}"),
        )
        for i in range(n)
    ]


class TestHashingEmbedder:
    def test_shape_and_arity(self):
        vecs = HashingEmbedder(dim=16).embed(["a", "b"])
        assert len(vecs) == 2
        assert all(v.shape == (16,) for v in vecs)

    def test_deterministic_per_text(self):
        e1, e2 = HashingEmbedder(dim=8, seed=3), HashingEmbedder(dim=8, seed=3)
        assert np.array_equal(e1.embed(["same"])[0], e2.embed(["same"])[0])
        assert not np.array_equal(e1.embed(["same"])[0], e1.embed(["other"])[0])

    def test_seed_changes_vectors(self):
        a = HashingEmbedder(dim=8, seed=0).embed(["t"])[0]
        b = HashingEmbedder(dim=8, seed=1).embed(["t"])[0]
        assert not np.array_equal(a, b)

    def test_empty_batch_rejected(self):
        with pytest.raises(EmbeddingError):
            HashingEmbedder().embed([])

    def test_make_embedder_parses_hash_urls(self):
        embedder = make_embedder(EmbeddingEndpoint(base_url="hash:32:7"))
        assert isinstance(embedder, HashingEmbedder)
        assert embedder.dim == 32 and embedder.seed == 7


class _EmbeddingHandler(BaseHTTPRequestHandler):
    """Scriptable embeddings endpoint; behavior driven by class attributes."""

    script: list = []
    calls: int = 0

    def do_POST(self):
        cls = type(self)
        cls.calls += 1
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        action = cls.script[min(cls.calls - 1, len(cls.script) - 1)]
        if isinstance(action, int):
            self.send_response(action)
            self.end_headers()
            return
        payload = {"data": [{"embedding": action(text)} for text in body["input"]]}
        raw = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def log_message(self, *args):
        pass


@pytest.fixture
def embedding_server():
    server = HTTPServer(("127.0.0.1", 0), _EmbeddingHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _EmbeddingHandler.calls = 0
    yield f"http://127.0.0.1:{server.server_port}", _EmbeddingHandler
    server.shutdown()


def _fixed_vec(text: str) -> list[float]:
    return [float(len(text)), 1.0, 2.0]


class TestEmbedBatch:
    def test_happy_path(self, embedding_server):
        url, handler = embedding_server
        handler.script = [_fixed_vec]
        endpoint = EmbeddingEndpoint(base_url=url, retry_limit=0)
        vecs = embed_batch(["ab", "xyz"], endpoint)
        assert [v.tolist() for v in vecs] == [[2.0, 1.0, 2.0], [3.0, 1.0, 2.0]]

    def test_retries_transient_500_then_succeeds(self, embedding_server):
        url, handler = embedding_server
        handler.script = [500, 500, _fixed_vec]
        endpoint = EmbeddingEndpoint(base_url=url, retry_limit=2, backoff_base_s=0.01)
        vecs = embed_batch(["a"], endpoint)
        assert handler.calls == 3
        assert vecs[0].shape == (3,)

    def test_gives_up_after_retry_limit(self, embedding_server):
        url, handler = embedding_server
        handler.script = [500]
        endpoint = EmbeddingEndpoint(base_url=url, retry_limit=1, backoff_base_s=0.01)
        with pytest.raises(EmbeddingError, match="unreachable"):
            embed_batch(["a"], endpoint)
        assert handler.calls == 2

    def test_client_error_is_not_retried(self, embedding_server):
        url, handler = embedding_server
        handler.script = [403]
        endpoint = EmbeddingEndpoint(base_url=url, retry_limit=3, backoff_base_s=0.01)
        with pytest.raises(EmbeddingError, match="rejected"):
            embed_batch(["a"], endpoint)
        assert handler.calls == 1

    def test_dimension_mismatch_across_batch(self, embedding_server):
        url, handler = embedding_server
        handler.script = [lambda text: [1.0] * len(text)]
        endpoint = EmbeddingEndpoint(base_url=url, retry_limit=0)
        with pytest.raises(EmbeddingError, match="dimension mismatch"):
            embed_batch(["abc", "defg"], endpoint)

    def test_non_finite_component_rejected(self, embedding_server):
        url, handler = embedding_server
        handler.script = [lambda text: [float("inf"), 0.0]]
        endpoint = EmbeddingEndpoint(base_url=url, retry_limit=0)
        with pytest.raises(EmbeddingError, match="non-finite"):
            embed_batch(["abc"], endpoint)

    def test_unreachable_endpoint(self):
        endpoint = EmbeddingEndpoint(
            base_url="http://127.0.0.1:1", retry_limit=0, timeout_s=0.2
        )
        with pytest.raises(EmbeddingError, match="unreachable"):
            embed_batch(["a"], endpoint)

    def test_empty_text_rejected(self):
        with pytest.raises(EmbeddingError):
            embed_batch([""], EmbeddingEndpoint(base_url="http://127.0.0.1:1"))


class TestUpsert:
    def test_idempotent_reinsert(self):
        index = VectorIndex()
        entries = make_entries(10)
        assert index.upsert(entries) == (10, 0)
        assert index.upsert(entries) == (0, 10)
        assert len(index) == 10

    def test_wrong_dim_rejected_and_index_unchanged(self):
        index = VectorIndex()
        index.upsert(make_entries(3, dim=8))
        bad = make_entries(1, dim=4, record="r9")
        with pytest.raises(VectorIndexError):
            index.upsert(bad)
        assert len(index) == 3

    def test_zero_norm_rejected(self):
        entry = IndexEntry("c1", "r1", np.zeros(4), text_digest("t"))
        with pytest.raises(VectorIndexError, match="zero-norm"):
            VectorIndex().upsert([entry])

    def test_insert_into_empty(self):
        index = VectorIndex()
        index.upsert(make_entries(7))
        assert len(index) == 7

    def test_replacement_updates_digest(self):
        index = VectorIndex()
        index.upsert(make_entries(1))
        replacement = IndexEntry(
            "r1/c0000", "r1", np.ones(8), text_digest("new text")
        )
        index.upsert([replacement])
        assert index.get("r1/c0000").text_digest == text_digest("new text")


class TestSearch:
    def test_stored_vector_is_its_own_best_match(self):
        index = VectorIndex()
        entries = make_entries(20)
        index.upsert(entries)
        hits = index.search(entries[5].vector, k=1)
        assert hits[0].chunk_id == entries[5].chunk_id
        assert hits[0].score == pytest.approx(1.0, abs=1e-12)
        assert hits[0].rank == 1

    def test_matches_brute_force_oracle(self):
        index = VectorIndex()
        entries = make_entries(1000, dim=16, seed=4)
        index.upsert(entries)
        lookup = {e.chunk_id: e.vector for e in entries}
        rng = np.random.default_rng(5)
        for _ in range(10):
            query = rng.standard_normal(16)
            hits = index.search(query, k=10)
            oracle = brute_force_top_k(lookup, query, k=10)
            assert [h.chunk_id for h in hits] == [cid for cid, _ in oracle]
            for hit, (_, score) in zip(hits, oracle):
                assert hit.score == pytest.approx(score, abs=1e-9)

    def test_equal_scores_tie_break_by_chunk_id(self):
        vec = np.array([1.0, 1.0, 0.0])
        entries = [
            IndexEntry("b-chunk", "r1", vec, text_digest("b")),
            IndexEntry("a-chunk", "r1", vec.copy(), text_digest("a")),
        ]
        index = VectorIndex()
        index.upsert(entries)
        hits = index.search(vec, k=2)
        assert [h.chunk_id for h in hits] == ["a-chunk", "b-chunk"]
        assert [h.rank for h in hits] == [1, 2]

    def test_filter_restricts_to_record(self):
        index = VectorIndex()
        index.upsert(make_entries(5, record="r1", seed=1))
        index.upsert(make_entries(5, record="r2", seed=2))
        hits = index.search(np.ones(8), k=10, filter_record_id="r2")
        assert len(hits) == 5
        assert all(h.chunk_id.startswith("r2/") for h in hits)

    def test_k_capped_by_candidates(self):
        index = VectorIndex()
        index.upsert(make_entries(3))
        assert len(index.search(np.ones(8), k=50)) == 3

    def test_invalid_queries(self):
        index = VectorIndex()
        with pytest.raises(VectorIndexError, match="empty"):
            index.search(np.ones(4), k=1)
        index.upsert(make_entries(2, dim=4))
        with pytest.raises(VectorIndexError, match="k must be positive"):
            index.search(np.ones(4), k=0)
        with pytest.raises(VectorIndexError, match="dim"):
            index.search(np.ones(5), k=1)
        with pytest.raises(VectorIndexError, match="zero-norm"):
            index.search(np.zeros(4), k=1)

    def test_monotone_k_prefix(self):
        index = VectorIndex()
        index.upsert(make_entries(30, seed=9))
        query = np.full(8, 0.3)
        for k in range(1, 12):
            assert index.search(query, k=k) == index.search(query, k=k + 1)[:k]


def test_exactness_500_randomized_instances_dims_8_to_512():
    rng = np.random.default_rng(321)
    for trial in range(500):
        n = int(rng.integers(1, 40))
        dim = int(2 ** rng.integers(3, 10))  # 8 .. 512
        k = int(rng.integers(1, n + 3))
        vectors = rng.standard_normal((n, dim))
        if n >= 2 and trial % 3 == 0:
            vectors[0] = vectors[1]  # force an exact tie
        ids = [f"c{i:03d}" for i in range(n)]
        index = VectorIndex()
        index.upsert([IndexEntry(cid, "r", v, "d") for cid, v in zip(ids, vectors)])
        query = rng.standard_normal(dim)
        scores = (vectors / np.linalg.norm(vectors, axis=1, keepdims=True)) @ (
            query / np.linalg.norm(query)
        )
        oracle = sorted(range(n), key=lambda i: (-scores[i], ids[i]))[:k]
        hits = index.search(query, k=k)
        assert [h.chunk_id for h in hits] == [ids[i] for i in oracle], f"trial {trial}"


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(min_value=2, max_value=25),
    dim=st.integers(min_value=2, max_value=12),
    seed=st.integers(min_value=0, max_value=10_000),
    scale_pow=st.integers(min_value=-3, max_value=8),
)
def test_power_of_two_scaling_preserves_ranks(n, dim, seed, scale_pow):
    rng = np.random.default_rng(seed)
    entries = [
        IndexEntry(f"c{i:03d}", "r", rng.standard_normal(dim), "d") for i in range(n)
    ]
    query = rng.standard_normal(dim)
    base = VectorIndex()
    base.upsert(entries)
    before = [h.chunk_id for h in base.search(query, k=n)]

    scale = 2.0**scale_pow
    scaled = VectorIndex()
    scaled.upsert(
        [
            IndexEntry(e.chunk_id, e.record_id, e.vector * scale, e.text_digest)
            for e in entries
        ]
    )
    assert [h.chunk_id for h in scaled.search(query * scale, k=n)] == before


class TestPersistence:
    def test_round_trip_answers_queries_identically(self, tmp_path):
        index = VectorIndex(unit="whitespace_token")
        index.upsert(make_entries(100, dim=12, seed=6))
        path = tmp_path / "index.msi"
        index.persist(path)
        loaded = load_index(path)
        rng = np.random.default_rng(8)
        for _ in range(20):
            query = rng.standard_normal(12)
            assert loaded.search(query, k=7) == index.search(query, k=7)

    def test_truncated_file_rejected(self, tmp_path):
        index = VectorIndex()
        index.upsert(make_entries(10))
        path = tmp_path / "index.msi"
        index.persist(path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(IndexFileError):
            load_index(path)

    def test_flipped_byte_fails_content_check(self, tmp_path):
        index = VectorIndex()
        index.upsert(make_entries(5))
        path = tmp_path / "index.msi"
        index.persist(path)
        raw = bytearray(path.read_bytes())
        raw[len(raw) // 3] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(IndexFileError):
            load_index(path)

    def test_version_mismatch(self, tmp_path):
        index = VectorIndex()
        index.upsert(make_entries(2))
        path = tmp_path / "index.msi"
        index.persist(path)
        lines = path.read_bytes().split(b"\n")
        header = json.loads(lines[0])
        header["version"] = 99
        body = json.dumps(header).encode() + b"\n" + b"\n".join(lines[1:-2]) + b"\n"
        footer = json.dumps({"sha256": __import__("hashlib").sha256(body).hexdigest()})
        path.write_bytes(body + footer.encode() + b"\n")
        with pytest.raises(IndexFileError, match="version"):
            load_index(path)

    def test_empty_index_round_trip(self, tmp_path):
        index = VectorIndex()
        path = tmp_path / "empty.msi"
        index.persist(path)
        loaded = load_index(path)
        assert len(loaded) == 0


class TestEntriesFromChunks:
    def test_digest_matches_chunk_text(self):
        supports = make_supports("r1", [60, 40])
        cs = chunk_support_set(supports, cap=40, overlap=10)
        entries = entries_from_chunks(list(cs.chunks), HashingEmbedder(dim=8))
        assert len(entries) == cs.k
        for entry, chunk in zip(entries, cs.chunks):
            assert entry.chunk_id == chunk.id
            assert entry.text_digest == text_digest(chunk.text)
