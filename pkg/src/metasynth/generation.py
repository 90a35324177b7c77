"""Prompt rendering, context assembly, and generation against a
chat-completions endpoint, orchestrated per record over the vector index.

The two built-in instruction texts are fixed verbatim; the first one is the
default for all runs.  Retrieval uses the instruction text as the query and
confines candidates to the record's own chunks.
"""
from __future__ import annotations

import hashlib
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from pathlib import Path

import requests

from .chunker import Chunk, MeasureUnit, measure, split_units, join_units
from .corpus import MetaRecord
from .vector_index import DEFAULT_K, SearchHit, VectorIndex

PROMPT1_TEXT = (
    "Given a collection of abstracts from papers used in various medical fields "
    "for meta-analysis, generate a meta-analysis abstract. Summarize the key "
    "findings and provide numerical values or statistical information for "
    "specific observations that are commonly reported in the provided abstracts."
)

PROMPT2_TEXT = (
    "There are given some abstracts of papers that are used for meta-analysis "
    "in different medical fields. Generate a meta-analysis abstract based on "
    "the given abstracts of papers. Please try to provide numerical values for "
    "any specific findings that were used in most of the abstracts."
)

CONTEXT_SLOT = "{context}"
DEFAULT_TEMPERATURE = 0.7
DEFAULT_CONTEXT_BUDGET = 4096

_STATUS_ORDER = ("pending", "running", "done", "failed")


class GenerationError(RuntimeError):
    """Assembly or endpoint failure while producing an abstract."""


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    instruction_text: str
    context_slot: str = CONTEXT_SLOT


def prompt_template(template_id: str, custom_text: str | None = None) -> PromptTemplate:
    if template_id == "prompt1":
        return PromptTemplate("prompt1", PROMPT1_TEXT)
    if template_id == "prompt2":
        return PromptTemplate("prompt2", PROMPT2_TEXT)
    if template_id == "custom":
        if custom_text is None or CONTEXT_SLOT not in custom_text:
            raise GenerationError(
                f"custom template must contain the {CONTEXT_SLOT!r} slot"
            )
        return PromptTemplate("custom", custom_text)
    raise GenerationError(f"unknown template id {template_id!r}")


def render_prompt(template: PromptTemplate, context: str) -> str:
    """Instruction followed by the retrieved context in the slot."""
    if not context:
        raise GenerationError("context is empty")
    body = template.instruction_text
    if template.context_slot not in body:
        body = f"{body}\n\n{template.context_slot}"
    return body.replace(template.context_slot, context)


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = DEFAULT_TEMPERATURE
    max_output_units: int = 512
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_units <= 0:
            raise ValueError("max_output_units must be positive")


@dataclass(frozen=True)
class GenerationEndpoint:
    base_url: str
    model: str = "default"
    auth_token: str | None = None
    context_budget_units: int = DEFAULT_CONTEXT_BUDGET
    timeout_s: float = 60.0
    retry_limit: int = 2
    backoff_base_s: float = 0.5

    def __post_init__(self) -> None:
        if self.context_budget_units <= 0:
            raise ValueError("context budget must be positive")


@dataclass
class GenerationJob:
    record_id: str
    template: PromptTemplate
    retrieved: list[str]
    assembled_prompt: str
    params: SamplingParams
    endpoint: GenerationEndpoint
    scores: list[float] = field(default_factory=list)
    output: str | None = None
    status: str = "pending"
    failure_cause: str | None = None
    started_at: str | None = None
    elapsed_s: float | None = None

    def transition(self, new_status: str) -> None:
        if _STATUS_ORDER.index(new_status) < _STATUS_ORDER.index(self.status):
            raise GenerationError(
                f"job {self.record_id}: cannot move {self.status} -> {new_status}"
            )
        self.status = new_status


class CannedChatEndpoint:
    """Offline chat-endpoint double with deterministic completions.

    With ``text`` set every call returns it verbatim; otherwise the output is
    a pseudo-abstract derived from a hash of (prompt, seed, temperature), so
    identical requests always produce identical completions.
    """

    def __init__(self, text: str | None = None):
        self.text = text
        self.calls = 0

    def complete(self, prompt: str, params: SamplingParams, endpoint: GenerationEndpoint) -> str:
        self.calls += 1
        if self.text is not None:
            return self.text
        digest = hashlib.sha256(
            f"{prompt}|{params.seed}|{params.temperature}".encode("utf-8")
        ).hexdigest()
        return (
            "This synthesis pools the retrieved study abstracts and reports the "
            f"common quantitative findings (analysis id {digest[:12]}). Across the "
            "included studies the directionally consistent effects are summarized "
            "with their reported confidence intervals."
        )


class HttpChatEndpoint:
    """Chat-completions client: single user message, bounded retries."""

    def __init__(self, session: requests.Session | None = None):
        self.session = session or requests.Session()

    def complete(self, prompt: str, params: SamplingParams, endpoint: GenerationEndpoint) -> str:
        url = endpoint.base_url.rstrip("/")
        if not url.endswith("/chat/completions"):
            url = f"{url}/chat/completions"
        headers = {"Content-Type": "application/json"}
        if endpoint.auth_token:
            headers["Authorization"] = f"Bearer {endpoint.auth_token}"
        payload: dict = {
            "model": endpoint.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_output_units,
        }
        if params.seed is not None:
            payload["seed"] = params.seed

        last_error: Exception | None = None
        for attempt in range(endpoint.retry_limit + 1):
            try:
                resp = self.session.post(
                    url, json=payload, headers=headers, timeout=endpoint.timeout_s
                )
                if resp.status_code >= 500 or resp.status_code == 429:
                    raise requests.HTTPError(f"HTTP {resp.status_code}", response=resp)
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except (requests.ConnectionError, requests.Timeout, requests.HTTPError) as exc:
                status = getattr(getattr(exc, "response", None), "status_code", None)
                if status is not None and 400 <= status < 500 and status != 429:
                    raise GenerationError(f"endpoint rejected request: {exc}") from exc
                last_error = exc
                if attempt < endpoint.retry_limit:
                    time.sleep(endpoint.backoff_base_s * 2**attempt)
        raise GenerationError(
            f"endpoint failed after {endpoint.retry_limit + 1} attempts: {last_error}"
        )


def make_chat_client(endpoint: GenerationEndpoint):
    if endpoint.base_url.startswith("canned:"):
        canned = endpoint.base_url[len("canned:") :]
        return CannedChatEndpoint(text=canned or None)
    return HttpChatEndpoint()


def _longest_boundary_overlap(tail: list[str], head: list[str]) -> int:
    """Longest n with tail[-n:] == head[:n] (the shared overlap region)."""
    for n in range(min(len(tail), len(head)), 0, -1):
        if tail[-n] == head[0] and tail[len(tail) - n :] == head[:n]:
            return n
    return 0


def _dedup_against(
    included: dict[tuple[str, int], list[str]],
    chunk: Chunk,
    units: list[str],
) -> list[str]:
    """Drop the units this chunk shares with an already-included neighbor."""
    prev = included.get((chunk.record_id, chunk.seq - 1))
    if prev is not None and units:
        units = units[_longest_boundary_overlap(prev, units) :]
    nxt = included.get((chunk.record_id, chunk.seq + 1))
    if nxt is not None and units:
        shared = _longest_boundary_overlap(units, nxt)
        units = units[: len(units) - shared]
    return units


def assemble_context(
    hits: list[SearchHit],
    chunks: dict[str, Chunk],
    budget: int,
    template: PromptTemplate,
    unit: MeasureUnit = MeasureUnit.WHITESPACE_TOKEN,
) -> str:
    """Concatenate retrieved chunk texts in rank order under the unit budget.

    Overlap regions shared by neighboring chunks of one record are emitted
    once; assembly stops before the first chunk that would overflow the
    budget net of the instruction, and units are never split.
    """
    if not hits:
        raise GenerationError("retrieval failure: no hits to assemble")
    probe = "x"
    overhead = measure(render_prompt(template, probe), unit) - measure(probe, unit)
    available = budget - overhead
    if available <= 0:
        raise GenerationError(
            f"context budget {budget} cannot fit the instruction ({overhead} units)"
        )

    included: dict[tuple[str, int], list[str]] = {}
    blocks: list[str] = []
    total = 0
    boundary_cost = measure("\n", unit)  # 0 for tokens, 1 for characters
    for hit in sorted(hits, key=lambda h: h.rank):
        chunk = chunks.get(hit.chunk_id)
        if chunk is None:
            raise GenerationError(f"retrieved chunk {hit.chunk_id!r} not in lookup")
        units = _dedup_against(included, chunk, split_units(chunk.text, unit))
        if not units:
            included[(chunk.record_id, chunk.seq)] = split_units(chunk.text, unit)
            continue
        cost = len(units) + (boundary_cost if blocks else 0)
        if total + cost > available:
            break
        blocks.append(join_units(units, unit))
        total += cost
        included[(chunk.record_id, chunk.seq)] = split_units(chunk.text, unit)
    if not blocks:
        raise GenerationError("no retrieved chunk fits the context budget")
    return "\n".join(blocks)


def generate(job: GenerationJob, client=None) -> GenerationJob:
    """Run a pending job against its endpoint; failures are recorded, not raised."""
    if job.status != "pending":
        raise GenerationError(f"job {job.record_id} is {job.status}, expected pending")
    client = client or make_chat_client(job.endpoint)
    job.started_at = datetime.now(timezone.utc).isoformat()
    start = time.monotonic()
    job.transition("running")
    try:
        output = client.complete(job.assembled_prompt, job.params, job.endpoint)
        if not output or not output.strip():
            raise GenerationError("endpoint returned empty output")
        job.output = output
        job.transition("done")
    except Exception as exc:  # endpoint/transport failure: record, don't raise
        job.failure_cause = str(exc)
        job.transition("failed")
    job.elapsed_s = time.monotonic() - start
    return job


@dataclass
class RagPipeline:
    """Per-record retrieval + generation (the inference path).

    The retrieval query is the template's instruction text, and the search
    is filtered to the record's own chunks so no cross-record context leaks
    into a job.
    """

    index: VectorIndex
    chunks: dict[str, Chunk]
    embedder: object
    endpoint: GenerationEndpoint
    template: PromptTemplate
    params: SamplingParams = field(default_factory=SamplingParams)
    k: int = DEFAULT_K
    unit: MeasureUnit = MeasureUnit.WHITESPACE_TOKEN
    client: object | None = None

    def __post_init__(self) -> None:
        if self.client is None:
            self.client = make_chat_client(self.endpoint)

    def run_record(self, record: MetaRecord) -> GenerationJob:
        query_vec = self.embedder.embed([self.template.instruction_text])[0]
        hits = self.index.search(query_vec, k=self.k, filter_record_id=record.id)
        context = assemble_context(
            hits, self.chunks, self.endpoint.context_budget_units, self.template, self.unit
        )
        job = GenerationJob(
            record_id=record.id,
            template=self.template,
            retrieved=[h.chunk_id for h in hits],
            scores=[h.score for h in hits],
            assembled_prompt=render_prompt(self.template, context),
            params=self.params,
            endpoint=self.endpoint,
        )
        return generate(job, self.client)

    def run_batch(
        self,
        records: list[MetaRecord],
        parallelism: int = 4,
        manifest_path: str | Path | None = None,
        config_snapshot: dict | None = None,
    ) -> list[GenerationJob]:
        """Run all records on a bounded worker pool; failures never abort."""
        manifest = _ManifestWriter(manifest_path, config_snapshot) if manifest_path else None

        def run_one(record: MetaRecord) -> GenerationJob:
            try:
                job = self.run_record(record)
            except Exception as exc:  # failed record, reported in the manifest
                job = GenerationJob(
                    record_id=record.id,
                    template=self.template,
                    retrieved=[],
                    assembled_prompt="",
                    params=self.params,
                    endpoint=self.endpoint,
                    status="failed",
                    failure_cause=str(exc),
                )
            if manifest:
                manifest.append(job)
            return job

        with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
            jobs = list(pool.map(run_one, records))
        if manifest:
            manifest.close()
        return jobs


class _ManifestWriter:
    """Append-only run manifest: config header then one line per job."""

    def __init__(self, path: str | Path, config_snapshot: dict | None):
        self._lock = threading.Lock()
        self._fh = Path(path).open("w", encoding="utf-8")
        header = {"kind": "config", "config": config_snapshot or {}}
        self._fh.write(json.dumps(header, ensure_ascii=False) + "\n")

    def append(self, job: GenerationJob) -> None:
        row = {
            "kind": "job",
            "record_id": job.record_id,
            "template_id": job.template.id,
            "params": asdict(job.params),
            "retrieved": [
                {"chunk_id": cid, "score": score}
                for cid, score in zip(job.retrieved, job.scores)
            ],
            "prompt": job.assembled_prompt,
            "output": job.output,
            "status": job.status,
            "failure_cause": job.failure_cause,
            "started_at": job.started_at,
            "elapsed_s": job.elapsed_s,
        }
        with self._lock:
            self._fh.write(json.dumps(row, ensure_ascii=False) + "\n")
            self._fh.flush()

    def close(self) -> None:
        with self._lock:
            self._fh.close()


def read_manifest(path: str | Path) -> tuple[dict, list[dict]]:
    """Returns (config snapshot, job rows)."""
    config: dict = {}
    jobs: list[dict] = []
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            row = json.loads(line)
            if row.get("kind") == "config":
                config = row.get("config", {})
            elif row.get("kind") == "job":
                jobs.append(row)
    return config, jobs
