"""Command-line entry point wiring the full pipeline.

Subcommands: ingest, chunk, index, generate, serve, report.  Configuration
precedence is flags > config file > environment > defaults; defaults mirror
the pipeline's reference settings (cap 2000, overlap 200, temperature 0.7,
prompt1, context budget 4096).  All artifacts are plain files in the output
directory.

Exit codes: 0 success, 2 parse/validation failure, 3 missing upstream
artifact or unmet precondition, 4 endpoint failure, 5 port in use.
"""
from __future__ import annotations

import argparse
import json
import os
import socket
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import yaml

from . import chunker as chunker_mod
from .chunker import MeasureUnit, chunk_support_set, read_chunk_dump, verify_chunkset, write_chunk_dump
from .corpus import (
    Corpus,
    CorpusParseError,
    CorpusValidationError,
    SplitSpec,
    compute_stats,
    load_corpus,
    save_corpus,
    split_corpus,
)
from .evaluation import EvaluationError, TaskStore, create_tasks, build_report
from .generation import (
    GenerationEndpoint,
    RagPipeline,
    SamplingParams,
    prompt_template,
    read_manifest,
)
from .vector_index import (
    EmbeddingEndpoint,
    EmbeddingError,
    VectorIndex,
    entries_from_chunks,
    load_index,
    make_embedder,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_MISSING_ARTIFACT = 3
EXIT_ENDPOINT = 4
EXIT_PORT = 5

ENV_KEYS = {
    "embed_url": "METASYNTH_EMBED_URL",
    "embed_token": "METASYNTH_EMBED_TOKEN",
    "gen_url": "METASYNTH_GEN_URL",
    "gen_token": "METASYNTH_GEN_TOKEN",
    "outdir": "METASYNTH_OUTDIR",
}


@dataclass
class PipelineConfig:
    corpus_path: str = "fixtures/mad_mini.jsonl"
    format: str = "jsonl"
    csv_separator: str = "<SEP>"
    unit: str = "whitespace_token"
    cap: int = 2000
    overlap: int = 200
    embed_url: str = "hash:64"
    embed_model: str = "default"
    embed_token: str | None = None
    gen_url: str = "canned:"
    gen_model: str = "default"
    gen_token: str | None = None
    template: str = "prompt1"
    temperature: float = 0.7
    max_output_units: int = 512
    seed: int | None = None
    k: int = 4
    context_budget: int = 4096
    train_count: int = 0
    val_count: int = 0
    test_count: int = 0
    shuffle_seed: int = 0
    outdir: str = "out"
    parallelism: int = 4
    console_dir: str | None = None
    model_tag: str = "run"

    def validate(self) -> None:
        if self.unit not in ("whitespace_token", "character"):
            raise ValueError(f"unit must be whitespace_token or character, got {self.unit!r}")
        if self.cap <= 0 or not 0 <= self.overlap < self.cap:
            raise ValueError(f"need cap > 0 and 0 <= overlap < cap, got {self.cap}/{self.overlap}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.k <= 0:
            raise ValueError("k must be positive")
        if self.context_budget <= 0:
            raise ValueError("context budget must be positive")
        if self.template not in ("prompt1", "prompt2"):
            raise ValueError(f"template must be prompt1 or prompt2, got {self.template!r}")

    @property
    def measure_unit(self) -> MeasureUnit:
        return MeasureUnit(self.unit)

    def embedding_endpoint(self) -> EmbeddingEndpoint:
        return EmbeddingEndpoint(
            base_url=self.embed_url, model=self.embed_model, auth_token=self.embed_token
        )

    def generation_endpoint(self) -> GenerationEndpoint:
        return GenerationEndpoint(
            base_url=self.gen_url,
            model=self.gen_model,
            auth_token=self.gen_token,
            context_budget_units=self.context_budget,
        )


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Defaults, then environment, then config file, then explicit flags."""
    values: dict = {}
    for key, env_name in ENV_KEYS.items():
        if os.environ.get(env_name):
            values[key] = os.environ[env_name]
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, "r", encoding="utf-8") as f:
            loaded = yaml.safe_load(f) or {}
        if not isinstance(loaded, dict):
            raise ValueError(f"{config_path}: expected a mapping of config keys")
        known = {f.name for f in fields(PipelineConfig)}
        unknown = set(loaded) - known
        if unknown:
            raise ValueError(f"{config_path}: unknown config keys {sorted(unknown)}")
        values.update(loaded)
    for f in fields(PipelineConfig):
        flag_value = getattr(args, f.name, None)
        if flag_value is not None:
            values[f.name] = flag_value
    config = PipelineConfig(**values)
    config.validate()
    return config


def _fail(message: str, code: int) -> int:
    print(f"metasynth: {message}", file=sys.stderr)
    return code


def _outdir(config: PipelineConfig) -> Path:
    out = Path(config.outdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_corpus_artifact(config: PipelineConfig) -> Corpus:
    path = _outdir(config) / "corpus.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"validated corpus {path} not found; run `metasynth ingest` first")
    return load_corpus(path)


def cmd_ingest(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    source = Path(args.input if args.input else config.corpus_path)
    if not source.exists():
        return _fail(f"input file {source} does not exist", EXIT_INVALID)
    try:
        corpus = load_corpus(source, format=config.format, csv_separator=config.csv_separator)
    except (CorpusParseError, CorpusValidationError) as exc:
        return _fail(str(exc), EXIT_INVALID)

    out = _outdir(config)
    save_corpus(corpus, out / "corpus.jsonl")
    stats = compute_stats(corpus, config.measure_unit)

    chunk_lengths: list[int] = []
    for record in corpus.records:
        cs = chunk_support_set(
            list(record.supports), config.cap, config.overlap, config.measure_unit
        )
        chunk_lengths.extend(
            chunker_mod.measure(c.text, config.measure_unit) for c in cs.chunks
        )
    label_stats = {
        "min": stats.min_label,
        "max": stats.max_label,
        "mean": stats.mean_label,
    }
    stats_doc = {
        "unit": config.unit,
        "actual": {
            "min_input": stats.min_input,
            "max_input": stats.max_input,
            "mean_input": stats.mean_input,
            "labels": label_stats,
            "total_instances": stats.total_records,
            "total_supports": stats.total_supports,
            "support_count_histogram": stats.support_count_histogram,
        },
        "chunked": {
            "cap": config.cap,
            "overlap": config.overlap,
            "min_input": min(chunk_lengths) if chunk_lengths else 0,
            "max_input": max(chunk_lengths) if chunk_lengths else 0,
            "mean_input": sum(chunk_lengths) / len(chunk_lengths) if chunk_lengths else 0.0,
            "labels": label_stats,
            "total_instances": len(chunk_lengths),
        },
    }
    (out / "stats.json").write_text(json.dumps(stats_doc, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(stats_doc))
    return EXIT_OK


def cmd_split(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    try:
        corpus = _load_corpus_artifact(config)
    except FileNotFoundError as exc:
        return _fail(str(exc), EXIT_MISSING_ARTIFACT)
    spec = SplitSpec(
        train_count=config.train_count,
        val_count=config.val_count,
        test_count=config.test_count,
        shuffle_seed=config.shuffle_seed,
    )
    try:
        train, val, test = split_corpus(corpus, spec)
    except ValueError as exc:
        return _fail(str(exc), EXIT_INVALID)
    out = _outdir(config)
    for name, part in (("train", train), ("val", val), ("test", test)):
        save_corpus(part, out / f"corpus.{name}.jsonl")
    print(json.dumps({"train": len(train), "val": len(val), "test": len(test)}))
    return EXIT_OK


def cmd_chunk(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    try:
        corpus = _load_corpus_artifact(config)
    except FileNotFoundError as exc:
        return _fail(str(exc), EXIT_MISSING_ARTIFACT)
    chunksets = []
    for record in corpus.records:
        cs = chunk_support_set(
            list(record.supports), config.cap, config.overlap, config.measure_unit
        )
        violations = verify_chunkset(cs, list(record.supports))
        if violations:
            return _fail(
                f"record {record.id}: chunk invariant violations: {violations}", EXIT_INVALID
            )
        chunksets.append(cs)
    out = _outdir(config)
    n = write_chunk_dump(chunksets, out / "chunks.jsonl")
    print(json.dumps({"records": len(chunksets), "chunks": n}))
    return EXIT_OK


def cmd_index(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    chunks_path = _outdir(config) / "chunks.jsonl"
    if not chunks_path.exists():
        return _fail(f"chunk dump {chunks_path} not found; run `metasynth chunk` first",
                     EXIT_MISSING_ARTIFACT)
    chunksets = read_chunk_dump(chunks_path)
    chunks = [c for cs in chunksets for c in cs.chunks]
    embedder = make_embedder(config.embedding_endpoint())
    try:
        entries = entries_from_chunks(chunks, embedder)
    except EmbeddingError as exc:
        return _fail(f"embedding endpoint failure: {exc}", EXIT_ENDPOINT)
    index = VectorIndex(
        unit=config.unit,
        embedder_spec={"url": config.embed_url, "model": config.embed_model},
    )
    index.upsert(entries)
    index.persist(_outdir(config) / "index.msi")
    print(json.dumps({"entries": len(index), "dim": index.dim}))
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    out = _outdir(config)
    for artifact in ("corpus.jsonl", "chunks.jsonl", "index.msi"):
        if not (out / artifact).exists():
            return _fail(f"missing upstream artifact {out / artifact}", EXIT_MISSING_ARTIFACT)
    corpus = load_corpus(out / "corpus.jsonl")
    chunksets = read_chunk_dump(out / "chunks.jsonl")
    chunk_lookup = {c.id: c for cs in chunksets for c in cs.chunks}
    index = load_index(out / "index.msi")
    # embed queries with the embedder the index was built with, unless the
    # generate invocation itself overrides it
    if index.embedder_spec and getattr(args, "embed_url", None) is None:
        config.embed_url = index.embedder_spec["url"]
        config.embed_model = index.embedder_spec.get("model", config.embed_model)
    pipeline = RagPipeline(
        index=index,
        chunks=chunk_lookup,
        embedder=make_embedder(config.embedding_endpoint()),
        endpoint=config.generation_endpoint(),
        template=prompt_template(config.template),
        params=SamplingParams(
            temperature=config.temperature,
            max_output_units=config.max_output_units,
            seed=config.seed,
        ),
        k=config.k,
        unit=config.measure_unit,
    )
    jobs = pipeline.run_batch(
        list(corpus.records),
        parallelism=config.parallelism,
        manifest_path=out / "manifest.jsonl",
        config_snapshot=asdict(config),
    )
    failed = [j for j in jobs if j.status != "done"]
    print(json.dumps({"jobs": len(jobs), "done": len(jobs) - len(failed), "failed": len(failed)}))
    if failed:
        for job in failed:
            print(f"metasynth: record {job.record_id} failed: {job.failure_cause}",
                  file=sys.stderr)
        return EXIT_ENDPOINT
    return EXIT_OK


def _port_free(host: str, port: int) -> bool:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        # REUSEADDR matches the server's own bind semantics: a socket in
        # TIME_WAIT after a restart is fine, an active listener is not
        s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            s.bind((host, port))
        except OSError:
            return False
    return True


def build_store(config: PipelineConfig) -> TaskStore:
    """Task pool from the run manifest, durable across restarts."""
    out = _outdir(config)
    tasks_path = out / "tasks.jsonl"
    log_path = out / "ballots.log"
    if tasks_path.exists():
        return TaskStore.load(tasks_path, log_path)
    manifest_path = out / "manifest.jsonl"
    if not manifest_path.exists():
        raise FileNotFoundError(
            f"neither {tasks_path} nor {manifest_path} exists; run `metasynth generate` first"
        )
    corpus = load_corpus(out / "corpus.jsonl")
    _, job_rows = read_manifest(manifest_path)
    tasks = create_tasks(job_rows, corpus)
    store = TaskStore(tasks, log_path=log_path)
    store.save_tasks(tasks_path)
    return store


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import create_app

    config = resolve_config(args)
    try:
        store = build_store(config)
    except FileNotFoundError as exc:
        return _fail(str(exc), EXIT_MISSING_ARTIFACT)
    except EvaluationError as exc:
        return _fail(f"refusing to start: {exc}", EXIT_INVALID)
    if not _port_free(args.host, args.port):
        return _fail(f"port {args.port} already in use", EXIT_PORT)
    console_dir = config.console_dir
    if console_dir is None and Path("frontend/dist").is_dir():
        console_dir = "frontend/dist"
    app = create_app(
        store,
        readonly=args.readonly,
        model_tag=config.model_tag,
        embedder=make_embedder(config.embedding_endpoint()),
        console_dir=console_dir,
    )
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    finally:
        store.close()
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    out = _outdir(config)
    if not (out / "tasks.jsonl").exists():
        return _fail(f"no task pool at {out / 'tasks.jsonl'}; run `metasynth serve` first",
                     EXIT_MISSING_ARTIFACT)
    store = TaskStore.load(out / "tasks.jsonl", out / "ballots.log")
    tag = args.model if args.model else config.model_tag
    try:
        report = build_report(tag, store, make_embedder(config.embedding_endpoint()))
    except EvaluationError as exc:
        return _fail(str(exc), EXIT_MISSING_ARTIFACT)
    finally:
        store.close()
    doc = asdict(report)
    (out / f"report_{tag}.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(doc))
    return EXIT_OK


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--outdir", help="artifact output directory")
    parser.add_argument("--unit", choices=["whitespace_token", "character"])
    parser.add_argument("--cap", type=int)
    parser.add_argument("--overlap", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metasynth")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a corpus and write stats")
    p.add_argument("input", nargs="?", help="corpus file (jsonl or csv)")
    p.add_argument("--format", choices=["jsonl", "csv"])
    p.add_argument("--csv-separator", dest="csv_separator")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="deterministic train/val/test split")
    p.add_argument("--train", dest="train_count", type=int)
    p.add_argument("--val", dest="val_count", type=int)
    p.add_argument("--test", dest="test_count", type=int)
    p.add_argument("--seed", dest="shuffle_seed", type=int)
    _add_config_flags(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("chunk", help="decompose support sets into overlapping chunks")
    _add_config_flags(p)
    p.set_defaults(func=cmd_chunk)

    p = sub.add_parser("index", help="embed chunks and build the vector index")
    p.add_argument("--embedder", dest="embed_url", help="embedding endpoint or hash:<dim>")
    p.add_argument("--embed-model", dest="embed_model")
    _add_config_flags(p)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("generate", help="retrieve context and generate abstracts")
    p.add_argument("--endpoint", dest="gen_url", help="chat endpoint or canned:")
    p.add_argument("--model", dest="gen_model")
    p.add_argument("--embedder", dest="embed_url",
                   help="query embedder; defaults to the one the index was built with")
    p.add_argument("--prompt", dest="template", choices=["prompt1", "prompt2"])
    p.add_argument("--temperature", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--budget", dest="context_budget", type=int)
    p.add_argument("--parallelism", type=int)
    _add_config_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("serve", help="serve the evaluation API and console")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8420)
    p.add_argument("--readonly", action="store_true")
    p.add_argument("--console-dir", dest="console_dir")
    _add_config_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("report", help="final-label percentages and class metrics")
    p.add_argument("--model", help="model tag for the report")
    _add_config_flags(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        return _fail(str(exc), EXIT_INVALID)


if __name__ == "__main__":
    sys.exit(main())
