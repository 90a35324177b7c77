#!/usr/bin/env python3
"""End-to-end offline demo on the bundled fixture corpus.

Runs ingest -> chunk -> index -> generate with the in-process doubles
(hash embedder, canned chat endpoint), then simulates three evaluators
voting on every task and prints the final report.  No network involved.
"""
from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

from metasynth.cli import PipelineConfig, build_store, main as cli_main
from metasynth.evaluation import RelevanceLabel, build_report
from metasynth.vector_index import HashingEmbedder


def run(args: list[str]) -> None:
    code = cli_main(args)
    if code != 0:
        sys.exit(code)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--outdir", default="out-demo")
    parser.add_argument("--corpus", default="fixtures/mad_mini.jsonl")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    outdir = args.outdir
    run(["ingest", args.corpus, "--outdir", outdir])
    run(["chunk", "--cap", "2000", "--overlap", "200", "--outdir", outdir])
    run(["index", "--embedder", "hash:64", "--outdir", outdir])
    run(["generate", "--endpoint", "canned:", "--temperature", "0.7",
         "--prompt", "prompt1", "--outdir", outdir])

    store = build_store(PipelineConfig(outdir=outdir))
    rng = random.Random(args.seed)
    labels = [RelevanceLabel.REL, RelevanceLabel.REL, RelevanceLabel.SWR,
              RelevanceLabel.IRL]
    for task in store.tasks():
        for evaluator in ("demo-e1", "demo-e2", "demo-e3"):
            store.submit_ballot(task.id, evaluator, rng.choice(labels))
    report = build_report("demo", store, HashingEmbedder(dim=64))
    store.close()

    doc = {
        "model_tag": report.model_tag,
        "total_tasks": report.total_tasks,
        "rel_pct": report.rel_pct,
        "swr_pct": report.swr_pct,
        "irl_pct": report.irl_pct,
        "swgt_pct": round(report.swgt_pct, 2),
    }
    print(json.dumps(doc, indent=2))
    print(f"artifacts in {Path(outdir).resolve()}")


if __name__ == "__main__":
    main()
