#!/usr/bin/env python3
"""Generate the bundled synthetic corpus fixture (12 records, seeded).

The texts are synthetic stand-ins with the same shape as clinical-trial
abstracts: a handful of support abstracts per record plus one synthesis
abstract used as the label.  Regenerating with the same seed reproduces
the committed file byte for byte.
"""
from __future__ import annotations

import argparse
import json
import random
from pathlib import Path

CONDITIONS = [
    "type 2 diabetes", "chronic insomnia", "major depressive disorder",
    "hypertension", "knee osteoarthritis", "migraine", "asthma",
    "postoperative pain", "irritable bowel syndrome", "chronic fatigue",
]
INTERVENTIONS = [
    "synbiotic supplementation", "aerobic exercise", "cognitive behavioural therapy",
    "low-dose aspirin", "mindfulness training", "vitamin D supplementation",
    "acupuncture", "resistance training", "dietary fibre intake", "telehealth coaching",
]
OUTCOMES = [
    "fasting blood glucose", "sleep onset latency", "symptom severity scores",
    "systolic blood pressure", "pain intensity", "attack frequency",
    "peak expiratory flow", "analgesic consumption", "quality of life scores",
    "self-reported fatigue",
]
VERBS = ["reduced", "improved", "lowered", "increased", "stabilized", "moderated"]
DESIGNS = [
    "randomized controlled trial", "double-blind crossover study",
    "multicentre cohort study", "placebo-controlled trial", "pragmatic pilot trial",
]


def _sentence(rng: random.Random, condition: str, intervention: str) -> str:
    outcome = rng.choice(OUTCOMES)
    effect = round(rng.uniform(0.5, 12.0), 2)
    low = round(effect - rng.uniform(0.2, 2.0), 2)
    high = round(effect + rng.uniform(0.2, 2.0), 2)
    n = rng.randrange(40, 400)
    design = rng.choice(DESIGNS)
    verb = rng.choice(VERBS)
    templates = [
        f"In a {design} of {n} participants with {condition}, {intervention} "
        f"{verb} {outcome} by {effect} units (95% CI {low} to {high}).",
        f"This {design} enrolled {n} adults with {condition} and found that "
        f"{intervention} {verb} {outcome} (mean difference {effect}, 95% CI {low} to {high}).",
        f"Among {n} patients with {condition}, {intervention} was associated with "
        f"{verb} {outcome} (effect size {effect}; p < 0.05).",
        f"A {design} ({n} participants) assessed {intervention} for {condition}; "
        f"the change in {outcome} averaged {effect} units (95% CI {low} to {high}).",
    ]
    return rng.choice(templates)


def _support_text(rng: random.Random, condition: str, intervention: str) -> str:
    n_sentences = rng.randrange(3, 7)
    return " ".join(_sentence(rng, condition, intervention) for _ in range(n_sentences))


def _meta_text(rng: random.Random, condition: str, intervention: str, n_studies: int) -> str:
    pooled = round(rng.uniform(0.5, 8.0), 2)
    low = round(pooled - rng.uniform(0.2, 1.5), 2)
    high = round(pooled + rng.uniform(0.2, 1.5), 2)
    participants = rng.randrange(300, 4000)
    outcome = rng.choice(OUTCOMES)
    return (
        f"This meta-analysis pooled {n_studies} studies ({participants} participants) "
        f"of {intervention} in {condition}. The pooled estimate showed a change in "
        f"{outcome} of {pooled} units (95% CI {low} to {high}). Heterogeneity was "
        f"moderate and the overall quality of evidence was rated as acceptable. "
        f"{intervention.capitalize()} appears beneficial for {condition}, and larger "
        f"trials are warranted to confirm the effect."
    )


def make_records(n_records: int, seed: int) -> list[dict]:
    rng = random.Random(seed)
    records = []
    for i in range(1, n_records + 1):
        condition = rng.choice(CONDITIONS)
        intervention = rng.choice(INTERVENTIONS)
        n_supports = rng.randrange(2, 7)
        rid = f"mm{i:03d}"
        supports = [
            {"id": f"{rid}-s{j:02d}", "text": _support_text(rng, condition, intervention)}
            for j in range(1, n_supports + 1)
        ]
        records.append(
            {
                "id": rid,
                "meta_abstract": _meta_text(rng, condition, intervention, n_supports),
                "supports": supports,
                "source_tag": "synthetic-fixture",
            }
        )
    return records


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="fixtures/mad_mini.jsonl")
    parser.add_argument("--records", type=int, default=12)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as f:
        for record in make_records(args.records, args.seed):
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
    print(f"wrote {args.records} records to {out}")


if __name__ == "__main__":
    main()
