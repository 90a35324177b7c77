#!/usr/bin/env python3
"""Pin expected BLEU and ROUGE values for the metric fixture corpus.

The expected values are computed here by oracle implementations kept
deliberately independent of the package: Fraction arithmetic and per-gram
clipping for BLEU, memoized recursion for the LCS, so a shared bug cannot
hide.  The package's metric tests only ever read the frozen JSONL output;
they never call this script.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction
from functools import lru_cache
from pathlib import Path


def oracle_tokens(text: str) -> tuple[str, ...]:
    return tuple(text.lower().split())


def _gram_counts(tokens: tuple[str, ...], n: int) -> dict[tuple[str, ...], int]:
    counts: dict[tuple[str, ...], int] = {}
    for i in range(len(tokens) - n + 1):
        gram = tokens[i : i + n]
        counts[gram] = counts.get(gram, 0) + 1
    return counts


def oracle_bleu(hypothesis: str, references: list[str], max_n: int = 4) -> float:
    hyp = oracle_tokens(hypothesis)
    refs = [oracle_tokens(r) for r in references]
    precisions: list[Fraction] = []
    for n in range(1, max_n + 1):
        hyp_grams = _gram_counts(hyp, n)
        clipped = 0
        for gram, count in hyp_grams.items():
            best = 0
            for ref in refs:
                best = max(best, _gram_counts(ref, n).get(gram, 0))
            clipped += min(count, best)
        total = sum(hyp_grams.values())
        if total == 0 or clipped == 0:
            return 0.0
        precisions.append(Fraction(clipped, total))

    c = len(hyp)
    r = sorted((abs(len(ref) - c), len(ref)) for ref in refs)[0][1]
    brevity = 1.0 if c > r else math.exp(1 - r / c)
    geo_mean = math.exp(sum(math.log(float(p)) for p in precisions) / max_n)
    return brevity * geo_mean


def _prf(overlap: int, hyp_total: int, ref_total: int) -> dict[str, float]:
    precision = overlap / hyp_total if hyp_total else 0.0
    recall = overlap / ref_total if ref_total else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return {"precision": precision, "recall": recall, "f1": f1}


def oracle_rouge_n(hypothesis: str, reference: str, n: int) -> dict[str, float]:
    hyp_grams = _gram_counts(oracle_tokens(hypothesis), n)
    ref_grams = _gram_counts(oracle_tokens(reference), n)
    overlap = 0
    for gram in set(hyp_grams) | set(ref_grams):
        overlap += min(hyp_grams.get(gram, 0), ref_grams.get(gram, 0))
    return _prf(overlap, sum(hyp_grams.values()), sum(ref_grams.values()))


def oracle_rouge_l(hypothesis: str, reference: str) -> dict[str, float]:
    hyp, ref = oracle_tokens(hypothesis), oracle_tokens(reference)

    @lru_cache(maxsize=None)
    def lcs(i: int, j: int) -> int:
        if i == 0 or j == 0:
            return 0
        if hyp[i - 1] == ref[j - 1]:
            return lcs(i - 1, j - 1) + 1
        return max(lcs(i - 1, j), lcs(i, j - 1))

    sys.setrecursionlimit(10000 + len(hyp) * len(ref))
    return _prf(lcs(len(hyp), len(ref)), len(hyp), len(ref))


PAIRS: list[dict] = [
    # Identity pairs (>= 4 tokens so every gram order matches).
    {"hypothesis": "synbiotic intake reduced fasting blood glucose significantly",
     "reference": "synbiotic intake reduced fasting blood glucose significantly"},
    {"hypothesis": "The pooled estimate favoured the intervention arm overall.",
     "reference": "The pooled estimate favoured the intervention arm overall."},
    {"hypothesis": "Across ten trials pain intensity fell by two points on average.",
     "reference": "Across ten trials pain intensity fell by two points on average."},
    # Disjoint vocabularies.
    {"hypothesis": "alpha beta gamma delta epsilon",
     "reference": "one two three four five six"},
    {"hypothesis": "completely unrelated words appear here",
     "reference": "nothing matches in this reference text"},
    # Case folding only.
    {"hypothesis": "Aerobic Exercise Improved Sleep Onset Latency",
     "reference": "aerobic exercise improved sleep onset latency"},
    # Partial overlaps of varying degree.
    {"hypothesis": "this meta-analysis pooled twelve studies of aerobic exercise",
     "reference": "this meta-analysis pooled nine studies of resistance training"},
    {"hypothesis": "the intervention reduced systolic blood pressure by 4.2 mmHg",
     "reference": "treatment reduced systolic blood pressure by 4.2 mmHg overall"},
    {"hypothesis": "mindfulness training improved quality of life scores in most trials",
     "reference": "mindfulness training improved quality of life in the majority of included trials"},
    {"hypothesis": "no significant effect on attack frequency was observed",
     "reference": "a significant reduction in attack frequency was observed"},
    {"hypothesis": "heterogeneity was moderate across the included studies",
     "reference": "heterogeneity across included studies was judged to be moderate"},
    {"hypothesis": "vitamin d supplementation lowered symptom severity scores modestly",
     "reference": "vitamin d supplementation produced a modest reduction in symptom severity scores"},
    # Repeated tokens exercise clipping.
    {"hypothesis": "trials trials trials reported consistent effects",
     "reference": "trials reported consistent effects in three trials"},
    {"hypothesis": "the the the pooled pooled estimate",
     "reference": "the pooled estimate"},
    {"hypothesis": "blood pressure blood pressure blood pressure fell",
     "reference": "blood pressure fell and blood pressure stayed low"},
    # Hypothesis shorter / longer than reference (brevity penalty direction).
    {"hypothesis": "pain intensity fell",
     "reference": "pain intensity fell substantially across all fourteen included trials"},
    {"hypothesis": "the intervention improved outcomes across every prespecified subgroup and follow-up window in the trial",
     "reference": "the intervention improved outcomes"},
    # Word-order permutations (hits ROUGE-L harder than ROUGE-1).
    {"hypothesis": "glucose fasting reduced intake synbiotic",
     "reference": "synbiotic intake reduced fasting glucose"},
    {"hypothesis": "improved sleep exercise aerobic latency onset",
     "reference": "aerobic exercise improved sleep onset latency"},
    # Single-token and two-token edge shapes.
    {"hypothesis": "significant", "reference": "significant"},
    {"hypothesis": "not significant", "reference": "significant not"},
    # Realistic abstract-length pair.
    {"hypothesis": "this meta-analysis of eleven randomized controlled trials found that "
                   "telehealth coaching lowered self-reported fatigue by 1.8 points with "
                   "a 95% confidence interval from 0.9 to 2.7 and moderate heterogeneity",
     "reference": "in a meta-analysis of eleven randomized trials telehealth coaching "
                  "reduced self-reported fatigue by 1.8 points (95% CI 0.9 to 2.7); "
                  "heterogeneity was moderate"},
    {"hypothesis": "acupuncture was associated with improved peak expiratory flow in "
                   "asthma although the quality of evidence was rated low",
     "reference": "acupuncture improved peak expiratory flow in adults with asthma; "
                  "evidence quality was low"},
    {"hypothesis": "low-dose aspirin stabilized migraine attack frequency over six months "
                   "of follow-up in two pragmatic pilot trials",
     "reference": "low-dose aspirin stabilized attack frequency during six months of "
                  "follow-up in pragmatic trials"},
    {"hypothesis": "dietary fibre intake moderated irritable bowel syndrome severity with "
                   "an effect size of 0.42 and p below 0.05",
     "reference": "dietary fibre moderated irritable bowel symptom severity (effect size "
                  "0.42, p < 0.05)"},
    {"hypothesis": "resistance training increased quality of life scores but did not "
                   "change analgesic consumption",
     "reference": "resistance training raised quality of life scores without changing "
                  "analgesic consumption"},
]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="fixtures/metric_pairs.jsonl")
    args = parser.parse_args()

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as f:
        for pair in PAIRS:
            hyp, ref = pair["hypothesis"], pair["reference"]
            row = {
                "hypothesis": hyp,
                "reference": ref,
                "expected": {
                    "bleu": oracle_bleu(hyp, [ref]),
                    "rouge1": oracle_rouge_n(hyp, ref, 1),
                    "rouge2": oracle_rouge_n(hyp, ref, 2),
                    "rougeL": oracle_rouge_l(hyp, ref),
                },
            }
            f.write(json.dumps(row, ensure_ascii=False) + "\n")
    print(f"pinned {len(PAIRS)} pairs to {out}")


if __name__ == "__main__":
    main()
