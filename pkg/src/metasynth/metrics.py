"""Text-overlap and embedding-similarity metrics, plus the inverse-cosine
dissimilarity loss with its analytic gradient for trainer integration.

All scores are kept on 0-1 scales internally; reports scale to percent.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

DEFAULT_EPSILON = 1e-8


def _as_vector(v: Sequence[float] | np.ndarray) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector has non-finite components")
    return arr


def cosine_similarity(u: Sequence[float] | np.ndarray, v: Sequence[float] | np.ndarray) -> float:
    """dot(u, v) / (|u||v|), clamped to [-1, 1] against rounding."""
    a, b = _as_vector(u), _as_vector(v)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm vectors")
    return float(min(1.0, max(-1.0, float(a @ b) / (na * nb))))


@dataclass(frozen=True)
class ICDParams:
    epsilon: float = DEFAULT_EPSILON
    n: int | None = None  # expected batch size; validated against len(pairs)
    safeguard: bool = True

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class SimilarityPair:
    truth_vec: np.ndarray
    gen_vec: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "truth_vec", _as_vector(self.truth_vec))
        object.__setattr__(self, "gen_vec", _as_vector(self.gen_vec))
        if self.truth_vec.shape != self.gen_vec.shape:
            raise ValueError("truth and generated vectors must share a dimension")


def _pair_denominators(pairs: Sequence[SimilarityPair], p: ICDParams) -> list[float]:
    if not pairs:
        raise ValueError("icd needs at least one pair")
    if p.n is not None and p.n != len(pairs):
        raise ValueError(f"params declare batch size {p.n} but got {len(pairs)} pairs")
    denoms = []
    for pair in pairs:
        sim = cosine_similarity(pair.truth_vec, pair.gen_vec)
        if p.safeguard:
            # Keep the denominator at least epsilon so the loss never flips
            # sign; non-negative similarities follow the exact formula.
            denoms.append(max(sim, 0.0) + p.epsilon)
        else:
            if sim + p.epsilon <= 0:
                raise ValueError(
                    f"cosine {sim} + epsilon {p.epsilon} is not positive; "
                    "enable safeguarding or filter the pair"
                )
            denoms.append(sim + p.epsilon)
    return denoms


def icd(pairs: Sequence[SimilarityPair], p: ICDParams | None = None) -> float:
    """Mean over pairs of 1 / (cosine similarity + epsilon)."""
    p = p or ICDParams()
    denoms = _pair_denominators(pairs, p)
    return sum(1.0 / d for d in denoms) / len(denoms)


def icd_gradient(pairs: Sequence[SimilarityPair], p: ICDParams | None = None) -> list[np.ndarray]:
    """Analytic gradient of ``icd`` w.r.t. each pair's generated vector.

    d/dv [1/(cos+eps)] = -(cos+eps)^-2 * dcos/dv with the standard cosine
    gradient; the 1/N batch mean is folded in.  Where the safeguard clamps a
    negative similarity the loss is locally flat and the gradient is zero.
    """
    p = p or ICDParams()
    denoms = _pair_denominators(pairs, p)
    n = len(pairs)
    grads: list[np.ndarray] = []
    for pair, denom in zip(pairs, denoms):
        u, v = pair.truth_vec, pair.gen_vec
        nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
        cos = float(u @ v) / (nu * nv)
        if p.safeguard and cos < 0.0:
            grads.append(np.zeros_like(v))
            continue
        dcos_dv = u / (nu * nv) - cos * v / (nv * nv)
        grads.append((-1.0 / n) * denom**-2 * dcos_dv)
    return grads


def _tokenize(text: str) -> list[str]:
    return text.lower().split()


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    hypothesis: str,
    references: list[str],
    max_n: int = 4,
    smoothing: str = "none",
) -> float:
    """Sentence BLEU with modified n-gram precision and brevity penalty.

    ``smoothing="none"`` returns 0 whenever any order has zero matches;
    ``"add1"`` applies add-one smoothing to orders above unigram.
    """
    hyp = _tokenize(hypothesis)
    if not hyp:
        raise ValueError("hypothesis is empty after tokenization")
    refs = [_tokenize(r) for r in references]
    if not refs or any(not r for r in refs):
        raise ValueError("references must be non-empty")

    log_precisions = []
    for n in range(1, max_n + 1):
        hyp_counts = _ngrams(hyp, n)
        max_ref_counts: Counter = Counter()
        for ref in refs:
            for gram, count in _ngrams(ref, n).items():
                max_ref_counts[gram] = max(max_ref_counts[gram], count)
        matches = sum(min(c, max_ref_counts[g]) for g, c in hyp_counts.items())
        total = max(0, len(hyp) - n + 1)
        if smoothing == "add1" and n > 1:
            matches, total = matches + 1, total + 1
        if matches == 0 or total == 0:
            return 0.0
        log_precisions.append(math.log(matches / total))

    c = len(hyp)
    r = min((len(ref) for ref in refs), key=lambda L: (abs(L - c), L))
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(sum(log_precisions) / max_n)


class RougeScore(NamedTuple):
    precision: float
    recall: float
    f1: float


def _prf(overlap: int, hyp_total: int, ref_total: int) -> RougeScore:
    p = overlap / hyp_total if hyp_total else 0.0
    r = overlap / ref_total if ref_total else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return RougeScore(p, r, f)


def rouge_n(hypothesis: str, reference: str, n: int) -> RougeScore:
    """N-gram overlap precision/recall/F1."""
    hyp, ref = _tokenize(hypothesis), _tokenize(reference)
    if not hyp or not ref:
        raise ValueError("hypothesis and reference must be non-empty")
    hyp_counts, ref_counts = _ngrams(hyp, n), _ngrams(ref, n)
    overlap = sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
    return _prf(overlap, sum(hyp_counts.values()), sum(ref_counts.values()))


def rouge_l(hypothesis: str, reference: str) -> RougeScore:
    """Longest-common-subsequence precision/recall/F1."""
    hyp, ref = _tokenize(hypothesis), _tokenize(reference)
    if not hyp or not ref:
        raise ValueError("hypothesis and reference must be non-empty")
    prev = [0] * (len(ref) + 1)
    for h in hyp:
        cur = [0]
        for j, r in enumerate(ref, start=1):
            cur.append(prev[j - 1] + 1 if h == r else max(prev[j], cur[j - 1]))
        prev = cur
    return _prf(prev[len(ref)], len(hyp), len(ref))


def swgt(gen_text: str, truth_text: str, embedder) -> float:
    """Similarity with ground truth: percent cosine between embeddings, floored at 0."""
    if not gen_text.strip() or not truth_text.strip():
        raise ValueError("texts must be non-empty")
    gen_vec, truth_vec = embedder.embed([gen_text, truth_text])
    return max(0.0, 100.0 * cosine_similarity(gen_vec, truth_vec))


@dataclass(frozen=True)
class MetricReport:
    bleu: float
    rouge1: RougeScore
    rouge2: RougeScore
    rougeL: RougeScore
    cosine: float
    swgt_percent: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.bleu <= 1.0:
            raise ValueError(f"bleu out of range: {self.bleu}")
        for name in ("rouge1", "rouge2", "rougeL"):
            score: RougeScore = getattr(self, name)
            if not all(0.0 <= x <= 1.0 for x in score):
                raise ValueError(f"{name} out of range: {score}")
        if not -1.0 <= self.cosine <= 1.0:
            raise ValueError(f"cosine out of range: {self.cosine}")
        if not 0.0 <= self.swgt_percent <= 100.0:
            raise ValueError(f"swgt out of range: {self.swgt_percent}")


def compute_report(hypothesis: str, reference: str, embedder) -> MetricReport:
    gen_vec, truth_vec = embedder.embed([hypothesis, reference])
    cos = cosine_similarity(gen_vec, truth_vec)
    return MetricReport(
        bleu=bleu(hypothesis, [reference]),
        rouge1=rouge_n(hypothesis, reference, 1),
        rouge2=rouge_n(hypothesis, reference, 2),
        rougeL=rouge_l(hypothesis, reference),
        cosine=cos,
        swgt_percent=max(0.0, 100.0 * cos),
    )
