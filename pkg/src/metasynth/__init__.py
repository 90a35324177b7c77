"""Desk-scale retrieval-augmented synthesis pipeline for meta-analysis
abstracts: corpus handling, overlapping chunk decomposition, exact cosine
retrieval, prompt-driven generation, overlap/similarity metrics with the
inverse-cosine loss, and a three-evaluator relevance-voting protocol."""

__version__ = "0.1.0"
