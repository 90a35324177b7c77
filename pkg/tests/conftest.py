from __future__ import annotations

from pathlib import Path

import pytest

from metasynth.corpus import SupportAbstract, load_corpus

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def mini_corpus():
    return load_corpus(FIXTURES / "mad_mini.jsonl")


def make_supports(record_id: str, token_counts: list[int]) -> list[SupportAbstract]:
    """Synthetic abstracts with exact whitespace-token lengths."""
    return [
        SupportAbstract(
            id=f"{record_id}-s{i:02d}",
            text=" ".join(f"v{i}w{j}" for j in range(count)),
            record_id=record_id,
        )
        for i, count in enumerate(token_counts, start=1)
    ]
