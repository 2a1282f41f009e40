from __future__ import annotations

import pytest

from corpusgen import build_corpus


@pytest.fixture
def corpus(tmp_path):
    """A freshly generated synthetic corpus plus its ground truth."""
    truth = build_corpus(tmp_path / "corpus")
    return tmp_path / "corpus", truth
