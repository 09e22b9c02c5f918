"""Shared fixtures: one session-scoped synthetic corpus and its encoding.

Also echoes the acceptance-criteria result lines into the terminal summary so
they are visible even with output capture on.
"""

from __future__ import annotations

import pytest

from ddgf.pipeline import run_encode, run_fingerprint
from ddgf.synthetic import gen_synthetic_corpus

from .acceptance_report import LINES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)

CORPUS_SEED = 20406
SAMPLES_PER_CLASS = 8


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """A small labeled synthetic corpus (9 classes) shared across tests."""
    d = tmp_path_factory.mktemp("corpus")
    gen_synthetic_corpus(d, SAMPLES_PER_CLASS, CORPUS_SEED)
    return d


@pytest.fixture(scope="session")
def encoded(corpus_dir, tmp_path_factory):
    """The corpus fingerprinted and packed into a bit matrix."""
    out = tmp_path_factory.mktemp("enc")
    fp_path = out / "FP.jsonl"
    run_fingerprint(corpus_dir, corpus_dir / "trainLabels.csv", fp_path)
    return run_encode(fp_path, out / "MATRIX.bin", out / "VOCAB.txt")
