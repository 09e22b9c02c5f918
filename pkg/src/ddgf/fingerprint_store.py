"""Per-program fingerprints, corpus vocabulary, and one-hot encoding.

A fingerprint is the deduplicated set of graph hashes extracted from one
program.  The corpus vocabulary is the sorted union of all hashes; encoding
maps each fingerprint to a binary indicator row over the vocabulary, stored
as a packed bitset (at ~10k samples x ~75k hashes a dense byte matrix would
be ~0.8 GB, packed rows are ~100 MB and make Hamming distance a popcount).

Fingerprint files are JSON lines: one header object recording the extraction
configuration (WL iterations, digest scheme, instruction filter, terminator
set, tool version), then one object per sample with sorted hashes.  Files
whose configuration fields differ must not be mixed; loading enforces this
on merge.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ddg_builder import DEFAULT_INSTRUCTION_FILTER, build_graph
from .segmenter import Segment, TerminatorSet
from .wl_hasher import DEFAULT_ITERATIONS, DIGEST_NAME, GraphHash, dedupe, wl_hash

__all__ = [
    "Fingerprint",
    "Vocabulary",
    "EncodedCorpus",
    "CorpusHeader",
    "HeaderMismatch",
    "build_fingerprint",
    "build_vocabulary",
    "encode_corpus",
    "decode_row",
    "save_fingerprints",
    "load_fingerprints",
    "save_vocabulary",
    "load_vocabulary",
    "save_matrix",
    "load_matrix",
    "load_labels",
]

FINGERPRINT_FORMAT = "ddgf-fingerprints"
MATRIX_FORMAT = "ddgf-matrix"


class HeaderMismatch(ValueError):
    """Raised when fingerprint corpora with different extraction configs meet."""


@dataclass(frozen=True)
class CorpusHeader:
    """Extraction provenance that travels with every fingerprint file."""

    wl_iterations: int = DEFAULT_ITERATIONS
    digest: str = DIGEST_NAME
    instruction_filter: tuple[str, ...] = tuple(sorted(DEFAULT_INSTRUCTION_FILTER))
    terminators: tuple[str, ...] = ()
    tool_version: str = ""

    @classmethod
    def build(
        cls,
        wl_iterations: int = DEFAULT_ITERATIONS,
        instruction_filter: Iterable[str] = DEFAULT_INSTRUCTION_FILTER,
        terminators: TerminatorSet | Iterable[str] | None = None,
    ) -> "CorpusHeader":
        if terminators is None:
            terminators = TerminatorSet.default()
        if isinstance(terminators, TerminatorSet):
            terminators = terminators.mnemonics
        from . import __version__

        return cls(
            wl_iterations=wl_iterations,
            instruction_filter=tuple(sorted(instruction_filter)),
            terminators=tuple(sorted(terminators)),
            tool_version=__version__,
        )

    def compatible(self, other: "CorpusHeader") -> bool:
        """Config equality; tool_version is recorded but not compared."""
        return (
            self.wl_iterations == other.wl_iterations
            and self.digest == other.digest
            and self.instruction_filter == other.instruction_filter
            and self.terminators == other.terminators
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": FINGERPRINT_FORMAT,
                "version": 1,
                "tool_version": self.tool_version,
                "digest": self.digest,
                "wl_iterations": self.wl_iterations,
                "instruction_filter": list(self.instruction_filter),
                "terminators": list(self.terminators),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "CorpusHeader":
        obj = json.loads(line)
        if obj.get("format") != FINGERPRINT_FORMAT:
            raise ValueError(f"not a fingerprint file header: {line[:80]!r}")
        return cls(
            wl_iterations=int(obj["wl_iterations"]),
            digest=obj["digest"],
            instruction_filter=tuple(obj["instruction_filter"]),
            terminators=tuple(obj["terminators"]),
            tool_version=obj.get("tool_version", ""),
        )


@dataclass(frozen=True)
class Fingerprint:
    """Deduplicated hash set for one sample, plus its class label if known."""

    sample_id: str
    hashes: frozenset[GraphHash]
    label: int | None = None


def build_fingerprint(
    sample_id: str,
    segments: Sequence[Segment],
    instruction_filter: frozenset[str] | set[str] = DEFAULT_INSTRUCTION_FILTER,
    iterations: int = DEFAULT_ITERATIONS,
    label: int | None = None,
) -> Fingerprint:
    """Graph-hash every segment and dedupe; empty graphs contribute nothing.

    A sample whose segments all produce empty graphs yields an empty (legal)
    fingerprint.
    """
    hashes = dedupe(
        wl_hash(g, iterations)
        for g in (build_graph(s, instruction_filter) for s in segments)
        if not g.is_empty()
    )
    return Fingerprint(sample_id=sample_id, hashes=frozenset(hashes), label=label)


@dataclass
class Vocabulary:
    """All distinct corpus hashes, sorted ascending; index = position."""

    hashes: list[GraphHash]
    index: dict[GraphHash, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {h: i for i, h in enumerate(self.hashes)}

    @property
    def dimension(self) -> int:
        return len(self.hashes)


def build_vocabulary(corpus: Iterable[Fingerprint]) -> Vocabulary:
    """Sorted union of all fingerprint hash sets; corpus order is irrelevant."""
    union: set[str] = set()
    for fp in corpus:
        union.update(fp.hashes)
    return Vocabulary(hashes=sorted(union))


@dataclass
class EncodedCorpus:
    """Binary indicator matrix over the vocabulary, one packed bitset per row.

    Rows follow sorted sample_id order; bit j of row i is set iff vocabulary
    hash j occurs in sample i's fingerprint.  ``packed`` uses big-endian bit
    order per byte (numpy packbits default); padding bits are zero.
    """

    packed: np.ndarray  # (n_samples, ceil(n_cols / 8)) uint8
    n_cols: int
    sample_ids: list[str]
    labels: list[int | None]

    @property
    def n_rows(self) -> int:
        return len(self.sample_ids)


def encode_corpus(corpus: Sequence[Fingerprint], vocab: Vocabulary) -> EncodedCorpus:
    """One-hot encode the corpus; every hash must be in the vocabulary.

    A hash missing from the vocabulary is an error naming the sample and the
    hash: new data means the space must be re-encoded, never silently padded.
    """
    ordered = sorted(corpus, key=lambda fp: fp.sample_id)
    dim = vocab.dimension
    bits = np.zeros((len(ordered), dim), dtype=np.uint8)
    for i, fp in enumerate(ordered):
        for h in fp.hashes:
            j = vocab.index.get(h)
            if j is None:
                raise ValueError(
                    f"sample {fp.sample_id}: hash {h} not in vocabulary "
                    f"(dimension {dim}); re-encode the corpus"
                )
            bits[i, j] = 1
    packed = np.packbits(bits, axis=1) if dim else np.zeros((len(ordered), 0), np.uint8)
    return EncodedCorpus(
        packed=packed,
        n_cols=dim,
        sample_ids=[fp.sample_id for fp in ordered],
        labels=[fp.label for fp in ordered],
    )


def decode_row(enc: EncodedCorpus, row: int, vocab: Vocabulary) -> set[GraphHash]:
    """Inverse of encoding for one row (round-trips within the vocabulary)."""
    if enc.n_cols == 0:
        return set()
    bits = np.unpackbits(enc.packed[row])[: enc.n_cols]
    return {vocab.hashes[j] for j in np.nonzero(bits)[0]}


# ---------------------------------------------------------------------------
# Persistence


def save_fingerprints(
    path: str | Path, corpus: Iterable[Fingerprint], header: CorpusHeader
) -> None:
    """JSON-lines file, header first, samples sorted by id (deterministic bytes)."""
    lines = [header.to_json()]
    for fp in sorted(corpus, key=lambda f: f.sample_id):
        lines.append(
            json.dumps(
                {"id": fp.sample_id, "label": fp.label, "hashes": sorted(fp.hashes)},
                sort_keys=True,
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_fingerprints(
    path: str | Path, expect: CorpusHeader | None = None
) -> tuple[CorpusHeader, list[Fingerprint]]:
    """Load a fingerprint file; with ``expect`` given, refuse a mismatched header."""
    text = Path(path).read_text().splitlines()
    if not text:
        raise ValueError(f"empty fingerprint file: {path}")
    header = CorpusHeader.from_json(text[0])
    if expect is not None and not header.compatible(expect):
        raise HeaderMismatch(
            f"{path}: extraction config does not match: "
            f"{header} vs expected {expect}"
        )
    corpus = []
    for line in text[1:]:
        if not line.strip():
            continue
        obj = json.loads(line)
        label = obj.get("label")
        corpus.append(
            Fingerprint(
                sample_id=obj["id"],
                hashes=frozenset(obj["hashes"]),
                label=int(label) if label is not None else None,
            )
        )
    return header, corpus


def save_vocabulary(path: str | Path, vocab: Vocabulary) -> None:
    """One hex hash per line, sorted."""
    Path(path).write_text("".join(h + "\n" for h in vocab.hashes))


def load_vocabulary(path: str | Path) -> Vocabulary:
    hashes = [l.strip() for l in Path(path).read_text().splitlines() if l.strip()]
    if hashes != sorted(hashes):
        raise ValueError(f"vocabulary file not sorted: {path}")
    return Vocabulary(hashes=hashes)


def save_matrix(path: str | Path, enc: EncodedCorpus) -> None:
    """One JSON header line, then the raw packed rows."""
    header = json.dumps(
        {
            "format": MATRIX_FORMAT,
            "version": 1,
            "rows": enc.n_rows,
            "cols": enc.n_cols,
            "row_bytes": int(enc.packed.shape[1]),
            "sample_ids": enc.sample_ids,
            "labels": enc.labels,
        },
        sort_keys=True,
    )
    with open(path, "wb") as f:
        f.write(header.encode("utf-8") + b"\n")
        f.write(np.ascontiguousarray(enc.packed).tobytes())


def load_matrix(path: str | Path) -> EncodedCorpus:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        if header.get("format") != MATRIX_FORMAT:
            raise ValueError(f"not a matrix file: {path}")
        rows, row_bytes = header["rows"], header["row_bytes"]
        raw = f.read(rows * row_bytes)
    if len(raw) != rows * row_bytes:
        raise ValueError(f"truncated matrix file: {path}")
    packed = np.frombuffer(raw, dtype=np.uint8).reshape(rows, row_bytes)
    return EncodedCorpus(
        packed=packed,
        n_cols=header["cols"],
        sample_ids=list(header["sample_ids"]),
        labels=[int(l) if l is not None else None for l in header["labels"]],
    )


def load_labels(path: str | Path) -> dict[str, int]:
    """Read a Kaggle-style labels CSV: rows ``"<id>",<class>``, header optional."""
    labels: dict[str, int] = {}
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if len(row) < 2:
                continue
            try:
                labels[row[0]] = int(row[1])
            except ValueError:
                continue  # header row
    return labels
