"""Split instruction streams into basic-block segments.

A segment ends immediately after a control-transfer instruction (jumps,
calls, returns, loops, interrupts) or at end of stream.  Stack instructions
like ``push`` never split.  Jump *targets* do not open blocks; splitting is
driven purely by the transfer instructions themselves.  Segments partition
the input: concatenating them in index order reproduces the stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .listing_parser import Instruction

__all__ = ["Segment", "TerminatorSet", "segment"]


def _default_terminators_path() -> Path:
    return Path(str(resources.files("ddgf").joinpath("data/terminators.txt")))


@dataclass(frozen=True)
class TerminatorSet:
    """Mnemonics that close a basic block."""

    mnemonics: frozenset[str]

    @classmethod
    def load(cls, path: str | Path | None = None) -> "TerminatorSet":
        """Load from a file, one mnemonic per line (default: bundled set)."""
        p = Path(path) if path is not None else _default_terminators_path()
        names = set()
        for line in p.read_text().splitlines():
            line = line.strip().lower()
            if line and not line.startswith("#"):
                names.add(line)
        return cls(mnemonics=frozenset(names))

    @classmethod
    def default(cls) -> "TerminatorSet":
        return cls.load()

    def __contains__(self, mnemonic: str) -> bool:
        return mnemonic in self.mnemonics


@dataclass
class Segment:
    """A contiguous basic block; only the final instruction may transfer control."""

    sample_id: str
    index: int
    instructions: list[Instruction]

    def __len__(self) -> int:
        return len(self.instructions)


def segment(
    instructions: list[Instruction],
    terms: TerminatorSet | None = None,
    split_at_functions: bool = True,
) -> list[Segment]:
    """Partition a single sample's instruction stream into segments.

    ``split_at_functions`` also closes a segment at ``proc`` boundaries so
    that the tail of one function is never glued to the head of the next.
    """
    if terms is None:
        terms = TerminatorSet.default()
    sample_id = instructions[0].sample_id if instructions else ""

    segments: list[Segment] = []
    current: list[Instruction] = []

    def flush():
        if current:
            segments.append(Segment(sample_id, len(segments), list(current)))
            current.clear()

    for ins in instructions:
        if split_at_functions and ins.starts_function:
            flush()
        current.append(ins)
        if ins.mnemonic in terms:
            flush()
    flush()
    return segments
