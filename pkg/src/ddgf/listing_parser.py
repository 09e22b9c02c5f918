"""Parse IDA-style ``.asm`` text-section listings into instruction streams.

A code line looks like::

    .text:00401000 8B EC                 mov     ebp, esp

i.e. ``<section>:<hexaddr> <hexbytes...> <mnemonic> [operands]``.  Everything
else (data definitions, alignment directives, labels, ``proc`` headers, blank
lines, comment banners) is skipped.  Parsing is line-oriented and never fatal:
lines that look like code but cannot be tokenized are counted in a
diagnostics tally and dropped.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

__all__ = [
    "Instruction",
    "ParseDiagnostics",
    "TermDictionary",
    "parse_listing",
    "normalize_operand",
    "split_operands",
    "count_terms",
    "emit_histogram",
]

# <section>:<hexaddr> followed by the rest of the line.
_ADDR_RE = re.compile(r"^([.\w$]+):([0-9A-Fa-f]{4,16})(?=\s|$)\s?(.*)$")

# One column of the raw-bytes dump: "8B", "8B+" (patched byte marker) or "??"
# (undefined byte).  Bytes are uppercase in the Kaggle listings, mnemonics
# lowercase, so the two never collide.
_HEX_BYTE_RE = re.compile(r"^(?:[0-9A-F]{2}\+?|\?\?\+?)$")

_MNEMONIC_RE = re.compile(r"^[a-z][a-z0-9]*$")

# Instruction prefixes dropped before the mnemonic proper (prefix modeling is
# out of scope; "rep stosd" counts as stosd).
_PREFIXES = {"rep", "repe", "repz", "repne", "repnz", "lock"}

# Assembler directives that mark a non-code line when found in mnemonic
# position (first or second token after the byte columns).
_DIRECTIVES = {
    "db", "dw", "dd", "dq", "dt", "df", "do",
    "align", "assume", "public", "extrn", "include", "end", "org", "even",
    "segment", "ends", "proc", "endp", "unicode", "model",
}

UNKNOWN_TERM = "unknown"


@dataclass
class Instruction:
    """One parsed disassembly line."""

    mnemonic: str
    operands: list[str]
    address: int | None = None
    sample_id: str = ""
    # Set on the first instruction after a "name proc near" header; lets the
    # segmenter close blocks at function boundaries without re-reading text.
    starts_function: bool = False

    def __post_init__(self):
        if not self.mnemonic or any(c.isspace() for c in self.mnemonic):
            raise ValueError(f"bad mnemonic: {self.mnemonic!r}")


@dataclass
class ParseDiagnostics:
    """Per-listing line tally; code + skipped + malformed == total lines."""

    code_lines: int = 0
    skipped_lines: int = 0  # blanks, data, labels, directives, comments
    malformed_lines: int = 0

    def merge(self, other: "ParseDiagnostics") -> None:
        self.code_lines += other.code_lines
        self.skipped_lines += other.skipped_lines
        self.malformed_lines += other.malformed_lines


def _strip_comment(s: str) -> str:
    """Cut at the first ';' that is not inside a quoted string."""
    quote = None
    for i, c in enumerate(s):
        if quote:
            if c == quote:
                quote = None
        elif c in "'\"":
            quote = c
        elif c == ";":
            return s[:i]
    return s


def normalize_operand(s: str) -> str:
    """Collapse whitespace and lowercase everything outside brackets.

    Memory expressions keep their spelling (modulo whitespace) so that
    distinct textual expressions stay distinct nodes downstream.
    """
    s = " ".join(s.split())
    out = []
    depth = 0
    for c in s:
        if c == "[":
            depth += 1
        out.append(c if depth > 0 else c.lower())
        if c == "]":
            depth = max(0, depth - 1)
    return "".join(out)


def split_operands(s: str) -> list[str]:
    """Split an operand string on top-level commas.

    Commas inside ``[...]``, ``(...)`` or quotes do not split, so memory
    expressions stay intact as single tokens.
    """
    parts = []
    depth = 0
    quote = None
    start = 0
    for i, c in enumerate(s):
        if quote:
            if c == quote:
                quote = None
        elif c in "'\"":
            quote = c
        elif c in "[(":
            depth += 1
        elif c in "])":
            depth = max(0, depth - 1)
        elif c == "," and depth == 0:
            parts.append(s[start:i])
            start = i + 1
    parts.append(s[start:])
    return [p for p in (normalize_operand(p) for p in parts) if p]


def parse_listing(
    text: str,
    sample_id: str = "",
    diagnostics: ParseDiagnostics | None = None,
) -> list[Instruction]:
    """Parse one listing into instructions, in file order.

    ``diagnostics``, when given, accumulates the line tally.  An empty or
    all-data input yields an empty list.
    """
    diag = diagnostics if diagnostics is not None else ParseDiagnostics()
    instructions: list[Instruction] = []
    pending_func_start = False

    for line in text.splitlines():
        if not line.strip():
            diag.skipped_lines += 1
            continue

        m = _ADDR_RE.match(line)
        if m is None:
            diag.skipped_lines += 1
            continue
        address = int(m.group(2), 16)
        rest = _strip_comment(m.group(3))

        spans = [(t.group(0), t.start(), t.end()) for t in re.finditer(r"\S+", rest)]
        # Consume the raw-byte columns.
        i = 0
        while i < len(spans) and _HEX_BYTE_RE.match(spans[i][0]):
            i += 1
        n_bytes = i
        tokens = [t for t, _, _ in spans[i:]]

        if not tokens:
            diag.skipped_lines += 1  # pure byte run or bare address
            continue

        head = tokens[0]
        second = tokens[1] if len(tokens) > 1 else ""

        # proc headers close the current function; remember for the next
        # instruction so the segmenter can split there.
        if second == "proc" or head == "proc":
            pending_func_start = True
            diag.skipped_lines += 1
            continue
        if (
            head.endswith(":")
            or head.lower() in _DIRECTIVES
            or second.lower() in _DIRECTIVES
            or second == "="
        ):
            diag.skipped_lines += 1
            continue

        # A code line must carry at least one raw byte column.
        if n_bytes == 0:
            diag.skipped_lines += 1
            continue

        while i < len(spans) and spans[i][0].lower() in _PREFIXES:
            i += 1
        if i >= len(spans):
            # Bare prefix ("rep" alone): count the prefix itself.
            mnemonic = head.lower()
            operand_text = ""
        else:
            mnemonic = spans[i][0].lower()
            operand_text = rest[spans[i][2]:]

        if not _MNEMONIC_RE.match(mnemonic):
            diag.malformed_lines += 1
            continue

        instructions.append(
            Instruction(
                mnemonic=mnemonic,
                operands=split_operands(operand_text),
                address=address,
                sample_id=sample_id,
                starts_function=pending_func_start,
            )
        )
        pending_func_start = False
        diag.code_lines += 1

    return instructions


def _default_dict_path() -> Path:
    return Path(str(resources.files("ddgf").joinpath("data/x86_opcodes.txt")))


@dataclass
class TermDictionary:
    """x86/64 opcode terms plus occurrence counts.

    Unknown mnemonics are tallied under :data:`UNKNOWN_TERM`, keyed by their
    own spelling in :attr:`unknown` so the vendor-specific forms IDA emits
    stay inspectable.
    """

    terms: frozenset[str]
    counts: Counter = field(default_factory=Counter)
    unknown: Counter = field(default_factory=Counter)

    @classmethod
    def load(cls, path: str | Path | None = None) -> "TermDictionary":
        """Load the term set from a file (default: the bundled x86/64 list)."""
        p = Path(path) if path is not None else _default_dict_path()
        terms = set()
        for line in p.read_text().splitlines():
            line = line.strip().lower()
            if line and not line.startswith("#"):
                terms.add(line)
        return cls(terms=frozenset(terms))

    def add(self, mnemonic: str) -> None:
        if mnemonic in self.terms:
            self.counts[mnemonic] += 1
        else:
            self.unknown[mnemonic] += 1

    def merge(self, other: "TermDictionary") -> None:
        """Associative, commutative merge for parallel counting."""
        self.counts.update(other.counts)
        self.unknown.update(other.unknown)

    def total(self) -> int:
        return sum(self.counts.values()) + sum(self.unknown.values())

    def sorted_counts(self, include_unknown: bool = True) -> list[tuple[str, int]]:
        """(term, count) rows, descending by count, ties alphabetical."""
        rows = [(t, c) for t, c in self.counts.items() if c > 0]
        if include_unknown:
            n_unknown = sum(self.unknown.values())
            if n_unknown:
                rows.append((UNKNOWN_TERM, n_unknown))
        rows.sort(key=lambda tc: (-tc[1], tc[0]))
        return rows


def count_terms(
    instructions: Iterable[Instruction], dictionary: TermDictionary
) -> TermDictionary:
    """Tally mnemonic occurrences into ``dictionary`` (returned for chaining)."""
    for ins in instructions:
        dictionary.add(ins.mnemonic)
    return dictionary


def emit_histogram(dictionary: TermDictionary, path: str | Path) -> None:
    """Write ``term,count`` rows sorted by descending count.

    Byte output is deterministic for a given dictionary ('\\n' endings).
    """
    rows = dictionary.sorted_counts()
    data = "term,count\n" + "".join(f"{t},{c}\n" for t, c in rows)
    try:
        Path(path).write_text(data)
    except OSError as e:
        raise OSError(f"cannot write term histogram to {path}: {e}") from e
