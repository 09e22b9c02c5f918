"""Generate a desk-scale synthetic corpus in the IDA listing format.

Nine families, each built around three data-movement motifs no other family
uses (a chain, a cycle and a fan-out star whose size grows with the class
id), plus a small pool of fan-in motifs shared by everyone.  Registers and
memory operands are drawn at random per segment, so samples of one family
produce textually different listings whose dependency graphs are isomorphic.
Noise instructions (stack ops, compares, ALU) pad the segments without
touching the graphs.  Output bytes are fully determined by (seed,
n_per_class).
"""

from __future__ import annotations

import random
from pathlib import Path

__all__ = ["Motif", "family_motifs", "SHARED_MOTIFS", "gen_synthetic_corpus"]

N_FAMILIES = 9

# A motif is (node_count, edge list); edges are (src, dst) node indices.
Motif = tuple[int, tuple[tuple[int, int], ...]]


def _chain(length: int) -> Motif:
    return length + 1, tuple((i, i + 1) for i in range(length))


def _cycle(length: int) -> Motif:
    return length, tuple((i, (i + 1) % length) for i in range(length))


def _star_out(degree: int) -> Motif:
    return degree + 1, tuple((0, i) for i in range(1, degree + 1))


def _star_in(degree: int) -> Motif:
    return degree + 1, tuple((i, 0) for i in range(1, degree + 1))


def family_motifs(cls: int) -> list[Motif]:
    """The three motifs exclusive to family ``cls`` (1..9)."""
    if not 1 <= cls <= N_FAMILIES:
        raise ValueError(f"class must be 1..{N_FAMILIES}, got {cls}")
    return [_chain(cls + 1), _cycle(cls + 1), _star_out(cls + 1)]


# Present in any family's samples; keeps intra-family distances nonzero while
# staying well below the >= 6-hash core separation between families.
SHARED_MOTIFS: list[Motif] = [_star_in(d) for d in range(2, 8)]

_REGISTERS = ["eax", "ebx", "ecx", "edx", "esi", "edi", "ebp"]
_MEMORY = [
    "[esp+4]", "[esp+8]", "[ebp+var_4]", "[ebp+var_8]", "[ebp+var_C]",
    "[ebp+var_10]", "[ebp+arg_0]", "[ebp+arg_4]",
    "dword_403000", "dword_403004", "dword_403008", "dword_40300C",
]
_NAME_POOL = _REGISTERS + _MEMORY

_NOISE = [
    "push    esi",
    "push    offset dword_403000",
    "pop     edi",
    "cmp     eax, 1",
    "test    eax, eax",
    "add     esp, 4",
    "sub     ecx, 2",
    "inc     edx",
    "dec     ebx",
    "nop",
    "xor     ecx, ecx",
    "lea     eax, [esp+8]",
]

_ID_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789"


class _Writer:
    """Accumulates listing lines with a running address and fake byte columns."""

    def __init__(self, rng: random.Random, start: int = 0x401000):
        self.rng = rng
        self.addr = start
        self.lines: list[str] = []

    def raw(self, text: str, advance: int = 0) -> None:
        self.lines.append(f".text:{self.addr:08X} {text}")
        self.addr += advance

    def instruction(self, text: str) -> None:
        n = self.rng.randint(1, 6)
        byte_cols = " ".join(f"{self.rng.randrange(256):02X}" for _ in range(n))
        self.lines.append(f".text:{self.addr:08X} {byte_cols:<21} {text}")
        self.addr += n


def _emit_motif_segment(w: _Writer, motif: Motif, rng: random.Random) -> None:
    n_nodes, edges = motif
    names = rng.sample(_NAME_POOL, n_nodes)
    movs = [f"mov     {names[d]}, {names[s]}" for s, d in edges]
    rng.shuffle(movs)
    for _ in range(rng.randint(0, 3)):
        movs.insert(rng.randrange(len(movs) + 1), rng.choice(_NOISE))
    for text in movs:
        w.instruction(text)


def _emit_terminator(w: _Writer, rng: random.Random) -> None:
    target = w.addr + rng.randint(0x10, 0x400)
    w.instruction(
        rng.choice(
            [
                "retn",
                f"jz      short loc_{target:X}",
                f"jnz     short loc_{target:X}",
                f"jmp     loc_{target:X}",
                f"call    sub_{target:X}",
            ]
        )
    )


def _emit_sample(sample_id: str, cls: int, seed: int) -> str:
    rng = random.Random(f"{seed}/{sample_id}")
    w = _Writer(rng)

    w.raw("; Segment type: Pure code")
    w.raw("_text segment para public 'CODE' use32")
    w.raw("                assume cs:_text")
    w.raw("")

    # Core motifs (possibly repeated; duplicates dedupe anyway) plus a few
    # shared fan-ins and pure-noise blocks.
    segments: list[Motif | None] = []
    for motif in family_motifs(cls):
        segments.extend([motif] * rng.randint(1, 2))
    segments.extend(rng.sample(SHARED_MOTIFS, rng.randint(0, 2)))
    segments.extend([None] * rng.randint(1, 2))  # noise-only blocks
    rng.shuffle(segments)

    # Group the segments into a handful of procedures.
    i = 0
    while i < len(segments):
        func_addr = w.addr
        w.raw("; =============== S U B R O U T I N E ===============")
        w.raw(f"sub_{func_addr:X} proc near")
        n_in_func = min(rng.randint(1, 3), len(segments) - i)
        for j in range(n_in_func):
            if rng.random() < 0.3:
                w.raw(f"loc_{w.addr:X}:")
            seg = segments[i + j]
            if seg is None:
                for _ in range(rng.randint(2, 4)):
                    w.instruction(rng.choice(_NOISE))
            else:
                _emit_motif_segment(w, seg, rng)
            # Last block of a function may fall through to endp; the
            # function boundary still closes it.
            if j < n_in_func - 1 or rng.random() >= 0.1:
                _emit_terminator(w, rng)
        w.raw(f"sub_{func_addr:X} endp")
        w.raw("")
        i += n_in_func

    w.raw("6A 61 62              db 'jab',0", advance=4)
    w.raw("                align 4")
    w.raw("_text ends")
    w.raw("                end")
    return "\n".join(w.lines) + "\n"


def gen_synthetic_corpus(
    out_dir: str | Path, n_per_class: int, seed: int
) -> list[tuple[str, int]]:
    """Write ``9 * n_per_class`` listing files plus trainLabels.csv.

    Returns the (sample_id, class) manifest, sorted by sample id.  Bytes are
    deterministic for a given (seed, n_per_class).
    """
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1, got {n_per_class}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    id_rng = random.Random(f"{seed}/ids")
    manifest: list[tuple[str, int]] = []
    seen = set()
    for cls in range(1, N_FAMILIES + 1):
        for _ in range(n_per_class):
            sample_id = "".join(id_rng.choice(_ID_ALPHABET) for _ in range(20))
            while sample_id in seen:
                sample_id = "".join(id_rng.choice(_ID_ALPHABET) for _ in range(20))
            seen.add(sample_id)
            manifest.append((sample_id, cls))
    manifest.sort()

    for sample_id, cls in manifest:
        (out / f"{sample_id}.asm").write_text(_emit_sample(sample_id, cls, seed))

    labels = ['"Id","Class"'] + [f'"{sid}",{cls}' for sid, cls in manifest]
    (out / "trainLabels.csv").write_text("\n".join(labels) + "\n")
    return manifest
