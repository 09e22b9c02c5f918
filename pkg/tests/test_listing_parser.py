"""Listing parser: line grammar, operand normalization, term counting."""

from __future__ import annotations

import pytest

from ddgf.listing_parser import (
    Instruction,
    ParseDiagnostics,
    TermDictionary,
    count_terms,
    emit_histogram,
    normalize_operand,
    parse_listing,
    split_operands,
)

LISTING = """\
.text:00401000 ; Segment type: Pure code
.text:00401000 _text segment para public 'CODE' use32
.text:00401000                 assume cs:_text
.text:00401000
.text:00401000 ; =============== S U B R O U T I N E ===============
.text:00401000 sub_401000 proc near
.text:00401000 8B 45 08        mov     eax, [ebp+arg_0]
.text:00401003 03 45 0C        add     eax, [ebp+arg_4]
.text:00401006 loc_401006:
.text:00401006 89 45 F8        mov     [ebp+var_8], eax
.text:00401009 F3 A5           rep movsd
.text:0040100B E8 10 00 00 00  call    sub_401020
.text:00401010 C3              retn
.text:00401010 sub_401000 endp
.data:00403000 10 27 00 00     dword_403000 dd 2710h
.data:00403004 ??              db ?
"""


def test_parse_extracts_code_lines_only():
    """Comments, directives, labels and data lines never become instructions."""
    ins = parse_listing(LISTING, "s1")
    assert [i.mnemonic for i in ins] == ["mov", "add", "mov", "movsd", "call", "retn"]
    assert all(i.sample_id == "s1" for i in ins)


def test_parse_addresses_and_operands():
    ins = parse_listing(LISTING)
    assert ins[0].address == 0x401000
    assert ins[0].operands == ["eax", "[ebp+arg_0]"]
    assert ins[2].operands == ["[ebp+var_8]", "eax"]
    assert ins[4].operands == ["sub_401020"]
    assert ins[5].operands == []


def test_parse_marks_function_starts():
    """The first instruction after a proc directive starts a function."""
    ins = parse_listing(LISTING)
    assert ins[0].starts_function
    assert not any(i.starts_function for i in ins[1:])


def test_parse_drops_rep_prefix():
    """Prefixed string ops count as the underlying mnemonic."""
    ins = parse_listing(LISTING)
    assert ins[3].mnemonic == "movsd"


def test_parse_diagnostics_counts():
    diag = ParseDiagnostics()
    parse_listing(LISTING, diagnostics=diag)
    assert diag.code_lines == 6
    assert diag.skipped_lines > 0
    assert diag.malformed_lines == 0


def test_parse_malformed_line_is_counted_not_fatal():
    """A line that looks like code but cannot be parsed is tallied and skipped."""
    bad = ".text:00401000 8B 45 08        mov#bad  eax\n"
    diag = ParseDiagnostics()
    ins = parse_listing(bad, diagnostics=diag)
    assert ins == []
    assert diag.malformed_lines == 1


def test_parse_requires_hex_byte_column():
    """Without at least one machine-code byte the line is not code."""
    ins = parse_listing(".text:00401000                 mov     eax, ebx\n")
    assert ins == []


def test_parse_handles_byte_column_artifacts():
    """Relocation '+' suffixes and '??' placeholders still count as bytes."""
    text = (
        ".text:00401000 68 00 30 40 00+ push    offset dword_403000\n"
        ".text:00401005 ?? ?? 8B F1     mov     esi, ecx\n"
    )
    ins = parse_listing(text)
    assert [i.mnemonic for i in ins] == ["push", "mov"]


def test_parse_empty_and_whitespace_input():
    assert parse_listing("") == []
    assert parse_listing("\n\n   \n") == []


def test_parse_merges_diagnostics_across_calls():
    d1 = ParseDiagnostics(code_lines=2, skipped_lines=1, malformed_lines=0)
    d2 = ParseDiagnostics(code_lines=3, skipped_lines=4, malformed_lines=2)
    d1.merge(d2)
    assert (d1.code_lines, d1.skipped_lines, d1.malformed_lines) == (5, 5, 2)


def test_instruction_rejects_bad_mnemonic():
    with pytest.raises(ValueError):
        Instruction(mnemonic="MOV ", operands=[])


def test_normalize_operand_lowercases_outside_brackets_only():
    """Symbol names inside brackets keep their case; register names fold."""
    assert normalize_operand("EAX") == "eax"
    assert normalize_operand("DWORD PTR [EBP+Var_4]") == "dword ptr [EBP+Var_4]"
    assert normalize_operand("  OFFSET   Unk_403000 ") == "offset unk_403000"


def test_split_operands_respects_nesting_and_quotes():
    assert split_operands("eax, [ebx+ecx*4], 1") == ["eax", "[ebx+ecx*4]", "1"]
    assert split_operands("dword ptr [eax], 'a,b'") == ["dword ptr [eax]", "'a,b'"]
    assert split_operands("") == []


def test_term_dictionary_counts_known_and_unknown():
    d = TermDictionary(terms=frozenset({"mov", "add"}))
    for m in ["mov", "mov", "add", "bogus"]:
        d.add(m)
    assert d.counts["mov"] == 2
    assert d.counts["add"] == 1
    assert d.unknown["bogus"] == 1
    assert d.total() == 4  # unknowns count toward the grand total


def test_term_dictionary_sorted_counts_order():
    """Rows sort by descending count, then alphabetically; unknowns bucket once."""
    d = TermDictionary(terms=frozenset({"mov", "add", "sub"}))
    for m in ["mov", "mov", "add", "sub", "sub", "weird1", "weird2"]:
        d.add(m)
    rows = d.sorted_counts()
    assert rows == [("mov", 2), ("sub", 2), ("unknown", 2), ("add", 1)]
    assert d.sorted_counts(include_unknown=False) == [("mov", 2), ("sub", 2), ("add", 1)]


def test_term_dictionary_bundled_load_has_common_opcodes():
    d = TermDictionary.load()
    for m in ["mov", "push", "call", "jmp", "xor", "lea", "retn"]:
        assert m in d.terms


def test_count_terms_and_emit_histogram(tmp_path):
    d = TermDictionary.load()
    count_terms(parse_listing(LISTING), d)
    out = tmp_path / "freq.csv"
    emit_histogram(d, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "term,count"
    assert lines[1] == "mov,2"
    assert set(lines[2:]) == {"add,1", "call,1", "movsd,1", "retn,1"}


def test_emit_histogram_wraps_write_errors(tmp_path):
    d = TermDictionary.load()
    target = tmp_path / "missing" / "freq.csv"
    with pytest.raises(OSError, match=str(target)):
        emit_histogram(d, target)


def test_parse_is_deterministic():
    """Same text, same instruction stream, run after run."""
    a = parse_listing(LISTING, "x")
    b = parse_listing(LISTING, "x")
    assert a == b
