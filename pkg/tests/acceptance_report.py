"""Shared sink for acceptance-criteria result lines.

Each acceptance test records exactly one PASS/SKIP line here; the conftest
terminal-summary hook prints them at the end of the run.
"""

from __future__ import annotations

LINES: list[str] = []


def record(line: str) -> None:
    LINES.append(line)
    print(line)
