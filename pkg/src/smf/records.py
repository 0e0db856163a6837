"""Sectioned plain-text record format.

The registry, the sample log and the per-lifecycle outcome summaries all use
the same shape: a UTF-8 file of sections, each introduced by a header line
``[kind:KEY]`` followed by ``name = value`` field lines (single spaces around
the ``=``), sections separated by one blank line, ``#`` starting a comment
line. Field order within a section is preserved, so rewriting a file keeps
fields it does not understand.

Values must be single-line; the format has no escape syntax.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import StorageError

_HEADER_RE = re.compile(r"^\[([a-z_]+):([^\]\n]+)\]$")
_FIELD_RE = re.compile(r"^([A-Za-z0-9_.-]+) = (.*)$")


@dataclass
class Block:
    """One section: a (kind, key) header plus ordered fields."""

    kind: str
    key: str
    fields: dict[str, str] = field(default_factory=dict)

    def serialize(self) -> str:
        lines = [f"[{self.kind}:{self.key}]"]
        for name, value in self.fields.items():
            if "\n" in value or "\r" in value:
                raise StorageError(
                    f"field {name!r} of [{self.kind}:{self.key}] contains a newline"
                )
            lines.append(f"{name} = {value}")
        return "\n".join(lines) + "\n"


def parse_blocks(text: str) -> list[Block]:
    """Parse a whole document into blocks.

    Raises StorageError on field lines outside a section or lines that are
    neither headers, fields, comments nor blank.
    """
    blocks: list[Block] = []
    current: Block | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        m = _HEADER_RE.match(line)
        if m:
            current = Block(kind=m.group(1), key=m.group(2))
            blocks.append(current)
            continue
        m = _FIELD_RE.match(line)
        if m:
            if current is None:
                raise StorageError(f"line {lineno}: field outside any section")
            current.fields[m.group(1)] = m.group(2)
            continue
        raise StorageError(f"line {lineno}: unparseable line {line!r}")
    return blocks


def serialize_blocks(blocks: list[Block]) -> str:
    return "\n".join(b.serialize() for b in blocks)
