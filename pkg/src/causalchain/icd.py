"""ICD-9/ICD-10 code normalization and the CMS GEM crosswalk.

Codes are stored undotted and uppercase internally; the dotted form
(e.g. "J44.9") is a display concern only.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import GemParseError, MalformedCode

#: Sentinel emitted for ICD-9 codes with no GEM target.
UNK_CODE = "UNK-CODE"


class CodingSystem(Enum):
    ICD9 = "icd9"
    ICD10 = "icd10"


_CODE_RE = re.compile(r"^[A-Z0-9]{3,7}$")


@dataclass(frozen=True)
class NormalizedCode:
    """A validated, dot-free diagnosis code plus its coding system."""

    text: str
    system: CodingSystem

    def __post_init__(self):
        if not _CODE_RE.match(self.text):
            raise MalformedCode(f"invalid code text {self.text!r}")
        lead = self.text[0]
        if self.system is CodingSystem.ICD9:
            if not (lead.isdigit() or lead in "EV"):
                raise MalformedCode(
                    f"ICD-9 code must start with a digit, 'E' or 'V': {self.text!r}"
                )
        else:
            if not lead.isalpha():
                raise MalformedCode(f"ICD-10 code must start with a letter: {self.text!r}")

    def dotted(self) -> str:
        """Display form with a dot after the third character, if anything follows."""
        return self.text if len(self.text) <= 3 else f"{self.text[:3]}.{self.text[3:]}"

    def __str__(self) -> str:
        return self.text


def normalize_code(raw: str, system: CodingSystem) -> NormalizedCode:
    """Normalize a raw code string: trim, uppercase, strip the dot, validate.

    Raises MalformedCode for empty input, illegal characters, a leading
    character inconsistent with the coding system, or length out of range.
    """
    cleaned = raw.strip().upper().replace(".", "")
    if not cleaned:
        raise MalformedCode("empty code")
    return NormalizedCode(cleaned, system)


class GemTable:
    """ICD-9 to ICD-10 General Equivalence Mapping.

    Immutable after load; lookups return target codes in file order.
    """

    def __init__(self, entries: dict[str, list[NormalizedCode]], flags: dict[str, list[str]]):
        self._entries = entries
        self._flags = flags

    def lookup(self, code: NormalizedCode | str) -> list[NormalizedCode]:
        key = code.text if isinstance(code, NormalizedCode) else code
        return list(self._entries.get(key, []))

    def flags_for(self, code: NormalizedCode | str) -> list[str]:
        key = code.text if isinstance(code, NormalizedCode) else code
        return list(self._flags.get(key, []))

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, code) -> bool:
        key = code.text if isinstance(code, NormalizedCode) else code
        return key in self._entries


def load_gem(path: str | Path) -> GemTable:
    """Parse a GEM file: whitespace-delimited (icd9, icd10, flags) triples.

    Blank lines and '#' comments are skipped. Multiple rows per source code
    aggregate their targets in file order.
    """
    entries: dict[str, list[NormalizedCode]] = {}
    flags: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 3:
                raise GemParseError(f"expected 3 fields, got {len(parts)}", line_no)
            src_raw, tgt_raw, flag = parts
            try:
                src = normalize_code(src_raw, CodingSystem.ICD9)
                tgt = normalize_code(tgt_raw, CodingSystem.ICD10)
            except MalformedCode as exc:
                raise GemParseError(str(exc), line_no) from exc
            entries.setdefault(src.text, []).append(tgt)
            flags.setdefault(src.text, []).append(flag)
    return GemTable(entries, flags)


class MappingPolicy(Enum):
    """Disambiguation for one-to-many GEM rows."""

    FIRST = "first"


def map_sequence_9_to_10(
    codes: list[NormalizedCode],
    gem: GemTable,
    policy: MappingPolicy = MappingPolicy.FIRST,
) -> tuple[list[str], int]:
    """Map an ICD-9 sequence to ICD-10 text codes, preserving order and length.

    Unmappable codes become UNK_CODE and are counted rather than dropped, so
    positional priority information survives. Returns (mapped, unmapped_count).
    """
    if policy is not MappingPolicy.FIRST:
        raise ValueError(f"unsupported policy {policy}")
    mapped: list[str] = []
    unmapped = 0
    for code in codes:
        targets = gem.lookup(code)
        if targets:
            mapped.append(targets[0].text)
        else:
            mapped.append(UNK_CODE)
            unmapped += 1
    return mapped, unmapped
