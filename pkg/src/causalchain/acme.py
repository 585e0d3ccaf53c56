"""ACME decision-table parsing and causal-validity queries.

Each rule says a cause code (or lexicographic range of cause codes) may lead
to an effect code. Chains run underlying-cause-first, so adjacency (a, b) is
checked with a as cause and b as effect.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import AcmeParseError, MalformedCode
from .icd import CodingSystem, NormalizedCode, normalize_code


@dataclass(frozen=True)
class AcmeRule:
    """One decision-table row: cause_lo[..cause_hi] -> effect."""

    effect: str
    cause_lo: str
    cause_hi: Optional[str] = None

    def covers_cause(self, cause: str) -> bool:
        if self.cause_hi is None:
            return cause == self.cause_lo
        return self.cause_lo <= cause <= self.cause_hi


@dataclass(frozen=True)
class ChainValidity:
    valid: bool
    first_bad_index: Optional[int] = None


class CausalGraph:
    """Immutable rule set with an interval index for O(log n) pair queries.

    Range membership is inclusive lexicographic comparison on normalized
    (undotted, uppercase) code text.
    """

    def __init__(self, rules: Sequence[AcmeRule]):
        seen: set[AcmeRule] = set()
        deduped: list[AcmeRule] = []
        for rule in rules:
            if rule not in seen:
                seen.add(rule)
                deduped.append(rule)
        self.rules: tuple[AcmeRule, ...] = tuple(deduped)
        self.rule_count = len(rules)
        # Per effect: intervals sorted by lower bound, plus a running max of
        # upper bounds so a single bisect answers containment.
        self._index: dict[str, tuple[list[str], list[str]]] = {}
        by_effect: dict[str, list[tuple[str, str]]] = {}
        for rule in deduped:
            hi = rule.cause_hi if rule.cause_hi is not None else rule.cause_lo
            by_effect.setdefault(rule.effect, []).append((rule.cause_lo, hi))
        for effect, intervals in by_effect.items():
            intervals.sort()
            lows = [lo for lo, _ in intervals]
            prefix_max_hi: list[str] = []
            best = ""
            for _, hi in intervals:
                best = max(best, hi)
                prefix_max_hi.append(best)
            self._index[effect] = (lows, prefix_max_hi)

    def is_valid_pair(self, cause: NormalizedCode | str, effect: NormalizedCode | str) -> bool:
        c = cause.text if isinstance(cause, NormalizedCode) else cause
        e = effect.text if isinstance(effect, NormalizedCode) else effect
        entry = self._index.get(e)
        if entry is None:
            return False
        lows, prefix_max_hi = entry
        pos = bisect.bisect_right(lows, c)
        return pos > 0 and prefix_max_hi[pos - 1] >= c

    def chain_is_valid(self, chain: Sequence[NormalizedCode | str]) -> ChainValidity:
        """Check every adjacent (cause, effect) pair; single-code chains pass."""
        for i in range(len(chain) - 1):
            if not self.is_valid_pair(chain[i], chain[i + 1]):
                return ChainValidity(False, i)
        return ChainValidity(True)


def load_acme(path: str | Path) -> CausalGraph:
    """Parse an ACME table: one rule per line, columns F3 F2 [F1].

    F3 is the effect, F2 the cause (or range low), F1 the optional range
    high. Blank lines and '#' comments are skipped.
    """
    rules: list[AcmeRule] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) not in (2, 3):
                raise AcmeParseError(f"expected 2 or 3 fields, got {len(parts)}", line_no)
            try:
                codes = [normalize_code(p, CodingSystem.ICD10).text for p in parts]
            except MalformedCode as exc:
                raise AcmeParseError(str(exc), line_no) from exc
            if len(codes) == 2:
                rules.append(AcmeRule(effect=codes[0], cause_lo=codes[1]))
            else:
                effect, lo, hi = codes
                if lo > hi:
                    raise AcmeParseError(f"range low {lo} above high {hi}", line_no)
                rules.append(AcmeRule(effect=effect, cause_lo=lo, cause_hi=hi))
    return CausalGraph(rules)


def is_valid_pair(cause, effect, graph: CausalGraph) -> bool:
    return graph.is_valid_pair(cause, effect)


def chain_is_valid(chain: Sequence, graph: CausalGraph) -> ChainValidity:
    return graph.chain_is_valid(chain)


def filter_corpus(records: Iterable, graph: CausalGraph) -> tuple[list, int]:
    """Drop records whose target chain has any invalid adjacent pair.

    Order is preserved. Returns (kept, removed_count).
    """
    kept = []
    removed = 0
    for record in records:
        if graph.chain_is_valid(record.tgt).valid:
            kept.append(record)
        else:
            removed += 1
    return kept, removed


class ConstraintMask:
    """Boolean successor matrix over target-vocabulary indices.

    mask[prev][nxt] is True when nxt may follow prev. Special tokens are
    always-allowed successors, and rows for special tokens allow everything.
    """

    def __init__(self, allowed: np.ndarray, special_ids: Sequence[int]):
        self.allowed = allowed
        self.special_ids = tuple(special_ids)

    def permits(self, prev_id: int, next_id: int) -> bool:
        return bool(self.allowed[prev_id, next_id])

    def successors(self, prev_id: int) -> np.ndarray:
        """Boolean row of admissible successor token ids."""
        return self.allowed[prev_id]


def build_constraint_mask(vocab, graph: CausalGraph) -> ConstraintMask:
    """Precompute admissible successors for every target-vocabulary token.

    Works per effect token: each rule interval selects vocabulary codes by
    bisect over the sorted code texts, avoiding the full V^2 pair scan.
    """
    size = len(vocab)
    special_ids = vocab.special_ids()
    allowed = np.zeros((size, size), dtype=bool)

    code_ids = [i for i in range(size) if i not in special_ids]
    code_texts = [vocab.token(i) for i in code_ids]
    order = sorted(range(len(code_texts)), key=lambda j: code_texts[j])
    sorted_texts = [code_texts[j] for j in order]
    sorted_ids = [code_ids[j] for j in order]

    for rule in graph.rules:
        effect_id = vocab.index_of(rule.effect)
        if effect_id is None or effect_id in special_ids:
            continue
        hi = rule.cause_hi if rule.cause_hi is not None else rule.cause_lo
        start = bisect.bisect_left(sorted_texts, rule.cause_lo)
        stop = bisect.bisect_right(sorted_texts, hi)
        for j in range(start, stop):
            allowed[sorted_ids[j], effect_id] = True

    for sid in special_ids:
        allowed[sid, :] = True  # special-token rows allow all successors
        allowed[:, sid] = True  # special tokens always admissible
    return ConstraintMask(allowed, special_ids)
