"""Evaluation suite: modified corpus BLEU (clipped 1/2-gram precision with
brevity penalty) and the three accuracy metrics, plus attention export.

BLEU is reported on a 0-100 scale. Special tokens never enter the metrics;
callers pass plain code sequences.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyCorpus, IoError

Pair = tuple[Sequence[str], Sequence[str]]  # (candidate, reference)


def _ngrams(seq: Sequence[str], n: int) -> Counter:
    return Counter(tuple(seq[i : i + n]) for i in range(len(seq) - n + 1))


@dataclass(frozen=True)
class PrecisionCount:
    matched: int
    total: int

    @property
    def precision(self) -> float | None:
        """None when no n-grams exist at this order (consumer decides)."""
        if self.total == 0:
            return None
        return self.matched / self.total


def clipped_precision(pairs: Sequence[Pair], n: int) -> PrecisionCount:
    """Corpus-level clipped n-gram precision.

    Candidate n-gram counts are clipped by their reference counts, then
    matched and total are summed over the whole corpus.
    """
    matched = total = 0
    for candidate, reference in pairs:
        cand_counts = _ngrams(candidate, n)
        ref_counts = _ngrams(reference, n)
        total += sum(cand_counts.values())
        matched += sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
    return PrecisionCount(matched, total)


@dataclass(frozen=True)
class BleuReport:
    bleu: float                 # 0-100
    p1: float
    p2: float | None            # None when the corpus has no 2-grams
    bp: float
    counts: dict
    bigram_fallback: bool = False


def corpus_bleu(pairs: Sequence[Pair]) -> BleuReport:
    """Geometric mean of clipped 1- and 2-gram precision times brevity penalty.

    bp = min(1, exp(1 - ref_len/cand_len)) on corpus length totals. If the
    corpus has no candidate 2-grams at all, the 2-gram term is dropped from
    the geometric mean and bigram_fallback is flagged.
    """
    if not pairs:
        raise EmptyCorpus("corpus_bleu needs at least one pair")
    for candidate, _ in pairs:
        if len(candidate) == 0:
            raise EmptyCorpus("candidate sequences must be non-empty")
    c1 = clipped_precision(pairs, 1)
    c2 = clipped_precision(pairs, 2)
    cand_len = sum(len(c) for c, _ in pairs)
    ref_len = sum(len(r) for _, r in pairs)
    bp = min(1.0, math.exp(1.0 - ref_len / cand_len))
    p1 = c1.precision or 0.0
    if c2.total == 0:
        score = 100.0 * bp * p1
        return BleuReport(
            bleu=score, p1=p1, p2=None, bp=bp,
            counts={1: (c1.matched, c1.total), 2: (0, 0)},
            bigram_fallback=True,
        )
    p2 = c2.precision
    score = 100.0 * bp * math.sqrt(p1 * p2)
    return BleuReport(
        bleu=score, p1=p1, p2=p2, bp=bp,
        counts={1: (c1.matched, c1.total), 2: (c2.matched, c2.total)},
    )


def sentence_bleu(candidate: Sequence[str], reference: Sequence[str]) -> BleuReport:
    """Single-pair helper with the same 2-gram-absent fallback."""
    return corpus_bleu([(candidate, reference)])


@dataclass(frozen=True)
class AccuracyReport:
    exact_sequence: float
    code_level: float
    underlying: float
    n_records: int


def exact_sequence_accuracy(pairs: Sequence[Pair]) -> float:
    """Fraction of records whose candidate equals the reference exactly
    (any wrong code or wrong order scores 0 for that record)."""
    if not pairs:
        raise EmptyCorpus("no pairs")
    return sum(list(c) == list(r) for c, r in pairs) / len(pairs)


def code_accuracy(pairs: Sequence[Pair]) -> float:
    """Order-insensitive multiset recall, micro-averaged over reference
    positions: sum |candidate ∩ reference| / sum len(reference)."""
    if not pairs:
        raise EmptyCorpus("no pairs")
    matched = total = 0
    for candidate, reference in pairs:
        inter = Counter(candidate) & Counter(reference)
        matched += sum(inter.values())
        total += len(reference)
    return matched / total if total else 0.0


def underlying_accuracy(pairs: Sequence[Pair]) -> float:
    """Fraction of records whose first code (the underlying cause) matches."""
    if not pairs:
        raise EmptyCorpus("no pairs")
    return sum(len(c) > 0 and len(r) > 0 and c[0] == r[0] for c, r in pairs) / len(pairs)


def accuracy_report(pairs: Sequence[Pair]) -> AccuracyReport:
    return AccuracyReport(
        exact_sequence=exact_sequence_accuracy(pairs),
        code_level=code_accuracy(pairs),
        underlying=underlying_accuracy(pairs),
        n_records=len(pairs),
    )


# ----------------------------------------------------------- attention export

_ATTN_PRECISION = 8


def export_attention(
    matrix: np.ndarray,
    src_codes: Sequence[str],
    tgt_codes: Sequence[str],
    path: str | Path,
) -> None:
    """Write a headered numeric grid: source codes across the top, one row
    per generated code (EOS row included when present)."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape != (len(tgt_codes), len(src_codes)):
        raise ValueError(
            f"matrix shape {matrix.shape} does not match "
            f"({len(tgt_codes)}, {len(src_codes)})"
        )
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\t" + "\t".join(src_codes) + "\n")
            for label, row in zip(tgt_codes, matrix):
                cells = "\t".join(f"{v:.{_ATTN_PRECISION}f}" for v in row)
                fh.write(f"{label}\t{cells}\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc


def parse_attention(path: str | Path) -> tuple[list[str], list[str], np.ndarray]:
    """Round-trip reader for export_attention files."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    src_codes = lines[0].split("\t")[1:]
    tgt_codes: list[str] = []
    rows: list[list[float]] = []
    for line in lines[1:]:
        parts = line.split("\t")
        tgt_codes.append(parts[0])
        rows.append([float(v) for v in parts[1:]])
    matrix = np.array(rows) if rows else np.zeros((0, len(src_codes)))
    return src_codes, tgt_codes, matrix
