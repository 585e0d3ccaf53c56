"""Record data model, corpus I/O, vocabularies, splits, and synthetic data.

The canonical interchange is a pair of aligned text files (`<name>.src`,
`<name>.tgt`), one whitespace-tokenized sequence per line. A JSON-lines
variant with record ids is provided for the service.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import ConfigInvalid, LineCountMismatch, MalformedCode
from .icd import CodingSystem, NormalizedCode, normalize_code
from .rng import SplitMix64

MAX_SRC_LEN = 45
MAX_TGT_LEN = 18

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
SPECIAL_TOKENS = (PAD, BOS, EOS, UNK)


@dataclass(frozen=True)
class Record:
    """One decedent: priority-ordered diagnoses and the causal chain.

    The target chain is underlying-cause-first.
    """

    src: tuple[NormalizedCode, ...]
    tgt: tuple[NormalizedCode, ...]
    id: str

    def __post_init__(self):
        if not 1 <= len(self.src) <= MAX_SRC_LEN:
            raise ValueError(f"record {self.id}: src length {len(self.src)} out of [1, {MAX_SRC_LEN}]")
        if not 1 <= len(self.tgt) <= MAX_TGT_LEN:
            raise ValueError(f"record {self.id}: tgt length {len(self.tgt)} out of [1, {MAX_TGT_LEN}]")

    @property
    def src_texts(self) -> list[str]:
        return [c.text for c in self.src]

    @property
    def tgt_texts(self) -> list[str]:
        return [c.text for c in self.tgt]


class Vocabulary:
    """Token/index bijection with PAD, BOS, EOS, UNK pinned at indices 0-3."""

    def __init__(self, code_tokens: Sequence[str]):
        self.tokens: list[str] = list(SPECIAL_TOKENS) + list(code_tokens)
        self._index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, token: str) -> int:
        return self._index.get(token, UNK_ID)

    def encode_sequence(self, tokens: Iterable[str]) -> list[int]:
        return [self.encode(t) for t in tokens]

    def token(self, idx: int) -> str:
        return self.tokens[idx]

    def decode_sequence(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def index_of(self, token: str) -> Optional[int]:
        return self._index.get(token)

    @staticmethod
    def special_ids() -> tuple[int, int, int, int]:
        return PAD_ID, BOS_ID, EOS_ID, UNK_ID


def build_vocab(records: Sequence[Record], side: str, min_freq: int = 1) -> Vocabulary:
    """Frequency-filtered vocabulary; codes ordered by (freq desc, token asc)."""
    if side not in ("src", "tgt"):
        raise ValueError("side must be 'src' or 'tgt'")
    counts: Counter[str] = Counter()
    for record in records:
        counts.update(record.src_texts if side == "src" else record.tgt_texts)
    keep = [t for t, c in counts.items() if c >= min_freq]
    keep.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(keep)


# ---------------------------------------------------------------- corpus I/O


def load_parallel(
    src_path: str | Path,
    tgt_path: str | Path,
    src_system: CodingSystem = CodingSystem.ICD9,
    tgt_system: CodingSystem = CodingSystem.ICD10,
) -> list[Record]:
    """Load aligned source/target files; line i of each pairs into record i."""
    src_lines = Path(src_path).read_text(encoding="utf-8").splitlines()
    tgt_lines = Path(tgt_path).read_text(encoding="utf-8").splitlines()
    if len(src_lines) != len(tgt_lines):
        raise LineCountMismatch(
            f"{src_path}: {len(src_lines)} lines vs {tgt_path}: {len(tgt_lines)} lines"
        )
    records = []
    for i, (src_line, tgt_line) in enumerate(zip(src_lines, tgt_lines), start=1):
        try:
            src = tuple(normalize_code(t, src_system) for t in src_line.split())
            tgt = tuple(normalize_code(t, tgt_system) for t in tgt_line.split())
        except MalformedCode as exc:
            raise MalformedCode(f"line {i}: {exc}") from exc
        records.append(Record(src=src, tgt=tgt, id=f"r{i:06d}"))
    return records


def save_parallel(records: Sequence[Record], src_path: str | Path, tgt_path: str | Path) -> None:
    with open(src_path, "w", encoding="utf-8") as fs, open(tgt_path, "w", encoding="utf-8") as ft:
        for record in records:
            fs.write(" ".join(record.src_texts) + "\n")
            ft.write(" ".join(record.tgt_texts) + "\n")


def load_jsonl(
    path: str | Path,
    src_system: CodingSystem = CodingSystem.ICD9,
    tgt_system: CodingSystem = CodingSystem.ICD10,
) -> list[Record]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            records.append(
                Record(
                    src=tuple(normalize_code(t, src_system) for t in obj["src"]),
                    tgt=tuple(normalize_code(t, tgt_system) for t in obj["tgt"]),
                    id=str(obj.get("id", f"r{i:06d}")),
                )
            )
    return records


def save_jsonl(records: Sequence[Record], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(
                json.dumps({"id": record.id, "src": record.src_texts, "tgt": record.tgt_texts})
                + "\n"
            )


# ------------------------------------------------------------------ splitting


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[int, int, int] = (7, 1, 2)
    seed: int = 0

    def __post_init__(self):
        if any(r <= 0 for r in self.ratios):
            raise ConfigInvalid("split ratios must be positive")


@dataclass
class Split:
    train: list[Record]
    valid: list[Record]
    test: list[Record]


def split(records: Sequence[Record], spec: SplitSpec) -> Split:
    """Seeded shuffle, then proportional partition with remainder to train."""
    if not records:
        raise ConfigInvalid("cannot split an empty corpus")
    shuffled = list(records)
    SplitMix64(spec.seed).shuffle(shuffled)
    total = sum(spec.ratios)
    n = len(shuffled)
    n_valid = n * spec.ratios[1] // total
    n_test = n * spec.ratios[2] // total
    n_train = n - n_valid - n_test
    return Split(
        train=shuffled[:n_train],
        valid=shuffled[n_train : n_train + n_valid],
        test=shuffled[n_train + n_valid :],
    )


@dataclass
class Fold:
    train: list[Record]
    valid: list[Record]
    test: list[Record]


def kfold(records: Sequence[Record], k: int = 5, seed: int = 0) -> list[Fold]:
    """k folds with disjoint, exhaustive test parts; non-test split 7:1."""
    if len(records) < k:
        raise ConfigInvalid(f"need at least {k} records for {k}-fold CV")
    shuffled = list(records)
    SplitMix64(seed).shuffle(shuffled)
    n = len(shuffled)
    bounds = [n * i // k for i in range(k + 1)]
    folds = []
    for f in range(k):
        test = shuffled[bounds[f] : bounds[f + 1]]
        rest = shuffled[: bounds[f]] + shuffled[bounds[f + 1] :]
        SplitMix64(seed + 1 + f).shuffle(rest)
        n_valid = len(rest) * 1 // 8
        folds.append(Fold(train=rest[n_valid:], valid=rest[:n_valid], test=test))
    return folds


# ----------------------------------------------------------- synthetic corpus


@dataclass(frozen=True)
class SyntheticConfig:
    """Generator calibrated to the published corpus statistics."""

    n_records: int = 1000
    src_vocab_size: int = 50
    tgt_vocab_size: int = 30
    mean_src_len: float = 18.84
    mean_tgt_len: float = 2.25
    one_code_chain_fraction: float = 0.3177
    rule_fanout: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.n_records <= 0 or self.src_vocab_size <= 0 or self.tgt_vocab_size <= 0:
            raise ConfigInvalid("counts must be positive")
        if not 0.0 <= self.one_code_chain_fraction <= 1.0:
            raise ConfigInvalid("one_code_chain_fraction must be in [0, 1]")
        if self.rule_fanout < 1:
            raise ConfigInvalid("rule_fanout must be >= 1")
        if not 1.0 <= self.mean_src_len <= MAX_SRC_LEN:
            raise ConfigInvalid("mean_src_len out of range")
        p1 = self.one_code_chain_fraction
        if not p1 + 2 * (1 - p1) - 1e-9 <= self.mean_tgt_len <= p1 + 4 * (1 - p1) + 1e-9:
            raise ConfigInvalid("mean_tgt_len unreachable with chain lengths 1-4")
        if self.tgt_vocab_size < 4:
            raise ConfigInvalid("tgt_vocab_size must be at least 4")


@dataclass
class SyntheticCorpus:
    records: list[Record]
    chain_of: dict[str, list[str]] = field(repr=False)
    acme_lines: list[str] = field(repr=False)


def _chain_length_counts(cfg: SyntheticConfig) -> list[int]:
    """Apportion chain lengths 1-4 over the source vocabulary.

    Exact largest-remainder apportionment so the realized mean target length
    matches cfg.mean_tgt_len up to vocabulary granularity.
    """
    p1 = cfg.one_code_chain_fraction
    rest = 1.0 - p1
    if rest <= 0:
        probs = [1.0, 0.0, 0.0, 0.0]
    else:
        m2 = (cfg.mean_tgt_len - p1) / rest  # conditional mean over lengths 2-4
        if m2 <= 3.0:
            probs = [p1, rest * (3.0 - m2), rest * (m2 - 2.0), 0.0]
        else:
            probs = [p1, 0.0, rest * (4.0 - m2), rest * (m2 - 3.0)]
    n = cfg.src_vocab_size
    floors = [int(p * n) for p in probs]
    remainders = [p * n - f for p, f in zip(probs, floors)]
    missing = n - sum(floors)
    for idx in sorted(range(4), key=lambda i: -remainders[i])[:missing]:
        floors[idx] += 1
    counts = []
    for length, c in zip((1, 2, 3, 4), floors):
        counts.extend([length] * c)
    return counts


def generate_synthetic(cfg: SyntheticConfig) -> SyntheticCorpus:
    """Build a deterministic, learnable corpus plus a matching ACME table.

    Target codes form a chain-plus-shortcuts DAG whose edges are emitted as
    ACME rules. Each source code carries a hidden target chain (a DAG path);
    a record's target is the chain of its first source code, so the task is
    an exact function of the input.
    """
    rng = SplitMix64(cfg.seed)
    src_codes = [str(10000 + i) for i in range(cfg.src_vocab_size)]
    tgt_codes = [f"{chr(ord('A') + i // 1000)}{i % 1000:03d}" for i in range(cfg.tgt_vocab_size)]

    # DAG: backbone edges t_i -> t_{i+1}, plus random forward shortcuts.
    edges: set[tuple[str, str]] = set()
    v = cfg.tgt_vocab_size
    for i in range(v - 1):
        edges.add((tgt_codes[i], tgt_codes[i + 1]))
        for _ in range(cfg.rule_fanout - 1):
            j = i + 1 + rng.randint(v - i - 1)
            edges.add((tgt_codes[i], tgt_codes[j]))
    acme_lines = sorted(f"{effect} {cause}" for cause, effect in edges)

    lengths = _chain_length_counts(cfg)
    rng.shuffle(lengths)
    chain_of: dict[str, list[str]] = {}
    for code, k in zip(src_codes, lengths):
        start = rng.randint(v - k + 1)
        chain_of[code] = tgt_codes[start : start + k]

    sigma = max(1.0, cfg.mean_src_len / 4.0)
    records = []
    for i in range(cfg.n_records):
        length = round(rng.gauss(cfg.mean_src_len, sigma))
        length = max(1, min(MAX_SRC_LEN, length))
        head = rng.choice(src_codes)
        src_texts = [head] + [rng.choice(src_codes) for _ in range(length - 1)]
        tgt_texts = chain_of[head]
        records.append(
            Record(
                src=tuple(normalize_code(t, CodingSystem.ICD9) for t in src_texts),
                tgt=tuple(normalize_code(t, CodingSystem.ICD10) for t in tgt_texts),
                id=f"synth-{i:06d}",
            )
        )
    return SyntheticCorpus(records=records, chain_of=chain_of, acme_lines=acme_lines)
