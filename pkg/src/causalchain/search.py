"""Greedy and beam-search decoding with optional causal-graph constraint.

Works against any model exposing encode / init_decoder_state / decode_step
(see models.Seq2SeqModel); tests exercise it with hand-set toy models.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .acme import ConstraintMask
from .corpus import BOS_ID, EOS_ID, PAD_ID, UNK_ID, Vocabulary
from .errors import ConfigInvalid


@dataclass
class Hypothesis:
    """A scored candidate chain. `tokens` excludes BOS and EOS; `attention`
    has one row per decode step (including the EOS-emitting step)."""

    tokens: list[int]
    log_prob: float
    attention: np.ndarray
    finished: bool = True


@dataclass(frozen=True)
class BeamConfig:
    k: int = 5
    max_len: int = 20
    constrained: bool = False
    mask: Optional[ConstraintMask] = None

    def __post_init__(self):
        if self.k < 1:
            raise ConfigInvalid("beam size must be >= 1")
        if self.constrained and self.mask is None:
            raise ConfigInvalid("constrained decoding requires a mask")


def _step_log_probs(model, prev_token, state, enc_state):
    log_probs, attn, new_state = model.decode_step(prev_token, state, enc_state)
    lp = np.asarray(log_probs, dtype=np.float64).copy()
    # Never emit padding or a spurious BOS.
    lp[PAD_ID] = -np.inf
    lp[BOS_ID] = -np.inf
    return lp, np.asarray(attn, dtype=np.float64), new_state


def _apply_constraint(lp: np.ndarray, mask: ConstraintMask, prev_emitted: Optional[int]):
    """Zero out successors the causal graph forbids; EOS stays admissible.

    The first generated token (no predecessor) is unconstrained. If the mask
    eliminates every non-EOS candidate, EOS is forced by construction.
    UNK is never emitted under constraint: an unknown code cannot be
    validated against the graph, so admitting it would let invalid pairs
    through the very check the constraint exists to enforce.
    """
    if prev_emitted is None:
        constrained = lp.copy()
    else:
        allowed = mask.successors(prev_emitted)
        constrained = np.where(allowed, lp, -np.inf)
        constrained[EOS_ID] = lp[EOS_ID]
    constrained[UNK_ID] = -np.inf
    return constrained


def greedy_decode(model, src_ids: Sequence[int], max_len: int = 20,
                  mask: Optional[ConstraintMask] = None) -> Hypothesis:
    """Argmax decoding; ties break to the lowest token index."""
    enc = model.encode(src_ids)
    state = model.init_decoder_state(enc)
    prev = BOS_ID
    tokens: list[int] = []
    rows: list[np.ndarray] = []
    log_prob = 0.0
    finished = False
    prev_emitted: Optional[int] = None
    for _ in range(max_len):
        lp, attn, state = _step_log_probs(model, prev, state, enc)
        if mask is not None:
            lp = _apply_constraint(lp, mask, prev_emitted)
        tok = int(np.argmax(lp))  # argmax returns the first (lowest) index on ties
        log_prob += float(lp[tok])
        rows.append(attn)
        if tok == EOS_ID:
            finished = True
            break
        tokens.append(tok)
        prev = tok
        prev_emitted = tok
    attention = np.stack(rows) if rows else np.zeros((0, enc.src_length))
    return Hypothesis(tokens=tokens, log_prob=log_prob, attention=attention, finished=finished)


@dataclass
class _Beam:
    tokens: tuple[int, ...]
    log_prob: float
    state: object
    rows: tuple[np.ndarray, ...]
    prev: int


def beam_decode(model, src_ids: Sequence[int], config: BeamConfig) -> list[Hypothesis]:
    """Standard beam search over summed log-probabilities.

    Finished hypotheses are set aside and the beam continues until k have
    finished or max_len is reached. Final ranking is by log_prob descending
    with no length normalization; ties break lexicographically on the token
    sequence.
    """
    enc = model.encode(src_ids)
    beams = [_Beam(tokens=(), log_prob=0.0, state=model.init_decoder_state(enc),
                   rows=(), prev=BOS_ID)]
    finished: list[Hypothesis] = []
    quota_stop = False

    for _ in range(config.max_len):
        if len(finished) >= config.k:
            quota_stop = True
            break
        if not beams:
            break
        candidates: list[tuple[float, tuple[int, ...], int, np.ndarray, object, int]] = []
        for beam in beams:
            lp, attn, new_state = _step_log_probs(model, beam.prev, beam.state, enc)
            if config.constrained:
                prev_emitted = beam.tokens[-1] if beam.tokens else None
                lp = _apply_constraint(lp, config.mask, prev_emitted)
            # Keep enough per-beam candidates to fill the beam even if some finish.
            keep = min(len(lp), 2 * config.k + 1)
            top = np.argsort(-lp, kind="stable")[:keep]
            for tok in top:
                tok = int(tok)
                score = beam.log_prob + float(lp[tok])
                if score == -np.inf:
                    continue
                candidates.append((score, beam.tokens + (tok,), tok, attn, new_state, id(beam)))
        if not candidates:
            break
        candidates.sort(key=lambda cand: (-cand[0], cand[1]))
        next_beams: list[_Beam] = []
        beam_by_id = {id(b): b for b in beams}
        for score, tokens, tok, attn, new_state, beam_id in candidates:
            if len(next_beams) >= config.k:
                break
            parent = beam_by_id[beam_id]
            rows = parent.rows + (attn,)
            if tok == EOS_ID:
                if len(finished) < config.k:
                    finished.append(
                        Hypothesis(
                            tokens=list(tokens[:-1]),
                            log_prob=score,
                            attention=np.stack(rows),
                            finished=True,
                        )
                    )
            else:
                next_beams.append(
                    _Beam(tokens=tokens, log_prob=score, state=new_state, rows=rows, prev=tok)
                )
        beams = next_beams

    results = list(finished)
    # Live beams that ran out of length still compete on raw score; they are
    # dropped only when the finished quota stopped the search early (their
    # scores would then describe prefixes, not comparable sequences).
    if not quota_stop:
        for beam in beams:
            attention = np.stack(beam.rows) if beam.rows else np.zeros((0, enc.src_length))
            results.append(
                Hypothesis(tokens=list(beam.tokens), log_prob=beam.log_prob,
                           attention=attention, finished=False)
            )
    results.sort(key=lambda h: (-h.log_prob, tuple(h.tokens)))
    return results[: config.k]


@dataclass
class Translation:
    record_id: str
    hypothesis: Hypothesis
    chain: list[str]


def translate_corpus(model, records, src_vocab: Vocabulary, tgt_vocab: Vocabulary,
                     config: BeamConfig) -> list[Translation]:
    """Decode every record in order; deterministic for a frozen model."""
    out: list[Translation] = []
    for record in records:
        src_ids = src_vocab.encode_sequence(record.src_texts)
        best = beam_decode(model, src_ids, config)[0]
        out.append(
            Translation(
                record_id=record.id,
                hypothesis=best,
                chain=tgt_vocab.decode_sequence(best.tokens),
            )
        )
    return out
