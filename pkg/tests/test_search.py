import itertools
from dataclasses import dataclass

import numpy as np
import pytest
import torch

from causalchain.acme import AcmeRule, CausalGraph, ConstraintMask, build_constraint_mask
from causalchain.corpus import (
    BOS_ID,
    EOS_ID,
    PAD_ID,
    SyntheticConfig,
    Vocabulary,
    build_vocab,
    generate_synthetic,
)
from causalchain.errors import ConfigInvalid
from causalchain.models import EncoderType, ModelConfig, Seq2SeqModel
from causalchain.search import BeamConfig, Hypothesis, beam_decode, greedy_decode, translate_corpus


@dataclass
class _Enc:
    src_length: int


class PositionToyModel:
    """Next-token distribution depends only on the decode step index.

    With additive scores and step-only distributions, the best extension is
    the same for every prefix, so beam search provably recovers the global
    argmax sequence; that makes an exhaustive oracle feasible.
    """

    def __init__(self, log_rows: np.ndarray):
        self.log_rows = log_rows  # (max_len, V)

    def encode(self, src_ids):
        return _Enc(src_length=len(src_ids))

    def init_decoder_state(self, enc):
        return 0

    def decode_step(self, prev_token, state, enc):
        row = self.log_rows[min(state, len(self.log_rows) - 1)]
        attn = np.full(enc.src_length, 1.0 / enc.src_length)
        return row.copy(), attn, state + 1


class PrefixToyModel:
    """Distribution keyed on the whole generated prefix (deterministic hash)."""

    def __init__(self, vocab_size: int, seed: int):
        self.vocab_size = vocab_size
        self.seed = seed

    def encode(self, src_ids):
        return _Enc(src_length=len(src_ids))

    def init_decoder_state(self, enc):
        return ()

    def decode_step(self, prev_token, state, enc):
        state = state + (prev_token,)
        rng = np.random.default_rng(abs(hash((self.seed,) + state)) % 2**32)
        logits = rng.normal(size=self.vocab_size)
        row = logits - np.log(np.exp(logits).sum())
        attn = np.full(enc.src_length, 1.0 / enc.src_length)
        return row, attn, state


def random_position_model(vocab_size: int, max_len: int, seed: int) -> PositionToyModel:
    rng = np.random.default_rng(seed)
    logits = rng.normal(scale=1.5, size=(max_len, vocab_size))
    rows = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    return PositionToyModel(rows)


def exhaustive_best(model: PositionToyModel, max_len: int):
    """Enumerate every decodable sequence and return the single best
    (score desc, tokens lexicographic asc), mirroring the beam's ranking."""
    rows = model.log_rows
    vocab = rows.shape[1]
    emittable = [t for t in range(vocab) if t not in (PAD_ID, BOS_ID, EOS_ID)]
    scored: list[tuple[float, tuple[int, ...], bool]] = []
    for n in range(0, max_len):
        for toks in itertools.product(emittable, repeat=n):
            score = sum(rows[t][tok] for t, tok in enumerate(toks))
            score += rows[n][EOS_ID]
            scored.append((score, toks, True))
    for toks in itertools.product(emittable, repeat=max_len):
        score = sum(rows[t][tok] for t, tok in enumerate(toks))
        scored.append((score, toks, False))
    scored.sort(key=lambda item: (-item[0], item[1]))
    return scored[0]


class TestBeamConfig:
    def test_rejects_bad_k(self):
        with pytest.raises(ConfigInvalid):
            BeamConfig(k=0)

    def test_constrained_requires_mask(self):
        with pytest.raises(ConfigInvalid):
            BeamConfig(constrained=True)


class TestToyOracles:
    @pytest.mark.parametrize("seed", range(25))
    def test_beam_top1_matches_exhaustive(self, seed):
        model = random_position_model(vocab_size=5, max_len=3, seed=seed)
        best_score, best_tokens, finished = exhaustive_best(model, max_len=3)
        hyp = beam_decode(model, [0, 1], BeamConfig(k=5, max_len=3))[0]
        assert tuple(hyp.tokens) == best_tokens
        assert hyp.log_prob == pytest.approx(best_score, abs=1e-9)
        assert hyp.finished == finished

    def test_one_hot_path_recovered(self):
        # Put almost all mass on the path 4 -> 5 -> EOS.
        rows = np.full((3, 6), -20.0)
        rows[0, 4] = -1e-6
        rows[1, 5] = -1e-6
        rows[2, EOS_ID] = -1e-6
        model = PositionToyModel(rows)
        assert greedy_decode(model, [0], max_len=3).tokens == [4, 5]
        hyp = beam_decode(model, [0], BeamConfig(k=3, max_len=3))[0]
        assert hyp.tokens == [4, 5]
        assert hyp.finished

    @pytest.mark.parametrize("seed", range(6))
    def test_greedy_equals_beam_k1(self, seed):
        model = PrefixToyModel(vocab_size=7, seed=seed)
        g = greedy_decode(model, [0, 1, 2], max_len=5)
        b = beam_decode(model, [0, 1, 2], BeamConfig(k=1, max_len=5))[0]
        assert g.tokens == b.tokens
        assert g.log_prob == pytest.approx(b.log_prob, abs=1e-9)
        assert g.finished == b.finished

    @pytest.mark.parametrize("seed", range(4))
    def test_results_sorted_and_deduplicated(self, seed):
        model = random_position_model(vocab_size=6, max_len=3, seed=seed + 50)
        hyps = beam_decode(model, [0], BeamConfig(k=4, max_len=3))
        scores = [h.log_prob for h in hyps]
        assert scores == sorted(scores, reverse=True)
        assert len({tuple(h.tokens) for h in hyps}) == len(hyps)

    @pytest.mark.parametrize("seed", range(10))
    def test_best_score_monotone_in_k(self, seed):
        model = random_position_model(vocab_size=6, max_len=3, seed=seed + 30)
        greedy = greedy_decode(model, [0], max_len=3)
        prev = -np.inf
        for k in (1, 2, 3, 5, 8):
            best = beam_decode(model, [0], BeamConfig(k=k, max_len=3))[0]
            assert best.log_prob >= prev - 1e-12
            assert best.log_prob >= greedy.log_prob - 1e-12
            prev = best.log_prob

    def test_attention_has_one_row_per_step(self):
        model = random_position_model(vocab_size=6, max_len=4, seed=7)
        for hyp in beam_decode(model, [0, 1, 2], BeamConfig(k=3, max_len=4)):
            expected = len(hyp.tokens) + (1 if hyp.finished else 0)
            assert hyp.attention.shape == (expected, 3)

    def test_max_len_reached_unfinished(self):
        # EOS is impossible: every hypothesis must run to max_len unfinished.
        rows = np.zeros((3, 6))
        rows[:, EOS_ID] = -np.inf
        model = PositionToyModel(rows)
        for hyp in beam_decode(model, [0], BeamConfig(k=2, max_len=3)):
            assert not hyp.finished
            assert len(hyp.tokens) == 3


def _demo_vocab_and_graph():
    vocab = Vocabulary(["C000", "C349", "D460", "D461", "Y400", "Y509"])
    graph = CausalGraph(
        [
            AcmeRule("D460", "C000", "C97"),
            AcmeRule("D461", "Y400", "Y599"),
            AcmeRule("C349", "C000"),
        ]
    )
    return vocab, graph


class TestConstrainedDecoding:
    def test_every_pair_licensed(self):
        vocab, graph = _demo_vocab_and_graph()
        mask = build_constraint_mask(vocab, graph)
        for seed in range(20):
            model = random_position_model(vocab_size=len(vocab), max_len=5, seed=seed)
            hyps = beam_decode(
                model, [0], BeamConfig(k=4, max_len=5, constrained=True, mask=mask)
            )
            for hyp in hyps:
                chain = vocab.decode_sequence(hyp.tokens)
                for a, b in zip(chain, chain[1:]):
                    assert graph.is_valid_pair(a, b), (chain, a, b)

    def test_first_token_unconstrained(self):
        vocab, graph = _demo_vocab_and_graph()
        mask = build_constraint_mask(vocab, graph)
        # Y509 is licensed by no rule, so it can only ever appear first.
        want = vocab.index_of("Y509")
        rows = np.full((2, len(vocab)), -30.0)
        rows[0, want] = -1e-6
        rows[1, EOS_ID] = -1e-6
        model = PositionToyModel(rows)
        hyp = beam_decode(model, [0], BeamConfig(k=1, max_len=2, constrained=True, mask=mask))[0]
        assert vocab.decode_sequence(hyp.tokens) == ["Y509"]

    def test_dead_end_forces_eos(self):
        vocab, graph = _demo_vocab_and_graph()
        mask = build_constraint_mask(vocab, graph)
        # After Y509 nothing is admissible, yet the model hates EOS; the
        # search must still terminate the chain rather than emit an
        # unlicensed pair.
        want = vocab.index_of("Y509")
        rows = np.full((4, len(vocab)), 0.0)
        rows[:, EOS_ID] = -30.0
        rows[0, :] = -60.0
        rows[0, want] = 0.0
        model = PositionToyModel(rows)
        hyps = beam_decode(model, [0], BeamConfig(k=3, max_len=4, constrained=True, mask=mask))
        top = hyps[0]
        assert vocab.decode_sequence(top.tokens) == ["Y509"]
        assert top.finished

    def test_constrained_vs_unconstrained_differ(self):
        vocab, graph = _demo_vocab_and_graph()
        mask = build_constraint_mask(vocab, graph)
        rows = np.full((3, len(vocab)), -10.0)
        # The model prefers the unlicensed pair Y509 -> C000.
        rows[0, vocab.index_of("Y509")] = -0.1
        rows[1, vocab.index_of("C000")] = -0.1
        rows[2, EOS_ID] = -0.1
        model = PositionToyModel(rows)
        free = beam_decode(model, [0], BeamConfig(k=1, max_len=3))[0]
        tied = beam_decode(model, [0], BeamConfig(k=1, max_len=3, constrained=True, mask=mask))[0]
        assert vocab.decode_sequence(free.tokens) == ["Y509", "C000"]
        assert "C000" not in vocab.decode_sequence(tied.tokens)[1:]


class TestWithRealModel:
    def test_translate_corpus_deterministic(self):
        cfg = SyntheticConfig(
            n_records=20, src_vocab_size=10, tgt_vocab_size=8, mean_src_len=5.0, seed=2
        )
        records = generate_synthetic(cfg).records
        sv = build_vocab(records, "src")
        tv = build_vocab(records, "tgt")
        model = Seq2SeqModel(
            ModelConfig(EncoderType.LSTM, embed_dim=8, hidden_dims=(12,)), len(sv), len(tv)
        )
        model.eval()
        config = BeamConfig(k=3, max_len=6)
        first = translate_corpus(model, records, sv, tv, config)
        second = translate_corpus(model, records, sv, tv, config)
        assert [t.chain for t in first] == [t.chain for t in second]
        assert [t.record_id for t in first] == [r.id for r in records]
        for t in first:
            assert t.chain == tv.decode_sequence(t.hypothesis.tokens)

    @pytest.mark.parametrize("et", list(EncoderType))
    def test_beam_runs_on_all_encoders(self, et):
        cfg = ModelConfig(et, embed_dim=8, hidden_dims=(8,), n_layers=1, n_heads=2, ff_dim=16)
        model = Seq2SeqModel(cfg, 12, 9)
        model.eval()
        hyps = beam_decode(model, [4, 5, 6], BeamConfig(k=3, max_len=5))
        assert 1 <= len(hyps) <= 3
        for hyp in hyps:
            assert all(t not in (PAD_ID, BOS_ID, EOS_ID) for t in hyp.tokens)
