"""Encoder-decoder architectures for chain generation.

Four encoders (stacked LSTM, mean pooling, bidirectional LSTM, transformer)
share a Luong global-attention decoder; the transformer uses its own
decoder stack with causal masking. Training is teacher forced: the loss is
the summed negative log-likelihood of the gold target (EOS included).
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .corpus import BOS_ID, EOS_ID, PAD_ID, Record, Vocabulary
from .errors import ConfigInvalid
from .nn import AdamState, adam_step, clip_gradients
from .rng import SplitMix64


class EncoderType(Enum):
    LSTM = "lstm"
    MEAN = "mean"
    BRNN = "brnn"
    TRANSFORMER = "transformer"


@dataclass(frozen=True)
class ModelConfig:
    encoder_type: EncoderType = EncoderType.LSTM
    embed_dim: int = 64
    hidden_dims: tuple[int, ...] = (128,)
    n_layers: int = 2          # transformer stack depth
    n_heads: int = 4
    ff_dim: int = 256
    dropout: float = 0.0
    input_feeding: bool = True
    max_decode_len: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.embed_dim <= 0 or any(h <= 0 for h in self.hidden_dims):
            raise ConfigInvalid("dims must be positive")
        if self.encoder_type is EncoderType.TRANSFORMER and self.embed_dim % self.n_heads:
            raise ConfigInvalid("embed_dim must divide evenly among heads")

    @property
    def dec_hidden(self) -> int:
        return self.hidden_dims[0]

    @property
    def dec_layers(self) -> int:
        return len(self.hidden_dims)


#: Published architecture settings, and small counterparts for desk runs.
PRESETS: dict[str, ModelConfig] = {
    "published-lstm": ModelConfig(EncoderType.LSTM, embed_dim=500, hidden_dims=(500, 500)),
    "published-mean": ModelConfig(EncoderType.MEAN, embed_dim=500, hidden_dims=(500, 500)),
    "published-brnn": ModelConfig(EncoderType.BRNN, embed_dim=500, hidden_dims=(500, 250)),
    "published-transformer": ModelConfig(
        EncoderType.TRANSFORMER, embed_dim=512, hidden_dims=(512,),
        n_layers=6, n_heads=8, ff_dim=2048,
    ),
    "desk-lstm": ModelConfig(EncoderType.LSTM, embed_dim=64, hidden_dims=(128,)),
    "desk-mean": ModelConfig(EncoderType.MEAN, embed_dim=64, hidden_dims=(128,)),
    "desk-brnn": ModelConfig(EncoderType.BRNN, embed_dim=64, hidden_dims=(64, 64)),
    "desk-transformer": ModelConfig(
        EncoderType.TRANSFORMER, embed_dim=64, hidden_dims=(64,),
        n_layers=2, n_heads=4, ff_dim=128,
    ),
}


@dataclass
class EncoderState:
    """Per-source-token hidden states plus a pooled summary vector."""

    hidden_states: torch.Tensor  # (m, enc_dim)
    summary: torch.Tensor        # (enc_dim,) or (dec init source)
    src_length: int
    init_h: list[torch.Tensor] = field(default_factory=list)
    init_c: list[torch.Tensor] = field(default_factory=list)


def sinusoidal_positions(length: int, dim: int, dtype=torch.float32) -> torch.Tensor:
    pos = torch.arange(length, dtype=dtype).unsqueeze(1)
    div = torch.exp(torch.arange(0, dim, 2, dtype=dtype) * (-math.log(10000.0) / dim))
    pe = torch.zeros(length, dim, dtype=dtype)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div)
    return pe


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.wq = nn.Linear(d_model, d_model)
        self.wk = nn.Linear(d_model, d_model)
        self.wv = nn.Linear(d_model, d_model)
        self.wo = nn.Linear(d_model, d_model)

    def forward(self, q, k, v, mask: Optional[torch.Tensor] = None):
        """mask: bool (B, Tq, Tk), True = attend. Returns (out, head-avg attn)."""
        b, tq, _ = q.shape
        tk = k.shape[1]

        def split(x, t):
            return x.view(b, t, self.n_heads, self.d_head).transpose(1, 2)

        qh, kh, vh = split(self.wq(q), tq), split(self.wk(k), tk), split(self.wv(v), tk)
        scores = qh @ kh.transpose(-2, -1) / math.sqrt(self.d_head)
        if mask is not None:
            scores = scores.masked_fill(~mask.unsqueeze(1), float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        out = (attn @ vh).transpose(1, 2).reshape(b, tq, -1)
        return self.wo(out), attn.mean(dim=1)


class TransformerLayer(nn.Module):
    def __init__(self, d_model: int, n_heads: int, ff_dim: int, dropout: float, cross: bool):
        super().__init__()
        self.self_attn = MultiHeadAttention(d_model, n_heads)
        self.norm1 = nn.LayerNorm(d_model)
        self.cross_attn = MultiHeadAttention(d_model, n_heads) if cross else None
        self.norm2 = nn.LayerNorm(d_model) if cross else None
        self.ff = nn.Sequential(
            nn.Linear(d_model, ff_dim), nn.ReLU(), nn.Linear(ff_dim, d_model)
        )
        self.norm3 = nn.LayerNorm(d_model)
        self.drop = nn.Dropout(dropout)

    def forward(self, x, self_mask=None, memory=None, memory_mask=None):
        h, _ = self.self_attn(x, x, x, self_mask)
        x = self.norm1(x + self.drop(h))
        cross_weights = None
        if self.cross_attn is not None:
            h, cross_weights = self.cross_attn(x, memory, memory, memory_mask)
            x = self.norm2(x + self.drop(h))
        x = self.norm3(x + self.drop(self.ff(x)))
        return x, cross_weights


class Seq2SeqModel(nn.Module):
    """Shared wrapper over the four encoder variants.

    Recurrent variants decode with stacked LSTM cells, Luong "general"
    attention and optional input feeding of the previous attentional vector.
    """

    def __init__(self, config: ModelConfig, src_vocab_size: int, tgt_vocab_size: int):
        super().__init__()
        torch.manual_seed(config.seed)
        self.config = config
        self.src_vocab_size = src_vocab_size
        self.tgt_vocab_size = tgt_vocab_size
        et = config.encoder_type

        self.src_embed = nn.Embedding(src_vocab_size, config.embed_dim, padding_idx=PAD_ID)
        self.tgt_embed = nn.Embedding(tgt_vocab_size, config.embed_dim, padding_idx=PAD_ID)
        self.drop = nn.Dropout(config.dropout)

        if et in (EncoderType.LSTM, EncoderType.BRNN):
            bi = et is EncoderType.BRNN
            layers = []
            in_dim = config.embed_dim
            for h in config.hidden_dims:
                layers.append(nn.LSTM(in_dim, h, batch_first=True, bidirectional=bi))
                in_dim = h * (2 if bi else 1)
            self.enc_layers = nn.ModuleList(layers)
            self.enc_dim = in_dim
        elif et is EncoderType.MEAN:
            self.enc_dim = config.embed_dim
        else:
            self.enc_layers = nn.ModuleList(
                TransformerLayer(config.embed_dim, config.n_heads, config.ff_dim,
                                 config.dropout, cross=False)
                for _ in range(config.n_layers)
            )
            self.dec_layers = nn.ModuleList(
                TransformerLayer(config.embed_dim, config.n_heads, config.ff_dim,
                                 config.dropout, cross=True)
                for _ in range(config.n_layers)
            )
            self.enc_dim = config.embed_dim

        if et is EncoderType.TRANSFORMER:
            self.out_proj = nn.Linear(config.embed_dim, tgt_vocab_size)
        else:
            d = config.dec_hidden
            self.dec_cells = nn.ModuleList()
            in_dim = config.embed_dim + (d if config.input_feeding else 0)
            for _ in range(config.dec_layers):
                self.dec_cells.append(nn.LSTMCell(in_dim, d))
                in_dim = d
            self.attn_general = nn.Linear(d, self.enc_dim, bias=False)
            self.attn_combine = nn.Linear(self.enc_dim + d, d, bias=False)
            self.out_proj = nn.Linear(d, tgt_vocab_size)
            # Bridges from encoder final states (or mean summary) to decoder init.
            self.bridge_h = nn.ModuleList(
                nn.Linear(self.enc_dim if et is not EncoderType.MEAN else config.embed_dim, d)
                for _ in range(config.dec_layers)
            )
            self.bridge_c = nn.ModuleList(
                nn.Linear(self.enc_dim if et is not EncoderType.MEAN else config.embed_dim, d)
                for _ in range(config.dec_layers)
            )

    # ------------------------------------------------------------- encoding

    def encode_batch(self, src: torch.Tensor, lengths: torch.Tensor):
        """src: (B, m) padded ids. Returns (enc_out, pad_mask, init_h, init_c)."""
        et = self.config.encoder_type
        mask = src != PAD_ID
        emb = self.drop(self.src_embed(src))
        if et in (EncoderType.LSTM, EncoderType.BRNN):
            x = emb
            finals = []
            for layer in self.enc_layers:
                packed = pack_padded_sequence(
                    x, lengths.cpu(), batch_first=True, enforce_sorted=False
                )
                out, (h_n, _) = layer(packed)
                x, _ = pad_packed_sequence(out, batch_first=True, total_length=src.shape[1])
                if et is EncoderType.BRNN:
                    finals.append(torch.cat([h_n[0], h_n[1]], dim=-1))
                else:
                    finals.append(h_n[0])
            enc_out = x
            init_h, init_c = [], []
            for l in range(self.config.dec_layers):
                source = finals[min(l, len(finals) - 1)]
                if source.shape[-1] != self.enc_dim:
                    # Earlier BRNN layers can have a different width; project
                    # from the last layer's final state instead.
                    source = finals[-1]
                init_h.append(torch.tanh(self.bridge_h[l](source)))
                init_c.append(torch.tanh(self.bridge_c[l](source)))
            return enc_out, mask, init_h, init_c
        if et is EncoderType.MEAN:
            denom = mask.sum(dim=1, keepdim=True).clamp(min=1).to(emb.dtype)
            summary = (emb * mask.unsqueeze(-1)).sum(dim=1) / denom
            init_h = [torch.tanh(b(summary)) for b in self.bridge_h]
            init_c = [torch.tanh(b(summary)) for b in self.bridge_c]
            return emb, mask, init_h, init_c
        # transformer
        pe = sinusoidal_positions(src.shape[1], self.config.embed_dim, emb.dtype)
        x = emb * math.sqrt(self.config.embed_dim) + pe
        attn_mask = mask.unsqueeze(1).expand(-1, src.shape[1], -1)
        for layer in self.enc_layers:
            x, _ = layer(x, self_mask=attn_mask)
        return x, mask, [], []

    def encode(self, src_ids: Sequence[int]) -> EncoderState:
        """Single-record encoding used by the search module."""
        if not src_ids:
            raise ValueError("source must be non-empty")
        if any(not 0 <= i < self.src_vocab_size for i in src_ids):
            raise IndexError("source token id out of vocabulary")
        dtype = next(self.parameters()).dtype
        src = torch.tensor([list(src_ids)], dtype=torch.long)
        lengths = torch.tensor([len(src_ids)])
        with torch.no_grad():
            enc_out, _, init_h, init_c = self.encode_batch(src, lengths)
        hidden = enc_out[0]
        if self.config.encoder_type is EncoderType.MEAN:
            summary = hidden.mean(dim=0)
        else:
            summary = hidden.mean(dim=0) if not init_h else init_h[-1][0]
        return EncoderState(
            hidden_states=hidden.to(dtype),
            summary=summary,
            src_length=len(src_ids),
            init_h=[h[0] for h in init_h],
            init_c=[c[0] for c in init_c],
        )

    # ----------------------------------------------------- recurrent decoder

    def _attend(self, h_dec: torch.Tensor, enc_out: torch.Tensor, mask: torch.Tensor):
        """Luong general attention: score_i = h_dec^T W_a h_i."""
        scores = torch.bmm(enc_out, self.attn_general(h_dec).unsqueeze(2)).squeeze(2)
        scores = scores.masked_fill(~mask, float("-inf"))
        alpha = torch.softmax(scores, dim=1)
        context = torch.bmm(alpha.unsqueeze(1), enc_out).squeeze(1)
        attentional = torch.tanh(self.attn_combine(torch.cat([context, h_dec], dim=-1)))
        return attentional, alpha

    def _recurrent_step(self, tok_emb, h, c, a_prev, enc_out, mask):
        x = torch.cat([tok_emb, a_prev], dim=-1) if self.config.input_feeding else tok_emb
        for l, cell in enumerate(self.dec_cells):
            h[l], c[l] = cell(x, (h[l], c[l]))
            x = self.drop(h[l])
        attentional, alpha = self._attend(h[-1], enc_out, mask)
        logits = self.out_proj(attentional)
        return logits, alpha, h, c, attentional

    # -------------------------------------------------------- teacher forcing

    def forward_batch(self, src, src_lengths, tgt_in, tgt_out):
        """Teacher-forced loss over a padded batch.

        Returns (total_loss, n_tokens, logits (B, T, V)). Loss is the sum of
        gold-token NLL over all non-pad target positions, EOS included.
        """
        enc_out, mask, init_h, init_c = self.encode_batch(src, src_lengths)
        b, t_len = tgt_in.shape
        if self.config.encoder_type is EncoderType.TRANSFORMER:
            logits = self._transformer_decode(tgt_in, enc_out, mask)[0]
        else:
            h = [s.clone() for s in init_h]
            c = [s.clone() for s in init_c]
            a_prev = enc_out.new_zeros(b, self.config.dec_hidden)
            step_logits = []
            for step in range(t_len):
                emb = self.drop(self.tgt_embed(tgt_in[:, step]))
                logit, _, h, c, a_prev = self._recurrent_step(emb, h, c, a_prev, enc_out, mask)
                step_logits.append(logit)
            logits = torch.stack(step_logits, dim=1)
        flat = logits.reshape(-1, self.tgt_vocab_size)
        loss = F.cross_entropy(flat, tgt_out.reshape(-1), ignore_index=PAD_ID, reduction="sum")
        n_tokens = int((tgt_out != PAD_ID).sum())
        return loss, n_tokens, logits

    def _transformer_decode(self, tgt_in, enc_out, src_mask):
        b, t_len = tgt_in.shape
        pe = sinusoidal_positions(t_len, self.config.embed_dim, enc_out.dtype)
        x = self.drop(self.tgt_embed(tgt_in)) * math.sqrt(self.config.embed_dim) + pe
        causal = torch.tril(torch.ones(t_len, t_len, dtype=torch.bool))
        causal = causal.unsqueeze(0).expand(b, -1, -1)
        mem_mask = src_mask.unsqueeze(1).expand(-1, t_len, -1)
        cross = None
        for layer in self.dec_layers:
            x, cross = layer(x, self_mask=causal, memory=enc_out, memory_mask=mem_mask)
        return self.out_proj(x), cross

    # --------------------------------------------------------- step decoding

    def init_decoder_state(self, enc_state: EncoderState):
        if self.config.encoder_type is EncoderType.TRANSFORMER:
            return []  # generated prefix (token ids)
        dtype = enc_state.hidden_states.dtype
        h = [s.clone() for s in enc_state.init_h]
        c = [s.clone() for s in enc_state.init_c]
        a_prev = torch.zeros(self.config.dec_hidden, dtype=dtype)
        return (h, c, a_prev)

    def decode_step(self, prev_token: int, dec_state, enc_state: EncoderState):
        """One decoding step. Returns (log_probs (V,), attention (m,), state)."""
        with torch.no_grad():
            enc_out = enc_state.hidden_states.unsqueeze(0)
            mask = torch.ones(1, enc_state.src_length, dtype=torch.bool)
            if self.config.encoder_type is EncoderType.TRANSFORMER:
                prefix = list(dec_state) + [prev_token]
                tgt_in = torch.tensor([prefix], dtype=torch.long)
                logits, cross = self._transformer_decode(tgt_in, enc_out, mask)
                log_probs = torch.log_softmax(logits[0, -1], dim=-1)
                return log_probs, cross[0, -1], prefix
            h, c, a_prev = dec_state
            emb = self.tgt_embed(torch.tensor([prev_token]))
            logits, alpha, h2, c2, a_new = self._recurrent_step(
                emb,
                [s.unsqueeze(0) for s in h],
                [s.unsqueeze(0) for s in c],
                a_prev.unsqueeze(0),
                enc_out,
                mask,
            )
            log_probs = torch.log_softmax(logits[0], dim=-1)
            new_state = ([s[0] for s in h2], [s[0] for s in c2], a_new[0])
            return log_probs, alpha[0], new_state


def forward_teacher_forced(model: Seq2SeqModel, src_ids: Sequence[int], tgt_ids: Sequence[int]):
    """Single-record teacher-forced loss (BOS-prefixed, EOS-suffixed target)."""
    src = torch.tensor([list(src_ids)], dtype=torch.long)
    lengths = torch.tensor([len(src_ids)])
    tgt_in = torch.tensor([[BOS_ID] + list(tgt_ids)], dtype=torch.long)
    tgt_out = torch.tensor([list(tgt_ids) + [EOS_ID]], dtype=torch.long)
    loss, _, logits = model.forward_batch(src, lengths, tgt_in, tgt_out)
    return loss, logits[0]


# -------------------------------------------------------------------- training


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1e-3
    clip_norm: float = 5.0
    seed: int = 0


@dataclass
class TrainResult:
    model: Seq2SeqModel
    history: list[dict]
    best_epoch: int


def _encode_records(records: Sequence[Record], src_vocab: Vocabulary, tgt_vocab: Vocabulary):
    return [
        (src_vocab.encode_sequence(r.src_texts), tgt_vocab.encode_sequence(r.tgt_texts))
        for r in records
    ]


def _pad_batch(items: list[tuple[list[int], list[int]]]):
    b = len(items)
    max_src = max(len(s) for s, _ in items)
    max_tgt = max(len(t) for _, t in items) + 1  # +1 for BOS/EOS shift
    src = torch.full((b, max_src), PAD_ID, dtype=torch.long)
    tgt_in = torch.full((b, max_tgt), PAD_ID, dtype=torch.long)
    tgt_out = torch.full((b, max_tgt), PAD_ID, dtype=torch.long)
    lengths = torch.zeros(b, dtype=torch.long)
    for i, (s, t) in enumerate(items):
        src[i, : len(s)] = torch.tensor(s)
        lengths[i] = len(s)
        tgt_in[i, : len(t) + 1] = torch.tensor([BOS_ID] + t)
        tgt_out[i, : len(t) + 1] = torch.tensor(t + [EOS_ID])
    return src, lengths, tgt_in, tgt_out


def evaluate_loss(model: Seq2SeqModel, encoded, batch_size: int = 64):
    """Mean per-token teacher-forced NLL and perplexity."""
    model.eval()
    total, tokens = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(encoded), batch_size):
            batch = encoded[start : start + batch_size]
            loss, n, _ = model.forward_batch(*_pad_batch(batch))
            total += float(loss)
            tokens += n
    mean = total / max(1, tokens)
    return mean, math.exp(mean)


def train_model(
    train_records: Sequence[Record],
    valid_records: Sequence[Record],
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    model_config: ModelConfig,
    train_config: TrainConfig = TrainConfig(),
) -> TrainResult:
    """Minibatch Adam with teacher forcing and gradient clipping.

    Deterministic given seeds; retains the best-validation-perplexity
    parameters. History records per-epoch train/valid loss and valid ppl.
    """
    if not train_records or not valid_records:
        raise ConfigInvalid("train and valid sets must be non-empty")
    torch.manual_seed(train_config.seed)
    model = Seq2SeqModel(model_config, len(src_vocab), len(tgt_vocab))
    params = dict(model.named_parameters())
    state = AdamState(lr=train_config.lr)
    enc_train = _encode_records(train_records, src_vocab, tgt_vocab)
    enc_valid = _encode_records(valid_records, src_vocab, tgt_vocab)

    history: list[dict] = []
    best = (math.inf, -1, None)
    for epoch in range(1, train_config.epochs + 1):
        model.train()
        order = list(range(len(enc_train)))
        SplitMix64(train_config.seed * 1_000_003 + epoch).shuffle(order)
        epoch_loss, epoch_tokens = 0.0, 0
        for start in range(0, len(order), train_config.batch_size):
            batch = [enc_train[i] for i in order[start : start + train_config.batch_size]]
            loss, n_tokens, _ = model.forward_batch(*_pad_batch(batch))
            model.zero_grad(set_to_none=True)
            loss.backward()
            grads = {n: p.grad for n, p in params.items() if p.grad is not None}
            clip_gradients(grads, train_config.clip_norm)
            adam_step(params, grads, state)
            epoch_loss += float(loss.detach())
            epoch_tokens += n_tokens
        valid_loss, valid_ppl = evaluate_loss(model, enc_valid, train_config.batch_size)
        history.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss / max(1, epoch_tokens),
                "valid_loss": valid_loss,
                "valid_ppl": valid_ppl,
            }
        )
        if valid_loss < best[0]:
            best = (valid_loss, epoch, copy.deepcopy(model.state_dict()))
    if best[2] is not None:
        model.load_state_dict(best[2])
    model.eval()
    return TrainResult(model=model, history=history, best_epoch=best[1])


def model_to_checkpoint_dict(model: Seq2SeqModel) -> dict:
    cfg = model.config
    return {
        "encoder_type": cfg.encoder_type.value,
        "embed_dim": cfg.embed_dim,
        "hidden_dims": list(cfg.hidden_dims),
        "n_layers": cfg.n_layers,
        "n_heads": cfg.n_heads,
        "ff_dim": cfg.ff_dim,
        "dropout": cfg.dropout,
        "input_feeding": cfg.input_feeding,
        "max_decode_len": cfg.max_decode_len,
        "seed": cfg.seed,
        "src_vocab_size": model.src_vocab_size,
        "tgt_vocab_size": model.tgt_vocab_size,
    }


def model_from_checkpoint_dict(config: dict) -> Seq2SeqModel:
    mc = ModelConfig(
        encoder_type=EncoderType(config["encoder_type"]),
        embed_dim=config["embed_dim"],
        hidden_dims=tuple(config["hidden_dims"]),
        n_layers=config["n_layers"],
        n_heads=config["n_heads"],
        ff_dim=config["ff_dim"],
        dropout=config["dropout"],
        input_feeding=config["input_feeding"],
        max_decode_len=config["max_decode_len"],
        seed=config["seed"],
    )
    return Seq2SeqModel(mc, config["src_vocab_size"], config["tgt_vocab_size"])
