"""Command-line entry points.

Every subcommand accepts a YAML config file (--config) whose keys mirror
the command-line flags; explicit flags win. Exit codes: 0 success, 1 usage
error, 2 data error, 3 runtime error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import yaml

from . import acme as acme_mod
from . import corpus as corpus_mod
from .errors import CausalChainError, ConfigInvalid, EmptyCorpus, LineCountMismatch, MalformedCode
from .evaluation import accuracy_report, corpus_bleu
from .icd import CodingSystem, load_gem, map_sequence_9_to_10
from .models import PRESETS, TrainConfig, model_to_checkpoint_dict, train_model
from .nn import load_checkpoint, save_checkpoint
from .pipeline import PipelineConfig, run_experiment
from .search import BeamConfig, beam_decode
from .service import create_app, load_context, load_descriptions

_DATA_DIR = Path(__file__).parent / "data"


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        loaded = yaml.safe_load(fh) or {}
    if not isinstance(loaded, dict):
        raise click.UsageError("config file must hold a mapping")
    return loaded


def _opt(flag_value, cfg: dict, key: str, default):
    if flag_value is not None:
        return flag_value
    return cfg.get(key, default)


@click.group()
def cli():
    """Causal chain-of-death toolkit."""


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--n", "n_records", type=int)
@click.option("--src-vocab", type=int)
@click.option("--tgt-vocab", type=int)
@click.option("--seed", type=int)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def synth(config_path, n_records, src_vocab, tgt_vocab, seed, out_dir):
    """Generate a synthetic corpus and matching ACME table."""
    cfg = _load_config(config_path)
    sc = corpus_mod.SyntheticConfig(
        n_records=_opt(n_records, cfg, "n_records", 1000),
        src_vocab_size=_opt(src_vocab, cfg, "src_vocab_size", 50),
        tgt_vocab_size=_opt(tgt_vocab, cfg, "tgt_vocab_size", 30),
        seed=_opt(seed, cfg, "seed", 0),
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = corpus_mod.generate_synthetic(sc)
    corpus_mod.save_parallel(result.records, out / "synth.src", out / "synth.tgt")
    corpus_mod.save_jsonl(result.records, out / "synth.jsonl")
    (out / "acme.txt").write_text("\n".join(result.acme_lines) + "\n", encoding="utf-8")
    click.echo(f"wrote {len(result.records)} records and {len(result.acme_lines)} ACME rules to {out}")


@cli.command()
@click.option("--src", "src_path", type=click.Path(exists=True), required=True)
@click.option("--tgt", "tgt_path", type=click.Path(exists=True), required=True)
@click.option("--gem", "gem_path", type=click.Path(exists=True), help="Map ICD-9 sources to ICD-10.")
@click.option("--out-prefix", required=True)
def preprocess(src_path, tgt_path, gem_path, out_prefix):
    """Normalize a parallel corpus, optionally GEM-mapping the sources."""
    records = corpus_mod.load_parallel(src_path, tgt_path)
    if gem_path:
        gem = load_gem(gem_path)
        unmapped_total = 0
        with open(f"{out_prefix}.src", "w", encoding="utf-8") as fs:
            for r in records:
                mapped, unmapped = map_sequence_9_to_10(list(r.src), gem)
                unmapped_total += unmapped
                fs.write(" ".join(mapped) + "\n")
        with open(f"{out_prefix}.tgt", "w", encoding="utf-8") as ft:
            for r in records:
                ft.write(" ".join(r.tgt_texts) + "\n")
        click.echo(f"mapped {len(records)} records, {unmapped_total} unmappable codes")
    else:
        corpus_mod.save_parallel(records, f"{out_prefix}.src", f"{out_prefix}.tgt")
        click.echo(f"normalized {len(records)} records")


@cli.command("validity-check")
@click.option("--src", "src_path", type=click.Path(exists=True), required=True)
@click.option("--tgt", "tgt_path", type=click.Path(exists=True), required=True)
@click.option("--acme", "acme_path", type=click.Path(exists=True), required=True)
@click.option("--out-prefix", required=True)
def validity_check(src_path, tgt_path, acme_path, out_prefix):
    """Remove records whose target chain has an invalid causal pair."""
    records = corpus_mod.load_parallel(src_path, tgt_path)
    graph = acme_mod.load_acme(acme_path)
    kept, removed = acme_mod.filter_corpus(records, graph)
    corpus_mod.save_parallel(kept, f"{out_prefix}.src", f"{out_prefix}.tgt")
    click.echo(f"kept {len(kept)}, removed {removed}")


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--src", "src_path", type=click.Path(exists=True), required=True)
@click.option("--tgt", "tgt_path", type=click.Path(exists=True), required=True)
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default="desk-lstm")
@click.option("--epochs", type=int)
@click.option("--batch-size", type=int)
@click.option("--lr", type=float)
@click.option("--seed", type=int)
@click.option("--checkpoint", "ckpt_path", type=click.Path(), required=True)
@click.option("--metrics", "metrics_path", type=click.Path())
def train(config_path, src_path, tgt_path, preset, epochs, batch_size, lr, seed, ckpt_path, metrics_path):
    """Train on a 7:1:2 split of a parallel corpus; keep best-valid weights."""
    cfg = _load_config(config_path)
    records = corpus_mod.load_parallel(src_path, tgt_path)
    seed_v = _opt(seed, cfg, "seed", 0)
    parts = corpus_mod.split(records, corpus_mod.SplitSpec(seed=seed_v))
    src_vocab = corpus_mod.build_vocab(parts.train, "src")
    tgt_vocab = corpus_mod.build_vocab(parts.train, "tgt")
    tc = TrainConfig(
        epochs=_opt(epochs, cfg, "epochs", 30),
        batch_size=_opt(batch_size, cfg, "batch_size", 64),
        lr=_opt(lr, cfg, "lr", 1e-3),
        seed=seed_v,
    )
    result = train_model(parts.train, parts.valid, src_vocab, tgt_vocab, PRESETS[preset], tc)
    header = model_to_checkpoint_dict(result.model)
    header["src_tokens"] = src_vocab.tokens[4:]
    header["tgt_tokens"] = tgt_vocab.tokens[4:]
    save_checkpoint(ckpt_path, dict(result.model.state_dict()), header)
    if metrics_path:
        with open(metrics_path, "w", encoding="utf-8") as fh:
            for row in result.history:
                fh.write(json.dumps(row) + "\n")
    last = result.history[-1]
    click.echo(
        f"trained {tc.epochs} epochs; best epoch {result.best_epoch}; "
        f"final valid ppl {last['valid_ppl']:.3f}; checkpoint {ckpt_path}"
    )


@cli.command()
@click.option("--checkpoint", "ckpt_path", type=click.Path(exists=True), required=True)
@click.option("--src", "src_path", type=click.Path(exists=True), required=True)
@click.option("--acme", "acme_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--beam", "beam_k", type=int, default=5)
@click.option("--constrained", is_flag=True, default=False)
def translate(ckpt_path, src_path, acme_path, out_path, beam_k, constrained):
    """Decode a source file to JSON-lines {id, chain, log_prob, edge_valid}."""
    graph = acme_mod.load_acme(acme_path)
    ctx = load_context(ckpt_path, graph)
    lines = Path(src_path).read_text(encoding="utf-8").splitlines()
    config = BeamConfig(
        k=beam_k,
        max_len=ctx.model.config.max_decode_len,
        constrained=constrained,
        mask=ctx.mask if constrained else None,
    )
    with open(out_path, "w", encoding="utf-8") as fh:
        for i, line in enumerate(lines, start=1):
            tokens = line.split()
            if not tokens:
                continue
            hyp = beam_decode(ctx.model, ctx.src_vocab.encode_sequence(tokens), config)[0]
            chain = ctx.tgt_vocab.decode_sequence(hyp.tokens)
            edge_valid = [
                graph.is_valid_pair(chain[j], chain[j + 1]) for j in range(len(chain) - 1)
            ]
            fh.write(
                json.dumps(
                    {"id": f"r{i:06d}", "chain": chain, "log_prob": hyp.log_prob,
                     "edge_valid": edge_valid}
                )
                + "\n"
            )
    click.echo(f"translated {len(lines)} sequences to {out_path}")


@cli.command()
@click.option("--pred", "pred_path", type=click.Path(exists=True), required=True,
              help="translate output (JSON-lines)")
@click.option("--ref", "ref_path", type=click.Path(exists=True), required=True,
              help="reference .tgt file, aligned by line")
@click.option("--out", "out_path", type=click.Path())
def evaluate(pred_path, ref_path, out_path):
    """Modified BLEU plus the three accuracy metrics."""
    preds = [json.loads(line) for line in Path(pred_path).read_text().splitlines() if line.strip()]
    refs = [line.split() for line in Path(ref_path).read_text().splitlines()]
    if len(preds) != len(refs):
        raise LineCountMismatch(f"{len(preds)} predictions vs {len(refs)} references")
    pairs = [(p["chain"], r) for p, r in zip(preds, refs)]
    bleu = corpus_bleu(pairs)
    acc = accuracy_report(pairs)
    report = {
        "bleu": {"p1": bleu.p1, "p2": bleu.p2, "bp": bleu.bp, "score": bleu.bleu},
        "exact": acc.exact_sequence,
        "code": acc.code_level,
        "underlying": acc.underlying,
        "n": acc.n_records,
    }
    text = json.dumps(report, indent=2)
    if out_path:
        Path(out_path).write_text(text + "\n", encoding="utf-8")
    click.echo(text)


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--src", "src_path", type=click.Path(exists=True), required=True)
@click.option("--tgt", "tgt_path", type=click.Path(exists=True), required=True)
@click.option("--acme", "acme_path", type=click.Path(exists=True), required=True)
@click.option("--gem", "gem_path", type=click.Path(exists=True))
@click.option("--experiment", "experiment_id", type=click.IntRange(1, 5))
@click.option("--epochs", type=int)
@click.option("--seed", type=int)
@click.option("--out", "out_path", type=click.Path())
def experiment(config_path, src_path, tgt_path, acme_path, gem_path, experiment_id, epochs, seed, out_path):
    """Run one cell of the five-experiment grid with 5-fold CV."""
    cfg = _load_config(config_path)
    records = corpus_mod.load_parallel(src_path, tgt_path)
    graph = acme_mod.load_acme(acme_path)
    gem = load_gem(gem_path) if gem_path else None
    pc = PipelineConfig(
        experiment=_opt(experiment_id, cfg, "experiment", 1),
        seed=_opt(seed, cfg, "seed", 0),
        train=TrainConfig(epochs=_opt(epochs, cfg, "epochs", 10), seed=_opt(seed, cfg, "seed", 0)),
    )
    report = run_experiment(records, graph, pc, gem=gem)
    payload = {
        "experiment": report.experiment,
        "bleu_mean": report.bleu_mean,
        "bleu_stddev": report.bleu_stddev,
        "exact_mean": report.exact_mean,
        "code_mean": report.code_mean,
        "underlying_mean": report.underlying_mean,
        "folds": [
            {
                "fold": f.fold,
                "bleu": f.bleu.bleu,
                "exact": f.accuracy.exact_sequence,
                "code": f.accuracy.code_level,
                "underlying": f.accuracy.underlying,
                "removed_by_check": f.removed_by_check,
            }
            for f in report.folds
        ],
        "provenance": report.provenance,
    }
    text = json.dumps(payload, indent=2)
    if out_path:
        Path(out_path).write_text(text + "\n", encoding="utf-8")
    click.echo(text)


@cli.command()
@click.option("--checkpoint", "ckpt_path", type=click.Path(exists=True), required=True)
@click.option("--acme", "acme_path", type=click.Path(exists=True), required=True)
@click.option("--gem", "gem_path", type=click.Path(exists=True))
@click.option("--codes", "codes_path", type=click.Path(exists=True),
              help="code/description TSV (defaults to the bundled demo dictionary)")
@click.option("--static", "static_dir", type=click.Path(), help="directory of UI files to serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(ckpt_path, acme_path, gem_path, codes_path, static_dir, host, port):
    """Serve the prediction/validation HTTP API (and optionally the UI)."""
    import uvicorn

    graph = acme_mod.load_acme(acme_path)
    gem = load_gem(gem_path) if gem_path else None
    descriptions = load_descriptions(codes_path or _DATA_DIR / "icd10_demo_descriptions.tsv")
    ctx = load_context(ckpt_path, graph, gem=gem, descriptions=descriptions)
    app = create_app(ctx, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)


def main() -> int:
    try:
        cli.main(standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        return 1
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except (MalformedCode, LineCountMismatch, EmptyCorpus, ConfigInvalid, FileNotFoundError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except CausalChainError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except Exception as exc:  # noqa: BLE001
        click.echo(f"runtime error: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
