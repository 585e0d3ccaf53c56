"""HTTP decision-support service: chain proposal, validation, autocomplete.

Stateless per request; the model, graph and vocabularies are frozen at
startup. The UI consumes exactly this API.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query
from fastapi.staticfiles import StaticFiles

from .acme import CausalGraph, ConstraintMask, build_constraint_mask
from .corpus import Vocabulary
from .errors import MalformedCode
from .icd import CodingSystem, GemTable, map_sequence_9_to_10, normalize_code
from .models import Seq2SeqModel, model_from_checkpoint_dict
from .nn import load_checkpoint
from .search import BeamConfig, beam_decode


@dataclass
class ServiceContext:
    model: Seq2SeqModel
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    graph: CausalGraph
    mask: Optional[ConstraintMask] = None
    gem: Optional[GemTable] = None
    input_system: CodingSystem = CodingSystem.ICD9
    descriptions: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.mask is None:
            self.mask = build_constraint_mask(self.tgt_vocab, self.graph)


def load_context(
    checkpoint_path: str | Path,
    graph: CausalGraph,
    gem: Optional[GemTable] = None,
    descriptions: Optional[dict[str, str]] = None,
    input_system: CodingSystem = CodingSystem.ICD9,
) -> ServiceContext:
    tensors, config = load_checkpoint(checkpoint_path)
    model = model_from_checkpoint_dict(config)
    model.load_state_dict(tensors)
    model.eval()
    return ServiceContext(
        model=model,
        src_vocab=Vocabulary(config["src_tokens"]),
        tgt_vocab=Vocabulary(config["tgt_tokens"]),
        graph=graph,
        gem=gem,
        input_system=input_system,
        descriptions=descriptions or {},
    )


def _codes_from_fhir_bundle(bundle: dict) -> tuple[list[str], str]:
    """Extract Condition codes in bundle order; detect the coding system."""
    codes: list[str] = []
    system = "icd10"
    for entry in bundle.get("entry", []):
        resource = entry.get("resource", {})
        if resource.get("resourceType") != "Condition":
            continue
        for coding in resource.get("code", {}).get("coding", []):
            uri = (coding.get("system") or "").lower()
            code = coding.get("code")
            if not code:
                continue
            if "icd-9" in uri or "icd9" in uri:
                system = "icd9"
            codes.append(code)
    return codes, system


def create_app(ctx: ServiceContext, static_dir: Optional[str | Path] = None) -> FastAPI:
    app = FastAPI(title="causal-chain service")

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/v1/validate")
    def validate(body: dict):
        chain = body.get("chain")
        if not isinstance(chain, list) or not chain:
            raise HTTPException(status_code=400, detail="chain must be a non-empty list")
        try:
            codes = [normalize_code(c, CodingSystem.ICD10).text for c in chain]
        except MalformedCode as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        verdict = ctx.graph.chain_is_valid(codes)
        return {"valid": verdict.valid, "first_bad_index": verdict.first_bad_index}

    @app.post("/v1/chains")
    def chains(body: dict):
        if "fhir_bundle" in body:
            raw_codes, system = _codes_from_fhir_bundle(body["fhir_bundle"])
        else:
            raw_codes = body.get("codes")
            system = body.get("system", ctx.input_system.value)
        if not isinstance(raw_codes, list) or not raw_codes:
            raise HTTPException(status_code=400, detail="codes must be a non-empty list")
        try:
            coding = CodingSystem(system)
        except ValueError:
            raise HTTPException(status_code=400, detail=f"unknown system {system!r}")
        try:
            codes = [normalize_code(c, coding) for c in raw_codes]
        except MalformedCode as exc:
            raise HTTPException(status_code=400, detail=str(exc))

        if coding is CodingSystem.ICD9 and ctx.input_system is CodingSystem.ICD10:
            if ctx.gem is None:
                raise HTTPException(status_code=400, detail="no GEM table loaded for ICD-9 input")
            texts, _ = map_sequence_9_to_10(codes, ctx.gem)
        else:
            texts = [c.text for c in codes]

        k = int(body.get("k", 5))
        constrained = bool(body.get("constrained", False))
        want_attention = bool(body.get("attention", False))
        if not 1 <= k <= 50:
            raise HTTPException(status_code=400, detail="k must be in [1, 50]")
        config = BeamConfig(
            k=k,
            max_len=ctx.model.config.max_decode_len,
            constrained=constrained,
            mask=ctx.mask if constrained else None,
        )
        src_ids = ctx.src_vocab.encode_sequence(texts)
        hypotheses = beam_decode(ctx.model, src_ids, config)
        out = []
        for hyp in hypotheses:
            chain = ctx.tgt_vocab.decode_sequence(hyp.tokens)
            edge_valid = [
                ctx.graph.is_valid_pair(chain[i], chain[i + 1]) for i in range(len(chain) - 1)
            ]
            item = {
                "chain": chain,
                "descriptions": [ctx.descriptions.get(c) for c in chain],
                "log_prob": hyp.log_prob,
                "edge_valid": edge_valid,
                "finished": hyp.finished,
            }
            if want_attention:
                item["attention"] = hyp.attention.tolist()
                item["attention_src"] = texts
            out.append(item)
        return {"hypotheses": out, "src_codes": texts}

    @app.get("/v1/codes")
    def autocomplete(q: str = Query(min_length=1), limit: int = 20):
        prefix = q.strip().upper().replace(".", "")
        results = [
            {"code": code, "description": desc}
            for code, desc in sorted(ctx.descriptions.items())
            if code.startswith(prefix)
        ]
        return {"results": results[:limit]}

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    return app


def load_descriptions(path: str | Path) -> dict[str, str]:
    """Tab-separated code/description pairs; '#' comments allowed."""
    out: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        code, _, desc = line.partition("\t")
        out[code.strip().upper()] = desc.strip()
    return out
