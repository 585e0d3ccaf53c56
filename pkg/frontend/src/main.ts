/** Wires the page together: code entry with autocomplete and drag
 * reordering, proposal requests, chain cards, per-chain validation and the
 * attention heatmap. All data shown comes from the HTTP API. */

import { ApiError, ProposalClient, validateChain, type ChainsResponse } from "./api.js";
import { Autocomplete } from "./autocomplete.js";
import { attachDragReorder } from "./draglist.js";
import { renderAttentionHeatmap } from "./heatmap.js";
import { applyValidation, hideErrorBanner, renderChainList, showErrorBanner } from "./render.js";
import { addCode, initialSession, moveCode, removeCode, type SessionState } from "./state.js";

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function bootstrap(baseUrl = ""): void {
  const session: SessionState = initialSession();
  const client = new ProposalClient(baseUrl);

  const codeList = byId<HTMLElement>("code-list");
  const codeInput = byId<HTMLInputElement>("code-input");
  const suggestionList = byId<HTMLElement>("suggestions");
  const systemSelect = byId<HTMLSelectElement>("system-select");
  const beamInput = byId<HTMLInputElement>("beam-size");
  const constrainedToggle = byId<HTMLInputElement>("constrained-toggle");
  const attentionToggle = byId<HTMLInputElement>("attention-toggle");
  const proposeButton = byId<HTMLButtonElement>("propose");
  const banner = byId<HTMLElement>("error-banner");
  const chainContainer = byId<HTMLElement>("chains");
  const heatmapContainer = byId<HTMLElement>("heatmap");

  function renderCodes(): void {
    codeList.replaceChildren();
    session.codes.forEach((code, index) => {
      const item = document.createElement("li");
      item.className = "entered-code";
      item.draggable = true;
      item.dataset.index = String(index);
      item.textContent = code;
      const remove = document.createElement("button");
      remove.className = "remove-code";
      remove.textContent = "×";
      remove.addEventListener("click", () => {
        session.codes = removeCode(session.codes, index);
        renderCodes();
      });
      item.appendChild(remove);
      codeList.appendChild(item);
    });
  }

  function renderResponse(response: ChainsResponse): void {
    session.lastResponse = response;
    renderChainList(chainContainer, response);
    const best = response.hypotheses[0];
    if (best) {
      renderAttentionHeatmap(heatmapContainer, best);
    } else {
      heatmapContainer.hidden = true;
    }
    chainContainer.querySelectorAll<HTMLElement>(".chain-card").forEach((card) => {
      const rank = Number(card.dataset.rank);
      const hyp = response.hypotheses[rank];
      if (!hyp || hyp.chain.length === 0) return;
      void validateChain(baseUrl, hyp.chain)
        .then((verdict) => applyValidation(card, verdict))
        .catch(() => undefined);
    });
  }

  async function propose(): Promise<void> {
    if (session.codes.length === 0) return;
    session.system = systemSelect.value === "icd9" ? "icd9" : "icd10";
    session.beamSize = Math.max(1, Number(beamInput.value) || 1);
    session.constrained = constrainedToggle.checked;
    try {
      const response = await client.propose({
        codes: session.codes,
        system: session.system,
        k: session.beamSize,
        constrained: session.constrained,
        attention: attentionToggle.checked,
      });
      if (response === null) return; // superseded by a newer request
      hideErrorBanner(banner);
      renderResponse(response);
    } catch (err) {
      const message = err instanceof ApiError ? err.message : "service unreachable";
      showErrorBanner(banner, message, () => void propose());
    }
  }

  const autocomplete = new Autocomplete(baseUrl, suggestionList, (code) => {
    session.codes = addCode(session.codes, code);
    codeInput.value = "";
    renderCodes();
  });
  codeInput.addEventListener("input", () => autocomplete.onQuery(codeInput.value));
  codeInput.addEventListener("keydown", (event) => {
    if (event.key === "Enter" && codeInput.value.trim()) {
      session.codes = addCode(session.codes, codeInput.value);
      codeInput.value = "";
      autocomplete.renderSuggestions([]);
      renderCodes();
    }
  });

  attachDragReorder(codeList, (from, to) => {
    session.codes = moveCode(session.codes, from, to);
    renderCodes();
  });

  proposeButton.addEventListener("click", () => void propose());
  renderCodes();
}

if (typeof document !== "undefined" && document.getElementById("code-list")) {
  bootstrap("");
}
