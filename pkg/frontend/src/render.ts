/** DOM rendering for chain cards, validation highlights and the error
 * banner. Badges mirror the server's edge_valid array verbatim. */

import type { ChainsResponse, Hypothesis, ValidateResponse } from "./api.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function describe(hyp: Hypothesis, i: number): string {
  const desc = hyp.descriptions[i];
  return desc === null || desc === undefined || desc === "" ? "N/A" : desc;
}

export function renderChainCard(hyp: Hypothesis, rank: number): HTMLElement {
  const card = el("article", "chain-card");
  card.dataset.rank = String(rank);

  const header = el("header", "chain-header");
  header.appendChild(el("span", "chain-rank", `#${rank + 1}`));
  header.appendChild(el("span", "chain-score", `log p = ${hyp.log_prob.toFixed(3)}`));
  card.appendChild(header);

  // Underlying cause first, one edge badge between each adjacent pair.
  const row = el("div", "chain-row");
  hyp.chain.forEach((code, i) => {
    const cell = el("span", "chain-code");
    cell.appendChild(el("strong", "code-text", code));
    cell.appendChild(el("small", "code-desc", describe(hyp, i)));
    row.appendChild(cell);
    if (i < hyp.chain.length - 1) {
      const valid = hyp.edge_valid[i];
      const badge = el("span", valid ? "edge-badge edge-valid" : "edge-badge edge-invalid");
      badge.textContent = valid ? "→ ✓" : "→ ✗";
      badge.title = valid ? "licensed causal pair" : "no causal rule for this pair";
      row.appendChild(badge);
    }
  });
  if (hyp.chain.length === 0) row.appendChild(el("span", "chain-code empty", "N/A"));
  card.appendChild(row);
  return card;
}

export function renderChainList(container: HTMLElement, response: ChainsResponse): void {
  container.replaceChildren();
  response.hypotheses.forEach((hyp, rank) => container.appendChild(renderChainCard(hyp, rank)));
}

/** Highlight the code at first_bad_index inside an already rendered card. */
export function applyValidation(card: HTMLElement, verdict: ValidateResponse): void {
  card.querySelectorAll(".chain-code").forEach((node) => node.classList.remove("bad-position"));
  card.classList.toggle("chain-invalid", !verdict.valid);
  if (verdict.first_bad_index === null) return;
  const codes = card.querySelectorAll(".chain-code");
  const target = codes[verdict.first_bad_index];
  if (target) target.classList.add("bad-position");
}

export function showErrorBanner(banner: HTMLElement, message: string, onRetry: () => void): void {
  banner.replaceChildren();
  banner.appendChild(el("span", "banner-text", message));
  const retry = el("button", "banner-retry", "Retry");
  retry.addEventListener("click", () => {
    hideErrorBanner(banner);
    onRetry();
  });
  banner.appendChild(retry);
  banner.hidden = false;
}

export function hideErrorBanner(banner: HTMLElement): void {
  banner.hidden = true;
  banner.replaceChildren();
}
