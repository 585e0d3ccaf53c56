/** Attention heatmap: source codes as columns, generated codes as rows,
 * cell intensity proportional to the attention weight. Hidden entirely when
 * the hypothesis carries no attention matrix. */

import type { Hypothesis } from "./api.js";

function cellTitle(
  src: string,
  tgt: string,
  weight: number,
  descriptions: Record<string, string>,
): string {
  const srcDesc = descriptions[src] ? ` (${descriptions[src]})` : "";
  const tgtDesc = descriptions[tgt] ? ` (${descriptions[tgt]})` : "";
  return `${src}${srcDesc} → ${tgt}${tgtDesc}: ${weight.toFixed(3)}`;
}

export function renderAttentionHeatmap(
  container: HTMLElement,
  hyp: Hypothesis,
  descriptions: Record<string, string> = {},
): void {
  container.replaceChildren();
  const matrix = hyp.attention;
  const srcCodes = hyp.attention_src;
  if (!matrix || !matrix.length || !srcCodes) {
    container.hidden = true;
    return;
  }
  container.hidden = false;

  const table = document.createElement("table");
  table.className = "attention-grid";

  const head = table.createTHead().insertRow();
  head.appendChild(document.createElement("th"));
  for (const src of srcCodes) {
    const th = document.createElement("th");
    th.textContent = src;
    th.title = descriptions[src] ?? src;
    head.appendChild(th);
  }

  const body = table.createTBody();
  matrix.forEach((weights, rowIdx) => {
    // The row past the last generated code is the end-of-chain step.
    const tgt = rowIdx < hyp.chain.length ? hyp.chain[rowIdx] : "(end)";
    const row = body.insertRow();
    const label = document.createElement("th");
    label.textContent = tgt;
    row.appendChild(label);
    weights.forEach((weight, colIdx) => {
      const cell = row.insertCell();
      cell.className = "attention-cell";
      cell.style.setProperty("--weight", weight.toFixed(4));
      cell.style.backgroundColor = `rgba(34, 87, 179, ${weight.toFixed(4)})`;
      cell.title = cellTitle(srcCodes[colIdx], tgt, weight, descriptions);
    });
  });

  container.appendChild(table);
}
