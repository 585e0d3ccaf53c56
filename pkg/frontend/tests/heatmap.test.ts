import { describe, expect, it } from "vitest";

import type { Hypothesis } from "../src/api.js";
import { renderAttentionHeatmap } from "../src/heatmap.js";

function hypWithAttention(matrix: number[][], src: string[], chain: string[]): Hypothesis {
  return {
    chain,
    descriptions: chain.map(() => null),
    log_prob: -1,
    edge_valid: chain.slice(1).map(() => true),
    finished: true,
    attention: matrix,
    attention_src: src,
  };
}

describe("renderAttentionHeatmap", () => {
  it("renders a 2x3 matrix as two rows of three cells", () => {
    const container = document.createElement("div");
    const hyp = hypWithAttention(
      [
        [0.6, 0.3, 0.1],
        [0.2, 0.2, 0.6],
      ],
      ["I500", "J189", "E119"],
      ["I251", "I500"],
    );

    renderAttentionHeatmap(container, hyp);

    expect(container.hidden).toBe(false);
    const rows = container.querySelectorAll("tbody tr");
    expect(rows).toHaveLength(2);
    rows.forEach((row) => expect(row.querySelectorAll("td")).toHaveLength(3));
    const headers = [...container.querySelectorAll("thead th")].map((n) => n.textContent);
    expect(headers).toEqual(["", "I500", "J189", "E119"]); // corner cell then sources
    const rowLabels = [...container.querySelectorAll("tbody th")].map((n) => n.textContent);
    expect(rowLabels).toEqual(["I251", "I500"]);
  });

  it("is hidden when the hypothesis has no attention matrix", () => {
    const container = document.createElement("div");
    const hyp = hypWithAttention([], [], ["I251"]);
    delete hyp.attention;
    delete hyp.attention_src;

    renderAttentionHeatmap(container, hyp);

    expect(container.hidden).toBe(true);
    expect(container.childElementCount).toBe(0);
  });

  it("gives a one-hot row a single saturated cell", () => {
    const container = document.createElement("div");
    renderAttentionHeatmap(
      container,
      hypWithAttention([[1, 0, 0]], ["A000", "B000", "C000"], ["I251"]),
    );

    const cells = [...container.querySelectorAll<HTMLElement>("td")];
    const weights = cells.map((c) => Number(c.style.getPropertyValue("--weight")));
    expect(weights).toEqual([1, 0, 0]);
  });

  it("renders equal weights with uniform intensity", () => {
    const container = document.createElement("div");
    renderAttentionHeatmap(container, hypWithAttention([[0.25, 0.25, 0.25, 0.25]], ["A", "B", "C", "D"], ["X"]));

    const opacities = [...container.querySelectorAll<HTMLElement>("td")].map((c) =>
      c.style.getPropertyValue("--weight"),
    );
    expect(new Set(opacities).size).toBe(1);
  });

  it("puts source/target codes, descriptions, and the weight in the hover title", () => {
    const container = document.createElement("div");
    renderAttentionHeatmap(
      container,
      hypWithAttention([[0.75]], ["I500"], ["I251"]),
      { I500: "heart failure", I251: "ischaemic heart disease" },
    );

    const title = container.querySelector<HTMLElement>("td")!.title;
    expect(title).toContain("I500");
    expect(title).toContain("heart failure");
    expect(title).toContain("I251");
    expect(title).toContain("ischaemic heart disease");
    expect(title).toContain("0.750");
  });

  it("labels the end-of-chain attention row", () => {
    const container = document.createElement("div");
    renderAttentionHeatmap(
      container,
      hypWithAttention([[1], [1]], ["I500"], ["I251"]),
    );

    const rowLabels = [...container.querySelectorAll("tbody th")].map((n) => n.textContent);
    expect(rowLabels).toEqual(["I251", "(end)"]);
  });
});
