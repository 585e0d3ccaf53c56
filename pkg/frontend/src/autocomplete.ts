/** Debounced code autocomplete against GET /v1/codes. Network failures are
 * swallowed (the dropdown simply stays empty); selecting a suggestion hands
 * the code to the caller, which appends it to the ordered list. */

import { fetchCodeSuggestions, type CodeSuggestion } from "./api.js";

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
): (...args: A) => void {
  let timer: ReturnType<typeof setTimeout> | undefined;
  return (...args: A) => {
    if (timer !== undefined) clearTimeout(timer);
    timer = setTimeout(() => fn(...args), waitMs);
  };
}

export class Autocomplete {
  readonly onQuery: (prefix: string) => void;
  private seq = 0;

  constructor(
    private baseUrl: string,
    private listEl: HTMLElement,
    private onSelect: (code: string) => void,
    waitMs = 150,
  ) {
    this.onQuery = debounce((prefix: string) => void this.query(prefix), waitMs);
  }

  private async query(prefix: string): Promise<void> {
    const trimmed = prefix.trim();
    const mySeq = ++this.seq;
    if (!trimmed) {
      this.renderSuggestions([]);
      return;
    }
    let suggestions: CodeSuggestion[];
    try {
      suggestions = await fetchCodeSuggestions(this.baseUrl, trimmed);
    } catch {
      return; // silent: keep whatever is currently shown
    }
    if (mySeq !== this.seq) return;
    this.renderSuggestions(suggestions);
  }

  renderSuggestions(suggestions: CodeSuggestion[]): void {
    this.listEl.replaceChildren();
    for (const s of suggestions) {
      const item = document.createElement("li");
      item.className = "suggestion";
      item.textContent = `${s.code} — ${s.description}`;
      item.dataset.code = s.code;
      item.addEventListener("click", () => {
        this.onSelect(s.code);
        this.renderSuggestions([]);
      });
      this.listEl.appendChild(item);
    }
    this.listEl.hidden = suggestions.length === 0;
  }
}
