/** Session state and the pure list operations behind the code editor.
 * Source order is priority-meaningful, so every edit preserves the user's
 * ordering; nothing here touches server data. */

import type { ChainsResponse } from "./api.js";

export interface SessionState {
  codes: string[];
  system: "icd9" | "icd10";
  beamSize: number;
  constrained: boolean;
  lastResponse: ChainsResponse | null;
}

export function initialSession(): SessionState {
  return { codes: [], system: "icd10", beamSize: 3, constrained: false, lastResponse: null };
}

export function addCode(codes: string[], code: string): string[] {
  const text = code.trim().toUpperCase();
  if (!text) return codes;
  return [...codes, text];
}

export function removeCode(codes: string[], index: number): string[] {
  return codes.filter((_, i) => i !== index);
}

/** Move the item at `from` so it lands at `to`, shifting the rest. */
export function moveCode(codes: string[], from: number, to: number): string[] {
  if (from === to || from < 0 || to < 0 || from >= codes.length || to >= codes.length) {
    return codes.slice();
  }
  const next = codes.slice();
  const [item] = next.splice(from, 1);
  next.splice(to, 0, item);
  return next;
}
