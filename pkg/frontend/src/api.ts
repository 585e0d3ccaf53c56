/** Typed client for the causal-chain HTTP API. The UI never derives
 * validity or scores itself; everything rendered comes from these payloads. */

export interface Hypothesis {
  chain: string[];
  descriptions: (string | null)[];
  log_prob: number;
  edge_valid: boolean[];
  finished: boolean;
  attention?: number[][];
  attention_src?: string[];
}

export interface ChainsResponse {
  hypotheses: Hypothesis[];
  src_codes: string[];
}

export interface ChainsRequest {
  codes: string[];
  system: "icd9" | "icd10";
  k: number;
  constrained: boolean;
  attention: boolean;
}

export interface ValidateResponse {
  valid: boolean;
  first_bad_index: number | null;
}

export interface CodeSuggestion {
  code: string;
  description: string;
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
  }
}

async function postJson<T>(url: string, body: unknown): Promise<T> {
  const response = await fetch(url, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!response.ok) {
    let detail = `request failed with status ${response.status}`;
    try {
      const payload = await response.json();
      if (payload && typeof payload.detail === "string") detail = payload.detail;
    } catch {
      // non-JSON error body; keep the generic message
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export function proposeChains(baseUrl: string, req: ChainsRequest): Promise<ChainsResponse> {
  return postJson<ChainsResponse>(`${baseUrl}/v1/chains`, req);
}

export function validateChain(baseUrl: string, chain: string[]): Promise<ValidateResponse> {
  return postJson<ValidateResponse>(`${baseUrl}/v1/validate`, { chain });
}

export async function fetchCodeSuggestions(
  baseUrl: string,
  prefix: string,
  limit = 10,
): Promise<CodeSuggestion[]> {
  const url = `${baseUrl}/v1/codes?q=${encodeURIComponent(prefix)}&limit=${limit}`;
  const response = await fetch(url);
  if (!response.ok) throw new ApiError(response.status, "autocomplete failed");
  const payload = (await response.json()) as { results: CodeSuggestion[] };
  return payload.results;
}

/** Serializes proposal requests: only the most recent one counts, and a
 * response (or error) from a superseded request resolves to null instead. */
export class ProposalClient {
  private seq = 0;

  constructor(private baseUrl: string) {}

  async propose(req: ChainsRequest): Promise<ChainsResponse | null> {
    const mySeq = ++this.seq;
    try {
      const response = await proposeChains(this.baseUrl, req);
      return mySeq === this.seq ? response : null;
    } catch (err) {
      if (mySeq !== this.seq) return null;
      throw err;
    }
  }
}
