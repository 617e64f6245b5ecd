import { PairInfo, RatingPayload, isValidScore } from "./types.js";

/** The service rejected a rating with field-level messages (HTTP 422). */
export class ValidationError extends Error {
  fields: { field: string; message: string }[];

  constructor(fields: { field: string; message: string }[]) {
    super(fields.map((f) => `${f.field}: ${f.message}`).join("; "));
    this.name = "ValidationError";
    this.fields = fields;
  }
}

export interface RetryOptions {
  retries?: number;
  baseDelayMs?: number;
  fetchFn?: typeof fetch;
  sleepFn?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export async function fetchPairs(
  base: string,
  token: string,
  options: RetryOptions = {},
): Promise<PairInfo[]> {
  const doFetch = options.fetchFn ?? fetch;
  const response = await doFetch(
    `${base}/api/pairs?token=${encodeURIComponent(token)}`,
  );
  if (!response.ok) {
    throw new Error(`pair listing failed: HTTP ${response.status}`);
  }
  const body = await response.json();
  return body.pairs as PairInfo[];
}

/**
 * POST one rating. Values outside 1-5 never leave the client; network
 * failures and 5xx responses retry with exponential backoff; a 422 is
 * surfaced as ValidationError without retrying.
 */
export async function postRating(
  base: string,
  payload: RatingPayload,
  options: RetryOptions = {},
): Promise<void> {
  if (!isValidScore(payload.quality) || !isValidScore(payload.similarity)) {
    throw new RangeError("quality and similarity must be integers in 1..5");
  }
  const doFetch = options.fetchFn ?? fetch;
  const sleep = options.sleepFn ?? defaultSleep;
  const retries = options.retries ?? 5;
  const baseDelay = options.baseDelayMs ?? 250;

  let lastError: unknown = null;
  for (let attempt = 0; attempt <= retries; attempt++) {
    if (attempt > 0) {
      await sleep(baseDelay * 2 ** (attempt - 1));
    }
    let response: Response;
    try {
      response = await doFetch(`${base}/api/ratings`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(payload),
      });
    } catch (error) {
      lastError = error; // network failure: queued for the next backoff slot
      continue;
    }
    if (response.ok) {
      return;
    }
    if (response.status === 422) {
      const body = await response.json().catch(() => ({ detail: [] }));
      const fields = Array.isArray(body.detail)
        ? body.detail
        : [{ field: "", message: String(body.detail) }];
      throw new ValidationError(fields);
    }
    if (response.status >= 500) {
      lastError = new Error(`HTTP ${response.status}`);
      continue;
    }
    throw new Error(`rating rejected: HTTP ${response.status}`);
  }
  throw lastError instanceof Error ? lastError : new Error("rating POST failed");
}
