import { describe, expect, it, vi } from "vitest";

import { ValidationError, fetchPairs, postRating } from "../src/api.js";

const VALID = { rater_id: "r1", pair_id: "p1", quality: 4, similarity: 3 };

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

describe("postRating", () => {
  it("never sends values outside 1..5", async () => {
    const fetchFn = vi.fn();
    for (const bad of [{ quality: 0 }, { quality: 6 }, { similarity: 0 }, { similarity: 2.5 }]) {
      await expect(
        postRating("", { ...VALID, ...bad }, { fetchFn }),
      ).rejects.toThrow(RangeError);
    }
    expect(fetchFn).not.toHaveBeenCalled();
  });

  it("posts a well-formed JSON body", async () => {
    const fetchFn = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
      expect(url).toBe("/api/ratings");
      expect(init?.method).toBe("POST");
      expect(JSON.parse(init?.body as string)).toEqual(VALID);
      return jsonResponse(200, { status: "stored" });
    });
    await postRating("", VALID, { fetchFn: fetchFn as unknown as typeof fetch });
    expect(fetchFn).toHaveBeenCalledTimes(1);
  });

  it("retries network failures with exponential backoff", async () => {
    const delays: number[] = [];
    let calls = 0;
    const fetchFn = vi.fn(async () => {
      calls += 1;
      if (calls < 3) {
        throw new TypeError("network down");
      }
      return jsonResponse(200, {});
    });
    await postRating("", VALID, {
      fetchFn: fetchFn as unknown as typeof fetch,
      baseDelayMs: 10,
      sleepFn: async (ms) => {
        delays.push(ms);
      },
    });
    expect(calls).toBe(3);
    expect(delays).toEqual([10, 20]);
  });

  it("gives up after the retry budget", async () => {
    const fetchFn = vi.fn(async () => {
      throw new TypeError("network down");
    });
    await expect(
      postRating("", VALID, {
        fetchFn: fetchFn as unknown as typeof fetch,
        retries: 2,
        sleepFn: async () => {},
      }),
    ).rejects.toThrow("network down");
    expect(fetchFn).toHaveBeenCalledTimes(3);
  });

  it("surfaces 422 as ValidationError without retrying", async () => {
    const fetchFn = vi.fn(async () =>
      jsonResponse(422, { detail: [{ field: "quality", message: "too large" }] }),
    );
    await expect(
      postRating("", VALID, { fetchFn: fetchFn as unknown as typeof fetch }),
    ).rejects.toThrow(ValidationError);
    expect(fetchFn).toHaveBeenCalledTimes(1);
  });
});

describe("fetchPairs", () => {
  it("unwraps the pair list", async () => {
    const fetchFn = vi.fn(async (url: RequestInfo | URL) => {
      expect(String(url)).toBe("/api/pairs?token=tok");
      return jsonResponse(200, { token: "tok", pairs: [{ pair_id: "p" }] });
    });
    const pairs = await fetchPairs("", "tok", { fetchFn: fetchFn as unknown as typeof fetch });
    expect(pairs).toHaveLength(1);
  });
});
