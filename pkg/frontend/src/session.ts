import { PairInfo, Rating, isValidScore } from "./types.js";

/** Minimal storage surface so tests can inject a fake localStorage. */
export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

interface PersistedSession {
  token: string;
  order: string[];
  submitted: Record<string, Rating>;
}

const STORAGE_KEY = "swarclone-mos-session";

/**
 * Rating session over a server-ordered pair queue.
 *
 * The order comes from the service and is never reshuffled here. Submitted
 * ratings persist in storage keyed by the session token, so a refresh
 * resumes at the first unsubmitted pair. A pair is shown once unless the
 * caller explicitly revisits it.
 */
export class Session {
  readonly token: string;
  readonly pairs: PairInfo[];
  private submitted: Record<string, Rating> = {};
  private store: KeyValueStore;

  constructor(token: string, pairs: PairInfo[], store: KeyValueStore) {
    this.token = token;
    this.pairs = pairs;
    this.store = store;
    this.restore();
  }

  private restore(): void {
    const raw = this.store.getItem(STORAGE_KEY);
    if (raw === null) {
      return;
    }
    try {
      const saved = JSON.parse(raw) as PersistedSession;
      if (saved.token !== this.token) {
        return; // different rater: start fresh
      }
      const known = new Set(this.pairs.map((p) => p.pair_id));
      for (const [pairId, rating] of Object.entries(saved.submitted)) {
        if (known.has(pairId) && isValidScore(rating.quality) && isValidScore(rating.similarity)) {
          this.submitted[pairId] = rating;
        }
      }
    } catch {
      // corrupt state: start fresh rather than blocking the rater
    }
  }

  private persist(): void {
    const state: PersistedSession = {
      token: this.token,
      order: this.pairs.map((p) => p.pair_id),
      submitted: this.submitted,
    };
    this.store.setItem(STORAGE_KEY, JSON.stringify(state));
  }

  /** Index of the first unsubmitted pair; pairs.length when done. */
  get currentIndex(): number {
    for (let i = 0; i < this.pairs.length; i++) {
      if (!(this.pairs[i].pair_id in this.submitted)) {
        return i;
      }
    }
    return this.pairs.length;
  }

  current(): PairInfo | null {
    const index = this.currentIndex;
    return index < this.pairs.length ? this.pairs[index] : null;
  }

  isComplete(): boolean {
    return this.currentIndex >= this.pairs.length;
  }

  submittedCount(): number {
    return Object.keys(this.submitted).length;
  }

  /** Both scales set and in range: the submit button's enable condition. */
  canSubmit(quality: number | null, similarity: number | null): boolean {
    return isValidScore(quality) && isValidScore(similarity);
  }

  markSubmitted(pairId: string, rating: Rating): void {
    if (!isValidScore(rating.quality) || !isValidScore(rating.similarity)) {
      throw new RangeError("ratings must be integers in 1..5");
    }
    if (!this.pairs.some((p) => p.pair_id === pairId)) {
      throw new Error(`unknown pair ${pairId}`);
    }
    this.submitted[pairId] = rating;
    this.persist();
  }

  /** Personal means shown on the completion screen. */
  personalMeans(): { quality: number; similarity: number } | null {
    const ratings = Object.values(this.submitted);
    if (ratings.length === 0) {
      return null;
    }
    const sum = ratings.reduce(
      (acc, r) => ({ quality: acc.quality + r.quality, similarity: acc.similarity + r.similarity }),
      { quality: 0, similarity: 0 },
    );
    return {
      quality: sum.quality / ratings.length,
      similarity: sum.similarity / ratings.length,
    };
  }
}
