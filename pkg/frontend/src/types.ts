export interface PairInfo {
  pair_id: string;
  speaker_id: string;
  gender: string;
  original_url: string;
  cloned_url: string;
}

export interface Rating {
  quality: number;
  similarity: number;
}

export interface RatingPayload extends Rating {
  rater_id: string;
  pair_id: string;
}

export function isValidScore(value: unknown): value is number {
  return typeof value === "number" && Number.isInteger(value) && value >= 1 && value <= 5;
}
