"""Rating records, durable storage, and MOS aggregation.

Ratings land in an append-only line-delimited JSON log; replaying the log
reconstructs the store exactly. One record per (rater, pair) counts —
resubmission overwrites. Aggregation reports population standard
deviations; speaker rows pool that speaker's ratings, gender rows average
over per-speaker means (both std flavors are exposed).
"""
from __future__ import annotations

import json
import math
import threading
from dataclasses import asdict, dataclass
from pathlib import Path

from ..errors import ManifestError

VALID_SCORES = frozenset({1, 2, 3, 4, 5})


@dataclass(frozen=True)
class ClipPair:
    pair_id: str
    speaker_id: str
    gender: str
    original_audio: str
    cloned_audio: str


@dataclass(frozen=True)
class RatingRecord:
    rater_id: str
    pair_id: str
    quality: int
    similarity: int
    timestamp: float = 0.0

    def __post_init__(self):
        if self.quality not in VALID_SCORES:
            raise ValueError(f"quality must be in 1..5, got {self.quality}")
        if self.similarity not in VALID_SCORES:
            raise ValueError(f"similarity must be in 1..5, got {self.similarity}")


def load_study(path) -> list[ClipPair]:
    """Read the line-delimited JSON study definition."""
    pairs = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                pair = ClipPair(**json.loads(line))
            except (json.JSONDecodeError, TypeError) as exc:
                raise ManifestError(f"{path}:{line_no}: bad study line: {exc}")
            if pair.pair_id in seen:
                raise ManifestError(f"{path}:{line_no}: duplicate pair_id {pair.pair_id!r}")
            seen.add(pair.pair_id)
            pairs.append(pair)
    return pairs


class RatingStore:
    """Append-only rating log with last-write-wins overwrite semantics.

    Writes are serialized through a single lock; reads take a snapshot.
    """

    def __init__(self, log_path):
        self._log_path = Path(log_path)
        self._lock = threading.Lock()
        self._records: dict[tuple[str, str], RatingRecord] = {}
        if self._log_path.exists():
            self._replay()

    def _replay(self) -> None:
        with open(self._log_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = RatingRecord(**json.loads(line))
                self._records[(record.rater_id, record.pair_id)] = record

    def add(self, record: RatingRecord) -> None:
        with self._lock:
            self._log_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self._log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(asdict(record), ensure_ascii=False) + "\n")
                fh.flush()
            self._records[(record.rater_id, record.pair_id)] = record

    def records(self) -> list[RatingRecord]:
        """Final records only (one per rater/pair), stable order."""
        with self._lock:
            return [self._records[key] for key in sorted(self._records)]


def _mean_std(values) -> tuple[float, float]:
    values = list(values)
    mean = sum(values) / len(values)
    var = sum((v - mean) ** 2 for v in values) / len(values)
    return mean, math.sqrt(var)


def _stat_block(quality, similarity) -> dict:
    q_mean, q_std = _mean_std(quality)
    s_mean, s_std = _mean_std(similarity)
    return {
        "quality_mean": q_mean,
        "quality_std": q_std,
        "similarity_mean": s_mean,
        "similarity_std": s_std,
        "quality_mos": f"{q_mean:.2f} ± {q_std:.2f}",
        "similarity_mos": f"{s_mean:.2f} ± {s_std:.2f}",
    }


@dataclass
class MosAggregate:
    payload: dict

    def __getitem__(self, key):
        return self.payload[key]


def aggregate(records, pairs) -> MosAggregate:
    """Tables-5/6-shaped aggregate: per-speaker rows, per-gender rows, overall.

    Speaker rows pool all ratings of that speaker's pairs; gender and
    overall rows average over per-speaker means. Both std flavors are
    reported at gender/overall level: over speaker means and over the
    pooled ratings.
    """
    pair_index = {p.pair_id: p for p in pairs}
    for record in records:
        if record.pair_id not in pair_index:
            raise ManifestError(f"rating references unknown pair {record.pair_id!r}")
    if not records:
        return MosAggregate({
            "empty": True, "rating_count": 0,
            "speakers": [], "genders": [], "overall": None,
        })

    by_speaker: dict[str, list[RatingRecord]] = {}
    for record in records:
        speaker_id = pair_index[record.pair_id].speaker_id
        by_speaker.setdefault(speaker_id, []).append(record)

    speaker_rows = []
    speaker_gender = {}
    for speaker_id in sorted(by_speaker):
        speaker_records = by_speaker[speaker_id]
        gender = pair_index[speaker_records[0].pair_id].gender
        speaker_gender[speaker_id] = _canonical_gender(gender)
        row = {
            "speaker_id": speaker_id,
            "gender": speaker_gender[speaker_id],
            "rating_count": len(speaker_records),
        }
        row.update(_stat_block(
            [r.quality for r in speaker_records],
            [r.similarity for r in speaker_records],
        ))
        speaker_rows.append(row)

    gender_rows = []
    for gender in ("Male", "Female"):
        members = [row for row in speaker_rows if row["gender"] == gender]
        if not members:
            continue
        row = {"gender": gender, "speaker_count": len(members)}
        row.update(_stat_block(
            [m["quality_mean"] for m in members],
            [m["similarity_mean"] for m in members],
        ))
        pooled = [r for row_ in members for r in by_speaker[row_["speaker_id"]]]
        _, row["quality_std_ratings"] = _mean_std([r.quality for r in pooled])
        _, row["similarity_std_ratings"] = _mean_std([r.similarity for r in pooled])
        gender_rows.append(row)

    overall = {"rating_count": len(records), "speaker_count": len(speaker_rows)}
    overall.update(_stat_block(
        [row["quality_mean"] for row in speaker_rows],
        [row["similarity_mean"] for row in speaker_rows],
    ))
    _, overall["quality_std_ratings"] = _mean_std([r.quality for r in records])
    _, overall["similarity_std_ratings"] = _mean_std([r.similarity for r in records])

    return MosAggregate({
        "empty": False,
        "rating_count": len(records),
        "speakers": speaker_rows,
        "genders": gender_rows,
        "overall": overall,
    })


def _canonical_gender(gender) -> str:
    text = (gender or "").strip().lower()
    if text in ("m", "male"):
        return "Male"
    if text in ("f", "female"):
        return "Female"
    return (gender or "Unknown").title() or "Unknown"
