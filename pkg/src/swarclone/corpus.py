"""Manifest-driven dataset management.

Manifests are line-delimited JSON, one entry per clip. Encoder manifests
carry untranscribed audio; synthesizer manifests additionally require a
normalized transcript per clip. Speaker metadata (gender, age group) comes
from an optional speakers.json side file at the corpus root.
"""
from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import dsp
from .errors import ManifestError


@dataclass
class ManifestEntry:
    audio_path: str
    speaker_id: str
    duration_s: float
    text: str | None = None
    gender: str | None = None
    age_group: str | None = None

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError(f"{self.audio_path}: duration_s must be positive")


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    issues: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def speakers(self) -> list[str]:
        return sorted({e.speaker_id for e in self.entries})


@dataclass
class CorpusStats:
    """Speaker-level and clip-level summary of a manifest."""

    total_speakers: int
    male_speakers: int
    female_speakers: int
    total_duration_s: float
    longest_speaker_total_s: float
    shortest_speaker_total_s: float
    utterance_count: int
    mean_clip_duration_s: float
    min_clip_duration_s: float
    max_clip_duration_s: float
    total_words: int
    total_characters: int
    mean_words_per_clip: float
    distinct_words: int

    def __post_init__(self):
        if self.male_speakers + self.female_speakers > self.total_speakers:
            raise ValueError("male + female speaker counts exceed total speakers")
        if not (
            self.min_clip_duration_s
            <= self.mean_clip_duration_s
            <= self.max_clip_duration_s
        ):
            raise ValueError("clip duration min/mean/max out of order")


def load_speaker_metadata(root) -> dict:
    path = Path(root) / "speakers.json"
    if not path.exists():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


def build_manifest(root, kind: str = "encoder") -> Manifest:
    """Scan a speaker_id/clip.wav tree into a manifest.

    kind="synth" requires a sibling .txt transcript per clip; clips missing
    one are reported in manifest.issues and skipped, the rest retained.
    """
    if kind not in ("encoder", "synth"):
        raise ValueError(f"unknown manifest kind: {kind!r}")
    root = Path(root)
    metadata = load_speaker_metadata(root)
    manifest = Manifest()
    for speaker_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        speaker_id = speaker_dir.name
        meta = metadata.get(speaker_id, {})
        for wav in sorted(speaker_dir.glob("*.wav")):
            text = None
            if kind == "synth":
                transcript = wav.with_suffix(".txt")
                if not transcript.exists():
                    manifest.issues.append(f"{wav}: missing transcript {transcript.name}")
                    continue
                text = transcript.read_text(encoding="utf-8").strip()
            try:
                duration = dsp.wav_duration_s(wav)
            except Exception as exc:
                manifest.issues.append(f"{wav}: {exc}")
                continue
            if duration <= 0:
                manifest.issues.append(f"{wav}: zero-length audio")
                continue
            manifest.entries.append(
                ManifestEntry(
                    audio_path=str(wav),
                    speaker_id=speaker_id,
                    duration_s=duration,
                    text=text,
                    gender=meta.get("gender"),
                    age_group=meta.get("age_group"),
                )
            )
    return manifest


def write_manifest(path, manifest: Manifest) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in manifest.entries:
            fh.write(json.dumps(asdict(entry), ensure_ascii=False) + "\n")


def read_manifest(path) -> Manifest:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entries.append(ManifestEntry(**json.loads(line)))
            except (json.JSONDecodeError, TypeError) as exc:
                raise ManifestError(f"{path}:{line_no}: bad manifest line: {exc}")
    return Manifest(entries)


def compute_stats(manifest: Manifest) -> CorpusStats:
    """All summary-table fields; a word is a whitespace-delimited token."""
    entries = manifest.entries
    if not entries:
        raise ManifestError("cannot compute stats of an empty manifest")
    per_speaker: dict[str, float] = {}
    genders: dict[str, str] = {}
    for e in entries:
        per_speaker[e.speaker_id] = per_speaker.get(e.speaker_id, 0.0) + e.duration_s
        if e.gender:
            genders[e.speaker_id] = e.gender.lower()
    durations = [e.duration_s for e in entries]
    words: list[str] = []
    total_chars = 0
    for e in entries:
        if e.text:
            words.extend(e.text.split())
            total_chars += len(e.text)
    return CorpusStats(
        total_speakers=len(per_speaker),
        male_speakers=sum(1 for g in genders.values() if g == "male"),
        female_speakers=sum(1 for g in genders.values() if g == "female"),
        total_duration_s=float(sum(durations)),
        longest_speaker_total_s=max(per_speaker.values()),
        shortest_speaker_total_s=min(per_speaker.values()),
        utterance_count=len(entries),
        mean_clip_duration_s=float(sum(durations) / len(durations)),
        min_clip_duration_s=min(durations),
        max_clip_duration_s=max(durations),
        total_words=len(words),
        total_characters=total_chars,
        mean_words_per_clip=len(words) / len(entries),
        distinct_words=len(set(words)),
    )


def split_holdout(manifest: Manifest, fraction: float, seed: int) -> tuple[Manifest, Manifest]:
    """Speaker-disjoint train/holdout split, deterministic per seed."""
    speakers = manifest.speakers()
    if len(speakers) < 2:
        raise ManifestError("holdout split needs at least 2 speakers")
    n_holdout = round(len(speakers) * fraction)
    if n_holdout < 1 or n_holdout >= len(speakers):
        raise ManifestError(
            f"fraction {fraction} yields an empty split side for {len(speakers)} speakers"
        )
    shuffled = speakers.copy()
    random.Random(seed).shuffle(shuffled)
    holdout_ids = set(shuffled[:n_holdout])
    train = Manifest([e for e in manifest.entries if e.speaker_id not in holdout_ids])
    holdout = Manifest([e for e in manifest.entries if e.speaker_id in holdout_ids])
    return train, holdout
