"""Verification and quality metrics: cosine banding, EER, 2-D projections,
SNR reporting, and comparison bundles for original/cloned clip pairs.

Everything is pure and embarrassingly parallel across clips/speakers.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dsp
from .errors import DegenerateInputError

BAND_THRESHOLDS = ((0.95, "Excellent"), (0.90, "Good"), (0.85, "Fair"))

ALIGNMENT_MAGIC = b"ALGN"
CORRELATION_MAGIC = b"CORR"


@dataclass(frozen=True)
class ScoreSet:
    genuine: tuple[float, ...]
    impostor: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "genuine", tuple(float(s) for s in self.genuine))
        object.__setattr__(self, "impostor", tuple(float(s) for s in self.impostor))


@dataclass
class SimilarityReport:
    per_speaker: dict = field(default_factory=dict)  # speaker_id -> {score, band}
    mean_score: float = 0.0


@dataclass(frozen=True)
class Projection2D:
    points: np.ndarray  # N x 2
    labels: tuple[str, ...]
    method: str

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 2:
            raise ValueError("projection points must be N x 2")
        if not np.all(np.isfinite(points)):
            raise ValueError("projection points must be finite")
        if len(self.labels) != points.shape[0]:
            raise ValueError("one label per point required")
        object.__setattr__(self, "points", points)


def cosine_similarity(a, b) -> float:
    """Dot product of unit-norm embedding vectors."""
    va = np.asarray(getattr(a, "vector", a), dtype=np.float64)
    vb = np.asarray(getattr(b, "vector", b), dtype=np.float64)
    return float(np.dot(va, vb))


def band(score: float) -> str:
    """Quality band with exact thresholds 0.95/0.90/0.85; below 0.85 is Poor."""
    for threshold, name in BAND_THRESHOLDS:
        if score >= threshold:
            return name
    return "Poor"


def similarity_report(pairs: dict) -> SimilarityReport:
    """pairs: speaker_id -> (original_embedding, cloned_embedding)."""
    report = SimilarityReport()
    for speaker_id, (original, cloned) in pairs.items():
        score = cosine_similarity(original, cloned)
        report.per_speaker[speaker_id] = {"score": score, "band": band(score)}
    if report.per_speaker:
        report.mean_score = float(
            np.mean([v["score"] for v in report.per_speaker.values()])
        )
    return report


def compute_eer(scores: ScoreSet) -> tuple[float, float]:
    """Equal error rate and its threshold.

    Candidate thresholds are the observed scores plus a sentinel above the
    maximum; FAR(t) = fraction of impostor scores >= t, FRR(t) = fraction of
    genuine scores < t. The crossing is linearly interpolated between the
    adjacent candidates where FAR - FRR changes sign.
    """
    if not scores.genuine or not scores.impostor:
        raise DegenerateInputError("EER needs non-empty genuine and impostor score sets")
    genuine = np.asarray(scores.genuine)
    impostor = np.asarray(scores.impostor)
    candidates = np.unique(np.concatenate([genuine, impostor]))
    candidates = np.append(candidates, candidates[-1] + 1.0)
    genuine_sorted = np.sort(genuine)
    impostor_sorted = np.sort(impostor)
    far = 1.0 - np.searchsorted(impostor_sorted, candidates, side="left") / impostor.size
    frr = np.searchsorted(genuine_sorted, candidates, side="left") / genuine.size
    diff = far - frr
    for k in range(len(candidates) - 1):
        if diff[k] == 0.0:
            return float((far[k] + frr[k]) / 2.0), float(candidates[k])
        if diff[k] > 0.0 > diff[k + 1]:
            alpha = diff[k] / (diff[k] - diff[k + 1])
            eer = frr[k] + alpha * (frr[k + 1] - frr[k])
            threshold = candidates[k] + alpha * (candidates[k + 1] - candidates[k])
            return float(eer), float(threshold)
    # diff is +1 at the minimum candidate and -1 at the sentinel, so a
    # crossing always exists; the last candidate closes the sweep.
    return float((far[-1] + frr[-1]) / 2.0), float(candidates[-1])


def verification_scores(embeddings_by_speaker: dict) -> ScoreSet:
    """All genuine (same-speaker) and impostor (cross-speaker) cosine pairs."""
    genuine, impostor = [], []
    speakers = sorted(embeddings_by_speaker)
    flat = [(s, np.asarray(getattr(e, "vector", e))) for s in speakers
            for e in embeddings_by_speaker[s]]
    for i in range(len(flat)):
        for j in range(i + 1, len(flat)):
            score = float(np.dot(flat[i][1], flat[j][1]))
            (genuine if flat[i][0] == flat[j][0] else impostor).append(score)
    return ScoreSet(tuple(genuine), tuple(impostor))


def auc(scores: ScoreSet) -> float:
    """Probability a genuine score ranks above an impostor score (ties half)."""
    genuine = np.asarray(scores.genuine)
    impostor = np.asarray(scores.impostor)
    wins = (genuine[:, None] > impostor[None, :]).sum()
    ties = (genuine[:, None] == impostor[None, :]).sum()
    return float((wins + 0.5 * ties) / (genuine.size * impostor.size))


# ---------------------------------------------------------------------------
# 2-D projection (PCA and a minimal neighbor embedding)
# ---------------------------------------------------------------------------

def _pca_2d(x: np.ndarray) -> np.ndarray:
    centered = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:2]
    # deterministic sign: largest-magnitude loading is positive
    for i in range(2):
        j = np.argmax(np.abs(components[i]))
        if components[i, j] < 0:
            components[i] = -components[i]
    return centered @ components.T


def _fuzzy_knn_graph(x: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Symmetrized fuzzy k-NN edge list: (rows, cols, weights)."""
    n = x.shape[0]
    d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=2)
    dist = np.sqrt(np.maximum(d2, 0.0))
    np.fill_diagonal(dist, np.inf)
    knn = np.argsort(dist, axis=1)[:, :k]
    weights = np.zeros((n, n))
    target = math.log2(k) if k > 1 else 1.0
    for i in range(n):
        neighbor_d = dist[i, knn[i]]
        rho = neighbor_d.min()
        lo, hi = 1e-6, 1e3
        for _ in range(64):
            sigma = (lo + hi) / 2.0
            total = np.exp(-np.maximum(neighbor_d - rho, 0.0) / sigma).sum()
            if total > target:
                hi = sigma
            else:
                lo = sigma
        weights[i, knn[i]] = np.exp(-np.maximum(neighbor_d - rho, 0.0) / sigma)
    sym = weights + weights.T - weights * weights.T
    rows, cols = np.nonzero(np.triu(sym, 1))
    return rows, cols, sym[rows, cols]


def _neighbor_embed(x: np.ndarray, seed: int, k: int = 10,
                    epochs: int = 300, learning_rate: float = 0.5) -> np.ndarray:
    """Seeded attraction/repulsion layout over the fuzzy k-NN graph."""
    n = x.shape[0]
    k = min(k, n - 1)
    rows, cols, weights = _fuzzy_knn_graph(x, k)
    rng = np.random.default_rng(seed)
    pca = _pca_2d(x)
    spread = pca.std()
    y = pca / (spread if spread > 0 else 1.0) + rng.normal(0.0, 1e-4, size=(n, 2))
    n_negative = 5
    for epoch in range(epochs):
        rate = learning_rate * (1.0 - epoch / epochs)
        delta = y[rows] - y[cols]
        d2 = np.sum(delta * delta, axis=1, keepdims=True)
        grad = (-2.0 / (1.0 + d2)) * delta * weights[:, None]
        grad = np.clip(grad, -4.0, 4.0)
        np.add.at(y, rows, rate * grad)
        np.add.at(y, cols, -rate * grad)
        negatives = rng.integers(0, n, size=(len(rows), n_negative))
        for s in range(n_negative):
            delta = y[rows] - y[negatives[:, s]]
            d2 = np.sum(delta * delta, axis=1, keepdims=True)
            grad = (2.0 / ((0.001 + d2) * (1.0 + d2))) * delta
            grad = np.clip(grad, -4.0, 4.0)
            np.add.at(y, rows, rate * grad)
    return y - y.mean(axis=0)


def project_embeddings(embeddings, labels, method: str = "pca", seed: int = 0) -> Projection2D:
    """Project embeddings to 2-D via PCA or the minimal neighbor embedding."""
    x = np.asarray(
        [np.asarray(getattr(e, "vector", e), dtype=np.float64) for e in embeddings]
    )
    if x.shape[0] < 3:
        raise DegenerateInputError("projection needs at least 3 embeddings")
    if method == "pca":
        points = _pca_2d(x)
    elif method == "neighbor-embed":
        points = _neighbor_embed(x, seed)
    else:
        raise ValueError(f"unknown projection method: {method!r}")
    return Projection2D(points, tuple(labels), method)


def silhouette(points: np.ndarray, labels) -> float:
    """Mean silhouette coefficient over all points (Euclidean)."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    dist = np.sqrt(np.maximum(
        np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=2), 0.0))
    unique = np.unique(labels)
    if unique.size < 2:
        raise ValueError("silhouette needs at least 2 clusters")
    scores = np.zeros(len(points))
    for i in range(len(points)):
        own = labels == labels[i]
        own[i] = False
        a = dist[i, own].mean() if own.any() else 0.0
        b = min(dist[i, labels == other].mean() for other in unique if other != labels[i])
        scores[i] = 0.0 if max(a, b) == 0 else (b - a) / max(a, b)
    return float(scores.mean())


# ---------------------------------------------------------------------------
# Comparison bundle (original vs cloned clip)
# ---------------------------------------------------------------------------

def frame_correlation(mel_a: np.ndarray, mel_b: np.ndarray) -> np.ndarray:
    """Pearson correlation between every frame pair; zero-variance frames give 0.

    Each clip's mean spectrum over time is removed first; otherwise the
    filterbank envelope shared by all frames dominates and even unrelated
    clips correlate highly.
    """
    a = np.asarray(mel_a, dtype=np.float64)
    b = np.asarray(mel_b, dtype=np.float64)
    a = a - a.mean(axis=0, keepdims=True)
    b = b - b.mean(axis=0, keepdims=True)
    a_c = a - a.mean(axis=1, keepdims=True)
    b_c = b - b.mean(axis=1, keepdims=True)
    a_n = np.linalg.norm(a_c, axis=1)
    b_n = np.linalg.norm(b_c, axis=1)
    denom = a_n[:, None] * b_n[None, :]
    corr = np.divide(a_c @ b_c.T, denom, out=np.zeros((a.shape[0], b.shape[0])),
                     where=denom > 0)
    return corr


def comparison_bundle(original: dsp.AudioClip, cloned: dsp.AudioClip, alignment,
                      out_dir, cfg: dsp.DspConfig = dsp.DspConfig(),
                      original_embedding=None, cloned_embedding=None) -> dict:
    """Emit the original/cloned comparison artifacts into out_dir.

    Contents: both waveforms, both mel matrices, the attention alignment,
    the frame-wise Pearson correlation matrix, both embedding vectors when
    given, and an index.json naming all of it.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mel_original = dsp.mel_spectrogram(original, cfg)
    mel_cloned = dsp.mel_spectrogram(cloned, cfg)
    dsp.write_wav(out_dir / "original.wav", original)
    dsp.write_wav(out_dir / "cloned.wav", cloned)
    dsp.write_mel(out_dir / "original_mel.mels", mel_original)
    dsp.write_mel(out_dir / "cloned_mel.mels", mel_cloned)
    dsp.write_matrix(out_dir / "alignment.algn", np.asarray(alignment), ALIGNMENT_MAGIC)
    corr = frame_correlation(mel_original.frames, mel_cloned.frames)
    dsp.write_matrix(out_dir / "correlation.corr", corr, CORRELATION_MAGIC)
    index = {
        "original_wav": "original.wav",
        "cloned_wav": "cloned.wav",
        "original_mel": "original_mel.mels",
        "cloned_mel": "cloned_mel.mels",
        "alignment": "alignment.algn",
        "correlation": "correlation.corr",
        "sample_rate_hz": cfg.sampling_rate_hz,
    }
    for key, embedding in (("original_embedding", original_embedding),
                           ("cloned_embedding", cloned_embedding)):
        if embedding is not None:
            vector = [float(v) for v in np.asarray(getattr(embedding, "vector", embedding))]
            (out_dir / f"{key}.json").write_text(json.dumps(vector))
            index[key] = f"{key}.json"
    (out_dir / "index.json").write_text(json.dumps(index, indent=2))
    return index


def load_comparison_bundle(bundle_dir) -> dict:
    """Parse every artifact named by a bundle's index.json."""
    bundle_dir = Path(bundle_dir)
    index = json.loads((bundle_dir / "index.json").read_text())
    out = {"index": index}
    out["original"] = dsp.load_wav(bundle_dir / index["original_wav"])
    out["cloned"] = dsp.load_wav(bundle_dir / index["cloned_wav"])
    out["original_mel"] = dsp.read_mel(bundle_dir / index["original_mel"])
    out["cloned_mel"] = dsp.read_mel(bundle_dir / index["cloned_mel"])
    out["alignment"] = dsp.read_matrix(bundle_dir / index["alignment"], ALIGNMENT_MAGIC)
    out["correlation"] = dsp.read_matrix(bundle_dir / index["correlation"], CORRELATION_MAGIC)
    for key in ("original_embedding", "cloned_embedding"):
        if key in index:
            out[key] = np.asarray(json.loads((bundle_dir / index[key]).read_text()))
    return out


# ---------------------------------------------------------------------------
# SNR report
# ---------------------------------------------------------------------------

def snr_report(manifest) -> dict:
    """Per-clip and per-speaker SNR with the corpus mean and +-1 std band."""
    per_clip = []
    per_speaker: dict[str, list[float]] = {}
    for entry in manifest:
        estimate = dsp.estimate_snr(dsp.load_wav(entry.audio_path))
        per_clip.append({
            "audio_path": entry.audio_path,
            "speaker_id": entry.speaker_id,
            "snr_db": estimate.db,
            "flag": estimate.flag,
        })
        per_speaker.setdefault(entry.speaker_id, []).append(estimate.db)
    if not per_clip:
        raise DegenerateInputError("snr_report needs a non-empty manifest")
    values = np.asarray([c["snr_db"] for c in per_clip])
    mean = float(values.mean())
    std = float(values.std())
    return {
        "mean_snr_db": mean,
        "std_snr_db": std,
        "band_low_db": mean - std,
        "band_high_db": mean + std,
        "per_speaker_mean_db": {s: float(np.mean(v)) for s, v in sorted(per_speaker.items())},
        "clips": per_clip,
    }
