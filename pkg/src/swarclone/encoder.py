"""Speaker encoder: stacked LSTM d-vector network trained with GE2E loss.

A mel chunk runs through the LSTM stack; the final frame's top-layer
hidden state is projected, rectified and L2-normalized into a unit
embedding. Batches of speakers x utterances are pulled toward their own
exclusive centroid and away from other speakers' centroids via the
scaled-cosine softmax loss.

The parameter-update loop is strictly single-threaded; models handed to
evaluation are immutable snapshots (callers must not train concurrently).
"""
from __future__ import annotations

import random
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import corpus, dsp
from . import eval as evalmod
from .checkpoints import ENCODER_MAGIC, load_checkpoint, save_checkpoint
from .errors import DegenerateInputError, ManifestError, NumericalFaultError

SIM_WEIGHT_INIT = 10.0
SIM_BIAS_INIT = -5.0
SIM_WEIGHT_MIN = 1e-4
SIM_GRAD_SCALE = 0.5
GRAD_CLIP_NORM = 3.0


@dataclass(frozen=True)
class EncoderConfig:
    lstm_layers: int = 3
    hidden_size: int = 256
    embedding_size: int = 256
    speakers_per_batch: int = 16
    utterances_per_speaker: int = 10
    learning_rate: float = 1e-5

    def __post_init__(self):
        if min(self.lstm_layers, self.hidden_size, self.embedding_size) <= 0:
            raise ValueError("layer sizes must be positive")
        if self.speakers_per_batch < 2:
            raise ValueError("speakers_per_batch must be >= 2")
        if self.utterances_per_speaker < 2:
            raise ValueError("utterances_per_speaker must be >= 2")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True)
class SpeakerEmbedding:
    """Unit-norm vector characterizing one speaker's voice."""

    vector: np.ndarray
    speaker_id: str = ""

    def __post_init__(self):
        vector = np.asarray(self.vector, dtype=np.float64)
        if vector.ndim != 1:
            raise ValueError("embedding vector must be 1-D")
        norm = float(np.linalg.norm(vector))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding norm {norm} deviates from 1 by more than 1e-6")
        object.__setattr__(self, "vector", vector)


class SpeakerEncoder(nn.Module):
    def __init__(self, config: EncoderConfig = EncoderConfig(), n_mels: int = 40):
        super().__init__()
        self.config = config
        self.n_mels = n_mels
        self.lstm = nn.LSTM(
            input_size=n_mels,
            hidden_size=config.hidden_size,
            num_layers=config.lstm_layers,
            batch_first=True,
        )
        self.projection = nn.Linear(config.hidden_size, config.embedding_size)
        self.sim_weight = nn.Parameter(torch.tensor(SIM_WEIGHT_INIT))
        self.sim_bias = nn.Parameter(torch.tensor(SIM_BIAS_INIT))

    def forward(self, mels: torch.Tensor) -> torch.Tensor:
        """(batch, frames, n_mels) -> (batch, embedding_size), unit rows."""
        output, _ = self.lstm(mels)
        embedding = torch.relu(self.projection(output[:, -1, :]))
        return F.normalize(embedding, p=2, dim=1, eps=1e-12)


def ge2e_loss(embeddings: torch.Tensor, w, b) -> tuple[torch.Tensor, torch.Tensor]:
    """GE2E softmax loss over a (speakers, utterances, dim) embedding batch.

    Own-speaker similarity uses the centroid with the utterance itself
    excluded; similarities are w * cos + b and the loss is the mean
    softmax cross-entropy selecting the own speaker.
    """
    if not torch.is_tensor(embeddings):
        embeddings = torch.as_tensor(embeddings, dtype=torch.float32)
    w = w if torch.is_tensor(w) else torch.tensor(float(w), dtype=embeddings.dtype)
    b = b if torch.is_tensor(b) else torch.tensor(float(b), dtype=embeddings.dtype)
    if float(w.detach()) <= 0.0:
        raise ValueError("similarity scale w must be positive")
    n_speakers, n_utterances, _ = embeddings.shape
    if n_utterances < 2:
        raise ValueError("GE2E needs at least 2 utterances per speaker")
    centroids = F.normalize(embeddings.mean(dim=1), p=2, dim=1, eps=1e-12)
    exclusive = F.normalize(
        (embeddings.sum(dim=1, keepdim=True) - embeddings) / (n_utterances - 1),
        p=2, dim=2, eps=1e-12,
    )
    cos_all = torch.einsum("sud,kd->suk", embeddings, centroids)
    cos_own = torch.einsum("sud,sud->su", embeddings, exclusive)
    own_mask = torch.eye(n_speakers, dtype=torch.bool).unsqueeze(1)
    similarity = torch.where(
        own_mask, cos_own.unsqueeze(2).expand(-1, -1, n_speakers), cos_all
    )
    similarity = w * similarity + b
    logits = similarity.reshape(n_speakers * n_utterances, n_speakers)
    targets = torch.arange(n_speakers).repeat_interleave(n_utterances)
    loss = F.cross_entropy(logits, targets)
    return loss, similarity


def _unit_embedding(vector: np.ndarray, speaker_id: str = "") -> SpeakerEmbedding:
    vector = np.asarray(vector, dtype=np.float64)
    if not np.all(np.isfinite(vector)):
        raise NumericalFaultError("non-finite activation in speaker embedding")
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        raise NumericalFaultError("zero-norm speaker embedding")
    return SpeakerEmbedding(vector / norm, speaker_id)


@torch.no_grad()
def embed_chunk(model: SpeakerEncoder, chunk: dsp.MelSpectrogram,
                speaker_id: str = "") -> SpeakerEmbedding:
    """Embed a single mel chunk into a unit vector."""
    if chunk.n_mels != model.n_mels:
        raise ValueError(f"chunk has {chunk.n_mels} mel channels, model expects {model.n_mels}")
    model.eval()
    mels = torch.as_tensor(chunk.frames[None], dtype=torch.float32)
    vector = model(mels)[0].numpy()
    return _unit_embedding(vector, speaker_id)


@torch.no_grad()
def embed_utterance(model: SpeakerEncoder, clip: dsp.AudioClip,
                    frontend: dsp.EncoderFrontendConfig = dsp.EncoderFrontendConfig(),
                    speaker_id: str = "") -> SpeakerEmbedding:
    """Chunk an utterance, embed each chunk, average, renormalize."""
    if clip.sample_rate_hz != frontend.sampling_rate_hz:
        raise ValueError(
            f"clip rate {clip.sample_rate_hz} != frontend rate {frontend.sampling_rate_hz}"
        )
    chunks = dsp.chunk_utterance(clip, frontend)
    if not chunks:
        raise DegenerateInputError(
            f"utterance of {clip.duration_s:.2f}s is shorter than one "
            f"{frontend.chunk_seconds}s chunk"
        )
    model.eval()
    mels = torch.as_tensor(
        np.stack([dsp.mel_spectrogram(c, frontend).frames for c in chunks]),
        dtype=torch.float32,
    )
    vectors = model(mels).numpy()
    return _unit_embedding(vectors.mean(axis=0), speaker_id)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def load_chunk_mels(manifest: corpus.Manifest,
                    frontend: dsp.EncoderFrontendConfig,
                    workers: int = 0) -> dict[str, list[np.ndarray]]:
    """speaker_id -> list of float32 chunk mel matrices for every clip.

    workers > 1 reads and mels clips in a thread pool (the dsp operations
    are pure); results keep manifest order either way.
    """

    def entry_mels(entry: corpus.ManifestEntry) -> list[np.ndarray]:
        clip = dsp.load_wav(entry.audio_path)
        if clip.sample_rate_hz != frontend.sampling_rate_hz:
            clip = dsp.resample(clip, frontend.sampling_rate_hz)
        return [
            dsp.mel_spectrogram(chunk, frontend).frames.astype(np.float32)
            for chunk in dsp.chunk_utterance(clip, frontend)
        ]

    entries = list(manifest)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_entry = list(pool.map(entry_mels, entries))
    else:
        per_entry = [entry_mels(e) for e in entries]
    chunks: dict[str, list[np.ndarray]] = {}
    for entry, mels in zip(entries, per_entry):
        chunks.setdefault(entry.speaker_id, []).extend(mels)
    return chunks


@torch.no_grad()
def holdout_eer(model: SpeakerEncoder, chunks_by_speaker: dict) -> float:
    """EER over all genuine/impostor cosine pairs of the holdout chunks."""
    model.eval()
    embeddings: dict[str, list[np.ndarray]] = {}
    for speaker_id, mels in chunks_by_speaker.items():
        batch = torch.as_tensor(np.stack(mels), dtype=torch.float32)
        embeddings[speaker_id] = list(model(batch).double().numpy())
    scores = evalmod.verification_scores(embeddings)
    eer, _ = evalmod.compute_eer(scores)
    return eer


def train_encoder(
    cfg: EncoderConfig,
    manifest: corpus.Manifest,
    steps: int,
    seed: int,
    frontend: dsp.EncoderFrontendConfig = dsp.EncoderFrontendConfig(),
    holdout_fraction: float = 0.2,
    eer_interval: int | None = None,
    workers: int = 0,
) -> tuple[SpeakerEncoder, list[dict]]:
    """GE2E training: plain SGD with gradient-norm clipping at 3.0.

    Deterministic per seed. Logs {step, loss} every step and the holdout
    EER every eer_interval steps (default steps // 10). workers caps
    data-loading parallelism; the update loop itself is single-threaded.
    """
    train_manifest, holdout_manifest = corpus.split_holdout(manifest, holdout_fraction, seed)
    train_chunks = load_chunk_mels(train_manifest, frontend, workers)
    _check_batch_feasible(cfg, train_chunks)
    holdout_chunks = load_chunk_mels(holdout_manifest, frontend, workers)
    # EER needs genuine and impostor pairs on the holdout side
    eer_feasible = len(holdout_chunks) >= 2 and any(
        len(mels) >= 2 for mels in holdout_chunks.values()
    )
    if eer_interval is None:
        eer_interval = max(1, steps // 10)

    torch.manual_seed(seed)
    model = SpeakerEncoder(cfg, frontend.n_mel_channels)
    optimizer = torch.optim.SGD(model.parameters(), lr=cfg.learning_rate)
    rng = random.Random(seed)
    speaker_ids = sorted(train_chunks)
    metrics: list[dict] = []

    model.train()
    for step in range(1, steps + 1):
        batch_speakers = rng.sample(speaker_ids, cfg.speakers_per_batch)
        rows = []
        for speaker_id in batch_speakers:
            pool = train_chunks[speaker_id]
            rows.extend(pool[i] for i in rng.sample(range(len(pool)), cfg.utterances_per_speaker))
        mels = torch.as_tensor(np.stack(rows), dtype=torch.float32)
        embeddings = model(mels).view(
            cfg.speakers_per_batch, cfg.utterances_per_speaker, cfg.embedding_size
        )
        loss, _ = ge2e_loss(embeddings, model.sim_weight, model.sim_bias)
        if not torch.isfinite(loss):
            raise NumericalFaultError(f"non-finite GE2E loss at step {step}")
        optimizer.zero_grad()
        loss.backward()
        model.sim_weight.grad *= SIM_GRAD_SCALE
        model.sim_bias.grad *= SIM_GRAD_SCALE
        nn.utils.clip_grad_norm_(model.parameters(), GRAD_CLIP_NORM)
        optimizer.step()
        with torch.no_grad():
            model.sim_weight.clamp_(min=SIM_WEIGHT_MIN)
        record = {"step": step, "loss": float(loss.detach())}
        if eer_feasible and step % eer_interval == 0:
            record["eer"] = holdout_eer(model, holdout_chunks)
            model.train()
        metrics.append(record)
    model.eval()
    return model, metrics


def _check_batch_feasible(cfg: EncoderConfig, chunks: dict) -> None:
    if len(chunks) < cfg.speakers_per_batch:
        raise ManifestError(
            f"need >= {cfg.speakers_per_batch} training speakers, found {len(chunks)}"
        )
    thin = sorted(s for s, mels in chunks.items() if len(mels) < cfg.utterances_per_speaker)
    if thin:
        raise ManifestError(
            f"speakers with < {cfg.utterances_per_speaker} chunks: {', '.join(thin)}",
            issues=thin,
        )


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_encoder(path, model: SpeakerEncoder, frontend: dsp.EncoderFrontendConfig) -> None:
    config = {"encoder": asdict(model.config), "frontend": asdict(frontend)}
    tensors = {name: tensor.detach().numpy() for name, tensor in model.state_dict().items()}
    save_checkpoint(path, ENCODER_MAGIC, config, tensors)


def load_encoder(path) -> tuple[SpeakerEncoder, dsp.EncoderFrontendConfig]:
    config, tensors = load_checkpoint(path, ENCODER_MAGIC)
    cfg = EncoderConfig(**config["encoder"])
    frontend = dsp.EncoderFrontendConfig(**config["frontend"])
    model = SpeakerEncoder(cfg, frontend.n_mel_channels)
    model.load_state_dict({name: torch.from_numpy(t) for name, t in tensors.items()})
    model.eval()
    return model, frontend
