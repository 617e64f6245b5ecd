"""Speaker-conditioned sequence-to-sequence mel synthesizer.

Character ids are encoded by a bidirectional LSTM, the speaker embedding
is appended to every encoder state, and an autoregressive decoder with
content-based attention emits one mel frame plus a stop-gate probability
per step. Training is teacher-forced with mel MSE + gate BCE.

Inference is pure given a trained model and safe to run concurrently;
the training loop itself is single-threaded over parameters.
"""
from __future__ import annotations

import random
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import dsp, textnorm
from .checkpoints import SYNTH_MAGIC, load_checkpoint, save_checkpoint
from .encoder import SpeakerEmbedding, load_encoder, embed_utterance
from .errors import ManifestError, NumericalFaultError

GRAD_CLIP_NORM = 1.0
GO_FRAME_VALUE = 0.0


@dataclass(frozen=True)
class SynthConfig:
    char_embedding_dim: int = 128
    encoder_dim: int = 128
    decoder_dim: int = 256
    attention_dim: int = 64
    prenet_dim: int = 64
    mel_channels: int = 80
    max_decoder_steps: int = 2000
    gate_threshold: float = 0.5
    teacher_forcing: bool = True
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.encoder_dim % 2:
            raise ValueError("encoder_dim must be even (bidirectional halves)")
        if not 0.0 < self.gate_threshold < 1.0:
            raise ValueError("gate_threshold must be in (0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class SynthOutput:
    """Decoded mel frames with per-step gate and attention rows."""

    mel: np.ndarray          # (T_dec, mel_channels)
    gate: np.ndarray         # (T_dec,) in [0, 1]
    alignment: np.ndarray    # (T_dec, T_enc) rows sum to 1
    truncated: bool = False

    def __post_init__(self):
        self.mel = np.asarray(self.mel, dtype=np.float64)
        self.gate = np.asarray(self.gate, dtype=np.float64)
        self.alignment = np.asarray(self.alignment, dtype=np.float64)
        if np.any(self.gate < 0) or np.any(self.gate > 1):
            raise ValueError("gate values must lie in [0, 1]")
        row_sums = self.alignment.sum(axis=1)
        if self.alignment.size and np.max(np.abs(row_sums - 1.0)) > 1e-5:
            raise ValueError("alignment rows must sum to 1 within 1e-5")


class MelSynthesizer(nn.Module):
    def __init__(self, config: SynthConfig = SynthConfig(), vocab_size: int = 64,
                 speaker_dim: int = 256):
        super().__init__()
        self.config = config
        self.vocab_size = vocab_size
        self.speaker_dim = speaker_dim
        memory_dim = config.encoder_dim + speaker_dim
        self.char_embedding = nn.Embedding(vocab_size, config.char_embedding_dim, padding_idx=0)
        self.encoder_lstm = nn.LSTM(
            config.char_embedding_dim, config.encoder_dim // 2,
            batch_first=True, bidirectional=True,
        )
        self.prenet = nn.Sequential(
            nn.Linear(config.mel_channels, config.prenet_dim), nn.ReLU(),
            nn.Linear(config.prenet_dim, config.prenet_dim), nn.ReLU(),
        )
        self.attention_query = nn.Linear(config.decoder_dim, config.attention_dim, bias=False)
        self.attention_memory = nn.Linear(memory_dim, config.attention_dim, bias=False)
        self.attention_score = nn.Linear(config.attention_dim, 1, bias=False)
        self.decoder_cell = nn.LSTMCell(config.prenet_dim + memory_dim, config.decoder_dim)
        self.mel_projection = nn.Linear(config.decoder_dim + memory_dim, config.mel_channels)
        self.gate_projection = nn.Linear(config.decoder_dim + memory_dim, 1)

    def initial_state(self, dtype=torch.float32) -> tuple[torch.Tensor, torch.Tensor]:
        size = self.config.decoder_dim
        return (torch.zeros(size, dtype=dtype), torch.zeros(size, dtype=dtype))

    def go_frame(self, dtype=torch.float32) -> torch.Tensor:
        return torch.full((self.config.mel_channels,), GO_FRAME_VALUE, dtype=dtype)


def encode_text(model: MelSynthesizer, char_ids) -> torch.Tensor:
    """Character ids -> per-character encoder states (T_enc, encoder_dim)."""
    ids = torch.as_tensor(char_ids, dtype=torch.long)
    if ids.ndim != 1 or ids.numel() == 0:
        raise ValueError("char_ids must be a non-empty 1-D sequence")
    if int(ids.min()) < 0 or int(ids.max()) >= model.vocab_size:
        raise ValueError(
            f"character id out of vocabulary range [0, {model.vocab_size})"
        )
    embedded = model.char_embedding(ids.unsqueeze(0))
    states, _ = model.encoder_lstm(embedded)
    return states.squeeze(0)


def condition_on_speaker(states: torch.Tensor, speaker) -> torch.Tensor:
    """Append the speaker vector to every encoder state row."""
    vector = np.asarray(getattr(speaker, "vector", speaker), dtype=np.float64)
    tiled = torch.as_tensor(vector, dtype=states.dtype).expand(states.shape[0], -1)
    return torch.cat([states, tiled], dim=1)


def decode_step(model: MelSynthesizer, state, conditioned: torch.Tensor,
                prev_frame: torch.Tensor):
    """One decoder step: attend, update the cell, project mel and gate.

    Returns (mel_frame, gate probability, attention row, new state).
    """
    hidden, cell = state
    query = model.attention_query(hidden)
    keys = model.attention_memory(conditioned)
    scores = model.attention_score(torch.tanh(keys + query)).squeeze(1)
    attention = torch.softmax(scores, dim=0)
    context = attention @ conditioned
    pre = model.prenet(prev_frame)
    hidden, cell = model.decoder_cell(
        torch.cat([pre, context]).unsqueeze(0), (hidden.unsqueeze(0), cell.unsqueeze(0))
    )
    hidden, cell = hidden.squeeze(0), cell.squeeze(0)
    features = torch.cat([hidden, context])
    mel_frame = model.mel_projection(features)
    gate = torch.sigmoid(model.gate_projection(features)).squeeze(0)
    if not torch.isfinite(mel_frame).all():
        raise NumericalFaultError("non-finite decoder output")
    return mel_frame, gate, attention, (hidden, cell)


def teacher_forced(model: MelSynthesizer, char_ids, speaker,
                   target_mel: torch.Tensor, teacher_forcing: bool = True):
    """Run the decoder for len(target_mel) steps feeding ground-truth frames.

    Returns raw tensors (mel, gate, alignment) for loss computation.
    """
    conditioned = condition_on_speaker(encode_text(model, char_ids), speaker)
    dtype = conditioned.dtype
    state = model.initial_state(dtype)
    prev = model.go_frame(dtype)
    mels, gates, rows = [], [], []
    for t in range(target_mel.shape[0]):
        mel_frame, gate, attention, state = decode_step(model, state, conditioned, prev)
        mels.append(mel_frame)
        gates.append(gate)
        rows.append(attention)
        prev = target_mel[t] if teacher_forcing else mel_frame
    return torch.stack(mels), torch.stack(gates), torch.stack(rows)


def synth_loss(pred, target_mel, target_gate):
    """(total, mel_term, gate_term): mel MSE plus gate binary cross-entropy."""
    mel = pred.mel if hasattr(pred, "mel") else pred[0]
    gate = pred.gate if hasattr(pred, "gate") else pred[1]
    was_numpy = not torch.is_tensor(mel)
    mel = torch.as_tensor(mel, dtype=torch.float64) if was_numpy else mel
    gate = torch.as_tensor(gate, dtype=torch.float64) if was_numpy else gate
    target_mel = torch.as_tensor(
        target_mel.frames if isinstance(target_mel, dsp.MelSpectrogram) else target_mel,
        dtype=mel.dtype,
    )
    target_gate = torch.as_tensor(np.asarray(target_gate), dtype=gate.dtype)
    if mel.shape != target_mel.shape:
        raise ValueError(f"mel shape {tuple(mel.shape)} != target {tuple(target_mel.shape)}")
    if gate.shape != target_gate.shape:
        raise ValueError(f"gate length {tuple(gate.shape)} != target {tuple(target_gate.shape)}")
    mel_term = torch.mean((mel - target_mel) ** 2)
    gate_term = F.binary_cross_entropy(gate, target_gate, reduction="mean")
    total = mel_term + gate_term
    if was_numpy:
        return float(total), float(mel_term), float(gate_term)
    return total, mel_term, gate_term


@torch.no_grad()
def infer(model: MelSynthesizer, char_ids, speaker) -> SynthOutput:
    """Free-running decode from the GO frame until the gate fires or the cap."""
    model.eval()
    conditioned = condition_on_speaker(encode_text(model, char_ids), speaker)
    state = model.initial_state(conditioned.dtype)
    prev = model.go_frame(conditioned.dtype)
    mels, gates, rows = [], [], []
    truncated = True
    for _ in range(model.config.max_decoder_steps):
        mel_frame, gate, attention, state = decode_step(model, state, conditioned, prev)
        mels.append(mel_frame.numpy())
        gates.append(float(gate))
        rows.append(attention.numpy())
        prev = mel_frame
        if float(gate) > model.config.gate_threshold:
            truncated = False
            break
    return SynthOutput(
        mel=np.stack(mels), gate=np.asarray(gates), alignment=np.stack(rows),
        truncated=truncated,
    )


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class SynthExample:
    char_ids: list[int]
    speaker: SpeakerEmbedding
    target_mel: torch.Tensor
    target_gate: torch.Tensor
    source_id: str = ""


def gate_targets(n_frames: int) -> np.ndarray:
    """1.0 on the final frame, 0.0 elsewhere."""
    gate = np.zeros(n_frames)
    gate[-1] = 1.0
    return gate


def prepare_examples(manifest, encoder_path, vocab: textnorm.CharVocabulary,
                     cfg: dsp.DspConfig) -> list[SynthExample]:
    """Mel targets plus per-utterance speaker embeddings (computed once, cached).

    Clips shorter than one encoder chunk are tiled before embedding so the
    speaker identity can still be extracted.
    """
    encoder_model, frontend = load_encoder(encoder_path)
    examples = []
    for entry in manifest:
        if not entry.text:
            raise ManifestError(f"{entry.audio_path}: synthesizer manifest requires text")
        clip = dsp.load_wav(entry.audio_path)
        if clip.sample_rate_hz != cfg.sampling_rate_hz:
            clip = dsp.resample(clip, cfg.sampling_rate_hz)
        mel = dsp.mel_spectrogram(clip, cfg).frames.astype(np.float32)
        clip16 = dsp.resample(clip, frontend.sampling_rate_hz)
        if len(clip16) < frontend.chunk_samples:
            reps = -(-frontend.chunk_samples // len(clip16))
            clip16 = dsp.AudioClip(
                np.tile(clip16.samples, reps)[:frontend.chunk_samples],
                frontend.sampling_rate_hz, clip16.source_id,
            )
        speaker = embed_utterance(encoder_model, clip16, frontend, entry.speaker_id)
        examples.append(SynthExample(
            char_ids=vocab.encode(entry.text),
            speaker=speaker,
            target_mel=torch.as_tensor(mel),
            target_gate=torch.as_tensor(gate_targets(mel.shape[0]), dtype=torch.float32),
            source_id=entry.audio_path,
        ))
    return examples


def train_synth(
    cfg: SynthConfig,
    manifest,
    encoder_path,
    steps: int,
    seed: int,
    dsp_cfg: dsp.DspConfig = dsp.DspConfig(),
    vocab: textnorm.CharVocabulary | None = None,
) -> tuple[MelSynthesizer, textnorm.CharVocabulary, list[dict]]:
    """Teacher-forced training with Adam and gradient clipping at 1.0."""
    entries = list(manifest)
    if not entries:
        raise ManifestError("synthesizer training needs a non-empty manifest")
    if cfg.mel_channels != dsp_cfg.n_mel_channels:
        raise ValueError("SynthConfig.mel_channels must match DspConfig.n_mel_channels")
    if vocab is None:
        vocab = textnorm.CharVocabulary.from_sentences(e.text or "" for e in entries)
    examples = prepare_examples(entries, encoder_path, vocab, dsp_cfg)
    speaker_dim = examples[0].speaker.vector.shape[0]

    torch.manual_seed(seed)
    model = MelSynthesizer(cfg, vocab_size=len(vocab), speaker_dim=speaker_dim)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    rng = random.Random(seed)
    metrics = []
    model.train()
    for step in range(1, steps + 1):
        example = examples[rng.randrange(len(examples))]
        mel, gate, _ = teacher_forced(
            model, example.char_ids, example.speaker,
            example.target_mel, cfg.teacher_forcing,
        )
        total, mel_term, gate_term = synth_loss(
            (mel, gate), example.target_mel, example.target_gate
        )
        if not torch.isfinite(total):
            raise NumericalFaultError(f"non-finite synthesizer loss at step {step}")
        optimizer.zero_grad()
        total.backward()
        nn.utils.clip_grad_norm_(model.parameters(), GRAD_CLIP_NORM)
        optimizer.step()
        metrics.append({
            "step": step, "total": float(total.detach()),
            "mel": float(mel_term.detach()), "gate": float(gate_term.detach()),
        })
    model.eval()
    return model, vocab, metrics


# ---------------------------------------------------------------------------
# Checkpoints and alignment dumps
# ---------------------------------------------------------------------------

def save_synth(path, model: MelSynthesizer, vocab: textnorm.CharVocabulary) -> None:
    config = {
        "synth": asdict(model.config),
        "vocab": list(vocab.symbols),
        "speaker_dim": model.speaker_dim,
    }
    tensors = {name: tensor.detach().numpy() for name, tensor in model.state_dict().items()}
    save_checkpoint(path, SYNTH_MAGIC, config, tensors)


def load_synth(path) -> tuple[MelSynthesizer, textnorm.CharVocabulary]:
    config, tensors = load_checkpoint(path, SYNTH_MAGIC)
    vocab = textnorm.CharVocabulary(tuple(config["vocab"]))
    model = MelSynthesizer(
        SynthConfig(**config["synth"]), vocab_size=len(vocab),
        speaker_dim=config["speaker_dim"],
    )
    model.load_state_dict({name: torch.from_numpy(t) for name, t in tensors.items()})
    model.eval()
    return model, vocab


def write_alignment(path, alignment: np.ndarray) -> None:
    from .eval import ALIGNMENT_MAGIC
    dsp.write_matrix(path, alignment, ALIGNMENT_MAGIC)
