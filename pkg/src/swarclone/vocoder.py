"""Autoregressive neural vocoder over mu-law sample classes.

Mel frames pass through a residual convolutional conditioning stack and a
learned transposed-convolution upsampler that expands each frame to
exactly hop_length conditioning vectors. A GRU then predicts the next
mu-law class from the previous sample's embedding plus the aligned
conditioning vector; generation loops sample by sample (argmax or seeded
categorical draw) and decodes classes back to audio.

Generation is sequential by nature; independent generations and
conditioning computations may run concurrently.
"""
from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import dsp
from .checkpoints import VOCODER_MAGIC, load_checkpoint, save_checkpoint
from .errors import AlignmentError, NumericalFaultError


@dataclass(frozen=True)
class VocoderConfig:
    hop_length: int = 200
    gru_size: int = 128
    conditioning_channels: int = 64
    residual_blocks: int = 3
    mu_classes: int = 256
    sample_rate_hz: int = 22050
    learning_rate: float = 1e-3
    mel_channels: int = 80

    def __post_init__(self):
        if self.mu_classes < 2 or self.mu_classes & (self.mu_classes - 1):
            raise ValueError("mu_classes must be a power of two")
        if self.hop_length % 2:
            raise ValueError("hop_length must be even (upsampler kernel constraint)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


# ---------------------------------------------------------------------------
# mu-law companding
# ---------------------------------------------------------------------------

def mu_encode(x, mu_classes: int = 256):
    """[-1, 1] -> class index; companded then uniformly quantized."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(arr) > 1.0):
        raise ValueError("mu_encode input must lie in [-1, 1]")
    mu = mu_classes - 1
    companded = np.sign(arr) * np.log1p(mu * np.abs(arr)) / math.log1p(mu)
    classes = np.minimum(
        ((companded + 1.0) / 2.0 * mu_classes).astype(np.int64), mu_classes - 1
    )
    return classes if arr.ndim else int(classes)


def mu_decode(c, mu_classes: int = 256):
    """Class index -> bin-center amplitude."""
    idx = np.asarray(c, dtype=np.float64)
    mu = mu_classes - 1
    companded = (idx + 0.5) / mu_classes * 2.0 - 1.0
    out = np.sign(companded) * ((1.0 + mu) ** np.abs(companded) - 1.0) / mu
    return out if idx.ndim else float(out)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

class _ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv_wide = nn.Conv1d(channels, channels, kernel_size=3, padding=1)
        self.conv_mix = nn.Conv1d(channels, channels, kernel_size=1)

    def forward(self, x):
        return x + self.conv_mix(torch.relu(self.conv_wide(torch.relu(x))))


def _upsample_factors(hop: int) -> list[int]:
    """Decompose hop into transposed-conv stage factors, largest first."""
    factors = []
    remaining = hop
    while remaining > 1:
        for f in (8, 7, 6, 5, 4, 3, 2):
            if remaining % f == 0:
                factors.append(f)
                remaining //= f
                break
        else:
            factors.append(remaining)  # prime > 8: single wide stage
            remaining = 1
    return sorted(factors, reverse=True)


class WaveVocoder(nn.Module):
    def __init__(self, config: VocoderConfig = VocoderConfig()):
        super().__init__()
        self.config = config
        channels = config.conditioning_channels
        self.conv_in = nn.Conv1d(config.mel_channels, channels, kernel_size=3, padding=1)
        self.blocks = nn.ModuleList(
            _ResidualBlock(channels) for _ in range(config.residual_blocks)
        )
        # staged learned interpolation: each stage expands time by its factor
        # (kernel 2f + f%2 with padding (k - f)/2 gives exactly f x length);
        # stages are depthwise - channel mixing lives in the residual blocks
        # at frame rate, keeping the sample-rate convs cheap
        stages = []
        for f in _upsample_factors(config.hop_length):
            kernel = 2 * f + (f % 2)
            stages.append(nn.ConvTranspose1d(
                channels, channels, kernel_size=kernel, stride=f,
                padding=(kernel - f) // 2, groups=channels,
            ))
        self.upsample = nn.ModuleList(stages)
        self.sample_embedding = nn.Embedding(config.mu_classes, channels)
        self.gru = nn.GRU(2 * channels, config.gru_size, batch_first=True)
        self.head_hidden = nn.Linear(config.gru_size, config.gru_size)
        self.head_logits = nn.Linear(config.gru_size, config.mu_classes)
        # zero-init output head: uniform class distribution at step 0, so the
        # initial cross-entropy is exactly ln(mu_classes)
        nn.init.zeros_(self.head_logits.weight)
        nn.init.zeros_(self.head_logits.bias)

    @property
    def receptive_field_frames(self) -> int:
        """Frames of mel context (each side) that can affect one output frame."""
        return self.config.residual_blocks + 1 + 2 * len(self.upsample)

    def conditioning(self, mel: torch.Tensor) -> torch.Tensor:
        """(frames, mel_channels) -> (frames * hop, conditioning_channels)."""
        x = mel.T.unsqueeze(0)
        x = self.conv_in(x)
        for block in self.blocks:
            x = block(x)
        for stage in self.upsample:
            x = stage(x)
        return x.squeeze(0).T

    def logits(self, prev_classes: torch.Tensor, conditioning: torch.Tensor,
               hidden: torch.Tensor | None = None, fold: int = 1):
        """Teacher-forced logits over next classes for an aligned segment.

        fold > 1 splits the segment into that many parallel subsequences
        (GRU state resets at the fold boundaries) to cut sequential steps.
        """
        embedded = self.sample_embedding(prev_classes)
        features = torch.cat([embedded, conditioning], dim=1)
        n = features.shape[0]
        if fold > 1 and n % fold == 0:
            folded = features.view(fold, n // fold, -1)
            output, hidden = self.gru(folded, None)
            output = output.reshape(n, -1)
        else:
            output, hidden = self.gru(features.unsqueeze(0), hidden)
            output = output.squeeze(0)
        hidden_features = torch.relu(self.head_hidden(output))
        return self.head_logits(hidden_features), hidden


def upsample_mel(model: WaveVocoder, mel: dsp.MelSpectrogram) -> np.ndarray:
    """Conditioning sequence of exactly frames x hop_length vectors."""
    with torch.no_grad():
        out = model.conditioning(torch.as_tensor(mel.frames, dtype=torch.float32))
    return out.numpy()


@torch.no_grad()
def generate(model: WaveVocoder, mel: dsp.MelSpectrogram, seed: int = 0,
             mode: str = "argmax") -> dsp.AudioClip:
    """Autoregressive generation; len(out) = frames * hop_length exactly."""
    if mode not in ("argmax", "sample"):
        raise ValueError(f"unknown generation mode: {mode!r}")
    model.eval()
    cfg = model.config
    conditioning = model.conditioning(torch.as_tensor(mel.frames, dtype=torch.float32))
    n_samples = mel.n_frames * cfg.hop_length
    generator = torch.Generator().manual_seed(seed)
    classes = torch.empty(n_samples, dtype=torch.long)
    prev = torch.tensor([mu_encode(0.0, cfg.mu_classes)])
    hidden = None
    for t in range(n_samples):
        logits, hidden = model.logits(prev, conditioning[t:t + 1], hidden)
        if not torch.isfinite(logits).all():
            raise NumericalFaultError(f"non-finite vocoder logits at sample {t}")
        if mode == "argmax":
            prev = logits.argmax(dim=1)
        else:
            probs = torch.softmax(logits.squeeze(0), dim=0)
            prev = torch.multinomial(probs, 1, generator=generator)
        classes[t] = prev[0]
    samples = mu_decode(classes.numpy(), cfg.mu_classes)
    return dsp.AudioClip(np.clip(samples, -1.0, 1.0), cfg.sample_rate_hz, "generated")


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def make_vocoder_pair(clip: dsp.AudioClip, dsp_cfg: dsp.DspConfig
                      ) -> tuple[dsp.MelSpectrogram, dsp.AudioClip]:
    """Trim a clip to a hop multiple and build the exactly-aligned mel.

    The centered frontend yields 1 + len/hop frames; the final
    padding-born frame is dropped so len(audio) = frames * hop.
    """
    hop = dsp_cfg.hop_length
    n_frames = len(clip) // hop
    if n_frames == 0:
        raise AlignmentError(f"{clip.source_id}: clip shorter than one hop")
    trimmed = dsp.AudioClip(
        clip.samples[:n_frames * hop], clip.sample_rate_hz, clip.source_id
    )
    mel = dsp.mel_spectrogram(trimmed, dsp_cfg)
    return dsp.MelSpectrogram(mel.frames[:n_frames], mel.config_ref), trimmed


def _align_pair(mel: dsp.MelSpectrogram, clip: dsp.AudioClip, hop: int
                ) -> tuple[dsp.MelSpectrogram, np.ndarray]:
    expected = mel.n_frames * hop
    if len(clip) < expected:
        raise AlignmentError(
            f"{clip.source_id or 'pair'}: audio has {len(clip)} samples, "
            f"needs {expected} (= {mel.n_frames} frames x hop {hop})"
        )
    return mel, clip.samples[:expected]


def train_vocoder(
    cfg: VocoderConfig,
    pairs,
    steps: int,
    seed: int,
    crop_samples: int = 2400,
    fold_segments: int = 16,
    input_jitter_prob: float = 0.15,
    input_jitter_span: int = 8,
) -> tuple[WaveVocoder, list[dict]]:
    """Teacher-forced cross-entropy on next-sample classes over random crops.

    Each 2400-sample crop is processed as fold_segments parallel GRU
    subsequences (state resets at boundaries, previous-sample inputs stay
    truthful), which keeps CPU step time bounded. A fraction of
    previous-sample inputs is jittered by a few mu-law classes so the
    autoregressive rollout can recover from its own small errors; targets
    are never touched.
    """
    if not pairs:
        raise AlignmentError("vocoder training needs at least one (mel, audio) pair")
    prepared = []
    for mel, clip in pairs:
        mel, samples = _align_pair(mel, clip, cfg.hop_length)
        classes = mu_encode(samples, cfg.mu_classes)
        prev = np.concatenate([[mu_encode(0.0, cfg.mu_classes)], classes[:-1]])
        prepared.append((
            torch.as_tensor(mel.frames, dtype=torch.float32),
            torch.as_tensor(prev), torch.as_tensor(classes),
        ))

    torch.manual_seed(seed)
    model = WaveVocoder(cfg)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    rng = random.Random(seed)
    jitter_rng = np.random.default_rng(seed)
    metrics = []
    model.train()
    for step in range(1, steps + 1):
        mel_t, prev_t, target_t = prepared[rng.randrange(len(prepared))]
        conditioning = model.conditioning(mel_t)
        total = conditioning.shape[0]
        crop = min(crop_samples, total)
        crop -= crop % fold_segments
        start = rng.randrange(total - crop + 1)
        prev_crop = prev_t[start:start + crop]
        if input_jitter_prob > 0:
            noisy = prev_crop.numpy().copy()
            mask = jitter_rng.random(crop) < input_jitter_prob
            shifts = jitter_rng.integers(-input_jitter_span, input_jitter_span + 1, crop)
            noisy[mask] = np.clip(noisy[mask] + shifts[mask], 0, cfg.mu_classes - 1)
            prev_crop = torch.as_tensor(noisy)
        logits, _ = model.logits(
            prev_crop, conditioning[start:start + crop],
            fold=fold_segments,
        )
        loss = F.cross_entropy(logits, target_t[start:start + crop])
        if not torch.isfinite(loss):
            raise NumericalFaultError(f"non-finite vocoder loss at step {step}")
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        metrics.append({"step": step, "loss": float(loss.detach())})
    model.eval()
    return model, metrics


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_vocoder(path, model: WaveVocoder) -> None:
    tensors = {name: tensor.detach().numpy() for name, tensor in model.state_dict().items()}
    save_checkpoint(path, VOCODER_MAGIC, {"vocoder": asdict(model.config)}, tensors)


def load_vocoder(path) -> WaveVocoder:
    config, tensors = load_checkpoint(path, VOCODER_MAGIC)
    model = WaveVocoder(VocoderConfig(**config["vocoder"]))
    model.load_state_dict({name: torch.from_numpy(t) for name, t in tensors.items()})
    model.eval()
    return model
