import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from swarclone import corpus, dsp, encoder as enc


def make_tone(freq_hz: float, seconds: float, sample_rate: int,
              amplitude: float = 0.5, phase: float = 0.0) -> np.ndarray:
    t = np.arange(round(seconds * sample_rate)) / sample_rate
    return amplitude * np.sin(2 * np.pi * freq_hz * t + phase)


def chirp_utterance(seconds: float = 1.5, sample_rate: int = 22050,
                    seed: int = 3, harmonics: int = 8,
                    noise: float = 0.01) -> dsp.AudioClip:
    """Non-stationary harmonic sweep: every frame is positionally distinct.

    noise=0 gives a fully deterministic target (for sample-level overfit
    oracles where a noise floor is unlearnable).
    """
    rng = np.random.default_rng(seed)
    n = round(seconds * sample_rate)
    t = np.arange(n) / sample_rate
    f0 = 160.0 * (420.0 / 160.0) ** (t / seconds)
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    sig = np.zeros(n)
    for h in range(1, harmonics + 1):
        sig += (0.75 ** h) * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    sig *= 0.35 + 0.65 * np.sin(np.pi * t / seconds) ** 2
    if noise > 0:
        sig += noise * rng.normal(0, 1, n)
    sig *= 0.8 / np.max(np.abs(sig))
    return dsp.AudioClip(sig, sample_rate, "chirp")


@pytest.fixture
def tiny_encoder_corpus(tmp_path):
    """6 speakers x 3 chunks of 1.6 s at 16 kHz, written as wav files."""
    from synthetic_speakers import speaker_chunk
    entries = []
    for s in range(6):
        speaker_dir = tmp_path / f"spk{s:02d}"
        speaker_dir.mkdir()
        for c in range(3):
            clip = speaker_chunk(s * 3, c)
            path = speaker_dir / f"c{c}.wav"
            dsp.write_wav(path, clip)
            entries.append(corpus.ManifestEntry(
                audio_path=str(path), speaker_id=f"spk{s:02d}",
                duration_s=clip.duration_s,
            ))
    return corpus.Manifest(entries)


@pytest.fixture
def tiny_encoder_checkpoint(tmp_path):
    """Untrained desk-size encoder checkpoint (enough for conditioning)."""
    torch.manual_seed(0)
    cfg = enc.EncoderConfig(hidden_size=16, embedding_size=16)
    model = enc.SpeakerEncoder(cfg, n_mels=40)
    path = tmp_path / "encoder.ckpt"
    enc.save_encoder(path, model, dsp.EncoderFrontendConfig())
    return path
