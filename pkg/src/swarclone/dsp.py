"""Audio I/O, the preprocessing chain, and the log-mel frontend.

Everything here is a pure function of its inputs; clips and mels are
immutable value objects, so all of it is safe to call concurrently.
The mel frontend is the single source of spectrogram truth for both
the synthesizer (22.05 kHz / 80 mels) and the speaker encoder
(16 kHz / 40 mels): magnitude STFT with a periodic Hann window and
reflect-centered padding, an HTK-scale triangular filterbank, and
natural-log compression clamped at LOG_FLOOR.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateInputError,
    FormatError,
    UnsupportedFormatError,
)

MAX_WAV_VALUE = 32768.0
LOG_FLOOR = 1e-5
NORMALIZE_TARGET_PEAK = 0.95
RESAMPLE_TAPS = 64
RESAMPLE_KAISER_BETA = 8.6
SNR_MARGIN = 4.0
SNR_CLAMP_DB = (0.0, 60.0)


@dataclass(frozen=True)
class AudioClip:
    """Mono audio in [-1, 1] at a known sample rate."""

    samples: np.ndarray
    sample_rate_hz: int
    source_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"AudioClip samples must be 1-D, got shape {samples.shape}")
        if samples.size and float(np.max(np.abs(samples))) > 1.0:
            raise ValueError("AudioClip samples must lie in [-1, 1]")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class DspConfig:
    """Synthesizer-side frontend parameters (22.05 kHz, 80 mel channels)."""

    max_wav_value: float = MAX_WAV_VALUE
    sampling_rate_hz: int = 22050
    filter_length: int = 800
    hop_length: int = 200
    win_size: int = 800
    n_mel_channels: int = 80
    mel_fmin_hz: float = 0.0
    mel_fmax_hz: float = 7600.0

    def __post_init__(self):
        if self.filter_length != self.win_size:
            raise ValueError("filter_length must equal win_size")
        if not 0 < self.hop_length < self.win_size:
            raise ValueError("hop_length must be in (0, win_size)")
        if self.mel_fmax_hz > self.sampling_rate_hz / 2:
            raise ValueError("mel_fmax_hz must not exceed Nyquist")

    @property
    def config_ref(self) -> str:
        return (
            f"synth:{self.sampling_rate_hz}/{self.filter_length}"
            f"/{self.hop_length}/{self.n_mel_channels}"
        )


@dataclass(frozen=True)
class EncoderFrontendConfig:
    """Speaker-encoder frontend: 16 kHz, 25 ms / 10 ms, 40 mels, 1.6 s chunks."""

    sampling_rate_hz: int = 16000
    window_ms: int = 25
    hop_ms: int = 10
    n_mel_channels: int = 40
    chunk_seconds: float = 1.6
    chunk_overlap_fraction: float = 0.5

    def __post_init__(self):
        chunk = self.chunk_seconds * self.sampling_rate_hz
        if abs(chunk - round(chunk)) > 1e-9:
            raise ValueError("chunk_seconds x sampling_rate_hz must be an integer sample count")
        if not 0 <= self.chunk_overlap_fraction < 1:
            raise ValueError("chunk_overlap_fraction must be in [0, 1)")

    @property
    def window_samples(self) -> int:
        return self.sampling_rate_hz * self.window_ms // 1000

    @property
    def hop_samples(self) -> int:
        return self.sampling_rate_hz * self.hop_ms // 1000

    @property
    def chunk_samples(self) -> int:
        return round(self.chunk_seconds * self.sampling_rate_hz)

    @property
    def chunk_hop_samples(self) -> int:
        return round(self.chunk_samples * (1.0 - self.chunk_overlap_fraction))

    @property
    def full_windows_per_chunk(self) -> int:
        """Analysis windows fully contained in one chunk (no padding)."""
        return 1 + (round(self.chunk_seconds * 1000) - self.window_ms) // self.hop_ms

    @property
    def config_ref(self) -> str:
        return (
            f"encoder:{self.sampling_rate_hz}/{self.window_ms}"
            f"/{self.hop_ms}/{self.n_mel_channels}"
        )


@dataclass(frozen=True)
class MelSpectrogram:
    """T x n_mel matrix of log-mel energies."""

    frames: np.ndarray
    config_ref: str = ""

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] == 0:
            raise ValueError(f"mel frames must be a non-empty T x n_mel matrix, got {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise ValueError("mel frames must be finite")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_mels(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class SilencePolicy:
    max_silence_s: float = 0.5
    retained_silence_s: float = 0.1
    silence_floor_dbfs: float = -40.0

    def __post_init__(self):
        if not self.retained_silence_s < self.max_silence_s:
            raise ValueError("retained_silence_s must be less than max_silence_s")


@dataclass(frozen=True)
class SnrEstimate:
    """SNR in dB plus a flag for degenerate classifications."""

    db: float
    flag: str | None = None

    def __float__(self):
        return self.db


# ---------------------------------------------------------------------------
# WAV I/O (RIFF PCM 16-bit little-endian)
# ---------------------------------------------------------------------------

def _parse_wav(data: bytes, path) -> tuple[np.ndarray, int, int]:
    """Return (int16 frames [n, channels], sample_rate, channels)."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (chunk_len,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + chunk_len]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise FormatError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            payload = body
        pos += 8 + chunk_len + (chunk_len & 1)
    if fmt is None or payload is None:
        raise FormatError(f"{path}: missing fmt/data chunk")
    audio_format, channels, rate, _, _, bits = fmt
    if audio_format != 1:
        raise UnsupportedFormatError(f"{path}: only PCM WAV supported (format tag {audio_format})")
    if bits != 16:
        raise UnsupportedFormatError(f"{path}: only 16-bit PCM supported (got {bits}-bit)")
    if channels not in (1, 2):
        raise UnsupportedFormatError(f"{path}: expected 1 or 2 channels, got {channels}")
    usable = len(payload) - (len(payload) % (2 * channels))
    frames = np.frombuffer(payload[:usable], dtype="<i2").reshape(-1, channels)
    return frames, rate, channels


def load_wav(path) -> AudioClip:
    """Read a 16-bit PCM WAV as a mono clip scaled by 1/32768."""
    path = Path(path)
    frames, rate, _ = _parse_wav(path.read_bytes(), path)
    samples = frames.astype(np.float64) / MAX_WAV_VALUE
    if samples.shape[1] == 2:
        samples = samples.mean(axis=1)
    else:
        samples = samples[:, 0]
    return AudioClip(samples, rate, source_id=path.stem)


def write_wav(path, clip: AudioClip) -> None:
    """Write a clip as mono 16-bit PCM; inverts load_wav bit-exactly."""
    ints = np.clip(
        np.round(clip.samples * MAX_WAV_VALUE), -32768, 32767
    ).astype("<i2")
    payload = ints.tobytes()
    rate = clip.sample_rate_hz
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, rate, rate * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(payload))
    Path(path).write_bytes(header + payload)


def wav_duration_s(path) -> float:
    """Clip duration from the header without materializing samples."""
    path = Path(path)
    frames, rate, _ = _parse_wav(path.read_bytes(), path)
    return frames.shape[0] / rate


# ---------------------------------------------------------------------------
# Preprocessing chain
# ---------------------------------------------------------------------------

def _kaiser_window(x: np.ndarray, beta: float) -> np.ndarray:
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.i0(beta * np.sqrt(1.0 - x[inside] ** 2)) / np.i0(beta)
    return out


def resample(clip: AudioClip, target_hz: int) -> AudioClip:
    """Windowed-sinc resampling (Kaiser beta=8.6, 64 taps)."""
    if target_hz <= 0:
        raise ValueError("target_hz must be positive")
    if target_hz == clip.sample_rate_hz:
        return clip
    src = clip.samples
    ratio = target_hz / clip.sample_rate_hz
    n_out = int(round(len(src) * ratio))
    if n_out == 0:
        return AudioClip(np.zeros(0), target_hz, clip.source_id)
    half = RESAMPLE_TAPS // 2
    cutoff = min(1.0, ratio)
    offsets = np.arange(-half + 1, half + 1)
    padded = np.pad(src, (half, half + 1))
    out = np.empty(n_out)
    block = 65536
    for start in range(0, n_out, block):
        m = np.arange(start, min(start + block, n_out))
        pos = m / ratio
        base = np.floor(pos).astype(np.int64)
        t = offsets[None, :] + (base - pos)[:, None]
        kernel = cutoff * np.sinc(cutoff * t) * _kaiser_window(t / half, RESAMPLE_KAISER_BETA)
        seg = padded[base[:, None] + (offsets[None, :] + half)]
        out[m] = np.einsum("ij,ij->i", seg, kernel)
    return AudioClip(np.clip(out, -1.0, 1.0), target_hz, clip.source_id)


def _frame_energies(samples: np.ndarray, frame_len: int) -> np.ndarray:
    """Mean-square energy of consecutive non-overlapping frames (tail included)."""
    n_frames = math.ceil(len(samples) / frame_len)
    energies = np.empty(n_frames)
    for i in range(n_frames):
        frame = samples[i * frame_len:(i + 1) * frame_len]
        energies[i] = float(np.mean(frame * frame))
    return energies


def _silent_runs(silent: np.ndarray) -> list[tuple[int, int]]:
    """(start, end) frame index pairs of maximal all-silent runs, end exclusive."""
    runs = []
    start = None
    for i, flag in enumerate(silent):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(silent)))
    return runs


def truncate_silence(clip: AudioClip, policy: SilencePolicy = SilencePolicy()) -> AudioClip:
    """Shorten every silence run longer than max_silence_s to retained_silence_s.

    Silence is judged per 10 ms frame by RMS against the policy floor;
    the head of each long run is kept so voiced samples are untouched.
    """
    sr = clip.sample_rate_hz
    frame_len = max(1, round(0.010 * sr))
    if len(clip) == 0:
        return clip
    floor_amp = 10.0 ** (policy.silence_floor_dbfs / 20.0)
    energies = _frame_energies(clip.samples, frame_len)
    silent = np.sqrt(energies) < floor_amp
    max_run_samples = policy.max_silence_s * sr
    keep_samples = round(policy.retained_silence_s * sr)
    pieces = []
    cursor = 0
    for start_f, end_f in _silent_runs(silent):
        start = start_f * frame_len
        end = min(end_f * frame_len, len(clip))
        if end - start <= max_run_samples:
            continue
        pieces.append(clip.samples[cursor:start + keep_samples])
        cursor = end
    pieces.append(clip.samples[cursor:])
    out = np.concatenate(pieces) if len(pieces) > 1 else pieces[0]
    if len(out) == len(clip):
        return clip
    return AudioClip(out, sr, clip.source_id)


def normalize_amplitude(clip: AudioClip, target_peak: float = NORMALIZE_TARGET_PEAK) -> AudioClip:
    """Scale so the peak |sample| equals target_peak."""
    if len(clip) == 0:
        raise DegenerateInputError("cannot normalize an empty clip")
    peak = float(np.max(np.abs(clip.samples)))
    if peak == 0.0:
        raise DegenerateInputError("cannot normalize an all-zero clip")
    return AudioClip(clip.samples * (target_peak / peak), clip.sample_rate_hz, clip.source_id)


def split_long(
    clip: AudioClip,
    max_s: float = 15.0,
    silence_floor_dbfs: float = -40.0,
) -> list[AudioClip]:
    """Recursively split clips longer than max_s at silence nearest the midpoint.

    Silence is judged per 10 ms frame RMS (sample-level dips at zero
    crossings of voiced audio do not count); the cut lands at the center
    of the sub-floor frame closest to the midpoint, searched within the
    middle 80% so no degenerate slivers are produced. With no such frame
    the clip is cut exactly in half.
    """
    if clip.duration_s <= max_s:
        return [clip]
    cut = _silence_cut_point(clip, silence_floor_dbfs)
    left = AudioClip(clip.samples[:cut], clip.sample_rate_hz, clip.source_id)
    right = AudioClip(clip.samples[cut:], clip.sample_rate_hz, clip.source_id)
    return split_long(left, max_s, silence_floor_dbfs) + split_long(right, max_s, silence_floor_dbfs)


def _silence_cut_point(clip: AudioClip, silence_floor_dbfs: float) -> int:
    n = len(clip)
    midpoint = n // 2
    frame_len = max(1, round(0.010 * clip.sample_rate_hz))
    floor_amp = 10.0 ** (silence_floor_dbfs / 20.0)
    silent = np.sqrt(_frame_energies(clip.samples, frame_len)) < floor_amp
    centers = np.minimum(
        np.arange(len(silent)) * frame_len + frame_len // 2, n - 1
    )
    candidates = centers[silent & (centers >= n // 10) & (centers <= n - n // 10)]
    if candidates.size:
        return int(candidates[np.argmin(np.abs(candidates - midpoint))])
    return midpoint


def chunk_utterance(clip: AudioClip, cfg: EncoderFrontendConfig = EncoderFrontendConfig()) -> list[AudioClip]:
    """Fixed-length windows (1.6 s, 50% overlap); trailing remainder dropped."""
    if clip.sample_rate_hz != cfg.sampling_rate_hz:
        raise ValueError(
            f"clip rate {clip.sample_rate_hz} != frontend rate {cfg.sampling_rate_hz}"
        )
    w, h = cfg.chunk_samples, cfg.chunk_hop_samples
    if len(clip) < w:
        return []
    count = (len(clip) - w) // h + 1
    return [
        AudioClip(clip.samples[i * h:i * h + w], clip.sample_rate_hz, f"{clip.source_id}#{i}")
        for i in range(count)
    ]


# ---------------------------------------------------------------------------
# Mel frontend
# ---------------------------------------------------------------------------

def _frontend_params(cfg) -> tuple[int, int, int, int, float, float, int]:
    """(n_fft, hop, win, n_mels, fmin, fmax, sample_rate) for either config."""
    if isinstance(cfg, DspConfig):
        return (
            cfg.filter_length, cfg.hop_length, cfg.win_size,
            cfg.n_mel_channels, cfg.mel_fmin_hz, cfg.mel_fmax_hz,
            cfg.sampling_rate_hz,
        )
    if isinstance(cfg, EncoderFrontendConfig):
        return (
            cfg.window_samples, cfg.hop_samples, cfg.window_samples,
            cfg.n_mel_channels, 0.0, cfg.sampling_rate_hz / 2,
            cfg.sampling_rate_hz,
        )
    raise TypeError(f"unsupported frontend config: {type(cfg).__name__}")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate_hz: int,
                   fmin_hz: float, fmax_hz: float) -> np.ndarray:
    """Triangular filters on the HTK mel scale; shape (n_mels, n_fft//2 + 1)."""
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(fmin_hz), hz_to_mel(fmax_hz), n_mels + 2))
    bin_hz = np.arange(n_fft // 2 + 1) * (sample_rate_hz / n_fft)
    left = edges_hz[:-2, None]
    center = edges_hz[1:-1, None]
    right = edges_hz[2:, None]
    rising = (bin_hz[None, :] - left) / (center - left)
    falling = (right - bin_hz[None, :]) / (right - center)
    return np.maximum(0.0, np.minimum(rising, falling))


_FILTERBANK_CACHE: dict[tuple, np.ndarray] = {}


def _cached_filterbank(n_mels, n_fft, sr, fmin, fmax) -> np.ndarray:
    key = (n_mels, n_fft, sr, fmin, fmax)
    if key not in _FILTERBANK_CACHE:
        _FILTERBANK_CACHE[key] = mel_filterbank(n_mels, n_fft, sr, fmin, fmax)
    return _FILTERBANK_CACHE[key]


def _stft_magnitude(samples: np.ndarray, n_fft: int, hop: int, win: int) -> np.ndarray:
    """|STFT| with periodic Hann window and reflect-centered padding; (T, n_fft//2+1)."""
    pad = n_fft // 2
    padded = np.pad(samples, (pad, pad), mode="reflect")
    n_frames = 1 + len(samples) // hop
    window = 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(win) / win))
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = padded[idx] * window[None, :]
    return np.abs(np.fft.rfft(frames, n=n_fft, axis=1))


def mel_spectrogram(clip: AudioClip, cfg) -> MelSpectrogram:
    """Log-mel spectrogram; T = 1 + floor(len/hop) frames."""
    n_fft, hop, win, n_mels, fmin, fmax, sr = _frontend_params(cfg)
    if clip.sample_rate_hz != sr:
        raise ValueError(f"clip rate {clip.sample_rate_hz} does not match config rate {sr}")
    if len(clip) < win:
        raise DegenerateInputError(
            f"clip of {len(clip)} samples is shorter than one {win}-sample window"
        )
    magnitude = _stft_magnitude(clip.samples, n_fft, hop, win)
    filterbank = _cached_filterbank(n_mels, n_fft, sr, fmin, fmax)
    mel = magnitude @ filterbank.T
    frames = np.log(np.maximum(mel, LOG_FLOOR))
    return MelSpectrogram(frames, cfg.config_ref)


# ---------------------------------------------------------------------------
# SNR estimation
# ---------------------------------------------------------------------------

def estimate_snr(clip: AudioClip, margin: float = SNR_MARGIN) -> SnrEstimate:
    """Energy-threshold VAD SNR: speech/noise split at margin x 20th-percentile energy.

    Frames are 25 ms with a 10 ms hop. Returns 0 dB flagged "no-speech" when
    no frame clears the threshold (flat signal) and the 60 dB clamp flagged
    "no-noise" when the noise class has no power.
    """
    sr = clip.sample_rate_hz
    if clip.duration_s < 1.0:
        raise DegenerateInputError("estimate_snr needs at least 1 s of audio")
    win = round(0.025 * sr)
    hop = round(0.010 * sr)
    n_frames = 1 + (len(clip) - win) // hop
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    energies = np.mean(clip.samples[idx] ** 2, axis=1)
    threshold = np.percentile(energies, 20) * margin
    speech = energies > threshold
    if not np.any(speech):
        return SnrEstimate(0.0, "no-speech")
    if not np.any(~speech):
        return SnrEstimate(SNR_CLAMP_DB[1], "no-noise")
    noise_power = float(np.mean(energies[~speech]))
    speech_power = float(np.mean(energies[speech]))
    if noise_power <= 0.0:
        return SnrEstimate(SNR_CLAMP_DB[1], "no-noise")
    db = 10.0 * math.log10(speech_power / noise_power)
    return SnrEstimate(float(np.clip(db, *SNR_CLAMP_DB)), None)


# ---------------------------------------------------------------------------
# Binary matrix containers (mel cache and friends)
# ---------------------------------------------------------------------------

MEL_MAGIC = b"MELS"
CONTAINER_VERSION = 1


def write_matrix(path, matrix: np.ndarray, magic: bytes = MEL_MAGIC) -> None:
    """{magic, version u32, rows u32, cols u32} + row-major little-endian f32."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValueError("container payload must be a 2-D matrix")
    header = magic + struct.pack("<III", CONTAINER_VERSION, *matrix.shape)
    Path(path).write_bytes(header + matrix.astype("<f4").tobytes(order="C"))


def read_matrix(path, magic: bytes = MEL_MAGIC) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != magic:
        raise FormatError(f"{path}: bad or missing {magic.decode()} header")
    version, rows, cols = struct.unpack_from("<III", data, 4)
    if version != CONTAINER_VERSION:
        raise UnsupportedFormatError(f"{path}: unsupported container version {version}")
    expected = rows * cols * 4
    payload = data[16:16 + expected]
    if len(payload) != expected:
        raise FormatError(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).astype(np.float64)


def write_mel(path, mel: MelSpectrogram) -> None:
    write_matrix(path, mel.frames, MEL_MAGIC)


def read_mel(path, config_ref: str = "") -> MelSpectrogram:
    return MelSpectrogram(read_matrix(path, MEL_MAGIC), config_ref)
