"""Pipeline-wide configuration: one file, section-per-module key=value.

Built-in defaults equal the published preprocessing/encoder tables, so a
missing config file means a zero-config run. Cross-field consistency
(mel channel counts, hop lengths, sample rates) is validated at load.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .dsp import DspConfig, EncoderFrontendConfig
from .encoder import EncoderConfig
from .synth import SynthConfig
from .vocoder import VocoderConfig

CONFIG_ENV_VAR = "SWARCLONE_CONFIG"


@dataclass(frozen=True)
class PipelineConfig:
    dsp: DspConfig = field(default_factory=DspConfig)
    encoder_frontend: EncoderFrontendConfig = field(default_factory=EncoderFrontendConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    vocoder: VocoderConfig = field(default_factory=VocoderConfig)
    seed: int = 1234
    workdir: str = "runs"

    def __post_init__(self):
        if self.synth.mel_channels != self.dsp.n_mel_channels:
            raise ValueError(
                f"synth.mel_channels ({self.synth.mel_channels}) must match "
                f"dsp.n_mel_channels ({self.dsp.n_mel_channels})"
            )
        if self.vocoder.mel_channels != self.dsp.n_mel_channels:
            raise ValueError("vocoder.mel_channels must match dsp.n_mel_channels")
        if self.vocoder.hop_length != self.dsp.hop_length:
            raise ValueError(
                f"vocoder.hop_length ({self.vocoder.hop_length}) must match "
                f"dsp.hop_length ({self.dsp.hop_length})"
            )
        if self.vocoder.sample_rate_hz != self.dsp.sampling_rate_hz:
            raise ValueError("vocoder.sample_rate_hz must match dsp.sampling_rate_hz")


_SECTIONS = {
    "dsp": DspConfig,
    "encoder_frontend": EncoderFrontendConfig,
    "encoder": EncoderConfig,
    "synth": SynthConfig,
    "vocoder": VocoderConfig,
}


def _coerce(value: str, target_type):
    if target_type is bool:
        lowered = value.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    return target_type(value)


def load_config(path=None) -> PipelineConfig:
    """Read key=value sections; absent file/keys fall back to defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if path is None:
        return PipelineConfig()
    path = Path(path)
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)

    built = {}
    for section, config_cls in _SECTIONS.items():
        kwargs = {}
        if parser.has_section(section):
            known = {f.name: f.type for f in fields(config_cls)}
            types = {name: _resolve_type(config_cls, name) for name in known}
            for key, raw in parser.items(section):
                if key not in known:
                    raise ValueError(f"{path}: unknown key [{section}] {key}")
                kwargs[key] = _coerce(raw, types[key])
        built[section] = config_cls(**kwargs)

    seed = 1234
    workdir = "runs"
    if parser.has_section("run"):
        for key, raw in parser.items("run"):
            if key == "seed":
                seed = int(raw)
            elif key == "workdir":
                workdir = raw
            else:
                raise ValueError(f"{path}: unknown key [run] {key}")
    return PipelineConfig(seed=seed, workdir=workdir, **built)


def _resolve_type(config_cls, name):
    for f in fields(config_cls):
        if f.name == name:
            if f.type in ("int", int):
                return int
            if f.type in ("float", float):
                return float
            if f.type in ("bool", bool):
                return bool
            return str
    raise KeyError(name)
