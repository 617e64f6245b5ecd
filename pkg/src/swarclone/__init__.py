"""swarclone: few-shot voice cloning toolkit for Nepali.

Pipeline: speaker encoder (d-vector, GE2E loss) -> speaker-conditioned
mel synthesizer -> autoregressive vocoder, plus the preprocessing and
evaluation tooling around them (Devanagari text normalization, log-mel
frontend, EER/similarity/projection/SNR metrics, MOS rating service).
"""

__version__ = "0.1.0"
