"""Devanagari text normalization for the synthesizer frontend.

Raw corpus text goes through numeral/date verbalization, sentence
segmentation and stop-token insertion, ending as danda-terminated
sentences over a closed character vocabulary. All functions are pure;
CharVocabulary is immutable once built.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .errors import DegenerateInputError, UnsupportedNumeralError, VocabularyError

DANDA = "।"  # ।
PAD_SYMBOL = "<pad>"
EOS_SYMBOL = "<eos>"

# Nepali cardinals are irregular below one hundred; everything larger is
# composed from these plus the place-value units below.
_WORDS_0_99 = (
    "शून्य एक दुई तीन चार पाँच छ सात आठ नौ दस "
    "एघार बाह्र तेह्र चौध पन्ध्र सोह्र सत्र अठार उन्नाइस बीस "
    "एक्काइस बाइस तेइस चौबिस पच्चिस छब्बिस सत्ताइस अठ्ठाइस उनन्तिस तीस "
    "एकतिस बत्तिस तेत्तिस चौँतिस पैँतिस छत्तिस सैँतिस अठतिस उनन्चालीस चालीस "
    "एकचालीस बयालीस त्रिचालीस चवालीस पैँतालीस छयालीस सतचालीस अठचालीस उनन्चास पचास "
    "एकाउन्न बाउन्न त्रिपन्न चवन्न पचपन्न छपन्न सन्ताउन्न अन्ठाउन्न उनन्साठी साठी "
    "एकसट्ठी बयसट्ठी त्रिसट्ठी चौंसट्ठी पैंसट्ठी छयसट्ठी सतसट्ठी अठसट्ठी उनन्सत्तरी सत्तरी "
    "एकहत्तर बहत्तर त्रिहत्तर चौहत्तर पचहत्तर छयहत्तर सतहत्तर अठहत्तर उनासी असी "
    "एकासी बयासी त्रियासी चौरासी पचासी छयासी सतासी अठासी उनान्नब्बे नब्बे "
    "एकान्नब्बे बयान्नब्बे त्रियान्नब्बे चौरान्नब्बे पन्चान्नब्बे छयान्नब्बे सन्तान्नब्बे अन्ठान्नब्बे उनान्सय"
).split()

_PLACE_UNITS = (
    (10_000_000, "करोड"),
    (100_000, "लाख"),
    (1_000, "हजार"),
    (100, "सय"),
)

NUMERAL_LIMIT = 10 ** 9

_DEVANAGARI_DIGITS = "०१२३४५६७८९"
_DIGIT_TRANSLATION = str.maketrans(_DEVANAGARI_DIGITS, "0123456789")

_DIGIT_RUN = re.compile(r"[0-9०-९]+")
_DATE_RUN = re.compile(r"[0-9०-९]+(?:[/-][0-9०-९]+){1,2}")
_TERMINATORS = DANDA + ";?!"


def number_to_words(n: int, token: str | None = None) -> str:
    """Nepali cardinal word form of a non-negative integer below 10^9."""
    if n < 0 or n >= NUMERAL_LIMIT:
        raise UnsupportedNumeralError(token if token is not None else str(n))
    if n < 100:
        return _WORDS_0_99[n]
    parts = []
    for value, unit in _PLACE_UNITS:
        group, n = divmod(n, value)
        if group:
            parts.append(_WORDS_0_99[group])
            parts.append(unit)
    if n:
        parts.append(_WORDS_0_99[n])
    return " ".join(parts)


def _digits_to_int(token: str) -> int:
    return int(token.translate(_DIGIT_TRANSLATION))


def expand_numerals(text: str) -> str:
    """Replace every digit run with its cardinal word form.

    Date-shaped runs (2-3 digit groups joined by '/' or '-') read each
    component as a cardinal in sequence; year-like runs are plain cardinals.
    """

    def replace_date(match: re.Match) -> str:
        groups = re.split(r"[/-]", match.group(0))
        return " ".join(number_to_words(_digits_to_int(g), g) for g in groups)

    def replace_run(match: re.Match) -> str:
        token = match.group(0)
        return number_to_words(_digits_to_int(token), token)

    return _DIGIT_RUN.sub(replace_run, _DATE_RUN.sub(replace_date, text))


def segment_sentences(text: str) -> list[str]:
    """Split at danda, '?', '!' and ';'.

    Semicolons become danda in place (multi-clausal shortening); '?'/'!'
    are consumed so ensure_stop_token can close the sentence. Content is
    preserved verbatim up to the terminator (so an existing " ।" keeps its
    space); leading whitespace is trimmed and empty segments dropped.
    """
    parts = re.split(f"([{re.escape(_TERMINATORS)}])", text)
    sentences = []
    for content, terminator in zip(parts[::2], [*parts[1::2], ""]):
        if not content.strip():
            continue
        if terminator in (DANDA, ";"):
            sentences.append(content.lstrip() + DANDA)
        else:
            sentences.append(content.strip())
    return sentences


def ensure_stop_token(sentence: str) -> str:
    """Append " ।" when no terminal danda is present; idempotent."""
    trimmed = sentence.strip()
    if not trimmed:
        raise DegenerateInputError("cannot add a stop token to an empty sentence")
    if trimmed.endswith(DANDA):
        return trimmed
    return trimmed + " " + DANDA


def normalize(text: str) -> list[str]:
    """Full pipeline: expand numerals, segment, close each sentence."""
    return [ensure_stop_token(s) for s in segment_sentences(expand_numerals(text))]


@dataclass(frozen=True)
class CharVocabulary:
    """Ordered symbol table; index 0 is padding, index 1 end-of-sequence."""

    symbols: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("vocabulary symbols must be unique")
        if not self.symbols or self.symbols[0] != PAD_SYMBOL:
            raise ValueError("vocabulary index 0 must be the padding symbol")
        if EOS_SYMBOL not in self.symbols:
            raise ValueError("vocabulary must contain the end-of-sequence symbol")
        object.__setattr__(
            self, "_index", {symbol: i for i, symbol in enumerate(self.symbols)}
        )

    @classmethod
    def from_sentences(cls, sentences) -> "CharVocabulary":
        chars = sorted({c for sentence in sentences for c in sentence} - {" ", DANDA, ","})
        return cls(tuple([PAD_SYMBOL, EOS_SYMBOL, *chars, " ", DANDA, ","]))

    def __len__(self):
        return len(self.symbols)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def eos_id(self) -> int:
        return self._index[EOS_SYMBOL]

    def encode(self, text: str) -> list[int]:
        """One index per character plus a trailing end-of-sequence index."""
        ids = []
        for offset, char in enumerate(text):
            index = self._index.get(char)
            if index is None:
                raise VocabularyError(char, offset)
            ids.append(index)
        ids.append(self.eos_id)
        return ids

    def decode(self, ids) -> str:
        chars = []
        for index in ids:
            if index == self.eos_id:
                break
            if not 0 <= index < len(self.symbols):
                raise ValueError(f"symbol index {index} out of range")
            if index != self.pad_id:
                chars.append(self.symbols[index])
        return "".join(chars)

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.symbols) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "CharVocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines = lines[:-1]
        return cls(tuple(lines))
